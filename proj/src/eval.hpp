#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "params.hpp"

namespace mswave {

// ---- speaker classifier -------------------------------------------------

struct LabeledMel {
  Matrix mel;  // [frames x bands]
  int label = 0;
};

struct ClassifierOptions {
  int channels = 32;
  int width = 5;
  int epochs = 80;
  double learning_rate = 0.01;
  std::uint64_t seed = 0;
};

// Two ReLU conv layers over log-mel, mean pooled over time (the embedding),
// then an affine speaker layer trained with softmax cross-entropy.
class SpeakerClassifier {
 public:
  SpeakerClassifier(int n_bands, int n_speakers, const ClassifierOptions& opts);

  void fit(const std::vector<LabeledMel>& train);
  RowVector embed(const Matrix& mel) const;
  RowVector logits(const Matrix& mel) const;
  int predict(const Matrix& mel) const;
  double accuracy(const std::vector<LabeledMel>& data) const;
  int n_speakers() const { return n_speakers_; }

 private:
  ad::Var forward_embedding(ad::Tape& tape, const Matrix& mel) const;

  int n_bands_;
  int n_speakers_;
  ClassifierOptions opts_;
  RowVector mean_;
  RowVector inv_std_;
  std::unique_ptr<ParameterStore> store_;
  Linear conv1_;
  Linear conv2_;
  Linear out_;
};

// Holds out round(fraction * n) (at least 1) utterances of every speaker.
// Throws unless there are >= 2 speakers with >= 2 utterances each.
void split_indices_per_speaker(std::span<const int> labels, double holdout_fraction, std::uint64_t seed,
                               std::vector<std::size_t>& train, std::vector<std::size_t>& test);
void split_per_speaker(const std::vector<LabeledMel>& all, double holdout_fraction, std::uint64_t seed,
                       std::vector<LabeledMel>& train, std::vector<LabeledMel>& test);

// ---- verification / EER -------------------------------------------------

struct ScoredTrial {
  double score = 0.0;  // higher = more likely the same speaker
  bool same_speaker = false;
};

// Equal error rate of the (FAR, FRR) operating-point polyline swept over
// every distinct score, linearly interpolated where FAR = FRR.
double estimate_eer(std::span<const ScoredTrial> trials);

double cosine_similarity(const RowVector& a, const RowVector& b);

struct VerificationTrial {
  std::vector<std::size_t> enrollment;  // utterance indices
  std::size_t test = 0;
  bool same_speaker = false;
};

// 50/50 same/different pairs. Trial i depends only on (seed, i), so any
// partition of the index range reproduces the same trials.
std::vector<VerificationTrial> generate_trials(std::span<const int> utterance_speakers, std::size_t n_trials,
                                               int enroll, std::uint64_t seed);
VerificationTrial generate_trial(std::span<const int> utterance_speakers, std::size_t index, int enroll,
                                 std::uint64_t seed);

// Cosine between the test embedding and the mean enrollment embedding.
std::vector<ScoredTrial> score_trials(std::span<const VerificationTrial> trials, const std::vector<RowVector>& enroll_embeddings,
                                      const std::vector<RowVector>& test_embeddings);

// Calibration score sets: "random" draws U(0,1) independent of the label,
// "gaussian" draws N(+1, 1) for same and N(-1, 1) for different pairs.
std::vector<ScoredTrial> synthetic_trials(const std::string& mode, std::size_t n_trials, std::uint64_t seed);

// ---- embedding PCA ------------------------------------------------------

struct PcaResult {
  Matrix coords;                // [S x 2]
  Matrix components;            // [D x 2], unit columns
  Eigen::VectorXd eigenvalues;  // all, descending
  double explained_pc1 = 0.0;
  double explained_pc2 = 0.0;
};

// Mean-centred covariance eigendecomposition; each component's first
// non-zero loading is made positive.
PcaResult pca_2d(const Matrix& embeddings);

// Training accuracy of a multinomial logistic regression on 2-D points.
double linear_separability(const Matrix& points, std::span<const int> labels);

std::string pca_svg(const Matrix& coords, const std::vector<std::string>& names, const std::vector<std::string>& labels);

}  // namespace mswave
