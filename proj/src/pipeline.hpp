#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "config.hpp"
#include "eval.hpp"
#include "model.hpp"

namespace mswave {

struct ClassifyReport {
  double holdout_accuracy = 0.0;
  // Accuracy on audio synthesized from the checkpoint for the held-out
  // (transcript, speaker) pairs; negative when no checkpoint was given.
  double synthesized_accuracy = -1.0;
  std::size_t n_train = 0;
  std::size_t n_test = 0;
  std::size_t n_speakers = 0;
};

// Builds the manifest of data_root, analyses every utterance, trains the
// speaker classifier on a per-speaker split and scores the held-out part.
ClassifyReport run_classify(const Hyperparameters& hp, const std::string& data_root, const Model* model,
                            std::uint64_t seed);

struct EerOptions {
  std::size_t trials = 40960;
  int enroll = 1;
  std::uint64_t seed = 0;
  std::string synthetic;  // "random" / "gaussian": score-only calibration
};

struct EerReport {
  double eer = 0.0;
  std::size_t trials = 0;
  std::size_t same = 0;
};

// Synthetic mode needs no data. Otherwise embeddings come from a classifier
// trained on data_root; with a model, the test side of every trial is a
// synthesized rendition of that utterance's transcript.
EerReport run_eer(const Hyperparameters& hp, const std::string& data_root, const Model* model, const EerOptions& opts);

// `speaker_id,label` rows; a first row starting with "speaker_id" is a header.
std::map<std::string, std::string> read_labels_csv(const std::string& path);

struct PcaReport {
  PcaResult pca;
  double separability = -1.0;  // negative without labels
  std::string csv_path;
  std::string svg_path;
};

PcaReport run_embedding_pca(const Model& model, const std::string& labels_path, const std::string& out_prefix);

// speaker_id,e0,...,e{D-1}
void export_embeddings_csv(const Model& model, const std::string& path);

}  // namespace mswave
