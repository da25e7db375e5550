#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "autodiff.hpp"
#include "config.hpp"
#include "dataset.hpp"
#include "manifest.hpp"
#include "model.hpp"
#include "text.hpp"

namespace mswave::testing {

// Fresh, empty directory under the system temp dir; removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag);
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::string str() const { return path_.string(); }
  std::string operator/(const std::string& leaf) const { return (path_ / leaf).string(); }

 private:
  std::filesystem::path path_;
};

// Small everything: 2.4 kHz audio, hop 6 (strides 2 x 3), 8 mel bands,
// 4-channel stacks, one vocoder cycle of 4 layers. Fast enough for finite
// differences through the whole joint loss.
Hyperparameters tiny_hp();

Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng, double scale = 1.0);

// Central-difference check of d loss / d param at `probes` random entries
// (or all entries when probes <= 0). `loss` must build its own tape and
// return the scalar; `analytic` is the gradient to compare against.
struct GradCheck {
  double max_rel_error = 0.0;
  double max_abs_analytic = 0.0;
  int checked = 0;
};
GradCheck finite_difference(Matrix& param, const Matrix& analytic, const std::function<double()>& loss,
                            int probes, std::uint64_t seed, double h = 1e-6);

// Relative error with an absolute floor, so entries whose true derivative is
// ~0 compare on an absolute scale.
double rel_error(double a, double b, double floor = 1e-7);

// Synthetic in-memory batch for a model built from `hp`: random tone-ish
// waveforms analysed with the real front end.
struct SyntheticData {
  std::vector<UtteranceRecord> records;
  SpeakerRegistry registry;
  Charset charset = Charset::default_charset();
  FeatureStore features;
};
SyntheticData synthetic_data(const Hyperparameters& hp, int speakers, int per_speaker, std::uint64_t seed);

}  // namespace mswave::testing
