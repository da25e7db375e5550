#pragma once

#include <map>
#include <string>
#include <vector>

#include "config.hpp"
#include "dsp.hpp"
#include "manifest.hpp"
#include "text.hpp"

namespace mswave {

// Feature cache keyed by utterance_id. Files live in `dir`; loaded entries
// are memoised. Entries may also be inserted directly (tests, toy runs).
class FeatureStore {
 public:
  FeatureStore() = default;
  FeatureStore(std::string dir, Hyperparameters hp) : dir_(std::move(dir)), hp_(std::move(hp)) {}

  const UtteranceFeatures& get(const std::string& utterance_id);
  void put(const std::string& utterance_id, UtteranceFeatures f) { cache_[utterance_id] = std::move(f); }
  bool contains(const std::string& utterance_id) const;

 private:
  std::string dir_;
  Hyperparameters hp_;
  std::map<std::string, UtteranceFeatures> cache_;
};

// Reads, resamples, trims and analyses every record under data_root, writing
// one feature file per utterance into cache_dir. Returns the number written.
std::size_t preprocess_corpus(const Manifest& manifest, const std::string& data_root, const std::string& cache_dir,
                              const Hyperparameters& hp);

struct TrainingItem {
  std::string utterance_id;
  int speaker_index = 0;
  std::vector<int> char_ids;
  Matrix mel;                    // [F x n_mels], padded with ln(1e-5)
  Eigen::VectorXd frame_mask;    // [F]
  Eigen::VectorXd waveform;      // [F * hop], zero padded
  Eigen::VectorXd sample_mask;   // [F * hop]
  Eigen::Index n_frames = 0;     // real frames before padding
};

// Every item padded to the same frame count, a multiple of reduction_factor.
struct TrainingBatch {
  std::vector<TrainingItem> items;
  Eigen::Index padded_frames = 0;
};

TrainingBatch make_batch(const std::vector<UtteranceRecord>& records, const SpeakerRegistry& registry,
                         const Charset& charset, FeatureStore& features, const Hyperparameters& hp);

}  // namespace mswave
