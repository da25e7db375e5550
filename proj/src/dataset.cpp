#include "dataset.hpp"

#include <cmath>
#include <filesystem>

#include "error.hpp"
#include "log.hpp"

namespace fs = std::filesystem;

namespace mswave {

const UtteranceFeatures& FeatureStore::get(const std::string& utterance_id) {
  auto it = cache_.find(utterance_id);
  if (it != cache_.end()) return it->second;
  if (dir_.empty()) throw Error(ErrorCode::NotFound, "no features for utterance " + utterance_id);
  const fs::path path = fs::path(dir_) / feature_file_name(utterance_id);
  if (!fs::exists(path)) {
    throw Error(ErrorCode::NotFound, "missing cached features for " + utterance_id + " (" + path.string() +
                                         "); run preprocess first");
  }
  return cache_.emplace(utterance_id, load_features(path.string(), hp_)).first->second;
}

bool FeatureStore::contains(const std::string& utterance_id) const {
  if (cache_.count(utterance_id)) return true;
  return !dir_.empty() && fs::exists(fs::path(dir_) / feature_file_name(utterance_id));
}

std::size_t preprocess_corpus(const Manifest& manifest, const std::string& data_root, const std::string& cache_dir,
                              const Hyperparameters& hp) {
  fs::create_directories(cache_dir);
  std::size_t n = 0;
  for (const auto& rec : manifest.records) {
    const Waveform raw = read_wav((fs::path(data_root) / rec.audio_path).string());
    const UtteranceFeatures f = extract_features(raw, hp);
    save_features((fs::path(cache_dir) / feature_file_name(rec.utterance_id)).string(), f, hp);
    ++n;
  }
  log::info("preprocessed " + std::to_string(n) + " utterances into " + cache_dir);
  return n;
}

TrainingBatch make_batch(const std::vector<UtteranceRecord>& records, const SpeakerRegistry& registry,
                         const Charset& charset, FeatureStore& features, const Hyperparameters& hp) {
  if (records.empty()) throw Error(ErrorCode::InvalidArgument, "make_batch: no records");
  const Eigen::Index r = hp.reduction_factor;
  const Eigen::Index hop = hp.hop_length_samples;
  TrainingBatch batch;
  Eigen::Index longest = 0;
  for (const auto& rec : records) {
    TrainingItem item;
    item.utterance_id = rec.utterance_id;
    item.speaker_index = registry.index_of(rec.speaker_id);
    item.char_ids = normalize_and_encode_text(rec.transcript, charset).ids;
    const UtteranceFeatures& f = features.get(rec.utterance_id);
    if (f.mel.n_bands() != hp.n_mel_bands) {
      throw Error(ErrorCode::InvalidArgument, "features for " + rec.utterance_id + " have the wrong band count");
    }
    item.n_frames = f.mel.n_frames();
    longest = std::max(longest, item.n_frames);
    item.mel = f.mel.values;
    item.waveform = Eigen::Map<const Eigen::VectorXd>(f.waveform.samples.data(),
                                                      static_cast<Eigen::Index>(f.waveform.samples.size()));
    batch.items.push_back(std::move(item));
  }
  const Eigen::Index padded = (longest + r - 1) / r * r;
  const double floor_value = std::log(kLogMelFloor);
  for (auto& item : batch.items) {
    const Eigen::Index n = item.n_frames;
    Matrix mel = Matrix::Constant(padded, hp.n_mel_bands, floor_value);
    mel.topRows(n) = item.mel;
    item.mel = std::move(mel);
    item.frame_mask = Eigen::VectorXd::Zero(padded);
    item.frame_mask.head(n).setOnes();
    Eigen::VectorXd wav = Eigen::VectorXd::Zero(padded * hop);
    wav.head(item.waveform.size()) = item.waveform;
    item.waveform = std::move(wav);
    item.sample_mask = Eigen::VectorXd::Zero(padded * hop);
    item.sample_mask.head(n * hop).setOnes();
  }
  batch.padded_frames = padded;
  return batch;
}

}  // namespace mswave
