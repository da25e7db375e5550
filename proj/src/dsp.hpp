#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "config.hpp"
#include "tensor.hpp"

namespace mswave {

struct Waveform {
  std::vector<double> samples;  // amplitude in [-1, 1]
  int sample_rate_hz = 0;

  std::size_t size() const { return samples.size(); }
};

struct MelSpectrogram {
  Matrix values;  // [n_frames x n_bands], natural-log amplitudes
  int hop_length_samples = 0;

  Eigen::Index n_frames() const { return values.rows(); }
  Eigen::Index n_bands() const { return values.cols(); }
};

// 16-bit PCM WAV only; multi-channel input is averaged to mono. Samples are
// scaled by 1/32768.
Waveform read_wav(const std::string& path);
// Mono 16-bit PCM, round-half-away-from-zero quantisation, clipped.
void write_wav(const std::string& path, const Waveform& w);
std::vector<std::uint8_t> encode_wav(const Waveform& w);

// Kaiser-windowed sinc polyphase resampler for any rational rate ratio.
// Output length is ceil(n * target / source). Equal rates pass through.
Waveform resample(const Waveform& w, int target_rate);
Waveform load_resample(const std::string& path, int target_rate);

struct TrimResult {
  Waveform waveform;
  std::size_t removed = 0;
  bool all_silent = false;
};

// Drops whole analysis frames from the start until one has RMS above
// `threshold_db` dBFS. Trailing audio is never touched; an all-silent input
// comes back unchanged (with a warning).
TrimResult trim_leading_silence(const Waveform& w, double threshold_db, double frame_ms);

inline constexpr double kLogMelFloor = 1e-5;

// Center-padded (reflection) STFT frame count: floor(len / hop) + 1.
Eigen::Index frame_count(std::size_t n_samples, int hop);

// Linear-amplitude mel energies before the log: [n_frames x n_bands].
Matrix linear_mel(const Waveform& w, const Hyperparameters& hp);
// STFT magnitudes |X| for bins 0..fft/2: [n_frames x (fft/2 + 1)].
Matrix stft_magnitude(const Waveform& w, const Hyperparameters& hp);
// [n_bands x (fft/2 + 1)] triangular filters on the HTK mel scale.
Matrix mel_filterbank(const Hyperparameters& hp);

// ln(mel + 1e-5). Throws for waveforms shorter than one analysis window.
MelSpectrogram log_mel(const Waveform& w, const Hyperparameters& hp);

// Zero-pads or truncates to exactly n_frames * hop samples.
Waveform align_to_frames(const Waveform& w, Eigen::Index n_frames, int hop);

// Mel plus the waveform aligned to it; the unit stored in the feature cache.
struct UtteranceFeatures {
  MelSpectrogram mel;
  Waveform waveform;
};

// resample -> trim leading silence -> log-mel -> align.
UtteranceFeatures extract_features(const Waveform& raw, const Hyperparameters& hp);

// Little-endian float32 file: u32 magic, u32 n_frames, u32 n_bands,
// u32 n_samples, mel row-major, then waveform samples.
inline constexpr std::uint32_t kFeatureMagic = 0x4657534du;  // "MSWF"
void write_feature_file(const std::string& path, const Matrix& mel, const std::vector<double>& samples);
void read_feature_file(const std::string& path, Matrix& mel, std::vector<double>& samples);

void save_features(const std::string& path, const UtteranceFeatures& f, const Hyperparameters& hp);
UtteranceFeatures load_features(const std::string& path, const Hyperparameters& hp);

// utterance ids may contain '/'; cache files use a flat name.
std::string feature_file_name(const std::string& utterance_id);

}  // namespace mswave
