#include "support.hpp"

#include <algorithm>
#include <numbers>

#include "dsp.hpp"

namespace fs = std::filesystem;

namespace mswave::testing {

TempDir::TempDir(const std::string& tag) {
  std::random_device rd;
  const auto base = fs::temp_directory_path();
  for (int attempt = 0; attempt < 100; ++attempt) {
    fs::path p = base / ("mswave_" + tag + "_" + std::to_string(rd()));
    if (fs::create_directories(p)) {
      path_ = p;
      return;
    }
  }
  throw std::runtime_error("cannot create temp dir");
}

TempDir::~TempDir() {
  std::error_code ec;
  fs::remove_all(path_, ec);
}

Hyperparameters tiny_hp() {
  Hyperparameters hp;
  hp.sample_rate_hz = 2400;
  hp.fft_size = 32;
  hp.win_length_samples = 24;
  hp.hop_length_samples = 6;
  hp.n_mel_bands = 8;
  hp.mel_fmax_hz = 1200;
  hp.reduction_factor = 2;
  hp.speaker_embedding_dim = 4;
  hp.char_embedding_dim = 6;
  hp.encoder_layers = 1;
  hp.encoder_channels = 4;
  hp.decoder_prenet_channels = {5, 6};
  hp.decoder_layers = 1;
  hp.attention_channels = 6;
  hp.positional_initial_rate = 1.3;
  hp.bridge_layers = 1;
  hp.bridge_channels = 4;
  hp.upsample_strides = {2, 3};
  hp.conditioner_channels = 3;
  hp.vocoder_layers = 4;
  hp.vocoder_cycle_length = 4;
  hp.vocoder_residual_channels = 4;
  hp.vocoder_skip_channels = 5;
  hp.batch_size = 2;
  validate(hp);
  return hp;
}

Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng, double scale) {
  std::normal_distribution<double> n(0.0, scale);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

double rel_error(double a, double b, double floor) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

GradCheck finite_difference(Matrix& param, const Matrix& analytic, const std::function<double()>& loss, int probes,
                            std::uint64_t seed, double h) {
  GradCheck out;
  std::vector<Eigen::Index> idx;
  if (probes <= 0 || probes >= param.size()) {
    for (Eigen::Index i = 0; i < param.size(); ++i) idx.push_back(i);
  } else {
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<Eigen::Index> pick(0, param.size() - 1);
    for (int k = 0; k < probes; ++k) idx.push_back(pick(rng));
  }
  for (Eigen::Index i : idx) {
    const double keep = param.data()[i];
    param.data()[i] = keep + h;
    const double up = loss();
    param.data()[i] = keep - h;
    const double down = loss();
    param.data()[i] = keep;
    const double numeric = (up - down) / (2 * h);
    const double a = analytic.data()[i];
    // FD noise on a double loss of order 1 is ~1e-10; compare above that.
    out.max_rel_error = std::max(out.max_rel_error, rel_error(a, numeric, 1e-6));
    out.max_abs_analytic = std::max(out.max_abs_analytic, std::abs(a));
    ++out.checked;
  }
  return out;
}

SyntheticData synthetic_data(const Hyperparameters& hp, int speakers, int per_speaker, std::uint64_t seed) {
  SyntheticData d;
  d.features = FeatureStore("", hp);
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> letter(0, 5);
  std::uniform_int_distribution<int> len(2, 4);
  std::vector<std::string> ids;
  const int step = hp.reduction_factor * hp.hop_length_samples * 2;
  for (int s = 0; s < speakers; ++s) {
    const std::string spk = "s" + std::to_string(s);
    ids.push_back(spk);
    for (int u = 0; u < per_speaker; ++u) {
      std::string text;
      const int n = len(rng);
      for (int i = 0; i < n; ++i) text += static_cast<char>('a' + letter(rng));
      text += '.';
      Waveform w;
      w.sample_rate_hz = hp.sample_rate_hz;
      for (std::size_t c = 0; c + 1 < text.size(); ++c) {
        const double f = (100.0 + 40.0 * (text[c] - 'a')) * (1.0 + 0.5 * s);
        for (int k = 0; k < step; ++k) {
          w.samples.push_back(0.4 * std::sin(2 * std::numbers::pi * f * k / hp.sample_rate_hz));
        }
      }
      w.samples.resize(w.samples.size() + static_cast<std::size_t>(step), 0.0);
      UtteranceRecord rec{spk + "/u" + std::to_string(u), spk, text, spk + "/u" + std::to_string(u) + ".wav"};
      d.features.put(rec.utterance_id, extract_features(w, hp));
      d.records.push_back(rec);
    }
  }
  d.registry = SpeakerRegistry(ids);
  return d;
}

}  // namespace mswave::testing
