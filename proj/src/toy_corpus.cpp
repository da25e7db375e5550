#include "toy_corpus.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>
#include <set>

#include "error.hpp"

namespace fs = std::filesystem;

namespace mswave {

Hyperparameters toy_hyperparameters() {
  Hyperparameters hp;
  hp.char_embedding_dim = 24;
  hp.encoder_layers = 2;
  hp.encoder_channels = 24;
  hp.decoder_prenet_channels = {24, 24};
  hp.decoder_layers = 2;
  hp.attention_channels = 24;
  // Toy letters last two decoder steps each; a unit positional weight lets
  // the position terms compete with content in a 24-channel attention.
  hp.positional_weight = 1.0;
  hp.positional_initial_rate = 2.0;
  hp.bridge_layers = 2;
  hp.bridge_channels = 24;
  hp.conditioner_channels = 24;
  hp.vocoder_layers = 10;
  hp.vocoder_residual_channels = 24;
  hp.vocoder_skip_channels = 24;
  hp.batch_size = 2;
  hp.checkpoint_interval = 500;
  hp.vocoder_train_samples = 2400;
  validate(hp);
  return hp;
}

std::vector<std::string> toy_sentences(int count, std::uint64_t seed, int min_letters, int max_letters, int alphabet) {
  if (min_letters < 1 || max_letters < min_letters) throw Error(ErrorCode::InvalidArgument, "toy sentences: bad length range");
  static const std::string kLetters = "abcdefgh";
  if (alphabet < 2 || alphabet > static_cast<int>(kLetters.size())) throw Error(ErrorCode::InvalidArgument, "toy sentences: alphabet must be 2..8");
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> letter(0, alphabet - 1);
  std::uniform_int_distribution<int> length(min_letters, max_letters);
  std::set<std::string> seen;
  std::vector<std::string> out;
  while (static_cast<int>(out.size()) < count) {
    std::string s;
    const int n = length(rng);
    for (int i = 0; i < n; ++i) s += kLetters[static_cast<std::size_t>(letter(rng))];
    s += '.';
    if (seen.insert(s).second) out.push_back(s);
  }
  return out;
}

Waveform render_toy_utterance(const std::string& text, int speaker, const Hyperparameters& hp, int steps_per_letter) {
  if (steps_per_letter < 1) throw Error(ErrorCode::InvalidArgument, "toy corpus: steps per letter must be >= 1");
  const int step = steps_per_letter * hp.reduction_factor * hp.hop_length_samples;
  const double sr = hp.sample_rate_hz;
  const int fade = static_cast<int>(0.005 * sr);
  const double pitch = 1.0 + 0.25 * speaker;
  // Higher speakers get brighter harmonics.
  const double rolloff = 0.2 + 0.5 * speaker;
  Waveform w;
  w.sample_rate_hz = hp.sample_rate_hz;
  for (char c : text) {
    if (c == '.') {
      w.samples.insert(w.samples.end(), static_cast<std::size_t>(2 * step), 0.0);
      continue;
    }
    if (c == ' ') {
      w.samples.insert(w.samples.end(), static_cast<std::size_t>(step), 0.0);
      continue;
    }
    // Half-octave spacing spreads the letters over most of the mel range.
    const double f = 200.0 * std::pow(2.0, 0.5 * (c - 'a')) * pitch;
    std::vector<double> amp;
    for (double a = 1.0; amp.size() < 4 && (amp.size() + 1) * f < 0.45 * sr; a *= rolloff) amp.push_back(a);
    double norm = 0.0;
    for (double a : amp) norm += a;
    for (int i = 0; i < step; ++i) {
      const double ph = 2.0 * std::numbers::pi * f * (i / sr);
      double env = 1.0;
      if (i < fade) env = 0.5 - 0.5 * std::cos(std::numbers::pi * i / fade);
      if (step - 1 - i < fade) env = 0.5 - 0.5 * std::cos(std::numbers::pi * (step - 1 - i) / fade);
      double v = 0.0;
      for (std::size_t k = 0; k < amp.size(); ++k) v += amp[k] * std::sin(double(k + 1) * ph);
      w.samples.push_back(0.35 * env * v / norm);
    }
  }
  return w;
}

std::vector<std::string> make_toy_corpus(const std::string& root, const ToyCorpusOptions& opts,
                                         const Hyperparameters& hp) {
  if (opts.speakers < 1 || opts.utterances < 1) throw Error(ErrorCode::InvalidArgument, "toy corpus needs >= 1 speaker and utterance");
  const std::vector<std::string> sentences = toy_sentences(opts.utterances, opts.seed, opts.min_letters, opts.max_letters, opts.alphabet);
  for (int s = 0; s < opts.speakers; ++s) {
    char spk[16];
    std::snprintf(spk, sizeof spk, "spk%02d", s);
    const fs::path dir = fs::path(root) / spk;
    fs::create_directories(dir);
    for (int u = 0; u < opts.utterances; ++u) {
      char stem[16];
      std::snprintf(stem, sizeof stem, "utt%02d", u);
      const std::string& text = sentences[static_cast<std::size_t>(u)];
      write_wav((dir / (std::string(stem) + ".wav")).string(), render_toy_utterance(text, s, hp, opts.steps_per_letter));
      std::ofstream((dir / (std::string(stem) + ".txt")).string()) << text << '\n';
    }
  }
  return sentences;
}

}  // namespace mswave
