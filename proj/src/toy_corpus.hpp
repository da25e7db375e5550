#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "config.hpp"
#include "dsp.hpp"

namespace mswave {

// Reduced configuration for CPU overfitting runs: 24 channels throughout,
// two conv layers per seq2seq/bridge stage, one vocoder dilation cycle.
Hyperparameters toy_hyperparameters();

struct ToyCorpusOptions {
  int speakers = 2;
  int utterances = 5;  // per speaker; every speaker reads the same sentences
  std::uint64_t seed = 0;
  int min_letters = 3;
  int max_letters = 5;
  int steps_per_letter = 2;
  int alphabet = 8;  // letters drawn from the first `alphabet` of a..h
};

// Short sentences over a small letter set, each ending in ".".
std::vector<std::string> toy_sentences(int count, std::uint64_t seed, int min_letters = 3, int max_letters = 5,
                                       int alphabet = 8);

// `steps_per_letter` decoder steps (r * hop samples each) of tone per
// character; the period is two such spans of silence, a space one. Speakers
// differ in pitch and timbre.
Waveform render_toy_utterance(const std::string& text, int speaker, const Hyperparameters& hp,
                              int steps_per_letter = 2);

// Writes root/spkNN/uttNN.wav + .txt. Returns the sentences used.
std::vector<std::string> make_toy_corpus(const std::string& root, const ToyCorpusOptions& opts,
                                         const Hyperparameters& hp);

}  // namespace mswave
