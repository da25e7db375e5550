#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "bridge.hpp"
#include "config.hpp"
#include "dsp.hpp"
#include "manifest.hpp"
#include "seq2seq.hpp"
#include "speaker.hpp"
#include "text.hpp"
#include "vocoder.hpp"

namespace mswave {

// The full text-to-wave network. Parameters are registered in a fixed order
// from (hp, charset size, speaker count, init seed), so two models built from
// the same inputs are identical.
class Model {
 public:
  Model(Hyperparameters hp, Charset charset, SpeakerRegistry registry, std::uint64_t init_seed);
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;

  const Hyperparameters& hp() const { return hp_; }
  const Charset& charset() const { return charset_; }
  const SpeakerRegistry& registry() const { return registry_; }
  ParameterStore& params() { return store_; }
  const ParameterStore& params() const { return store_; }

  // Zeroes weight and bias of every per-site speaker projector.
  void zero_speaker_projectors();
  // Parameter groups used by coverage checks: encoder, decoder, bridge,
  // vocoder, embeddings, projectors.
  static std::string group_of(const std::string& parameter_name);

  SpeakerEmbeddingTable speakers;
  Encoder encoder;
  Decoder decoder;
  BridgeNet bridge;
  Vocoder vocoder;

 private:
  Hyperparameters hp_;
  Charset charset_;
  SpeakerRegistry registry_;
  ParameterStore store_;
};

struct SynthesisResult {
  Waveform audio;
  Matrix mel;        // decoder mel prediction [steps*r x n_mels]
  Matrix attention;  // [steps x T_char]
  int decoder_steps = 0;
  int final_argmax = 0;
  bool stopped = false;  // false when the T_max cap ended decoding
  std::string normalized_text;
};

struct SynthesisOptions {
  std::uint64_t seed = 0;
  double temperature = 1.0;
};

// text -> characters -> encoder -> windowed autoregressive decoding until the
// stop rule -> bridge-net -> cached vocoder sampling.
SynthesisResult synthesize(const Model& model, const std::string& text, int speaker_index,
                           const SynthesisOptions& opts);

}  // namespace mswave
