#pragma once

#include <random>
#include <vector>

#include "config.hpp"
#include "layers.hpp"
#include "params.hpp"

namespace mswave {

// Gated transposed-convolution stage: frames -> frames * stride.
struct UpsampleStage {
  Parameter* weight = nullptr;  // [C_in x 2*stride*2*C_out]
  Parameter* bias = nullptr;    // [1 x 2*C_out]
  BiasProjector speaker;        // added to the value half before the gate
  int stride = 1;

  int out_channels() const { return static_cast<int>(bias->value.cols() / 2); }
};

class BridgeNet {
 public:
  static BridgeNet create(ParameterStore& store, const Hyperparameters& hp, std::mt19937_64& rng);

  // Decoder hidden [T_dec x decoder_channels] -> [T_dec*r x bridge_channels].
  ad::Var expand(ad::Tape& tape, ad::Var decoder_hidden) const;
  // Non-causal gated conv blocks; shape preserving.
  ad::Var conv_forward(ad::Tape& tape, ad::Var frames, ad::Var speaker_embedding, ad::DropoutContext& dropout) const;
  // [F x bridge_channels] -> [F*hop x conditioner_channels].
  ad::Var upsample(ad::Tape& tape, ad::Var frame_hidden, ad::Var speaker_embedding) const;
  // [F x bridge_channels] -> [F x n_mels].
  ad::Var aux_mel(ad::Tape& tape, ad::Var frame_hidden) const;

  std::vector<UpsampleStage>& stages() { return stages_; }
  std::vector<ConvBlock>& blocks() { return blocks_; }

 private:
  int reduction_factor_ = 1;
  Linear expand_;
  std::vector<ConvBlock> blocks_;
  std::vector<UpsampleStage> stages_;
  Linear aux_head_;
};

}  // namespace mswave
