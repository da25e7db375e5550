#pragma once

#include <random>
#include <string>

#include "params.hpp"
#include "speaker.hpp"

namespace mswave {

inline constexpr double kSqrtHalf = 0.70710678118654752440;

// Gated-linear 1-D convolution block with residual connection:
//   out = (x + a * sigmoid(g)) * sqrt(0.5),  [a | g] = conv(dropout(x)) + b,
// where the softsign speaker bias is added to the `a` half.
struct ConvBlock {
  Parameter* weight = nullptr;  // [width*C x 2C]
  Parameter* bias = nullptr;    // [1 x 2C]
  BiasProjector speaker;
  int width = 5;
  bool causal = false;

  static ConvBlock create(ParameterStore& store, const std::string& name, int channels, int width, bool causal,
                          int speaker_dim, double keep_prob, std::mt19937_64& rng);
  ad::Var forward(ad::Tape& tape, ad::Var x, ad::Var speaker_embedding, ad::DropoutContext& dropout) const;
  int channels() const { return static_cast<int>(bias->value.cols() / 2); }
};

// Adds a [1 x C] bias to the first C of 2C columns.
ad::Var add_to_first_half(ad::Tape& tape, ad::Var x, ad::Var bias_row);

}  // namespace mswave
