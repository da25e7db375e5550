#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "config.hpp"
#include "dsp.hpp"
#include "params.hpp"
#include "speaker.hpp"

namespace mswave {

// d_i = 2^(i mod cycle); n_layers must be a positive multiple of cycle.
std::vector<int> dilation_schedule(int n_layers, int cycle = 10);

struct GaussianFrameParams {
  Eigen::VectorXd mu;
  Eigen::VectorXd log_sigma;  // clamped

  Eigen::Index size() const { return mu.size(); }
};

// Splits raw [T x 2] head output into (mu, max(raw log sigma, floor)).
GaussianFrameParams gaussian_params(const Matrix& raw, double log_sigma_floor);

// Mean over unmasked samples of 0.5 ln(2 pi) + log sigma + (x - mu)^2 / (2 sigma^2).
double gaussian_nll(const GaussianFrameParams& p, const Eigen::VectorXd& target, const Eigen::VectorXd& mask);

// One dilated layer: width-2 causal conv over the residual stream, gated
// tanh/sigmoid unit, residual and skip 1x1 projections.
struct VocoderLayer {
  Parameter* conv_weight = nullptr;  // [2R x 2R]: rows [0,R) tap t-d, [R,2R) tap t
  Parameter* conv_bias = nullptr;    // [1 x 2R]
  BiasProjector speaker;             // 2R: filter and gate halves
  Linear skip;                       // R -> skip channels
  Linear residual;                   // R -> R; absent on the last layer
  int dilation = 1;
};

class Vocoder {
 public:
  static Vocoder create(ParameterStore& store, const Hyperparameters& hp, std::mt19937_64& rng);

  // x_shifted [T x 1], cond [T x cond_channels] -> raw [T x 2] = (mu, raw log sigma).
  ad::Var forward(ad::Tape& tape, ad::Var x_shifted, ad::Var cond, ad::Var speaker_embedding) const;

  // No-gradient convenience wrapper, clamped.
  GaussianFrameParams forward_params(const Eigen::VectorXd& x_shifted, const Matrix& cond,
                                     const RowVector& speaker_embedding) const;

  // Autoregressive sampling with per-layer ring buffers; O(layers) work per
  // sample. `trace`, when given, receives the (mu, clamped log sigma) used for
  // every emitted sample.
  Waveform sample(const Matrix& cond, const RowVector& speaker_embedding, double temperature, std::uint64_t seed,
                  GaussianFrameParams* trace = nullptr) const;

  const std::vector<VocoderLayer>& layers() const { return layers_; }
  std::vector<VocoderLayer>& layers() { return layers_; }
  int residual_channels() const { return residual_channels_; }
  int receptive_field() const;
  double log_sigma_floor() const { return log_sigma_floor_; }

 private:
  int residual_channels_ = 0;
  int cond_channels_ = 0;
  int sample_rate_hz_ = 0;
  double log_sigma_floor_ = -7.0;
  Linear input_;               // 1 -> R
  Parameter* cond_weight_ = nullptr;  // [cond_channels x layers*2R], all layers side by side
  std::vector<VocoderLayer> layers_;
  BiasProjector head_speaker1_;
  Linear head1_;
  BiasProjector head_speaker2_;
  Linear head2_;
};

}  // namespace mswave
