#include "vocoder.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "error.hpp"
#include "layers.hpp"

namespace mswave {

namespace {

constexpr Eigen::Index kSampleChunk = 1024;

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

std::vector<int> dilation_schedule(int n_layers, int cycle) {
  if (cycle <= 0 || cycle > 30) throw Error(ErrorCode::InvalidArgument, "dilation cycle must be in [1, 30]");
  if (n_layers <= 0 || n_layers % cycle != 0) {
    throw Error(ErrorCode::InvalidArgument, "vocoder layer count " + std::to_string(n_layers) +
                                                " is not a positive multiple of " + std::to_string(cycle));
  }
  std::vector<int> d(static_cast<std::size_t>(n_layers));
  for (int i = 0; i < n_layers; ++i) d[static_cast<std::size_t>(i)] = 1 << (i % cycle);
  return d;
}

GaussianFrameParams gaussian_params(const Matrix& raw, double log_sigma_floor) {
  if (raw.cols() != 2) throw Error(ErrorCode::InvalidArgument, "gaussian params need two columns");
  GaussianFrameParams p;
  p.mu = raw.col(0);
  p.log_sigma = raw.col(1).cwiseMax(log_sigma_floor);
  return p;
}

double gaussian_nll(const GaussianFrameParams& p, const Eigen::VectorXd& target, const Eigen::VectorXd& mask) {
  if (p.log_sigma.size() != p.mu.size() || target.size() != p.mu.size() || mask.size() != p.mu.size()) {
    throw Error(ErrorCode::InvalidArgument, "gaussian_nll: length mismatch");
  }
  const double n = mask.sum();
  if (n <= 0.0) throw Error(ErrorCode::InvalidArgument, "gaussian_nll: empty mask");
  const double half_log_2pi = 0.5 * std::log(2.0 * std::numbers::pi);
  double total = 0.0;
  for (Eigen::Index t = 0; t < p.size(); ++t) {
    if (mask(t) == 0.0) continue;
    const double z = (target(t) - p.mu(t)) * std::exp(-p.log_sigma(t));
    total += mask(t) * (half_log_2pi + p.log_sigma(t) + 0.5 * z * z);
  }
  return total / n;
}

Vocoder Vocoder::create(ParameterStore& store, const Hyperparameters& hp, std::mt19937_64& rng) {
  Vocoder v;
  const int r = hp.vocoder_residual_channels;
  const int skip = hp.vocoder_skip_channels;
  const int spk = hp.speaker_embedding_dim;
  v.residual_channels_ = r;
  v.cond_channels_ = hp.conditioner_channels;
  v.sample_rate_hz_ = hp.sample_rate_hz;
  v.log_sigma_floor_ = hp.log_sigma_floor;
  const std::vector<int> dil = dilation_schedule(hp.vocoder_layers, hp.vocoder_cycle_length);
  const int n = static_cast<int>(dil.size());

  v.input_ = Linear::create(store, "vocoder.input", 1, r, rng);
  v.cond_weight_ = &store.add("vocoder.cond.weight", uniform_init(hp.conditioner_channels, n * 2 * r,
                                                                  std::sqrt(1.0 / hp.conditioner_channels), rng));
  for (int i = 0; i < n; ++i) {
    const std::string name = "vocoder.layer" + std::to_string(i);
    VocoderLayer l;
    l.dilation = dil[static_cast<std::size_t>(i)];
    l.conv_weight = &store.add(name + ".conv.weight", uniform_init(2 * r, 2 * r, std::sqrt(1.5 / r), rng));
    l.conv_bias = &store.add(name + ".conv.bias", Matrix::Zero(1, 2 * r));
    l.speaker = BiasProjector::create(store, name + ".speaker", spk, 2 * r, rng);
    l.skip = Linear::create(store, name + ".skip", r, skip, rng);
    if (i + 1 < n) l.residual = Linear::create(store, name + ".residual", r, r, rng);
    v.layers_.push_back(l);
  }
  v.head_speaker1_ = BiasProjector::create(store, "vocoder.head1.speaker", spk, skip, rng);
  v.head1_ = Linear::create(store, "vocoder.head1", skip, skip, rng, std::sqrt(2.0));
  v.head_speaker2_ = BiasProjector::create(store, "vocoder.head2.speaker", spk, skip, rng);
  v.head2_ = Linear::create(store, "vocoder.head2", skip, 2, rng, 0.1);
  return v;
}

int Vocoder::receptive_field() const {
  int rf = 1;
  for (const auto& l : layers_) rf += l.dilation;
  return rf;
}

ad::Var Vocoder::forward(ad::Tape& tape, ad::Var x_shifted, ad::Var cond, ad::Var speaker_embedding) const {
  if (x_shifted.cols() != 1) throw Error(ErrorCode::InvalidArgument, "vocoder input must be a single column");
  if (x_shifted.rows() != cond.rows()) {
    throw Error(ErrorCode::InvalidArgument, "vocoder: input length " + std::to_string(x_shifted.rows()) +
                                                " differs from conditioner length " + std::to_string(cond.rows()));
  }
  if (cond.cols() != cond_channels_) {
    throw Error(ErrorCode::InvalidArgument, "vocoder: conditioner has " + std::to_string(cond.cols()) +
                                                " channels, expected " + std::to_string(cond_channels_));
  }
  const int r = residual_channels_;
  const ad::Var cproj = ad::matmul(cond, tape.param(*cond_weight_));
  ad::Var h = input_(tape, x_shifted);
  ad::Var skip_sum;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const VocoderLayer& l = layers_[i];
    ad::Var z = ad::conv1d(h, tape.param(*l.conv_weight), l.dilation, l.dilation);
    z = ad::add(z, ad::slice_cols(cproj, static_cast<Eigen::Index>(i) * 2 * r, 2 * r));
    z = ad::add_row(z, ad::add(tape.param(*l.conv_bias), l.speaker(tape, speaker_embedding)));
    const ad::Var g = ad::gated_tanh(z);
    const ad::Var s = l.skip(tape, g);
    skip_sum = skip_sum.valid() ? ad::add(skip_sum, s) : s;
    if (l.residual.weight) h = ad::scale(ad::add(h, l.residual(tape, g)), kSqrtHalf);
  }
  ad::Var o = ad::add_row(ad::relu(skip_sum), head_speaker1_(tape, speaker_embedding));
  o = ad::add_row(ad::relu(head1_(tape, o)), head_speaker2_(tape, speaker_embedding));
  return head2_(tape, o);
}

GaussianFrameParams Vocoder::forward_params(const Eigen::VectorXd& x_shifted, const Matrix& cond,
                                            const RowVector& speaker_embedding) const {
  ad::Tape tape(false);
  const ad::Var raw = forward(tape, tape.constant(Matrix(x_shifted)), tape.constant(cond),
                              tape.constant(Matrix(speaker_embedding)));
  return gaussian_params(raw.value(), log_sigma_floor_);
}

Waveform Vocoder::sample(const Matrix& cond, const RowVector& speaker_embedding, double temperature,
                         std::uint64_t seed, GaussianFrameParams* trace) const {
  if (!(temperature >= 0.0)) throw Error(ErrorCode::InvalidArgument, "sampling temperature must be >= 0");
  if (cond.cols() != cond_channels_) {
    throw Error(ErrorCode::InvalidArgument, "vocoder: conditioner has " + std::to_string(cond.cols()) +
                                                " channels, expected " + std::to_string(cond_channels_));
  }
  const Eigen::Index n = cond.rows();
  const Eigen::Index r = residual_channels_;
  const std::size_t n_layers = layers_.size();

  // Speaker-dependent constants, folded once.
  std::vector<RowVector> layer_bias(n_layers);
  for (std::size_t i = 0; i < n_layers; ++i) {
    layer_bias[i] = layers_[i].conv_bias->value + layers_[i].speaker.apply(speaker_embedding);
  }
  const RowVector head_bias1 = head_speaker1_.apply(speaker_embedding);
  const RowVector head_bias2 = head_speaker2_.apply(speaker_embedding);
  const RowVector in_w = input_.weight->value;
  const RowVector in_b = input_.bias->value;

  std::vector<Matrix> rings(n_layers);
  std::vector<Eigen::Index> ring_pos(n_layers, 0);
  for (std::size_t i = 0; i < n_layers; ++i) rings[i] = Matrix::Zero(layers_[i].dilation, r);

  Waveform out;
  out.sample_rate_hz = sample_rate_hz_;
  out.samples.resize(static_cast<std::size_t>(n));
  if (trace) {
    trace->mu.resize(n);
    trace->log_sigma.resize(n);
  }
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  RowVector h(r), z(2 * r), g(r), skip_sum(layers_.empty() ? 0 : layers_[0].skip.out());
  RowVector hid1, o;
  Matrix cproj;
  double prev = 0.0;
  for (Eigen::Index t = 0; t < n; ++t) {
    if (t % kSampleChunk == 0) {
      cproj.noalias() = cond.middleRows(t, std::min(kSampleChunk, n - t)) * cond_weight_->value;
    }
    const Eigen::Index ct = t % kSampleChunk;
    h = prev * in_w + in_b;
    skip_sum.setZero();
    for (std::size_t i = 0; i < n_layers; ++i) {
      const VocoderLayer& l = layers_[i];
      const Matrix& w = l.conv_weight->value;
      Matrix& ring = rings[i];
      Eigen::Index& pos = ring_pos[i];
      z.noalias() = ring.row(pos) * w.topRows(r);
      z.noalias() += h * w.bottomRows(r);
      z += cproj.block(ct, static_cast<Eigen::Index>(i) * 2 * r, 1, 2 * r) + layer_bias[i];
      ring.row(pos) = h;
      pos = (pos + 1) % l.dilation;
      for (Eigen::Index c = 0; c < r; ++c) g(c) = std::tanh(z(c)) * sigmoid(z(r + c));
      skip_sum.noalias() += g * l.skip.weight->value;
      skip_sum += l.skip.bias->value;
      if (l.residual.weight) {
        RowVector res = h;
        res.noalias() += g * l.residual.weight->value;
        h = (res + l.residual.bias->value) * kSqrtHalf;
      }
    }
    hid1 = skip_sum.cwiseMax(0.0) + head_bias1;
    o.noalias() = hid1 * head1_.weight->value;
    hid1 = (o + head1_.bias->value).cwiseMax(0.0) + head_bias2;
    o.noalias() = hid1 * head2_.weight->value;
    o += head2_.bias->value;
    const double mu = o(0);
    const double log_sigma = std::max(o(1), log_sigma_floor_);
    const double noise = normal(rng);
    const double x = std::clamp(mu + temperature * std::exp(log_sigma) * noise, -1.0, 1.0);
    out.samples[static_cast<std::size_t>(t)] = x;
    if (trace) {
      trace->mu(t) = mu;
      trace->log_sigma(t) = log_sigma;
    }
    prev = x;
  }
  return out;
}

}  // namespace mswave
