#include "seq2seq.hpp"

#include <cmath>
#include <limits>
#include <string>
#include <utility>

#include "dsp.hpp"
#include "error.hpp"

namespace mswave {

Encoder Encoder::create(ParameterStore& store, const Hyperparameters& hp, int charset_size, std::mt19937_64& rng) {
  Encoder e;
  e.embedding_ = &store.add("encoder.char_embedding",
                            uniform_init(charset_size, hp.char_embedding_dim, 0.1, rng));
  e.in_proj_ = Linear::create(store, "encoder.in_proj", hp.char_embedding_dim, hp.encoder_channels, rng);
  for (int i = 0; i < hp.encoder_layers; ++i) {
    e.blocks_.push_back(ConvBlock::create(store, "encoder.block" + std::to_string(i), hp.encoder_channels,
                                          hp.encoder_conv_width, false, hp.speaker_embedding_dim,
                                          hp.dropout_keep_prob, rng));
  }
  e.key_proj_ = Linear::create(store, "encoder.key_proj", hp.encoder_channels, hp.attention_channels, rng);
  e.embed_proj_ = Linear::create(store, "encoder.embed_proj", hp.char_embedding_dim, hp.attention_channels, rng);
  return e;
}

EncoderOutput Encoder::forward(ad::Tape& tape, std::span<const int> char_ids, ad::Var speaker_embedding,
                               ad::DropoutContext& dropout) const {
  if (char_ids.empty()) throw Error(ErrorCode::InvalidArgument, "encoder: empty character sequence");
  for (int id : char_ids) {
    if (id < 0 || id >= embedding_->value.rows()) {
      throw Error(ErrorCode::InvalidArgument, "encoder: character id " + std::to_string(id) + " out of range");
    }
  }
  const ad::Var emb = ad::gather_rows(tape.param(*embedding_), char_ids);
  ad::Var h = in_proj_(tape, emb);
  for (const auto& b : blocks_) h = b.forward(tape, h, speaker_embedding, dropout);
  EncoderOutput out;
  out.keys = key_proj_(tape, h);
  out.values = ad::scale(ad::add(out.keys, embed_proj_(tape, emb)), kSqrtHalf);
  return out;
}

Decoder Decoder::create(ParameterStore& store, const Hyperparameters& hp, std::mt19937_64& rng) {
  Decoder d;
  d.group_width_ = hp.reduction_factor * hp.n_mel_bands;
  d.positional_weight_ = hp.positional_weight;
  int in = d.group_width_;
  for (std::size_t i = 0; i < hp.decoder_prenet_channels.size(); ++i) {
    const int out = hp.decoder_prenet_channels[i];
    d.prenet_.push_back(Linear::create(store, "decoder.prenet" + std::to_string(i), in, out, rng, std::sqrt(2.0)));
    in = out;
  }
  const int c = hp.decoder_channels();
  for (int i = 0; i < hp.decoder_layers; ++i) {
    d.blocks_.push_back(ConvBlock::create(store, "decoder.block" + std::to_string(i), c, hp.decoder_conv_width,
                                          true, hp.speaker_embedding_dim, hp.dropout_keep_prob, rng));
  }
  const int a = hp.attention_channels;
  d.query_proj_ = Linear::create(store, "decoder.attention.query", c, a, rng);
  d.key_proj_ = Linear::create(store, "decoder.attention.key", a, a, rng);
  // Query and key projections start equal so that the positional terms line
  // up along the diagonal from the first step.
  if (c == a) d.key_proj_.weight->value = d.query_proj_.weight->value;
  d.value_proj_ = Linear::create(store, "decoder.attention.value", a, a, rng);
  d.out_proj_ = Linear::create(store, "decoder.attention.out", a, c, rng);
  d.key_rate_ = &store.add("decoder.attention.key_rate", Matrix::Constant(1, 1, hp.positional_initial_rate));
  d.mel_head_ = Linear::create(store, "decoder.mel_head", c, d.group_width_, rng);
  return d;
}

DecoderOutput Decoder::forward(ad::Tape& tape, ad::Var inputs, const EncoderOutput& enc, ad::Var speaker_embedding,
                               ad::DropoutContext& dropout, Eigen::Index query_start,
                               const Matrix& attention_mask) const {
  if (inputs.cols() != group_width_) {
    throw Error(ErrorCode::InvalidArgument, "decoder: input width " + std::to_string(inputs.cols()) + ", expected " +
                                                std::to_string(group_width_));
  }
  if (query_start < 0 || query_start >= inputs.rows()) {
    throw Error(ErrorCode::InvalidArgument, "decoder: query_start out of range");
  }
  // Log-mels sit in roughly [floor, 3]; the network works on (x - floor) / |floor|.
  const double floor = std::log(kLogMelFloor);
  ad::Var h = ad::scale(ad::add(inputs, tape.constant(Matrix::Constant(inputs.rows(), inputs.cols(), -floor))), -1.0 / floor);
  for (const auto& l : prenet_) h = ad::dropout(ad::relu(l(tape, h)), dropout);
  for (const auto& b : blocks_) h = b.forward(tape, h, speaker_embedding, dropout);
  if (query_start > 0) h = ad::slice_rows(h, query_start, h.rows() - query_start);

  const Eigen::Index n_chars = enc.keys.rows();
  const ad::Var one = tape.constant(Matrix::Ones(1, 1));
  const ad::Var q_pe = ad::positional_encoding(tape, h.rows(), h.cols(), one, double(query_start));
  const ad::Var k_pe = ad::positional_encoding(tape, n_chars, enc.keys.cols(), tape.param(*key_rate_));
  const ad::Var q = query_proj_(tape, ad::add(h, ad::scale(q_pe, positional_weight_)));
  const ad::Var k = key_proj_(tape, ad::add(enc.keys, ad::scale(k_pe, positional_weight_)));
  const ad::Var v = value_proj_(tape, enc.values);

  DecoderOutput out;
  out.attention = ad::softmax_rows(ad::matmul_nt(q, k), attention_mask);
  const ad::Var context = ad::scale(ad::matmul(out.attention, v), 1.0 / std::sqrt(double(n_chars)));
  out.hidden = ad::scale(ad::add(out_proj_(tape, context), h), kSqrtHalf);
  const ad::Var y = mel_head_(tape, out.hidden);
  out.mel = ad::add(ad::scale(y, -floor), tape.constant(Matrix::Constant(y.rows(), y.cols(), floor)));
  return out;
}

Matrix teacher_forcing_inputs(const Matrix& target_mel, int reduction_factor) {
  const Eigen::Index r = reduction_factor;
  if (r <= 0 || target_mel.rows() == 0 || target_mel.rows() % r != 0) {
    throw Error(ErrorCode::InvalidArgument, "teacher forcing: frame count " + std::to_string(target_mel.rows()) +
                                                " is not a positive multiple of " + std::to_string(r));
  }
  const Eigen::Index groups = target_mel.rows() / r;
  const Eigen::Index width = r * target_mel.cols();
  Matrix in = Matrix::Zero(groups, width);
  for (Eigen::Index g = 1; g < groups; ++g) {
    in.row(g) = Eigen::Map<const RowVector>(target_mel.data() + (g - 1) * width, width);
  }
  return in;
}

void AttentionState::append(const RowVector& row) {
  if (weights.rows() > 0 && weights.cols() != row.cols()) {
    throw Error(ErrorCode::InvalidArgument, "attention row width changed");
  }
  weights.conservativeResize(weights.rows() + 1, row.cols());
  weights.row(weights.rows() - 1) = row;
  Eigen::Index idx = 0;
  row.maxCoeff(&idx);
  argmax_history.push_back(static_cast<int>(idx));
}

DecoderSession::DecoderSession(const Decoder& decoder, Matrix keys, Matrix values, RowVector speaker_embedding,
                               int window)
    : decoder_(&decoder),
      keys_(std::move(keys)),
      values_(std::move(values)),
      speaker_(std::move(speaker_embedding)),
      window_(window) {}

DecoderStep DecoderSession::step(const RowVector& prev_group) {
  if (prev_group.size() != decoder_->group_width()) {
    throw Error(ErrorCode::InvalidArgument, "decoder step: previous group has the wrong width");
  }
  inputs_.conservativeResize(inputs_.rows() + 1, prev_group.size());
  inputs_.row(inputs_.rows() - 1) = prev_group;

  ad::Tape tape(false);
  ad::DropoutContext no_dropout;
  EncoderOutput enc{tape.constant(keys_), tape.constant(values_)};
  Matrix mask;
  if (window_ >= 0) mask = monotonic_mask(static_cast<int>(keys_.rows()), attention_.last_argmax(), window_);
  const Eigen::Index last = inputs_.rows() - 1;
  const DecoderOutput out =
      decoder_->forward(tape, tape.constant(inputs_), enc, tape.constant(speaker_), no_dropout, last, mask);
  DecoderStep s{out.mel.value().row(0), out.hidden.value().row(0), out.attention.value().row(0)};
  attention_.append(s.attention);
  return s;
}

bool reached_last_character(const AttentionState& att, int last_char_index, int patience) {
  if (patience <= 0) throw Error(ErrorCode::InvalidArgument, "stop patience must be positive");
  if (att.steps() < patience) return false;
  for (int i = att.steps() - patience; i < att.steps(); ++i) {
    if (att.argmax_history[static_cast<std::size_t>(i)] != last_char_index) return false;
  }
  return true;
}

bool stop_decision(const AttentionState& att, int last_char_index, int patience, int max_steps) {
  if (max_steps > 0 && att.steps() >= max_steps) return true;
  return reached_last_character(att, last_char_index, patience);
}

RowVector monotonic_mask(int n_chars, int prev_argmax, int window) {
  if (n_chars <= 0 || window < 0) throw Error(ErrorCode::InvalidArgument, "monotonic mask: bad size");
  if (prev_argmax < 0 || prev_argmax >= n_chars) {
    throw Error(ErrorCode::InvalidArgument, "monotonic mask: previous argmax " + std::to_string(prev_argmax) +
                                                " outside [0, " + std::to_string(n_chars) + ")");
  }
  RowVector m = RowVector::Constant(n_chars, -std::numeric_limits<double>::infinity());
  const int hi = std::min(n_chars - 1, prev_argmax + window);
  for (int j = prev_argmax; j <= hi; ++j) m(j) = 0.0;
  return m;
}

RowVector monotonic_inference_constraint(const RowVector& logits, int prev_argmax, int window) {
  const RowVector mask = monotonic_mask(static_cast<int>(logits.size()), prev_argmax, window);
  double hi = -std::numeric_limits<double>::infinity();
  for (Eigen::Index j = 0; j < logits.size(); ++j) {
    if (mask(j) == 0.0) hi = std::max(hi, logits(j));
  }
  RowVector out = RowVector::Zero(logits.size());
  double total = 0.0;
  for (Eigen::Index j = 0; j < logits.size(); ++j) {
    if (mask(j) == 0.0) {
      out(j) = std::exp(logits(j) - hi);
      total += out(j);
    }
  }
  return out / total;
}

double decoder_l1_loss(const Matrix& pred, const Matrix& target, const Eigen::VectorXd& row_mask) {
  if (pred.rows() != target.rows() || pred.cols() != target.cols() || row_mask.size() != pred.rows()) {
    throw Error(ErrorCode::InvalidArgument, "decoder_l1_loss: shape mismatch");
  }
  const double n = row_mask.sum() * double(pred.cols());
  if (n <= 0.0) throw Error(ErrorCode::InvalidArgument, "decoder_l1_loss: every row is masked");
  return ((pred - target).array().abs().colwise() * row_mask.array()).sum() / n;
}

}  // namespace mswave
