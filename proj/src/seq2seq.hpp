#pragma once

#include <random>
#include <span>
#include <vector>

#include "config.hpp"
#include "layers.hpp"
#include "params.hpp"

namespace mswave {

struct EncoderOutput {
  ad::Var keys;    // [T_char x attention_channels]
  ad::Var values;  // [T_char x attention_channels]
};

// Character embedding -> affine -> non-causal gated conv blocks -> affine.
// values = (keys + projected embedding) * sqrt(0.5).
class Encoder {
 public:
  static Encoder create(ParameterStore& store, const Hyperparameters& hp, int charset_size, std::mt19937_64& rng);

  EncoderOutput forward(ad::Tape& tape, std::span<const int> char_ids, ad::Var speaker_embedding,
                        ad::DropoutContext& dropout) const;

  std::vector<ConvBlock>& blocks() { return blocks_; }
  const std::vector<ConvBlock>& blocks() const { return blocks_; }

 private:
  Parameter* embedding_ = nullptr;  // [charset x char_embedding_dim]
  Linear in_proj_;
  std::vector<ConvBlock> blocks_;
  Linear key_proj_;
  Linear embed_proj_;
};

struct DecoderOutput {
  ad::Var mel;        // [T x r*n_mels], one reduction group per row
  ad::Var hidden;     // [T x decoder_channels]
  ad::Var attention;  // [T x T_char]
};

// Prenet -> causal gated conv blocks -> one dot-product attention layer with
// sinusoidal positional encodings on query (rate 1) and key (trainable rate)
// -> affine mel head.
class Decoder {
 public:
  static Decoder create(ParameterStore& store, const Hyperparameters& hp, std::mt19937_64& rng);

  // `inputs` holds the previous reduction group for every step ([T x r*n_mels];
  // row 0 is all zeros). Attention and outputs are produced for rows
  // [query_start, T) only; the conv stack still sees the whole prefix.
  // `attention_mask` ([T - query_start x T_char], additive) may be empty.
  DecoderOutput forward(ad::Tape& tape, ad::Var inputs, const EncoderOutput& enc, ad::Var speaker_embedding,
                        ad::DropoutContext& dropout, Eigen::Index query_start = 0,
                        const Matrix& attention_mask = Matrix()) const;

  Parameter& key_rate() { return *key_rate_; }
  const Parameter& key_rate() const { return *key_rate_; }
  std::vector<ConvBlock>& blocks() { return blocks_; }
  int group_width() const { return group_width_; }

 private:
  std::vector<Linear> prenet_;
  std::vector<ConvBlock> blocks_;
  Linear query_proj_;
  Linear key_proj_;
  Linear value_proj_;
  Linear out_proj_;
  Linear mel_head_;
  Parameter* key_rate_ = nullptr;  // 1x1
  double positional_weight_ = 0.1;
  int group_width_ = 0;  // r * n_mels
};

// Teacher-forcing inputs for a target mel whose frame count is a multiple of
// r: row 0 zeros, row t the target group t-1.
Matrix teacher_forcing_inputs(const Matrix& target_mel, int reduction_factor);

struct AttentionState {
  Matrix weights;  // [steps x T_char], row-stochastic
  std::vector<int> argmax_history;

  int steps() const { return static_cast<int>(argmax_history.size()); }
  int last_argmax() const { return argmax_history.empty() ? 0 : argmax_history.back(); }
  void append(const RowVector& row);
};

// True once the attention argmax has sat on `last_char_index` for `patience`
// consecutive steps, or when `max_steps` (> 0) steps have been taken.
bool stop_decision(const AttentionState& att, int last_char_index, int patience, int max_steps = 0);
// Same rule, reporting whether the cap (not the last character) fired.
bool reached_last_character(const AttentionState& att, int last_char_index, int patience);

// Additive logit mask: 0 on [prev_argmax, prev_argmax + window], -inf elsewhere.
RowVector monotonic_mask(int n_chars, int prev_argmax, int window);
// softmax(logits + monotonic_mask(...)).
RowVector monotonic_inference_constraint(const RowVector& logits, int prev_argmax, int window);

struct DecoderStep {
  RowVector mel_group;  // [1 x r*n_mels]
  RowVector hidden;     // [1 x decoder_channels]
  RowVector attention;  // [1 x T_char]
};

// Autoregressive inference over one utterance. Each step re-runs the causal
// conv stack over the input prefix and attends for the newest position only,
// under the windowed monotonic mask (window < 0 disables it).
class DecoderSession {
 public:
  DecoderSession(const Decoder& decoder, Matrix keys, Matrix values, RowVector speaker_embedding, int window);

  DecoderStep step(const RowVector& prev_group);
  const AttentionState& attention() const { return attention_; }
  int steps() const { return attention_.steps(); }

 private:
  const Decoder* decoder_;
  Matrix keys_;
  Matrix values_;
  RowVector speaker_;
  int window_;
  Matrix inputs_;
  AttentionState attention_;
};

// Mean absolute error over rows with a non-zero mask entry.
double decoder_l1_loss(const Matrix& pred, const Matrix& target, const Eigen::VectorXd& row_mask);

}  // namespace mswave
