#pragma once

#include <random>
#include <string>

#include "params.hpp"

namespace mswave {

inline double softsign(double x) { return x / (1.0 + (x < 0 ? -x : x)); }

// One trainable row per registered speaker, initialised uniform(-0.1, 0.1).
class SpeakerEmbeddingTable {
 public:
  static constexpr double kInitBound = 0.1;

  SpeakerEmbeddingTable() = default;
  static SpeakerEmbeddingTable create(ParameterStore& store, int n_speakers, int dim, std::mt19937_64& rng);

  int n_speakers() const { return static_cast<int>(table_->value.rows()); }
  int dim() const { return static_cast<int>(table_->value.cols()); }

  // [1 x dim]; the backward pass only touches row `speaker_index`.
  ad::Var lookup(ad::Tape& tape, int speaker_index) const;
  RowVector row(int speaker_index) const;

  Parameter& parameter() { return *table_; }
  const Parameter& parameter() const { return *table_; }

 private:
  void check(int speaker_index) const;
  Parameter* table_ = nullptr;
};

// Per-site projection softsign(e W + b). Every injection site owns its own.
class BiasProjector {
 public:
  BiasProjector() = default;
  static BiasProjector create(ParameterStore& store, const std::string& name, int embedding_dim, int channels,
                              std::mt19937_64& rng);

  ad::Var operator()(ad::Tape& tape, ad::Var embedding) const;
  RowVector apply(const RowVector& embedding) const;

  int channels() const { return static_cast<int>(weight_->value.cols()); }
  void zero();
  Parameter& weight() { return *weight_; }
  Parameter& bias() { return *bias_; }

 private:
  Parameter* weight_ = nullptr;  // [dim x channels]
  Parameter* bias_ = nullptr;    // [1 x channels]
};

// softsign(e W + b) on plain vectors.
RowVector speaker_bias(const RowVector& embedding, const Matrix& weight, const RowVector& bias);

}  // namespace mswave
