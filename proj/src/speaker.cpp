#include "speaker.hpp"

#include "error.hpp"

namespace mswave {

SpeakerEmbeddingTable SpeakerEmbeddingTable::create(ParameterStore& store, int n_speakers, int dim,
                                                    std::mt19937_64& rng) {
  if (n_speakers <= 0 || dim <= 0) throw Error(ErrorCode::InvalidArgument, "embedding table needs S > 0 and dim > 0");
  SpeakerEmbeddingTable t;
  t.table_ = &store.add("speaker_embedding", uniform_init(n_speakers, dim, kInitBound, rng));
  return t;
}

void SpeakerEmbeddingTable::check(int speaker_index) const {
  if (speaker_index < 0 || speaker_index >= n_speakers()) {
    throw Error(ErrorCode::InvalidArgument, "speaker index " + std::to_string(speaker_index) + " out of range [0, " +
                                                std::to_string(n_speakers()) + ")");
  }
}

ad::Var SpeakerEmbeddingTable::lookup(ad::Tape& tape, int speaker_index) const {
  check(speaker_index);
  return ad::gather_row(tape.param(*table_), speaker_index);
}

RowVector SpeakerEmbeddingTable::row(int speaker_index) const {
  check(speaker_index);
  return table_->value.row(speaker_index);
}

BiasProjector BiasProjector::create(ParameterStore& store, const std::string& name, int embedding_dim, int channels,
                                    std::mt19937_64& rng) {
  BiasProjector p;
  p.weight_ = &store.add(name + ".weight", xavier_init(embedding_dim, channels, embedding_dim, channels, rng));
  p.bias_ = &store.add(name + ".bias", Matrix::Zero(1, channels));
  return p;
}

ad::Var BiasProjector::operator()(ad::Tape& tape, ad::Var embedding) const {
  return ad::softsign(ad::add_row(ad::matmul(embedding, tape.param(*weight_)), tape.param(*bias_)));
}

RowVector BiasProjector::apply(const RowVector& embedding) const {
  return speaker_bias(embedding, weight_->value, bias_->value.row(0));
}

void BiasProjector::zero() {
  weight_->value.setZero();
  bias_->value.setZero();
}

RowVector speaker_bias(const RowVector& embedding, const Matrix& weight, const RowVector& bias) {
  if (embedding.size() != weight.rows() || bias.size() != weight.cols()) {
    throw Error(ErrorCode::InvalidArgument, "speaker_bias: dimension mismatch");
  }
  RowVector z = embedding * weight + bias;
  return z.unaryExpr([](double x) { return softsign(x); });
}

}  // namespace mswave
