#include "layers.hpp"

#include <cmath>

namespace mswave {

ConvBlock ConvBlock::create(ParameterStore& store, const std::string& name, int channels, int width, bool causal,
                            int speaker_dim, double keep_prob, std::mt19937_64& rng) {
  ConvBlock b;
  b.width = width;
  b.causal = causal;
  // Variance-preserving for the dropout-scaled input.
  const double bound = std::sqrt(3.0 * keep_prob / double(width * channels));
  b.weight = &store.add(name + ".conv.weight", uniform_init(width * channels, 2 * channels, bound, rng));
  b.bias = &store.add(name + ".conv.bias", Matrix::Zero(1, 2 * channels));
  b.speaker = BiasProjector::create(store, name + ".speaker", speaker_dim, channels, rng);
  return b;
}

ad::Var add_to_first_half(ad::Tape& tape, ad::Var x, ad::Var bias_row) {
  const Eigen::Index c = bias_row.cols();
  const ad::Var padded = ad::concat_cols(bias_row, tape.constant(Matrix::Zero(1, x.cols() - c)));
  return ad::add_row(x, padded);
}

ad::Var ConvBlock::forward(ad::Tape& tape, ad::Var x, ad::Var speaker_embedding, ad::DropoutContext& dropout) const {
  const int pad = causal ? width - 1 : (width - 1) / 2;
  ad::Var h = ad::dropout(x, dropout);
  h = ad::add_row(ad::conv1d(h, tape.param(*weight), 1, pad), tape.param(*bias));
  h = add_to_first_half(tape, h, speaker(tape, speaker_embedding));
  h = ad::glu(h);
  return ad::scale(ad::add(h, x), kSqrtHalf);
}

}  // namespace mswave
