#include "bridge.hpp"

#include <cmath>
#include <string>

#include "error.hpp"

namespace mswave {

BridgeNet BridgeNet::create(ParameterStore& store, const Hyperparameters& hp, std::mt19937_64& rng) {
  BridgeNet b;
  b.reduction_factor_ = hp.reduction_factor;
  const int c = hp.bridge_channels;
  b.expand_ = Linear::create(store, "bridge.expand", hp.decoder_channels(), hp.reduction_factor * c, rng);
  for (int i = 0; i < hp.bridge_layers; ++i) {
    b.blocks_.push_back(ConvBlock::create(store, "bridge.block" + std::to_string(i), c, hp.bridge_conv_width, false,
                                          hp.speaker_embedding_dim, hp.dropout_keep_prob, rng));
  }
  int in = c;
  for (std::size_t i = 0; i < hp.upsample_strides.size(); ++i) {
    UpsampleStage s;
    s.stride = hp.upsample_strides[i];
    const int out = hp.conditioner_channels;
    const std::string name = "bridge.upsample" + std::to_string(i);
    // Each output sample sums two taps from `in` channels.
    const double bound = std::sqrt(3.0 / (2.0 * in));
    s.weight = &store.add(name + ".weight", uniform_init(in, 2 * s.stride * 2 * out, bound, rng));
    s.bias = &store.add(name + ".bias", Matrix::Zero(1, 2 * out));
    s.speaker = BiasProjector::create(store, name + ".speaker", hp.speaker_embedding_dim, out, rng);
    b.stages_.push_back(s);
    in = out;
  }
  b.aux_head_ = Linear::create(store, "bridge.aux_mel", c, hp.n_mel_bands, rng);
  return b;
}

ad::Var BridgeNet::expand(ad::Tape& tape, ad::Var decoder_hidden) const {
  return ad::unfold_rows(expand_(tape, decoder_hidden), reduction_factor_);
}

ad::Var BridgeNet::conv_forward(ad::Tape& tape, ad::Var frames, ad::Var speaker_embedding,
                                ad::DropoutContext& dropout) const {
  if (!blocks_.empty() && frames.cols() != blocks_.front().channels()) {
    throw Error(ErrorCode::InvalidArgument, "bridge: frame width " + std::to_string(frames.cols()) + ", expected " +
                                                std::to_string(blocks_.front().channels()));
  }
  ad::Var h = frames;
  for (const auto& blk : blocks_) h = blk.forward(tape, h, speaker_embedding, dropout);
  return h;
}

ad::Var BridgeNet::upsample(ad::Tape& tape, ad::Var frame_hidden, ad::Var speaker_embedding) const {
  ad::Var h = frame_hidden;
  for (const auto& s : stages_) {
    h = ad::conv_transpose_upsample(h, tape.param(*s.weight), s.stride);
    h = ad::add_row(h, tape.param(*s.bias));
    h = add_to_first_half(tape, h, s.speaker(tape, speaker_embedding));
    h = ad::glu(h);
  }
  return h;
}

ad::Var BridgeNet::aux_mel(ad::Tape& tape, ad::Var frame_hidden) const { return aux_head_(tape, frame_hidden); }

}  // namespace mswave
