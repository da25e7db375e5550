#include "model.hpp"

#include <random>

#include "error.hpp"
#include "log.hpp"

namespace mswave {

Model::Model(Hyperparameters hp, Charset charset, SpeakerRegistry registry, std::uint64_t init_seed)
    : hp_(std::move(hp)), charset_(std::move(charset)), registry_(std::move(registry)) {
  validate(hp_);
  if (registry_.size() == 0) throw Error(ErrorCode::InvalidArgument, "model needs at least one speaker");
  std::mt19937_64 rng(init_seed);
  speakers = SpeakerEmbeddingTable::create(store_, static_cast<int>(registry_.size()), hp_.speaker_embedding_dim, rng);
  encoder = Encoder::create(store_, hp_, static_cast<int>(charset_.size()), rng);
  decoder = Decoder::create(store_, hp_, rng);
  bridge = BridgeNet::create(store_, hp_, rng);
  vocoder = Vocoder::create(store_, hp_, rng);
}

void Model::zero_speaker_projectors() {
  for (Parameter* p : store_.all()) {
    if (group_of(p->name) == "projectors") p->value.setZero();
  }
}

std::string Model::group_of(const std::string& name) {
  if (name == "speaker_embedding") return "embeddings";
  if (name.find(".speaker.") != std::string::npos) return "projectors";
  const auto dot = name.find('.');
  return name.substr(0, dot);
}

SynthesisResult synthesize(const Model& model, const std::string& text, int speaker_index,
                           const SynthesisOptions& opts) {
  const Hyperparameters& hp = model.hp();
  const CharacterSequence chars = normalize_and_encode_text(text, model.charset());
  const int n_chars = static_cast<int>(chars.ids.size());
  const RowVector spk = model.speakers.row(speaker_index);

  ad::Tape tape(false);
  ad::DropoutContext no_dropout;
  const ad::Var spk_var = tape.constant(spk);
  const EncoderOutput enc = model.encoder.forward(tape, chars.ids, spk_var, no_dropout);

  DecoderSession session(model.decoder, enc.keys.value(), enc.values.value(), spk, hp.attention_window);
  const int max_steps = hp.max_decoder_steps_factor * n_chars;
  const int width = model.decoder.group_width();
  RowVector prev = RowVector::Zero(width);
  Matrix mel_groups(0, width);
  Matrix hidden(0, hp.decoder_channels());
  SynthesisResult res;
  res.normalized_text = chars.normalized_text;
  while (true) {
    const DecoderStep s = session.step(prev);
    mel_groups.conservativeResize(mel_groups.rows() + 1, width);
    mel_groups.row(mel_groups.rows() - 1) = s.mel_group;
    hidden.conservativeResize(hidden.rows() + 1, hidden.cols());
    hidden.row(hidden.rows() - 1) = s.hidden;
    prev = s.mel_group;
    if (reached_last_character(session.attention(), n_chars - 1, hp.stop_patience)) {
      res.stopped = true;
      break;
    }
    if (session.steps() >= max_steps) break;
  }
  res.decoder_steps = session.steps();
  res.final_argmax = session.attention().last_argmax();
  res.attention = session.attention().weights;
  res.mel = Matrix(Eigen::Map<const Matrix>(mel_groups.data(), mel_groups.rows() * hp.reduction_factor,
                                            hp.n_mel_bands));
  if (!res.stopped) {
    log::warn("decoding hit the cap of " + std::to_string(max_steps) + " steps without reaching the final character");
  }

  const ad::Var frames = model.bridge.expand(tape, tape.constant(hidden));
  const ad::Var fh = model.bridge.conv_forward(tape, frames, spk_var, no_dropout);
  const ad::Var cond = model.bridge.upsample(tape, fh, spk_var);
  res.audio = model.vocoder.sample(cond.value(), spk, opts.temperature, opts.seed);
  return res;
}

}  // namespace mswave
