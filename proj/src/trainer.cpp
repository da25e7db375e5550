#include "trainer.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "error.hpp"
#include "log.hpp"

namespace fs = std::filesystem;

namespace mswave {

LossBreakdown combine_losses(double decoder_l1, double bridge_l1, double vocoder_nll) {
  const std::pair<const char*, double> terms[] = {
      {"decoder_l1", decoder_l1}, {"bridge_l1", bridge_l1}, {"vocoder_nll", vocoder_nll}};
  for (const auto& [name, v] : terms) {
    if (!std::isfinite(v)) throw Error(ErrorCode::Numeric, std::string("non-finite loss in ") + name);
  }
  LossBreakdown l{decoder_l1, bridge_l1, vocoder_nll, decoder_l1 + bridge_l1 + vocoder_nll};
  if (!std::isfinite(l.total)) throw Error(ErrorCode::Numeric, "non-finite total loss");
  return l;
}

namespace {

struct VocoderWindow {
  Eigen::Index start = 0;
  Eigen::Index length = 0;
};

}  // namespace

LossBreakdown joint_loss(Model& model, const TrainingBatch& batch, const JointLossOptions& opts) {
  const Hyperparameters& hp = model.hp();
  if (batch.items.empty()) throw Error(ErrorCode::InvalidArgument, "joint_loss: empty batch");
  const Eigen::Index hop = hp.hop_length_samples;

  // Windows and normalisers first so each item's backward pass can use the
  // batch-wide means.
  std::mt19937_64 crop_rng(opts.crop_seed);
  std::vector<VocoderWindow> windows;
  double frame_cells = 0.0, samples = 0.0;
  for (const auto& item : batch.items) {
    VocoderWindow w{0, item.waveform.size()};
    const Eigen::Index real = item.n_frames * hop;
    if (opts.vocoder_window > 0 && opts.vocoder_window < real) {
      std::uniform_int_distribution<Eigen::Index> pick(0, real - opts.vocoder_window);
      w = {pick(crop_rng), opts.vocoder_window};
    }
    windows.push_back(w);
    frame_cells += item.frame_mask.sum() * double(hp.n_mel_bands);
    samples += item.sample_mask.segment(w.start, w.length).sum();
  }
  if (frame_cells <= 0.0 || samples <= 0.0) {
    throw Error(ErrorCode::InvalidArgument, "joint_loss: every frame in the batch is masked");
  }

  std::mt19937_64 drop_rng(opts.dropout_seed);
  ad::DropoutContext dropout{hp.dropout_keep_prob, opts.dropout ? &drop_rng : nullptr};
  double dec_total = 0.0, bridge_total = 0.0, nll_total = 0.0;
  for (std::size_t i = 0; i < batch.items.size(); ++i) {
    const TrainingItem& item = batch.items[i];
    const VocoderWindow& w = windows[i];
    ad::Tape tape(opts.backward);
    const ad::Var spk = model.speakers.lookup(tape, item.speaker_index);
    const EncoderOutput enc = model.encoder.forward(tape, item.char_ids, spk, dropout);
    const ad::Var inputs = tape.constant(teacher_forcing_inputs(item.mel, hp.reduction_factor));
    const DecoderOutput dec = model.decoder.forward(tape, inputs, enc, spk, dropout);
    const ad::Var dec_frames = ad::unfold_rows(dec.mel, hp.reduction_factor);
    const ad::Var dec_sum = ad::masked_l1_sum(dec_frames, item.mel, item.frame_mask);

    const ad::Var fh = model.bridge.conv_forward(tape, model.bridge.expand(tape, dec.hidden), spk, dropout);
    const ad::Var bridge_sum = ad::masked_l1_sum(model.bridge.aux_mel(tape, fh), item.mel, item.frame_mask);

    ad::Var cond = model.bridge.upsample(tape, fh, spk);
    if (w.start != 0 || w.length != cond.rows()) cond = ad::slice_rows(cond, w.start, w.length);
    Matrix shifted(w.length, 1);
    shifted(0, 0) = w.start > 0 ? item.waveform(w.start - 1) : 0.0;
    shifted.col(0).tail(w.length - 1) = item.waveform.segment(w.start, w.length - 1);
    const ad::Var raw = model.vocoder.forward(tape, tape.constant(std::move(shifted)), cond, spk);
    const ad::Var nll_sum = ad::gaussian_nll_sum(raw, item.waveform.segment(w.start, w.length),
                                                 item.sample_mask.segment(w.start, w.length), hp.log_sigma_floor);

    const double d = dec_sum.scalar() / frame_cells;
    const double b = bridge_sum.scalar() / frame_cells;
    const double v = nll_sum.scalar() / samples;
    combine_losses(d, b, v);
    dec_total += d;
    bridge_total += b;
    nll_total += v;
    if (opts.backward) {
      const ad::Var total = ad::add(ad::add(ad::scale(dec_sum, 1.0 / frame_cells), ad::scale(bridge_sum, 1.0 / frame_cells)),
                                    ad::scale(nll_sum, 1.0 / samples));
      tape.backward(total);
      tape.accumulate_param_grads();
    }
  }
  return combine_losses(dec_total, bridge_total, nll_total);
}

double lr_schedule(long step, const Hyperparameters& hp) {
  if (step < 0) throw Error(ErrorCode::InvalidArgument, "negative training step");
  if (step <= hp.lr_anneal_start_step) return hp.lr_initial;
  const long k = (step - hp.lr_anneal_start_step) / hp.lr_anneal_period + 1;
  return hp.lr_initial * std::pow(0.5, double(k));
}

double clip_gradients(const std::vector<Parameter*>& params, const Hyperparameters& hp) {
  double sq = 0.0;
  for (const Parameter* p : params) {
    if (!p->grad.allFinite()) throw Error(ErrorCode::Numeric, "non-finite gradient in parameter " + p->name);
    sq += p->grad.squaredNorm();
  }
  const double norm = std::sqrt(sq);
  const double scale = norm > hp.max_grad_norm ? hp.max_grad_norm / norm : 1.0;
  for (Parameter* p : params) {
    if (scale != 1.0) p->grad *= scale;
    p->grad = p->grad.cwiseMax(-hp.grad_clip_value).cwiseMin(hp.grad_clip_value);
  }
  return norm;
}

void adam_update(const std::vector<Parameter*>& params, AdamState& state, double lr, const Hyperparameters& hp) {
  if (state.m.empty()) {
    for (const Parameter* p : params) {
      state.m.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
      state.v.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
    }
  }
  if (state.m.size() != params.size()) throw Error(ErrorCode::State, "optimizer state does not match parameters");
  ++state.t;
  const double b1 = hp.adam_beta1, b2 = hp.adam_beta2;
  const double c1 = 1.0 - std::pow(b1, double(state.t));
  const double c2 = 1.0 - std::pow(b2, double(state.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Parameter& p = *params[i];
    Matrix& m = state.m[i];
    Matrix& v = state.v[i];
    m = b1 * m + (1.0 - b1) * p.grad;
    v = b2 * v + (1.0 - b2) * p.grad.cwiseAbs2();
    p.value.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + hp.adam_epsilon);
  }
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
  auto splitmix = [](std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
  };
  return splitmix(splitmix(splitmix(seed) ^ a) ^ b);
}

std::string metrics_header() { return "step,lr,decoder_l1,bridge_l1,vocoder_nll,total"; }

std::string format_metrics_row(const MetricsRow& row) {
  std::ostringstream os;
  os.precision(10);
  os << row.step << ',' << row.lr << ',' << row.loss.decoder_l1 << ',' << row.loss.bridge_l1 << ','
     << row.loss.vocoder_nll << ',' << row.loss.total;
  return os.str();
}

Trainer::Trainer(Hyperparameters hp, std::vector<UtteranceRecord> records, SpeakerRegistry registry, Charset charset,
                 FeatureStore& features, std::uint64_t seed)
    : hp_(std::move(hp)), records_(std::move(records)), features_(&features), seed_(seed) {
  if (records_.empty()) throw Error(ErrorCode::InvalidArgument, "no training records");
  model_ = std::make_unique<Model>(hp_, std::move(charset), std::move(registry), seed);
}

void Trainer::resume(const std::string& checkpoint_path) {
  LoadedCheckpoint ck = load_checkpoint(checkpoint_path);
  if (!(ck.model->hp() == hp_)) {
    throw Error(ErrorCode::Config, "checkpoint " + checkpoint_path + " was trained with different hyperparameters");
  }
  if (!(ck.model->registry() == model_->registry()) || !(ck.model->charset() == model_->charset())) {
    throw Error(ErrorCode::Config, "checkpoint " + checkpoint_path + " has a different speaker registry or charset");
  }
  if (ck.seed != seed_) log::warn("resuming with seed " + std::to_string(seed_) + ", checkpoint was trained with " +
                                  std::to_string(ck.seed));
  model_ = std::move(ck.model);
  adam_ = std::move(ck.adam);
  step_ = ck.step;
}

std::vector<UtteranceRecord> Trainer::batch_records(long step) const {
  const std::size_t n = records_.size();
  const std::size_t b = std::min<std::size_t>(static_cast<std::size_t>(hp_.batch_size), n);
  std::vector<UtteranceRecord> out;
  std::size_t cached_epoch = static_cast<std::size_t>(-1);
  std::vector<std::size_t> perm(n);
  for (std::size_t j = 0; j < b; ++j) {
    const std::size_t pos = static_cast<std::size_t>(step - 1) * b + j;
    const std::size_t epoch = pos / n;
    if (epoch != cached_epoch) {
      std::iota(perm.begin(), perm.end(), std::size_t{0});
      std::mt19937_64 rng(mix_seed(seed_, epoch, 0x5eed));
      std::shuffle(perm.begin(), perm.end(), rng);
      cached_epoch = epoch;
    }
    out.push_back(records_[perm[pos % n]]);
  }
  return out;
}

JointLossOptions Trainer::loss_options(long step, bool backward) const {
  JointLossOptions o;
  o.dropout_seed = mix_seed(seed_, static_cast<std::uint64_t>(step), 1);
  o.crop_seed = mix_seed(seed_, static_cast<std::uint64_t>(step), 2);
  o.vocoder_window = hp_.vocoder_train_samples;
  o.backward = backward;
  return o;
}

LossBreakdown Trainer::peek_next_loss() {
  const TrainingBatch batch = make_batch(batch_records(step_ + 1), model_->registry(), model_->charset(), *features_, hp_);
  return joint_loss(*model_, batch, loss_options(step_ + 1, false));
}

MetricsRow Trainer::train_step() {
  const long next = step_ + 1;
  const TrainingBatch batch = make_batch(batch_records(next), model_->registry(), model_->charset(), *features_, hp_);
  model_->params().zero_grad();
  MetricsRow row;
  row.step = next;
  row.loss = joint_loss(*model_, batch, loss_options(next, true));
  const auto params = model_->params().all();
  clip_gradients(params, hp_);
  row.lr = lr_schedule(next, hp_);
  adam_update(params, adam_, row.lr, hp_);
  step_ = next;
  return row;
}

void Trainer::save(const std::string& path) const { save_checkpoint(path, *model_, &adam_, step_, seed_); }

namespace {

std::string checkpoint_name(long step) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "ckpt_%08ld.msw", step);
  return buf;
}

// Keeps the header and rows with step <= last_step.
void truncate_metrics(const fs::path& path, long last_step) {
  std::vector<std::string> keep{metrics_header()};
  if (std::ifstream in{path}) {
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) {
      long step = 0;
      const auto comma = line.find(',');
      if (comma == std::string::npos) continue;
      const auto res = std::from_chars(line.data(), line.data() + comma, step);
      if (res.ec == std::errc() && step <= last_step) keep.push_back(line);
    }
  }
  std::ofstream out(path, std::ios::trunc);
  for (const auto& l : keep) out << l << '\n';
}

}  // namespace

TrainResult train(const Hyperparameters& hp, const Manifest& manifest, const Charset& charset, FeatureStore& features,
                  const TrainOptions& opts) {
  if (opts.out_dir.empty()) throw Error(ErrorCode::InvalidArgument, "train: output directory required");
  fs::create_directories(opts.out_dir);
  Trainer trainer(hp, manifest.records, manifest.registry, charset, features, opts.seed);
  const fs::path metrics_path = fs::path(opts.out_dir) / "metrics.csv";
  if (!opts.resume.empty()) {
    trainer.resume(opts.resume);
    log::info("resumed from " + opts.resume + " at step " + std::to_string(trainer.step()));
    truncate_metrics(metrics_path, trainer.step());
  } else {
    std::ofstream(metrics_path, std::ios::trunc) << metrics_header() << '\n';
  }
  log::info("training " + std::to_string(trainer.model().params().scalar_count()) + " parameters on " +
            std::to_string(manifest.records.size()) + " utterances, " +
            std::to_string(manifest.registry.size()) + " speakers");

  TrainResult result;
  std::ofstream metrics(metrics_path, std::ios::app);
  auto write_checkpoint = [&]() {
    const std::string path = (fs::path(opts.out_dir) / checkpoint_name(trainer.step())).string();
    trainer.save(path);
    fs::copy_file(path, fs::path(opts.out_dir) / "latest.msw", fs::copy_options::overwrite_existing);
    result.checkpoint = path;
  };
  while (trainer.step() < opts.steps) {
    const MetricsRow row = trainer.train_step();
    metrics << format_metrics_row(row) << '\n' << std::flush;
    result.metrics.push_back(row);
    if (opts.log_interval > 0 && row.step % opts.log_interval == 0) {
      std::ostringstream os;
      os.precision(5);
      os << "step " << row.step << " total " << row.loss.total << " (decoder " << row.loss.decoder_l1 << ", bridge "
         << row.loss.bridge_l1 << ", vocoder " << row.loss.vocoder_nll << ")";
      log::info(os.str());
    }
    if (hp.checkpoint_interval > 0 && row.step % hp.checkpoint_interval == 0) write_checkpoint();
  }
  if (result.checkpoint.empty() || !result.metrics.empty()) {
    if (result.checkpoint != (fs::path(opts.out_dir) / checkpoint_name(trainer.step())).string()) write_checkpoint();
  }
  result.final_step = trainer.step();
  return result;
}

}  // namespace mswave
