#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "checkpoint.hpp"
#include "dataset.hpp"
#include "model.hpp"

namespace mswave {

struct LossBreakdown {
  double decoder_l1 = 0.0;
  double bridge_l1 = 0.0;
  double vocoder_nll = 0.0;
  double total = 0.0;
};

// Unit-coefficient sum; throws Error(Numeric) naming the first non-finite term.
LossBreakdown combine_losses(double decoder_l1, double bridge_l1, double vocoder_nll);

struct JointLossOptions {
  std::uint64_t dropout_seed = 0;
  bool dropout = true;
  // Adds d(total)/d(param) into every Parameter::grad.
  bool backward = false;
  // Random vocoder window length in samples (0: whole utterance) and its seed.
  int vocoder_window = 0;
  std::uint64_t crop_seed = 0;
};

// Teacher-forced encoder -> decoder -> bridge-net -> vocoder pass over every
// batch item; each term is a masked mean over the whole batch.
LossBreakdown joint_loss(Model& model, const TrainingBatch& batch, const JointLossOptions& opts);

// 0.001 up to the anneal start, then halved once immediately and again every
// anneal period.
double lr_schedule(long step, const Hyperparameters& hp);

// Rescales to global L2 norm <= max_grad_norm, then clamps elements to
// +-grad_clip_value. Returns the norm before clipping.
double clip_gradients(const std::vector<Parameter*>& params, const Hyperparameters& hp);

void adam_update(const std::vector<Parameter*>& params, AdamState& state, double lr, const Hyperparameters& hp);

// Deterministic 64-bit mixing of (seed, a, b).
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0);

struct MetricsRow {
  long step = 0;
  double lr = 0.0;
  LossBreakdown loss;
};

std::string metrics_header();
std::string format_metrics_row(const MetricsRow& row);

// Owns the model, optimizer state and data order for one training run.
class Trainer {
 public:
  Trainer(Hyperparameters hp, std::vector<UtteranceRecord> records, SpeakerRegistry registry, Charset charset,
          FeatureStore& features, std::uint64_t seed);

  // Restores parameters, moments and step. Throws Error(Config) when the
  // checkpoint's hyperparameters or speakers differ from this run's.
  void resume(const std::string& checkpoint_path);

  // Runs step() + 1: loss, backward, clipping, Adam.
  MetricsRow train_step();
  // Loss of the next step without updating anything.
  LossBreakdown peek_next_loss();

  void save(const std::string& path) const;

  long step() const { return step_; }
  Model& model() { return *model_; }
  const Model& model() const { return *model_; }
  const AdamState& optimizer() const { return adam_; }
  std::vector<UtteranceRecord> batch_records(long step) const;

 private:
  JointLossOptions loss_options(long step, bool backward) const;

  Hyperparameters hp_;
  std::vector<UtteranceRecord> records_;
  FeatureStore* features_;
  std::uint64_t seed_;
  std::unique_ptr<Model> model_;
  AdamState adam_;
  long step_ = 0;
};

struct TrainOptions {
  std::string out_dir;
  long steps = 0;  // target global step
  std::uint64_t seed = 0;
  std::string resume;  // checkpoint path, empty for a fresh run
  int log_interval = 50;
};

struct TrainResult {
  long final_step = 0;
  std::vector<MetricsRow> metrics;
  std::string checkpoint;  // last checkpoint written
};

// Training loop: checkpoints every hp.checkpoint_interval steps and at the
// end (out_dir/ckpt_<step>.msw plus out_dir/latest.msw), one metrics.csv row
// per step. On resume, metrics rows past the checkpoint step are dropped.
TrainResult train(const Hyperparameters& hp, const Manifest& manifest, const Charset& charset, FeatureStore& features,
                  const TrainOptions& opts);

}  // namespace mswave
