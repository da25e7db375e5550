#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace mswave {

// Every architectural, signal-processing and training constant of the system.
// Default-constructed values are the published multi-speaker configuration;
// a config file only lists the keys it overrides.
struct Hyperparameters {
  // Signal processing
  int sample_rate_hz = 24000;
  int fft_size = 2048;
  int win_length_samples = 1200;
  int hop_length_samples = 300;
  int n_mel_bands = 80;
  double mel_fmin_hz = 0.0;
  double mel_fmax_hz = 12000.0;
  double silence_threshold_db = -40.0;
  double silence_frame_ms = 20.0;

  // Text / seq2seq
  int reduction_factor = 4;
  int speaker_embedding_dim = 32;
  int char_embedding_dim = 256;
  int encoder_layers = 7;
  int encoder_conv_width = 5;
  int encoder_channels = 128;
  std::vector<int> decoder_prenet_channels{128, 256};
  int decoder_layers = 6;
  int decoder_conv_width = 5;
  int attention_channels = 256;
  double positional_weight = 0.1;
  double positional_initial_rate = 7.6;

  // Bridge-net
  int bridge_layers = 6;
  int bridge_conv_width = 5;
  int bridge_channels = 256;
  std::vector<int> upsample_strides{15, 20};
  int conditioner_channels = 80;

  double dropout_keep_prob = 0.95;

  // Vocoder
  int vocoder_layers = 20;
  int vocoder_cycle_length = 10;
  int vocoder_residual_channels = 64;
  int vocoder_skip_channels = 128;
  double log_sigma_floor = -7.0;

  // Optimisation
  int batch_size = 16;
  double lr_initial = 0.001;
  long lr_anneal_start_step = 500000;
  long lr_anneal_period = 200000;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;
  double max_grad_norm = 100.0;
  double grad_clip_value = 5.0;
  // Random vocoder training window in samples; 0 trains on whole utterances.
  int vocoder_train_samples = 0;
  int checkpoint_interval = 1000;

  // Inference
  int stop_patience = 2;
  int max_decoder_steps_factor = 20;
  int attention_window = 3;
  double sampling_temperature = 1.0;

  // Decoder hidden width handed to the bridge-net.
  int decoder_channels() const { return decoder_prenet_channels.back(); }
  int upsample_factor() const;

  bool operator==(const Hyperparameters&) const = default;
};

// Throws Error(Config) naming the first violated field.
void validate(const Hyperparameters& hp);

// Parses flat `key = value` text with `#` comments. Missing keys keep their
// defaults; unknown or duplicate keys and malformed values are rejected with
// the offending line number.
Hyperparameters parse_config(std::string_view text);
Hyperparameters load_config(const std::string& path);

// Emits every key, so the output reparses to an equal value.
std::string serialize_config(const Hyperparameters& hp);
void save_config(const Hyperparameters& hp, const std::string& path);

// Keys understood by the parser, in serialization order.
std::vector<std::string> config_keys();

// Overrides one key on an existing value (same value grammar as the file).
void set_config_value(Hyperparameters& hp, std::string_view key, std::string_view value);

}  // namespace mswave
