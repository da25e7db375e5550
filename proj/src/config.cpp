#include "config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include "error.hpp"

namespace mswave {
namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

template <typename T>
T parse_number(std::string_view text) {
  text = trim(text);
  T out{};
  const auto* begin = text.data();
  const auto* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(begin, end, out);
  if (ec != std::errc() || ptr != end || text.empty()) {
    throw std::invalid_argument("expected a number, got '" + std::string(text) + "'");
  }
  return out;
}

std::vector<int> parse_int_list(std::string_view text) {
  std::vector<int> out;
  text = trim(text);
  while (!text.empty()) {
    const auto comma = text.find(',');
    out.push_back(parse_number<int>(text.substr(0, comma)));
    if (comma == std::string_view::npos) break;
    text = text.substr(comma + 1);
    if (trim(text).empty()) throw std::invalid_argument("trailing comma in list");
  }
  if (out.empty()) throw std::invalid_argument("empty list");
  return out;
}

template <typename T>
std::string format_number(T v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

std::string format_int_list(const std::vector<int>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ", ";
    out += std::to_string(v[i]);
  }
  return out;
}

struct Field {
  const char* name;
  std::function<void(Hyperparameters&, std::string_view)> set;
  std::function<std::string(const Hyperparameters&)> get;
};

#define MSW_FIELD(member, type)                                                              \
  Field {                                                                                    \
    #member, [](Hyperparameters& hp, std::string_view v) { hp.member = parse_number<type>(v); }, \
        [](const Hyperparameters& hp) { return format_number<type>(hp.member); }              \
  }

#define MSW_LIST_FIELD(member)                                                                \
  Field {                                                                                     \
    #member, [](Hyperparameters& hp, std::string_view v) { hp.member = parse_int_list(v); },  \
        [](const Hyperparameters& hp) { return format_int_list(hp.member); }                  \
  }

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      MSW_FIELD(sample_rate_hz, int),
      MSW_FIELD(fft_size, int),
      MSW_FIELD(win_length_samples, int),
      MSW_FIELD(hop_length_samples, int),
      MSW_FIELD(n_mel_bands, int),
      MSW_FIELD(mel_fmin_hz, double),
      MSW_FIELD(mel_fmax_hz, double),
      MSW_FIELD(silence_threshold_db, double),
      MSW_FIELD(silence_frame_ms, double),
      MSW_FIELD(reduction_factor, int),
      MSW_FIELD(speaker_embedding_dim, int),
      MSW_FIELD(char_embedding_dim, int),
      MSW_FIELD(encoder_layers, int),
      MSW_FIELD(encoder_conv_width, int),
      MSW_FIELD(encoder_channels, int),
      MSW_LIST_FIELD(decoder_prenet_channels),
      MSW_FIELD(decoder_layers, int),
      MSW_FIELD(decoder_conv_width, int),
      MSW_FIELD(attention_channels, int),
      MSW_FIELD(positional_weight, double),
      MSW_FIELD(positional_initial_rate, double),
      MSW_FIELD(bridge_layers, int),
      MSW_FIELD(bridge_conv_width, int),
      MSW_FIELD(bridge_channels, int),
      MSW_LIST_FIELD(upsample_strides),
      MSW_FIELD(conditioner_channels, int),
      MSW_FIELD(dropout_keep_prob, double),
      MSW_FIELD(vocoder_layers, int),
      MSW_FIELD(vocoder_cycle_length, int),
      MSW_FIELD(vocoder_residual_channels, int),
      MSW_FIELD(vocoder_skip_channels, int),
      MSW_FIELD(log_sigma_floor, double),
      MSW_FIELD(batch_size, int),
      MSW_FIELD(lr_initial, double),
      MSW_FIELD(lr_anneal_start_step, long),
      MSW_FIELD(lr_anneal_period, long),
      MSW_FIELD(adam_beta1, double),
      MSW_FIELD(adam_beta2, double),
      MSW_FIELD(adam_epsilon, double),
      MSW_FIELD(max_grad_norm, double),
      MSW_FIELD(grad_clip_value, double),
      MSW_FIELD(vocoder_train_samples, int),
      MSW_FIELD(checkpoint_interval, int),
      MSW_FIELD(stop_patience, int),
      MSW_FIELD(max_decoder_steps_factor, int),
      MSW_FIELD(attention_window, int),
      MSW_FIELD(sampling_temperature, double),
  };
  return table;
}

#undef MSW_FIELD
#undef MSW_LIST_FIELD

const Field* find_field(std::string_view key) {
  for (const auto& f : fields()) {
    if (key == f.name) return &f;
  }
  return nullptr;
}

[[noreturn]] void violation(const std::string& field, const std::string& constraint) {
  throw Error(ErrorCode::Config, "invalid hyperparameter " + field + ": " + constraint);
}

void require_positive(int v, const char* name) {
  if (v <= 0) violation(name, "must be > 0 (got " + std::to_string(v) + ")");
}

}  // namespace

int Hyperparameters::upsample_factor() const {
  int product = 1;
  for (int s : upsample_strides) product *= s;
  return product;
}

void validate(const Hyperparameters& hp) {
  require_positive(hp.sample_rate_hz, "sample_rate_hz");
  require_positive(hp.fft_size, "fft_size");
  require_positive(hp.win_length_samples, "win_length_samples");
  require_positive(hp.hop_length_samples, "hop_length_samples");
  require_positive(hp.n_mel_bands, "n_mel_bands");
  if (hp.win_length_samples > hp.fft_size) {
    violation("win_length_samples", "must be <= fft_size (" + std::to_string(hp.fft_size) + ")");
  }
  if (hp.fft_size % 2 != 0) violation("fft_size", "must be even");
  if (!(hp.mel_fmin_hz >= 0.0 && hp.mel_fmin_hz < hp.mel_fmax_hz)) {
    violation("mel_fmin_hz", "must satisfy 0 <= mel_fmin_hz < mel_fmax_hz");
  }
  if (hp.mel_fmax_hz > hp.sample_rate_hz / 2.0) violation("mel_fmax_hz", "must not exceed Nyquist");
  if (!(hp.silence_threshold_db < 0.0)) violation("silence_threshold_db", "must be < 0");
  if (!(hp.silence_frame_ms > 0.0)) violation("silence_frame_ms", "must be > 0");

  require_positive(hp.reduction_factor, "reduction_factor");
  require_positive(hp.speaker_embedding_dim, "speaker_embedding_dim");
  require_positive(hp.char_embedding_dim, "char_embedding_dim");
  require_positive(hp.encoder_layers, "encoder_layers");
  require_positive(hp.encoder_channels, "encoder_channels");
  require_positive(hp.decoder_layers, "decoder_layers");
  require_positive(hp.attention_channels, "attention_channels");
  require_positive(hp.bridge_layers, "bridge_layers");
  require_positive(hp.bridge_channels, "bridge_channels");
  require_positive(hp.conditioner_channels, "conditioner_channels");
  for (auto [w, name] : {std::pair{hp.encoder_conv_width, "encoder_conv_width"},
                         std::pair{hp.decoder_conv_width, "decoder_conv_width"},
                         std::pair{hp.bridge_conv_width, "bridge_conv_width"}}) {
    if (w <= 0 || w % 2 == 0) violation(name, "must be a positive odd width");
  }
  if (hp.decoder_prenet_channels.empty()) violation("decoder_prenet_channels", "must be non-empty");
  for (int c : hp.decoder_prenet_channels) require_positive(c, "decoder_prenet_channels");
  if (!(hp.positional_weight >= 0.0)) violation("positional_weight", "must be >= 0");
  if (!(hp.positional_initial_rate > 0.0)) violation("positional_initial_rate", "must be > 0");

  if (hp.upsample_strides.empty()) violation("upsample_strides", "must be non-empty");
  for (int s : hp.upsample_strides) require_positive(s, "upsample_strides");
  if (hp.upsample_factor() != hp.hop_length_samples) {
    violation("upsample_strides", "product (" + std::to_string(hp.upsample_factor()) +
                                      ") must equal hop_length_samples (" +
                                      std::to_string(hp.hop_length_samples) + ")");
  }
  if (!(hp.dropout_keep_prob > 0.0 && hp.dropout_keep_prob <= 1.0)) {
    violation("dropout_keep_prob", "must be in (0, 1]");
  }

  require_positive(hp.vocoder_cycle_length, "vocoder_cycle_length");
  if (hp.vocoder_layers <= 0 || hp.vocoder_layers % hp.vocoder_cycle_length != 0) {
    violation("vocoder_layers", "must be a positive multiple of vocoder_cycle_length (" +
                                    std::to_string(hp.vocoder_cycle_length) + "), got " +
                                    std::to_string(hp.vocoder_layers));
  }
  if (hp.vocoder_cycle_length > 30) violation("vocoder_cycle_length", "must be <= 30");
  require_positive(hp.vocoder_residual_channels, "vocoder_residual_channels");
  require_positive(hp.vocoder_skip_channels, "vocoder_skip_channels");

  require_positive(hp.batch_size, "batch_size");
  if (!(hp.lr_initial > 0.0)) violation("lr_initial", "must be > 0");
  if (hp.lr_anneal_start_step < 0) violation("lr_anneal_start_step", "must be >= 0");
  if (hp.lr_anneal_period <= 0) violation("lr_anneal_period", "must be > 0");
  if (!(hp.adam_beta1 >= 0.0 && hp.adam_beta1 < 1.0)) violation("adam_beta1", "must be in [0, 1)");
  if (!(hp.adam_beta2 >= 0.0 && hp.adam_beta2 < 1.0)) violation("adam_beta2", "must be in [0, 1)");
  if (!(hp.adam_epsilon > 0.0)) violation("adam_epsilon", "must be > 0");
  if (!(hp.max_grad_norm > 0.0)) violation("max_grad_norm", "must be > 0");
  if (!(hp.grad_clip_value > 0.0)) violation("grad_clip_value", "must be > 0");
  if (hp.vocoder_train_samples < 0) violation("vocoder_train_samples", "must be >= 0");
  require_positive(hp.checkpoint_interval, "checkpoint_interval");

  require_positive(hp.stop_patience, "stop_patience");
  require_positive(hp.max_decoder_steps_factor, "max_decoder_steps_factor");
  if (hp.attention_window < 0) violation("attention_window", "must be >= 0");
  if (!(hp.sampling_temperature >= 0.0)) violation("sampling_temperature", "must be >= 0");
}

Hyperparameters parse_config(std::string_view text) {
  Hyperparameters hp;
  std::set<std::string, std::less<>> seen;
  int line_no = 0;
  while (!text.empty()) {
    ++line_no;
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);

    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;

    const auto eq = line.find('=');
    const std::string where = "config line " + std::to_string(line_no);
    if (eq == std::string_view::npos) {
      throw Error(ErrorCode::Parse, where + ": expected 'key = value'");
    }
    const auto key = trim(line.substr(0, eq));
    const auto value = trim(line.substr(eq + 1));
    const Field* field = find_field(key);
    if (!field) throw Error(ErrorCode::Parse, where + ": unknown key '" + std::string(key) + "'");
    if (!seen.insert(std::string(key)).second) {
      throw Error(ErrorCode::Parse, where + ": duplicate key '" + std::string(key) + "'");
    }
    try {
      field->set(hp, value);
    } catch (const std::exception& e) {
      throw Error(ErrorCode::Parse, where + ": bad value for '" + std::string(key) + "': " + e.what());
    }
  }
  validate(hp);
  return hp;
}

Hyperparameters load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open config file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string serialize_config(const Hyperparameters& hp) {
  std::string out;
  for (const auto& f : fields()) {
    out += f.name;
    out += " = ";
    out += f.get(hp);
    out += '\n';
  }
  return out;
}

void save_config(const Hyperparameters& hp, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cannot write config file: " + path);
  out << serialize_config(hp);
}

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const auto& f : fields()) keys.emplace_back(f.name);
  return keys;
}

void set_config_value(Hyperparameters& hp, std::string_view key, std::string_view value) {
  const Field* field = find_field(trim(key));
  if (!field) throw Error(ErrorCode::InvalidArgument, "unknown hyperparameter '" + std::string(key) + "'");
  try {
    field->set(hp, value);
  } catch (const std::exception& e) {
    throw Error(ErrorCode::Parse, "bad value for '" + std::string(key) + "': " + e.what());
  }
}

}  // namespace mswave
