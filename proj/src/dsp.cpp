#include "dsp.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstring>
#include <fstream>
#include <numeric>

#include <unsupported/Eigen/FFT>

#include "error.hpp"
#include "log.hpp"

namespace mswave {
namespace {

constexpr double kPi = 3.14159265358979323846;

std::uint32_t read_u32(const std::uint8_t* p) {
  return std::uint32_t(p[0]) | (std::uint32_t(p[1]) << 8) | (std::uint32_t(p[2]) << 16) |
         (std::uint32_t(p[3]) << 24);
}
std::uint16_t read_u16(const std::uint8_t* p) { return std::uint16_t(p[0] | (p[1] << 8)); }

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(std::uint8_t((v >> (8 * i)) & 0xff));
}
void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(std::uint8_t(v & 0xff));
  out.push_back(std::uint8_t(v >> 8));
}

std::string describe_encoding(std::uint16_t format, std::uint16_t bits) {
  std::string name;
  switch (format) {
    case 1: name = "PCM"; break;
    case 3: name = "IEEE float"; break;
    case 6: name = "A-law"; break;
    case 7: name = "mu-law"; break;
    case 0xFFFE: name = "WAVE_FORMAT_EXTENSIBLE"; break;
    default: name = "format tag " + std::to_string(format); break;
  }
  return name + " " + std::to_string(bits) + "-bit";
}

double sinc(double x) {
  if (std::abs(x) < 1e-12) return 1.0;
  return std::sin(kPi * x) / (kPi * x);
}

double htk_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double htk_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

}  // namespace

Waveform read_wav(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open WAV file: " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    throw Error(ErrorCode::Parse, "not a RIFF/WAVE file: " + path);
  }
  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  const std::uint8_t* data = nullptr;
  std::size_t data_size = 0;
  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const std::uint8_t* chunk = bytes.data() + pos;
    const std::uint32_t size = read_u32(chunk + 4);
    const std::size_t avail = std::min<std::size_t>(size, bytes.size() - pos - 8);
    if (std::memcmp(chunk, "fmt ", 4) == 0 && avail >= 16) {
      format = read_u16(chunk + 8);
      channels = read_u16(chunk + 10);
      rate = read_u32(chunk + 12);
      bits = read_u16(chunk + 22);
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      data = chunk + 8;
      data_size = avail;
    }
    pos += 8 + size + (size & 1u);
  }
  if (channels == 0 || rate == 0) throw Error(ErrorCode::Parse, "WAV file has no fmt chunk: " + path);
  if (format != 1 || bits != 16) {
    throw Error(ErrorCode::InvalidArgument,
                "unsupported WAV encoding " + describe_encoding(format, bits) + " (need 16-bit PCM): " + path);
  }
  if (!data) throw Error(ErrorCode::Parse, "WAV file has no data chunk: " + path);

  const std::size_t frames = data_size / (2u * channels);
  Waveform w;
  w.sample_rate_hz = static_cast<int>(rate);
  w.samples.resize(frames);
  for (std::size_t i = 0; i < frames; ++i) {
    double acc = 0.0;
    for (std::size_t c = 0; c < channels; ++c) {
      acc += static_cast<std::int16_t>(read_u16(data + 2 * (i * channels + c)));
    }
    w.samples[i] = acc / channels / 32768.0;
  }
  return w;
}

std::vector<std::uint8_t> encode_wav(const Waveform& w) {
  std::vector<std::uint8_t> out;
  const auto n = static_cast<std::uint32_t>(w.samples.size());
  out.reserve(44 + 2 * n);
  out.insert(out.end(), {'R', 'I', 'F', 'F'});
  put_u32(out, 36 + 2 * n);
  out.insert(out.end(), {'W', 'A', 'V', 'E', 'f', 'm', 't', ' '});
  put_u32(out, 16);
  put_u16(out, 1);
  put_u16(out, 1);
  put_u32(out, static_cast<std::uint32_t>(w.sample_rate_hz));
  put_u32(out, static_cast<std::uint32_t>(w.sample_rate_hz) * 2);
  put_u16(out, 2);
  put_u16(out, 16);
  out.insert(out.end(), {'d', 'a', 't', 'a'});
  put_u32(out, 2 * n);
  for (double x : w.samples) {
    const double scaled = std::clamp(x * 32768.0, -32768.0, 32767.0);
    const auto q = static_cast<std::int16_t>(std::round(scaled));
    put_u16(out, static_cast<std::uint16_t>(q));
  }
  return out;
}

void write_wav(const std::string& path, const Waveform& w) {
  const auto bytes = encode_wav(w);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cannot write WAV file: " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

Waveform resample(const Waveform& w, int target_rate) {
  if (target_rate <= 0 || w.sample_rate_hz <= 0) {
    throw Error(ErrorCode::InvalidArgument, "sample rates must be positive");
  }
  if (target_rate == w.sample_rate_hz) return w;

  const int g = std::gcd(target_rate, w.sample_rate_hz);
  const long up = target_rate / g;
  const long down = w.sample_rate_hz / g;

  constexpr double kRolloff = 0.95;
  constexpr double kZeroCrossings = 16.0;
  constexpr double kKaiserBeta = 8.6;
  // Cutoff in cycles per input sample.
  const double fc = 0.5 * std::min(1.0, double(up) / double(down)) * kRolloff;
  const double half_width = kZeroCrossings / (2.0 * fc);
  const long taps = static_cast<long>(std::ceil(half_width));
  const double i0_beta = std::cyl_bessel_i(0.0, kKaiserBeta);

  auto kernel = [&](double tau) {
    const double r = tau / half_width;
    if (std::abs(r) >= 1.0) return 0.0;
    const double win = std::cyl_bessel_i(0.0, kKaiserBeta * std::sqrt(1.0 - r * r)) / i0_beta;
    return 2.0 * fc * sinc(2.0 * fc * tau) * win;
  };

  // One tap table per output phase.
  std::vector<std::vector<double>> table(static_cast<std::size_t>(up));
  for (long p = 0; p < up; ++p) {
    const double frac = double(p) / double(up);
    auto& row = table[static_cast<std::size_t>(p)];
    row.resize(static_cast<std::size_t>(2 * taps + 1));
    for (long j = -taps; j <= taps; ++j) row[static_cast<std::size_t>(j + taps)] = kernel(frac - double(j));
  }

  const long n_in = static_cast<long>(w.samples.size());
  const long n_out = (n_in * up + down - 1) / down;
  Waveform out;
  out.sample_rate_hz = target_rate;
  out.samples.resize(static_cast<std::size_t>(n_out));
  for (long n = 0; n < n_out; ++n) {
    const long pos = n * down;
    const long base = pos / up;
    const auto& row = table[static_cast<std::size_t>(pos % up)];
    double acc = 0.0;
    const long lo = std::max(-taps, -base);
    const long hi = std::min(taps, n_in - 1 - base);
    for (long j = lo; j <= hi; ++j) {
      acc += w.samples[static_cast<std::size_t>(base + j)] * row[static_cast<std::size_t>(j + taps)];
    }
    out.samples[static_cast<std::size_t>(n)] = std::clamp(acc, -1.0, 1.0);
  }
  return out;
}

Waveform load_resample(const std::string& path, int target_rate) {
  return resample(read_wav(path), target_rate);
}

TrimResult trim_leading_silence(const Waveform& w, double threshold_db, double frame_ms) {
  if (!(threshold_db < 0.0)) throw Error(ErrorCode::InvalidArgument, "silence threshold must be < 0 dB");
  const auto frame = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::lround(frame_ms * 1e-3 * w.sample_rate_hz)));
  const double threshold = std::pow(10.0, threshold_db / 20.0);

  TrimResult result;
  for (std::size_t start = 0; start < w.samples.size(); start += frame) {
    const std::size_t end = std::min(start + frame, w.samples.size());
    double energy = 0.0;
    for (std::size_t i = start; i < end; ++i) energy += w.samples[i] * w.samples[i];
    const double rms = std::sqrt(energy / double(end - start));
    if (rms > threshold) {
      result.removed = start;
      result.waveform.sample_rate_hz = w.sample_rate_hz;
      result.waveform.samples.assign(w.samples.begin() + static_cast<std::ptrdiff_t>(start), w.samples.end());
      return result;
    }
  }
  log::warn("trim_leading_silence: input is silent throughout; returned unchanged");
  result.waveform = w;
  result.all_silent = true;
  return result;
}

Eigen::Index frame_count(std::size_t n_samples, int hop) {
  return static_cast<Eigen::Index>(n_samples / static_cast<std::size_t>(hop)) + 1;
}

Matrix stft_magnitude(const Waveform& w, const Hyperparameters& hp) {
  const std::size_t len = w.samples.size();
  if (len < static_cast<std::size_t>(hp.win_length_samples)) {
    throw Error(ErrorCode::InvalidArgument, "waveform of " + std::to_string(len) +
                                                " samples is shorter than one analysis window (" +
                                                std::to_string(hp.win_length_samples) + ")");
  }
  const int n_fft = hp.fft_size;
  const int half = n_fft / 2;
  const int hop = hp.hop_length_samples;
  const Eigen::Index n_frames = frame_count(len, hop);

  // Periodic Hann of win_length, centered inside the FFT buffer.
  std::vector<double> window(static_cast<std::size_t>(n_fft), 0.0);
  const int offset = (n_fft - hp.win_length_samples) / 2;
  for (int i = 0; i < hp.win_length_samples; ++i) {
    window[static_cast<std::size_t>(offset + i)] =
        0.5 - 0.5 * std::cos(2.0 * kPi * i / double(hp.win_length_samples));
  }

  const long n = static_cast<long>(len);
  auto reflect = [n](long idx) {
    // Inputs shorter than fft/2 need more than one fold.
    if (n == 1) return 0L;
    while (idx < 0 || idx >= n) {
      if (idx < 0) idx = -idx;
      if (idx >= n) idx = 2 * (n - 1) - idx;
    }
    return idx;
  };

  Eigen::FFT<double> fft;
  std::vector<double> buf(static_cast<std::size_t>(n_fft));
  std::vector<std::complex<double>> spec;
  Matrix mag(n_frames, half + 1);
  for (Eigen::Index f = 0; f < n_frames; ++f) {
    const long start = static_cast<long>(f) * hop - half;
    for (int i = 0; i < n_fft; ++i) {
      const double wv = window[static_cast<std::size_t>(i)];
      buf[static_cast<std::size_t>(i)] = wv == 0.0 ? 0.0 : wv * w.samples[static_cast<std::size_t>(reflect(start + i))];
    }
    fft.fwd(spec, buf);
    for (int k = 0; k <= half; ++k) mag(f, k) = std::abs(spec[static_cast<std::size_t>(k)]);
  }
  return mag;
}

Matrix mel_filterbank(const Hyperparameters& hp) {
  const int n_bins = hp.fft_size / 2 + 1;
  const int n_mels = hp.n_mel_bands;
  const double mel_lo = htk_mel(hp.mel_fmin_hz);
  const double mel_hi = htk_mel(hp.mel_fmax_hz);
  std::vector<double> edges(static_cast<std::size_t>(n_mels + 2));
  for (int i = 0; i < n_mels + 2; ++i) {
    edges[static_cast<std::size_t>(i)] = htk_hz(mel_lo + (mel_hi - mel_lo) * i / double(n_mels + 1));
  }
  Matrix fb = Matrix::Zero(n_mels, n_bins);
  for (int b = 0; b < n_mels; ++b) {
    const double lo = edges[static_cast<std::size_t>(b)];
    const double mid = edges[static_cast<std::size_t>(b + 1)];
    const double hi = edges[static_cast<std::size_t>(b + 2)];
    for (int k = 0; k < n_bins; ++k) {
      const double f = double(k) * hp.sample_rate_hz / hp.fft_size;
      const double rise = (f - lo) / (mid - lo);
      const double fall = (hi - f) / (hi - mid);
      fb(b, k) = std::max(0.0, std::min(rise, fall));
    }
  }
  return fb;
}

Matrix linear_mel(const Waveform& w, const Hyperparameters& hp) {
  return stft_magnitude(w, hp) * mel_filterbank(hp).transpose();
}

MelSpectrogram log_mel(const Waveform& w, const Hyperparameters& hp) {
  if (w.sample_rate_hz != hp.sample_rate_hz) {
    throw Error(ErrorCode::InvalidArgument, "log_mel expects " + std::to_string(hp.sample_rate_hz) +
                                                " Hz audio, got " + std::to_string(w.sample_rate_hz));
  }
  MelSpectrogram mel;
  mel.hop_length_samples = hp.hop_length_samples;
  mel.values = (linear_mel(w, hp).array() + kLogMelFloor).log().matrix();
  return mel;
}

Waveform align_to_frames(const Waveform& w, Eigen::Index n_frames, int hop) {
  Waveform out;
  out.sample_rate_hz = w.sample_rate_hz;
  out.samples = w.samples;
  out.samples.resize(static_cast<std::size_t>(n_frames) * static_cast<std::size_t>(hop), 0.0);
  return out;
}

UtteranceFeatures extract_features(const Waveform& raw, const Hyperparameters& hp) {
  const Waveform resampled = resample(raw, hp.sample_rate_hz);
  const auto trimmed = trim_leading_silence(resampled, hp.silence_threshold_db, hp.silence_frame_ms);
  UtteranceFeatures f;
  f.mel = log_mel(trimmed.waveform, hp);
  f.waveform = align_to_frames(trimmed.waveform, f.mel.n_frames(), hp.hop_length_samples);
  return f;
}

void write_feature_file(const std::string& path, const Matrix& mel, const std::vector<double>& samples) {
  std::vector<std::uint8_t> bytes;
  bytes.reserve(16 + 4 * (static_cast<std::size_t>(mel.size()) + samples.size()));
  put_u32(bytes, kFeatureMagic);
  put_u32(bytes, static_cast<std::uint32_t>(mel.rows()));
  put_u32(bytes, static_cast<std::uint32_t>(mel.cols()));
  put_u32(bytes, static_cast<std::uint32_t>(samples.size()));
  auto put_f32 = [&bytes](double v) {
    const auto f = static_cast<float>(v);
    std::uint32_t u;
    std::memcpy(&u, &f, 4);
    put_u32(bytes, u);
  };
  for (Eigen::Index r = 0; r < mel.rows(); ++r)
    for (Eigen::Index c = 0; c < mel.cols(); ++c) put_f32(mel(r, c));
  for (double s : samples) put_f32(s);

  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw Error(ErrorCode::Io, "cannot write feature file: " + path);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(ErrorCode::Io, "short write: " + path);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) throw Error(ErrorCode::Io, "cannot rename " + tmp);
}

void read_feature_file(const std::string& path, Matrix& mel, std::vector<double>& samples) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open feature file: " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() < 16 || read_u32(bytes.data()) != kFeatureMagic) {
    throw Error(ErrorCode::Parse, "bad feature file header: " + path);
  }
  const std::uint32_t rows = read_u32(bytes.data() + 4);
  const std::uint32_t cols = read_u32(bytes.data() + 8);
  const std::uint32_t n = read_u32(bytes.data() + 12);
  const std::size_t expect = 16 + 4 * (std::size_t(rows) * cols + n);
  if (bytes.size() != expect) throw Error(ErrorCode::Parse, "feature file size mismatch: " + path);
  const std::uint8_t* p = bytes.data() + 16;
  auto get_f32 = [&p]() {
    const std::uint32_t u = read_u32(p);
    p += 4;
    float f;
    std::memcpy(&f, &u, 4);
    return double(f);
  };
  mel.resize(rows, cols);
  for (std::uint32_t r = 0; r < rows; ++r)
    for (std::uint32_t c = 0; c < cols; ++c) mel(r, c) = get_f32();
  samples.resize(n);
  for (auto& s : samples) s = get_f32();
}

void save_features(const std::string& path, const UtteranceFeatures& f, const Hyperparameters& hp) {
  if (f.waveform.samples.size() != static_cast<std::size_t>(f.mel.n_frames()) * std::size_t(hp.hop_length_samples)) {
    throw Error(ErrorCode::Internal, "features violate the frame/sample alignment contract");
  }
  write_feature_file(path, f.mel.values, f.waveform.samples);
}

UtteranceFeatures load_features(const std::string& path, const Hyperparameters& hp) {
  UtteranceFeatures f;
  read_feature_file(path, f.mel.values, f.waveform.samples);
  f.mel.hop_length_samples = hp.hop_length_samples;
  f.waveform.sample_rate_hz = hp.sample_rate_hz;
  if (f.mel.n_bands() != hp.n_mel_bands ||
      f.waveform.samples.size() != static_cast<std::size_t>(f.mel.n_frames()) * std::size_t(hp.hop_length_samples)) {
    throw Error(ErrorCode::Parse, "cached features do not match the configuration: " + path);
  }
  return f;
}

std::string feature_file_name(const std::string& utterance_id) {
  std::string name = utterance_id;
  for (char& c : name) {
    if (c == '/' || c == '\\' || c == ':') c = '~';
  }
  return name + ".feat";
}

}  // namespace mswave
