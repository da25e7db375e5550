#include "checkpoint.hpp"

#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>

#include "error.hpp"

namespace mswave {

namespace {

constexpr char kMagic[8] = {'M', 'S', 'W', 'C', 'K', 'P', 'T', '1'};

class Writer {
 public:
  template <class T>
  void pod(T v) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
    bytes.insert(bytes.end(), p, p + sizeof(T));
  }
  void blob(const std::string& s) {
    pod<std::uint64_t>(s.size());
    bytes.insert(bytes.end(), s.begin(), s.end());
  }
  void tensor(const std::string& name, const Matrix& m) {
    pod<std::uint32_t>(static_cast<std::uint32_t>(name.size()));
    bytes.insert(bytes.end(), name.begin(), name.end());
    pod<std::uint64_t>(static_cast<std::uint64_t>(m.rows()));
    pod<std::uint64_t>(static_cast<std::uint64_t>(m.cols()));
    const auto* p = reinterpret_cast<const std::uint8_t*>(m.data());
    bytes.insert(bytes.end(), p, p + sizeof(double) * static_cast<std::size_t>(m.size()));
  }
  std::vector<std::uint8_t> bytes;
};

class Reader {
 public:
  Reader(const std::vector<std::uint8_t>& b, std::string origin) : bytes_(b), origin_(std::move(origin)) {}

  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) throw Error(ErrorCode::Parse, "truncated checkpoint " + origin_);
  }
  template <class T>
  T pod() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::string str(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  std::string blob() { return str(static_cast<std::size_t>(pod<std::uint64_t>())); }
  Matrix matrix(std::uint64_t rows, std::uint64_t cols) {
    const std::size_t n = static_cast<std::size_t>(rows * cols);
    need(n * sizeof(double));
    Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    std::memcpy(m.data(), bytes_.data() + pos_, n * sizeof(double));
    pos_ += n * sizeof(double);
    return m;
  }
  bool done() const { return pos_ == bytes_.size(); }
  const std::string& origin() const { return origin_; }

 private:
  const std::vector<std::uint8_t>& bytes_;
  std::string origin_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const Model& model, const AdamState* adam, long step, std::uint64_t seed) {
  Writer w;
  w.bytes.insert(w.bytes.end(), kMagic, kMagic + 8);
  w.pod<std::uint32_t>(kCheckpointVersion);
  w.pod<std::int64_t>(step);
  w.pod<std::uint64_t>(seed);
  w.blob(serialize_config(model.hp()));
  w.blob(model.registry().serialize());
  w.blob(model.charset().serialize());
  const auto params = model.params().all();
  const bool with_adam = adam && !adam->m.empty();
  if (with_adam && (adam->m.size() != params.size() || adam->v.size() != params.size())) {
    throw Error(ErrorCode::State, "optimizer state does not match the parameter list");
  }
  w.pod<std::uint64_t>(params.size() * (with_adam ? 3 : 1));
  for (const Parameter* p : params) w.tensor(p->name, p->value);
  if (with_adam) {
    for (std::size_t i = 0; i < params.size(); ++i) w.tensor("adam_m/" + params[i]->name, adam->m[i]);
    for (std::size_t i = 0; i < params.size(); ++i) w.tensor("adam_v/" + params[i]->name, adam->v[i]);
  }
  return std::move(w.bytes);
}

void write_file_atomic(const std::string& path, const std::vector<std::uint8_t>& bytes) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::Io, "cannot open " + tmp + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(ErrorCode::Io, "write failed: " + tmp);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) throw Error(ErrorCode::Io, "cannot rename " + tmp + " to " + path);
}

void save_checkpoint(const std::string& path, const Model& model, const AdamState* adam, long step,
                     std::uint64_t seed) {
  write_file_atomic(path, encode_checkpoint(model, adam, step, seed));
}

LoadedCheckpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes, const std::string& origin) {
  Reader r(bytes, origin);
  if (r.str(8) != std::string(kMagic, 8)) throw Error(ErrorCode::Parse, "not a checkpoint file: " + origin);
  const auto version = r.pod<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw Error(ErrorCode::Parse, "unsupported checkpoint version " + std::to_string(version) + " in " + origin);
  }
  LoadedCheckpoint ck;
  ck.step = static_cast<long>(r.pod<std::int64_t>());
  ck.seed = r.pod<std::uint64_t>();
  Hyperparameters hp = parse_config(r.blob());
  SpeakerRegistry registry = SpeakerRegistry::parse(r.blob());
  Charset charset = Charset::parse(r.blob());
  ck.model = std::make_unique<Model>(std::move(hp), std::move(charset), std::move(registry), 0);

  std::map<std::string, Matrix> tensors;
  const auto n = r.pod<std::uint64_t>();
  for (std::uint64_t i = 0; i < n; ++i) {
    const std::string name = r.str(r.pod<std::uint32_t>());
    const auto rows = r.pod<std::uint64_t>();
    const auto cols = r.pod<std::uint64_t>();
    if (!tensors.emplace(name, r.matrix(rows, cols)).second) {
      throw Error(ErrorCode::Parse, "duplicate tensor " + name + " in " + origin);
    }
  }
  if (!r.done()) throw Error(ErrorCode::Parse, "trailing bytes in checkpoint " + origin);

  auto take = [&](const std::string& name, const Matrix& like) {
    auto it = tensors.find(name);
    if (it == tensors.end()) throw Error(ErrorCode::Parse, "checkpoint " + origin + " lacks tensor " + name);
    if (it->second.rows() != like.rows() || it->second.cols() != like.cols()) {
      throw Error(ErrorCode::Parse, "tensor " + name + " in " + origin + " has the wrong shape");
    }
    Matrix m = std::move(it->second);
    tensors.erase(it);
    return m;
  };
  const auto params = ck.model->params().all();
  for (Parameter* p : params) p->value = take(p->name, p->value);
  if (!tensors.empty()) {
    for (Parameter* p : params) ck.adam.m.push_back(take("adam_m/" + p->name, p->value));
    for (Parameter* p : params) ck.adam.v.push_back(take("adam_v/" + p->name, p->value));
    ck.adam.t = ck.step;
  }
  if (!tensors.empty()) throw Error(ErrorCode::Parse, "unknown tensor " + tensors.begin()->first + " in " + origin);
  return ck;
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open checkpoint " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes, path);
}

}  // namespace mswave
