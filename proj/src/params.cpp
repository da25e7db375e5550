#include "params.hpp"

#include <cmath>

#include "error.hpp"

namespace mswave {

Parameter& ParameterStore::add(const std::string& name, Matrix init) {
  if (find(name)) throw Error(ErrorCode::Internal, "duplicate parameter name " + name);
  params_.push_back(std::make_unique<Parameter>(name, std::move(init)));
  return *params_.back();
}

Parameter* ParameterStore::find(const std::string& name) {
  for (auto& p : params_) {
    if (p->name == name) return p.get();
  }
  return nullptr;
}

const Parameter* ParameterStore::find(const std::string& name) const {
  for (const auto& p : params_) {
    if (p->name == name) return p.get();
  }
  return nullptr;
}

std::vector<Parameter*> ParameterStore::all() {
  std::vector<Parameter*> out;
  out.reserve(params_.size());
  for (auto& p : params_) out.push_back(p.get());
  return out;
}

std::vector<const Parameter*> ParameterStore::all() const {
  std::vector<const Parameter*> out;
  out.reserve(params_.size());
  for (const auto& p : params_) out.push_back(p.get());
  return out;
}

std::size_t ParameterStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += static_cast<std::size_t>(p->value.size());
  return n;
}

void ParameterStore::zero_grad() {
  for (auto& p : params_) p->zero_grad();
}

Matrix uniform_init(Eigen::Index rows, Eigen::Index cols, double bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-bound, bound);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
  return m;
}

Matrix xavier_init(Eigen::Index rows, Eigen::Index cols, Eigen::Index fan_in, Eigen::Index fan_out, std::mt19937_64& rng) {
  return uniform_init(rows, cols, std::sqrt(6.0 / double(fan_in + fan_out)), rng);
}

Linear Linear::create(ParameterStore& store, const std::string& name, int in, int out, std::mt19937_64& rng,
                      double gain) {
  Linear l;
  l.weight = &store.add(name + ".weight", xavier_init(in, out, in, out, rng) * gain);
  l.bias = &store.add(name + ".bias", Matrix::Zero(1, out));
  return l;
}

ad::Var Linear::operator()(ad::Tape& tape, ad::Var x) const {
  return ad::add_row(ad::matmul(x, tape.param(*weight)), tape.param(*bias));
}

}  // namespace mswave
