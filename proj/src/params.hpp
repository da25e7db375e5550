#pragma once

#include <memory>
#include <random>
#include <string>
#include <vector>

#include "autodiff.hpp"

namespace mswave {

using ad::Parameter;

// Owns every trainable tensor of a model, in registration order. Names are
// unique; the order is the checkpoint order.
class ParameterStore {
 public:
  ParameterStore() = default;
  ParameterStore(const ParameterStore&) = delete;
  ParameterStore& operator=(const ParameterStore&) = delete;

  Parameter& add(const std::string& name, Matrix init);
  Parameter* find(const std::string& name);
  const Parameter* find(const std::string& name) const;

  std::vector<Parameter*> all();
  std::vector<const Parameter*> all() const;
  std::size_t size() const { return params_.size(); }
  std::size_t scalar_count() const;

  void zero_grad();

 private:
  std::vector<std::unique_ptr<Parameter>> params_;
};

// Deterministic initialisers.
Matrix uniform_init(Eigen::Index rows, Eigen::Index cols, double bound, std::mt19937_64& rng);
// Uniform with bound sqrt(6 / (fan_in + fan_out)).
Matrix xavier_init(Eigen::Index rows, Eigen::Index cols, Eigen::Index fan_in, Eigen::Index fan_out, std::mt19937_64& rng);

// Affine layer x W + b over rows.
struct Linear {
  Parameter* weight = nullptr;  // [in x out]
  Parameter* bias = nullptr;    // [1 x out]

  static Linear create(ParameterStore& store, const std::string& name, int in, int out, std::mt19937_64& rng,
                       double gain = 1.0);
  ad::Var operator()(ad::Tape& tape, ad::Var x) const;
  int in() const { return static_cast<int>(weight->value.rows()); }
  int out() const { return static_cast<int>(weight->value.cols()); }
};

}  // namespace mswave
