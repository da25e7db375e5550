#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "tensor.hpp"

// Tape-based reverse-mode differentiation over row-major [time x channel]
// matrices. A Tape records one forward pass; Var is a handle into it.
namespace mswave::ad {

struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;  // accumulated by Tape::accumulate_param_grads

  Parameter(std::string n, Matrix v) : name(std::move(n)), value(std::move(v)), grad(Matrix::Zero(value.rows(), value.cols())) {}
  void zero_grad() { grad.setZero(); }
};

class Tape;

class Var {
 public:
  Var() = default;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}

  const Matrix& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  // Gradient after Tape::backward; zeros if the node did not need one.
  const Matrix& grad() const;
  double scalar() const { return value()(0, 0); }

  Tape* tape() const { return tape_; }
  int id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  Tape* tape_ = nullptr;
  int id_ = -1;
};

class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, int self)>;

  // A non-recording tape evaluates ops without keeping backward closures.
  explicit Tape(bool record = true) : record_(record) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const { return record_; }

  Var constant(Matrix value);
  Var param(Parameter& p);

  // Seeds d(out)/d(out) = seed (out must be 1x1) and runs every closure in
  // reverse creation order.
  void backward(const Var& out, double seed = 1.0);
  // Adds leaf gradients into Parameter::grad.
  void accumulate_param_grads() const;

  // Op plumbing.
  Var push(Matrix value, std::initializer_list<Var> parents, BackwardFn fn);
  const Matrix& value(int id) const;
  bool needs_grad(int id) const { return nodes_[static_cast<std::size_t>(id)].needs_grad; }
  Matrix& grad(int id);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    const Matrix* external = nullptr;
    Parameter* param = nullptr;
    Matrix grad;
    bool needs_grad = false;
    BackwardFn backward;
  };
  bool record_;
  std::deque<Node> nodes_;
};

// Dropout configuration for one forward pass. keep == 1 or rng == nullptr
// disables it.
struct DropoutContext {
  double keep = 1.0;
  std::mt19937_64* rng = nullptr;
  bool active() const { return rng != nullptr && keep < 1.0; }
};

// Elementwise / shape ops.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double c);
Var add_row(Var a, Var row);  // broadcast [1 x C] over rows
Var matmul(Var a, Var b);
Var matmul_nt(Var a, Var b);  // a * b^T
Var tanh(Var a);
Var sigmoid(Var a);
Var relu(Var a);
Var softsign(Var a);
Var exp(Var a);
Var slice_rows(Var a, Eigen::Index start, Eigen::Index n);
Var slice_cols(Var a, Eigen::Index start, Eigen::Index n);
Var concat_rows(Var a, Var b);
Var concat_cols(Var a, Var b);
Var gather_rows(Var table, std::span<const int> ids);
Var gather_row(Var table, int id);
// [T x (r*C)] <-> [(T*r) x C], reinterpreting row-major storage.
Var unfold_rows(Var a, Eigen::Index r);
Var fold_rows(Var a, Eigen::Index r);
Var sum(Var a);
Var mean_rows(Var a);  // [T x C] -> [1 x C]
Var dropout(Var a, DropoutContext& ctx);

// Fused gates over a [T x 2C] input split into halves (x, y).
Var glu(Var a);          // x * sigmoid(y)
Var gated_tanh(Var a);   // tanh(x) * sigmoid(y)

// y[t] = sum_k x[t - left_pad + k * dilation] W_k over a zero-padded input.
// weight is [K*Cin x Cout], taps stacked along rows.
Var conv1d(Var x, Var weight, int dilation, int left_pad);

// Frame-to-sample upsampling: stride s, kernel 2s, edge frames replicated so
// every output sample receives exactly two taps. x is [F x Cin], weight is
// [Cin x (2s * Cout)]; output is [F*s x Cout].
Var conv_transpose_upsample(Var x, Var weight, int stride);

// Row softmax. additive_mask (if non-empty) is added to the logits first and
// may contain -inf; it carries no gradient.
Var softmax_rows(Var logits, const Matrix& additive_mask = Matrix());

// [T x C] sinusoids; pe(i, k) = sin/cos(rate * i / 10000^(2*floor(k/2)/C)),
// even k sine, odd k cosine. rate is a 1x1 Var (gradients flow into it).
Var positional_encoding(Tape& tape, Eigen::Index rows, Eigen::Index cols, Var rate, double position_offset = 0.0);

// Sum over masked cells of |pred - target|; mask is {0,1} per row.
Var masked_l1_sum(Var pred, const Matrix& target, const Eigen::VectorXd& row_mask);

// Sum over masked rows of the Gaussian negative log density. params is
// [T x 2] = (mu, raw log sigma); log sigma is clamped below at `floor`, which
// zeroes its gradient wherever the clamp is active.
Var gaussian_nll_sum(Var params, const Eigen::VectorXd& target, const Eigen::VectorXd& row_mask, double floor);

// Sum over rows of -log softmax(logits)[label].
Var softmax_cross_entropy_sum(Var logits, std::span<const int> labels);

}  // namespace mswave::ad
