#include "autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "error.hpp"

namespace mswave::ad {
namespace {

constexpr double kHalfLog2Pi = 0.91893853320467274178;

[[noreturn]] void shape_error(const char* op, const Matrix& a, const Matrix& b) {
  throw Error(ErrorCode::InvalidArgument, std::string(op) + ": shape mismatch [" + std::to_string(a.rows()) + "x" +
                                              std::to_string(a.cols()) + "] vs [" + std::to_string(b.rows()) + "x" +
                                              std::to_string(b.cols()) + "]");
}

void same_tape(const Var& a, const Var& b) {
  if (a.tape() != b.tape()) throw Error(ErrorCode::InvalidArgument, "operands recorded on different tapes");
}

template <typename F>
Var unary(Var a, Matrix value, F&& local_backward) {
  const int ia = a.id();
  return a.tape()->push(std::move(value), {a}, [ia, fn = std::forward<F>(local_backward)](Tape& t, int self) {
    if (t.needs_grad(ia)) fn(t.grad(ia), t.grad(self), t.value(ia), t.value(self));
  });
}

}  // namespace

const Matrix& Var::value() const { return tape_->value(id_); }
const Matrix& Var::grad() const { return tape_->grad(id_); }

Var Tape::constant(Matrix value) {
  Node n;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size() - 1));
}

Var Tape::param(Parameter& p) {
  Node n;
  n.external = &p.value;
  n.param = &p;
  n.needs_grad = record_;
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size() - 1));
}

Var Tape::push(Matrix value, std::initializer_list<Var> parents, BackwardFn fn) {
  Node n;
  n.value = std::move(value);
  if (record_) {
    for (const auto& p : parents) {
      if (p.tape() != this) throw Error(ErrorCode::InvalidArgument, "operand recorded on a different tape");
      if (needs_grad(p.id())) n.needs_grad = true;
    }
    if (n.needs_grad) n.backward = std::move(fn);
  }
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size() - 1));
}

const Matrix& Tape::value(int id) const {
  const Node& n = nodes_[static_cast<std::size_t>(id)];
  return n.external ? *n.external : n.value;
}

Matrix& Tape::grad(int id) {
  Node& n = nodes_[static_cast<std::size_t>(id)];
  if (n.grad.size() == 0) {
    const Matrix& v = n.external ? *n.external : n.value;
    n.grad = Matrix::Zero(v.rows(), v.cols());
  }
  return n.grad;
}

void Tape::backward(const Var& out, double seed) {
  if (!record_) throw Error(ErrorCode::State, "backward on a non-recording tape");
  if (out.tape() != this) throw Error(ErrorCode::InvalidArgument, "backward: output not on this tape");
  if (out.rows() != 1 || out.cols() != 1) throw Error(ErrorCode::InvalidArgument, "backward: output must be 1x1");
  if (!needs_grad(out.id())) return;
  grad(out.id())(0, 0) += seed;
  for (int i = out.id(); i >= 0; --i) {
    Node& n = nodes_[static_cast<std::size_t>(i)];
    if (!n.backward || n.grad.size() == 0) continue;
    n.backward(*this, i);
  }
}

void Tape::accumulate_param_grads() const {
  for (const auto& n : nodes_) {
    if (n.param && n.grad.size() != 0) n.param->grad += n.grad;
  }
}

Var add(Var a, Var b) {
  same_tape(a, b);
  if (a.rows() != b.rows() || a.cols() != b.cols()) shape_error("add", a.value(), b.value());
  const int ia = a.id(), ib = b.id();
  return a.tape()->push(a.value() + b.value(), {a, b}, [ia, ib](Tape& t, int self) {
    if (t.needs_grad(ia)) t.grad(ia) += t.grad(self);
    if (t.needs_grad(ib)) t.grad(ib) += t.grad(self);
  });
}

Var sub(Var a, Var b) {
  same_tape(a, b);
  if (a.rows() != b.rows() || a.cols() != b.cols()) shape_error("sub", a.value(), b.value());
  const int ia = a.id(), ib = b.id();
  return a.tape()->push(a.value() - b.value(), {a, b}, [ia, ib](Tape& t, int self) {
    if (t.needs_grad(ia)) t.grad(ia) += t.grad(self);
    if (t.needs_grad(ib)) t.grad(ib) -= t.grad(self);
  });
}

Var mul(Var a, Var b) {
  same_tape(a, b);
  if (a.rows() != b.rows() || a.cols() != b.cols()) shape_error("mul", a.value(), b.value());
  const int ia = a.id(), ib = b.id();
  return a.tape()->push(a.value().cwiseProduct(b.value()), {a, b}, [ia, ib](Tape& t, int self) {
    const Matrix& g = t.grad(self);
    if (t.needs_grad(ia)) t.grad(ia) += g.cwiseProduct(t.value(ib));
    if (t.needs_grad(ib)) t.grad(ib) += g.cwiseProduct(t.value(ia));
  });
}

Var scale(Var a, double c) {
  return unary(a, a.value() * c, [c](Matrix& ga, const Matrix& g, const Matrix&, const Matrix&) { ga += g * c; });
}

Var add_row(Var a, Var row) {
  same_tape(a, row);
  if (row.rows() != 1 || row.cols() != a.cols()) shape_error("add_row", a.value(), row.value());
  const int ia = a.id(), ir = row.id();
  Matrix v = a.value().rowwise() + row.value().row(0);
  return a.tape()->push(std::move(v), {a, row}, [ia, ir](Tape& t, int self) {
    const Matrix& g = t.grad(self);
    if (t.needs_grad(ia)) t.grad(ia) += g;
    if (t.needs_grad(ir)) t.grad(ir) += g.colwise().sum();
  });
}

Var matmul(Var a, Var b) {
  same_tape(a, b);
  if (a.cols() != b.rows()) shape_error("matmul", a.value(), b.value());
  const int ia = a.id(), ib = b.id();
  Matrix v(a.rows(), b.cols());
  v.noalias() = a.value() * b.value();
  return a.tape()->push(std::move(v), {a, b}, [ia, ib](Tape& t, int self) {
    const Matrix& g = t.grad(self);
    if (t.needs_grad(ia)) t.grad(ia).noalias() += g * t.value(ib).transpose();
    if (t.needs_grad(ib)) t.grad(ib).noalias() += t.value(ia).transpose() * g;
  });
}

Var matmul_nt(Var a, Var b) {
  same_tape(a, b);
  if (a.cols() != b.cols()) shape_error("matmul_nt", a.value(), b.value());
  const int ia = a.id(), ib = b.id();
  Matrix v(a.rows(), b.rows());
  v.noalias() = a.value() * b.value().transpose();
  return a.tape()->push(std::move(v), {a, b}, [ia, ib](Tape& t, int self) {
    const Matrix& g = t.grad(self);
    if (t.needs_grad(ia)) t.grad(ia).noalias() += g * t.value(ib);
    if (t.needs_grad(ib)) t.grad(ib).noalias() += g.transpose() * t.value(ia);
  });
}

Var tanh(Var a) {
  Matrix v = a.value().array().tanh().matrix();
  return unary(a, std::move(v), [](Matrix& ga, const Matrix& g, const Matrix&, const Matrix& y) {
    ga.array() += g.array() * (1.0 - y.array().square());
  });
}

Var sigmoid(Var a) {
  Matrix v = (1.0 / (1.0 + (-a.value().array()).exp())).matrix();
  return unary(a, std::move(v), [](Matrix& ga, const Matrix& g, const Matrix&, const Matrix& y) {
    ga.array() += g.array() * y.array() * (1.0 - y.array());
  });
}

Var relu(Var a) {
  Matrix v = a.value().cwiseMax(0.0);
  return unary(a, std::move(v), [](Matrix& ga, const Matrix& g, const Matrix& x, const Matrix&) {
    ga.array() += (x.array() > 0.0).select(g.array(), 0.0);
  });
}

Var softsign(Var a) {
  Matrix v = (a.value().array() / (1.0 + a.value().array().abs())).matrix();
  return unary(a, std::move(v), [](Matrix& ga, const Matrix& g, const Matrix& x, const Matrix&) {
    ga.array() += g.array() / (1.0 + x.array().abs()).square();
  });
}

Var exp(Var a) {
  Matrix v = a.value().array().exp().matrix();
  return unary(a, std::move(v), [](Matrix& ga, const Matrix& g, const Matrix&, const Matrix& y) {
    ga.array() += g.array() * y.array();
  });
}

Var slice_rows(Var a, Eigen::Index start, Eigen::Index n) {
  if (start < 0 || n < 0 || start + n > a.rows()) throw Error(ErrorCode::InvalidArgument, "slice_rows out of range");
  Matrix v = a.value().middleRows(start, n);
  return unary(a, std::move(v), [start, n](Matrix& ga, const Matrix& g, const Matrix&, const Matrix&) {
    ga.middleRows(start, n) += g;
  });
}

Var slice_cols(Var a, Eigen::Index start, Eigen::Index n) {
  if (start < 0 || n < 0 || start + n > a.cols()) throw Error(ErrorCode::InvalidArgument, "slice_cols out of range");
  Matrix v = a.value().middleCols(start, n);
  return unary(a, std::move(v), [start, n](Matrix& ga, const Matrix& g, const Matrix&, const Matrix&) {
    ga.middleCols(start, n) += g;
  });
}

Var concat_rows(Var a, Var b) {
  same_tape(a, b);
  if (a.cols() != b.cols()) shape_error("concat_rows", a.value(), b.value());
  Matrix v(a.rows() + b.rows(), a.cols());
  v.topRows(a.rows()) = a.value();
  v.bottomRows(b.rows()) = b.value();
  const int ia = a.id(), ib = b.id();
  const Eigen::Index ra = a.rows(), rb = b.rows();
  return a.tape()->push(std::move(v), {a, b}, [ia, ib, ra, rb](Tape& t, int self) {
    const Matrix& g = t.grad(self);
    if (t.needs_grad(ia)) t.grad(ia) += g.topRows(ra);
    if (t.needs_grad(ib)) t.grad(ib) += g.bottomRows(rb);
  });
}

Var concat_cols(Var a, Var b) {
  same_tape(a, b);
  if (a.rows() != b.rows()) shape_error("concat_cols", a.value(), b.value());
  Matrix v(a.rows(), a.cols() + b.cols());
  v.leftCols(a.cols()) = a.value();
  v.rightCols(b.cols()) = b.value();
  const int ia = a.id(), ib = b.id();
  const Eigen::Index ca = a.cols(), cb = b.cols();
  return a.tape()->push(std::move(v), {a, b}, [ia, ib, ca, cb](Tape& t, int self) {
    const Matrix& g = t.grad(self);
    if (t.needs_grad(ia)) t.grad(ia) += g.leftCols(ca);
    if (t.needs_grad(ib)) t.grad(ib) += g.rightCols(cb);
  });
}

Var gather_rows(Var table, std::span<const int> ids) {
  std::vector<int> idx(ids.begin(), ids.end());
  Matrix v(static_cast<Eigen::Index>(idx.size()), table.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] < 0 || idx[i] >= table.rows()) {
      throw Error(ErrorCode::InvalidArgument, "gather_rows: index " + std::to_string(idx[i]) + " out of range");
    }
    v.row(static_cast<Eigen::Index>(i)) = table.value().row(idx[i]);
  }
  return unary(table, std::move(v), [idx = std::move(idx)](Matrix& ga, const Matrix& g, const Matrix&, const Matrix&) {
    for (std::size_t i = 0; i < idx.size(); ++i) ga.row(idx[i]) += g.row(static_cast<Eigen::Index>(i));
  });
}

Var gather_row(Var table, int id) {
  const int ids[1] = {id};
  return gather_rows(table, ids);
}

Var unfold_rows(Var a, Eigen::Index r) {
  if (r <= 0 || a.cols() % r != 0) throw Error(ErrorCode::InvalidArgument, "unfold_rows: cols not divisible");
  const Eigen::Index c = a.cols() / r;
  Matrix v = Eigen::Map<const Matrix>(a.value().data(), a.rows() * r, c);
  return unary(a, std::move(v), [](Matrix& ga, const Matrix& g, const Matrix&, const Matrix&) {
    Eigen::Map<Matrix>(ga.data(), g.rows(), g.cols()) += g;
  });
}

Var fold_rows(Var a, Eigen::Index r) {
  if (r <= 0 || a.rows() % r != 0) throw Error(ErrorCode::InvalidArgument, "fold_rows: rows not divisible");
  Matrix v = Eigen::Map<const Matrix>(a.value().data(), a.rows() / r, a.cols() * r);
  return unary(a, std::move(v), [](Matrix& ga, const Matrix& g, const Matrix&, const Matrix&) {
    Eigen::Map<Matrix>(ga.data(), g.rows(), g.cols()) += g;
  });
}

Var sum(Var a) {
  Matrix v(1, 1);
  v(0, 0) = a.value().sum();
  return unary(a, std::move(v), [](Matrix& ga, const Matrix& g, const Matrix&, const Matrix&) {
    ga.array() += g(0, 0);
  });
}

Var mean_rows(Var a) {
  if (a.rows() == 0) throw Error(ErrorCode::InvalidArgument, "mean_rows of an empty matrix");
  const double inv = 1.0 / double(a.rows());
  Matrix v = a.value().colwise().sum() * inv;
  return unary(a, std::move(v), [inv](Matrix& ga, const Matrix& g, const Matrix&, const Matrix&) {
    ga.rowwise() += g.row(0) * inv;
  });
}

Var dropout(Var a, DropoutContext& ctx) {
  if (!ctx.active()) return a;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Matrix mask(a.rows(), a.cols());
  const double inv_keep = 1.0 / ctx.keep;
  for (Eigen::Index i = 0; i < mask.size(); ++i) mask.data()[i] = u(*ctx.rng) < ctx.keep ? inv_keep : 0.0;
  return mul(a, a.tape()->constant(std::move(mask)));
}

Var glu(Var a) {
  if (a.cols() % 2 != 0) throw Error(ErrorCode::InvalidArgument, "glu: odd channel count");
  const Eigen::Index c = a.cols() / 2;
  const auto x = a.value().leftCols(c).array();
  const Eigen::ArrayXXd s = 1.0 / (1.0 + (-a.value().rightCols(c).array()).exp());
  Matrix v = (x * s).matrix();
  const int ia = a.id();
  return a.tape()->push(std::move(v), {a}, [ia, c](Tape& t, int self) {
    if (!t.needs_grad(ia)) return;
    const Matrix& in = t.value(ia);
    const Matrix& g = t.grad(self);
    const Eigen::ArrayXXd sg = 1.0 / (1.0 + (-in.rightCols(c).array()).exp());
    Matrix& ga = t.grad(ia);
    ga.leftCols(c).array() += g.array() * sg;
    ga.rightCols(c).array() += g.array() * in.leftCols(c).array() * sg * (1.0 - sg);
  });
}

Var gated_tanh(Var a) {
  if (a.cols() % 2 != 0) throw Error(ErrorCode::InvalidArgument, "gated_tanh: odd channel count");
  const Eigen::Index c = a.cols() / 2;
  const Eigen::ArrayXXd th = a.value().leftCols(c).array().tanh();
  const Eigen::ArrayXXd s = 1.0 / (1.0 + (-a.value().rightCols(c).array()).exp());
  Matrix v = (th * s).matrix();
  const int ia = a.id();
  return a.tape()->push(std::move(v), {a}, [ia, c](Tape& t, int self) {
    if (!t.needs_grad(ia)) return;
    const Matrix& in = t.value(ia);
    const Matrix& g = t.grad(self);
    const Eigen::ArrayXXd th2 = in.leftCols(c).array().tanh();
    const Eigen::ArrayXXd sg = 1.0 / (1.0 + (-in.rightCols(c).array()).exp());
    Matrix& ga = t.grad(ia);
    ga.leftCols(c).array() += g.array() * sg * (1.0 - th2.square());
    ga.rightCols(c).array() += g.array() * th2 * sg * (1.0 - sg);
  });
}

Var conv1d(Var x, Var weight, int dilation, int left_pad) {
  same_tape(x, weight);
  const Eigen::Index cin = x.cols();
  if (cin == 0 || weight.rows() % cin != 0) shape_error("conv1d", x.value(), weight.value());
  const Eigen::Index taps = weight.rows() / cin;
  const Eigen::Index len = x.rows();
  const Matrix& xv = x.value();
  const Matrix& wv = weight.value();
  Matrix y = Matrix::Zero(len, weight.cols());
  for (Eigen::Index k = 0; k < taps; ++k) {
    const Eigen::Index off = k * dilation - left_pad;
    const Eigen::Index t0 = std::max<Eigen::Index>(0, -off);
    const Eigen::Index t1 = std::min<Eigen::Index>(len, len - off);
    if (t1 <= t0) continue;
    y.middleRows(t0, t1 - t0).noalias() += xv.middleRows(t0 + off, t1 - t0) * wv.middleRows(k * cin, cin);
  }
  const int ix = x.id(), iw = weight.id();
  return x.tape()->push(std::move(y), {x, weight}, [ix, iw, cin, taps, len, dilation, left_pad](Tape& t, int self) {
    const Matrix& g = t.grad(self);
    const Matrix& xv2 = t.value(ix);
    const Matrix& wv2 = t.value(iw);
    const bool gx = t.needs_grad(ix), gw = t.needs_grad(iw);
    for (Eigen::Index k = 0; k < taps; ++k) {
      const Eigen::Index off = k * dilation - left_pad;
      const Eigen::Index t0 = std::max<Eigen::Index>(0, -off);
      const Eigen::Index t1 = std::min<Eigen::Index>(len, len - off);
      if (t1 <= t0) continue;
      const Eigen::Index n = t1 - t0;
      if (gx) t.grad(ix).middleRows(t0 + off, n).noalias() += g.middleRows(t0, n) * wv2.middleRows(k * cin, cin).transpose();
      if (gw) t.grad(iw).middleRows(k * cin, cin).noalias() += xv2.middleRows(t0 + off, n).transpose() * g.middleRows(t0, n);
    }
  });
}

Var conv_transpose_upsample(Var x, Var weight, int stride) {
  same_tape(x, weight);
  if (stride <= 0) throw Error(ErrorCode::InvalidArgument, "conv_transpose_upsample: stride must be > 0");
  if (weight.rows() != x.cols() || weight.cols() % (2 * stride) != 0) {
    shape_error("conv_transpose_upsample", x.value(), weight.value());
  }
  const Eigen::Index frames = x.rows();
  if (frames == 0) throw Error(ErrorCode::InvalidArgument, "conv_transpose_upsample: no frames");
  const Eigen::Index cout = weight.cols() / (2 * stride);
  const Eigen::Index s = stride;
  const Eigen::Index half = s / 2;
  const Eigen::Index out_len = frames * s;

  Matrix z(frames, weight.cols());
  z.noalias() = x.value() * weight.value();
  Matrix y = Matrix::Zero(out_len, cout);
  for (Eigen::Index g = -1; g <= frames; ++g) {
    const Eigen::Index src = std::clamp<Eigen::Index>(g, 0, frames - 1);
    for (Eigen::Index j = 0; j < 2 * s; ++j) {
      const Eigen::Index tpos = g * s + j - half;
      if (tpos < 0 || tpos >= out_len) continue;
      y.row(tpos) += z.block(src, j * cout, 1, cout);
    }
  }
  const int ix = x.id(), iw = weight.id();
  return x.tape()->push(std::move(y), {x, weight}, [ix, iw, frames, cout, s, half, out_len](Tape& t, int self) {
    const Matrix& gy = t.grad(self);
    Matrix gz = Matrix::Zero(frames, 2 * s * cout);
    for (Eigen::Index g = -1; g <= frames; ++g) {
      const Eigen::Index src = std::clamp<Eigen::Index>(g, 0, frames - 1);
      for (Eigen::Index j = 0; j < 2 * s; ++j) {
        const Eigen::Index tpos = g * s + j - half;
        if (tpos < 0 || tpos >= out_len) continue;
        gz.block(src, j * cout, 1, cout) += gy.row(tpos);
      }
    }
    if (t.needs_grad(ix)) t.grad(ix).noalias() += gz * t.value(iw).transpose();
    if (t.needs_grad(iw)) t.grad(iw).noalias() += t.value(ix).transpose() * gz;
  });
}

Var softmax_rows(Var logits, const Matrix& additive_mask) {
  Matrix z = logits.value();
  if (additive_mask.size() != 0) {
    if (additive_mask.rows() != z.rows() || additive_mask.cols() != z.cols()) {
      shape_error("softmax_rows mask", z, additive_mask);
    }
    z += additive_mask;
  }
  for (Eigen::Index r = 0; r < z.rows(); ++r) {
    const double m = z.row(r).maxCoeff();
    if (!std::isfinite(m)) throw Error(ErrorCode::Numeric, "softmax_rows: row fully masked or non-finite");
    z.row(r) = (z.row(r).array() - m).exp().matrix();
    z.row(r) /= z.row(r).sum();
  }
  return unary(logits, std::move(z), [](Matrix& ga, const Matrix& g, const Matrix&, const Matrix& y) {
    const Eigen::VectorXd dot = (g.array() * y.array()).rowwise().sum();
    ga.array() += y.array() * (g.array().colwise() - dot.array());
  });
}

Var positional_encoding(Tape& tape, Eigen::Index rows, Eigen::Index cols, Var rate, double position_offset) {
  if (rate.rows() != 1 || rate.cols() != 1) throw Error(ErrorCode::InvalidArgument, "positional rate must be 1x1");
  const double w = rate.scalar();
  Eigen::VectorXd inv_freq(cols);
  for (Eigen::Index k = 0; k < cols; ++k) {
    inv_freq(k) = std::pow(10000.0, -2.0 * double(k / 2) / double(cols));
  }
  Matrix pe(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    const double pos = double(i) + position_offset;
    for (Eigen::Index k = 0; k < cols; ++k) {
      const double arg = w * pos * inv_freq(k);
      pe(i, k) = (k % 2 == 0) ? std::sin(arg) : std::cos(arg);
    }
  }
  const int ir = rate.id();
  return tape.push(std::move(pe), {rate}, [ir, inv_freq, position_offset](Tape& t, int self) {
    if (!t.needs_grad(ir)) return;
    const Matrix& g = t.grad(self);
    const double w2 = t.value(ir)(0, 0);
    double acc = 0.0;
    for (Eigen::Index i = 0; i < g.rows(); ++i) {
      const double pos = double(i) + position_offset;
      for (Eigen::Index k = 0; k < g.cols(); ++k) {
        const double d = pos * inv_freq(k);
        const double arg = w2 * d;
        acc += g(i, k) * d * ((k % 2 == 0) ? std::cos(arg) : -std::sin(arg));
      }
    }
    t.grad(ir)(0, 0) += acc;
  });
}

Var masked_l1_sum(Var pred, const Matrix& target, const Eigen::VectorXd& row_mask) {
  if (pred.rows() != target.rows() || pred.cols() != target.cols()) shape_error("masked_l1_sum", pred.value(), target);
  if (row_mask.size() != pred.rows()) throw Error(ErrorCode::InvalidArgument, "masked_l1_sum: mask length mismatch");
  const Matrix diff = pred.value() - target;
  Matrix v(1, 1);
  v(0, 0) = (diff.array().abs().colwise() * row_mask.array()).sum();
  return unary(pred, std::move(v), [diff, row_mask](Matrix& ga, const Matrix& g, const Matrix&, const Matrix&) {
    ga.array() += g(0, 0) * (diff.array().sign().colwise() * row_mask.array());
  });
}

Var gaussian_nll_sum(Var params, const Eigen::VectorXd& target, const Eigen::VectorXd& row_mask, double floor) {
  if (params.cols() != 2 || params.rows() != target.size() || row_mask.size() != target.size()) {
    throw Error(ErrorCode::InvalidArgument, "gaussian_nll_sum: expected [T x 2] params with T targets and mask entries");
  }
  const Matrix& p = params.value();
  double total = 0.0;
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    if (row_mask(i) == 0.0) continue;
    const double ls = std::max(p(i, 1), floor);
    const double z = (target(i) - p(i, 0)) * std::exp(-ls);
    total += row_mask(i) * (kHalfLog2Pi + ls + 0.5 * z * z);
  }
  Matrix v(1, 1);
  v(0, 0) = total;
  return unary(params, std::move(v), [target, row_mask, floor](Matrix& ga, const Matrix& g, const Matrix& pin, const Matrix&) {
    const double go = g(0, 0);
    for (Eigen::Index i = 0; i < pin.rows(); ++i) {
      if (row_mask(i) == 0.0) continue;
      const bool clamped = pin(i, 1) < floor;
      const double ls = clamped ? floor : pin(i, 1);
      const double inv_var = std::exp(-2.0 * ls);
      const double diff = target(i) - pin(i, 0);
      ga(i, 0) += go * row_mask(i) * (-diff * inv_var);
      if (!clamped) ga(i, 1) += go * row_mask(i) * (1.0 - diff * diff * inv_var);
    }
  });
}

Var softmax_cross_entropy_sum(Var logits, std::span<const int> labels) {
  if (static_cast<Eigen::Index>(labels.size()) != logits.rows()) {
    throw Error(ErrorCode::InvalidArgument, "softmax_cross_entropy_sum: label count mismatch");
  }
  std::vector<int> lab(labels.begin(), labels.end());
  const Matrix& z = logits.value();
  Matrix probs(z.rows(), z.cols());
  double total = 0.0;
  for (Eigen::Index r = 0; r < z.rows(); ++r) {
    const int y = lab[static_cast<std::size_t>(r)];
    if (y < 0 || y >= z.cols()) throw Error(ErrorCode::InvalidArgument, "softmax_cross_entropy_sum: label out of range");
    const double m = z.row(r).maxCoeff();
    probs.row(r) = (z.row(r).array() - m).exp().matrix();
    const double norm = probs.row(r).sum();
    probs.row(r) /= norm;
    total += -(z(r, y) - m - std::log(norm));
  }
  Matrix v(1, 1);
  v(0, 0) = total;
  return unary(logits, std::move(v), [probs, lab = std::move(lab)](Matrix& ga, const Matrix& g, const Matrix&, const Matrix&) {
    Matrix d = probs;
    for (std::size_t r = 0; r < lab.size(); ++r) d(static_cast<Eigen::Index>(r), lab[r]) -= 1.0;
    ga += g(0, 0) * d;
  });
}

}  // namespace mswave::ad
