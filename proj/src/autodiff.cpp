#include "wgnn/autodiff.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

namespace wgnn::ad {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

std::size_t product(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

[[noreturn]] void shape_fail(std::string_view op, const std::string& detail) {
  throw ShapeError(std::string(op) + ": " + detail);
}

void require_same(std::string_view op, Var a, Var b) {
  if (a.shape() != b.shape()) {
    shape_fail(op, "shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
}

void require_rowwise(std::string_view op, Var a) {
  if (a.value().rank() == 0 || a.value().rank() > 2) {
    shape_fail(op, "expected rank 1 or 2, got " + shape_str(a.shape()));
  }
}

bool needs_grad(std::initializer_list<Var> xs) {
  return std::any_of(xs.begin(), xs.end(), [](Var v) { return v.tape->requires_grad(v); });
}

Tape& tape_of(std::string_view op, std::initializer_list<Var> xs) {
  Tape* t = xs.begin()->tape;
  for (Var v : xs) {
    if (v.tape != t || t == nullptr) shape_fail(op, "inputs live on different tapes");
  }
  return *t;
}

void axpy(Tensor& dst, const Tensor& src, double s = 1.0) {
  auto d = dst.data();
  auto x = src.data();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] += s * x[i];
}

// Elementwise unary op: f gives the value, df(x, y) the local derivative.
template <typename F, typename DF>
Var unary(std::string_view op, Var a, F f, DF df) {
  Tape& t = *a.tape;
  const Tensor& av = a.value();
  Tensor out(av.shape());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = f(av[i]);
  if (!t.requires_grad(a)) return t.push(op, std::move(out), false, nullptr);
  const std::size_t ia = a.id;
  const std::size_t ir = t.size();
  return t.push(op, std::move(out), true, [ia, ir, df](Tape& tp, const Tensor& g) {
    Tensor* ga = tp.grad_buffer(ia);
    const Tensor& x = tp.value(Var{&tp, ia});
    const Tensor& y = tp.value(Var{&tp, ir});
    for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] * df(x[i], y[i]);
  });
}

}  // namespace

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ']';
  return os.str();
}

// ---- Tensor -------------------------------------------------------------------

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)) {
  for (std::size_t d : shape_) {
    if (d == 0) throw ShapeError("Tensor: zero dimension in " + shape_str(shape_));
  }
  data_.assign(product(shape_), fill);
}

Tensor::Tensor(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  for (std::size_t d : shape_) {
    if (d == 0) throw ShapeError("Tensor: zero dimension in " + shape_str(shape_));
  }
  if (product(shape_) != data_.size()) {
    throw ShapeError("Tensor: shape " + shape_str(shape_) + " does not match " +
                     std::to_string(data_.size()) + " values");
  }
}

Tensor Tensor::vector(std::vector<double> v) {
  Shape s{v.size()};
  return Tensor(std::move(s), std::move(v));
}

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows) {
  std::vector<double> data;
  std::size_t cols = rows.size() ? rows.begin()->size() : 0;
  for (const auto& r : rows) {
    if (r.size() != cols) throw ShapeError("Tensor::matrix: ragged rows");
    data.insert(data.end(), r.begin(), r.end());
  }
  return Tensor(Shape{rows.size(), cols}, std::move(data));
}

double Tensor::item() const {
  if (data_.size() != 1) throw ShapeError("item: tensor " + shape_str(shape_) + " is not scalar");
  return data_[0];
}

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double x) { return std::isfinite(x); });
}

// ---- Tape ---------------------------------------------------------------------

const Tensor& Var::value() const { return tape->value(*this); }

Var Tape::push(std::string_view op, Tensor value, bool requires_grad, BackwardFn backward) {
  nodes_.push_back(Node{op, std::move(value), Tensor{}, requires_grad, false, std::move(backward)});
  return Var{this, nodes_.size() - 1};
}

Tensor* Tape::grad_buffer(std::size_t id) {
  Node& n = nodes_[id];
  if (!n.requires_grad) return nullptr;
  if (!n.has_grad) {
    n.grad = Tensor(n.value.shape(), 0.0);
    n.has_grad = true;
  }
  return &n.grad;
}

Tensor Tape::grad(Var v) const {
  const Node& n = nodes_[v.id];
  if (n.has_grad) return n.grad;
  return Tensor(n.value.shape(), 0.0);
}

void Tape::backward(Var output) {
  if (output.tape != this) throw std::invalid_argument("backward: variable from another tape");
  if (value(output).size() != 1) {
    throw ShapeError("backward: output must be scalar, got " + shape_str(value(output).shape()));
  }
  for (Node& n : nodes_) {
    n.has_grad = false;
    n.grad = Tensor{};
  }
  Tensor* g = grad_buffer(output.id);
  if (g == nullptr) return;
  (*g)[0] = 1.0;
  for (std::size_t i = output.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (n.has_grad && n.backward) n.backward(*this, n.grad);
  }
}

// ---- elementwise binary ---------------------------------------------------------

Var add(Var a, Var b) {
  Tape& t = tape_of("add", {a, b});
  require_same("add", a, b);
  Tensor out = a.value();
  axpy(out, b.value());
  if (!needs_grad({a, b})) return t.push("add", std::move(out), false, nullptr);
  return t.push("add", std::move(out), true, [ia = a.id, ib = b.id](Tape& tp, const Tensor& g) {
    if (Tensor* ga = tp.grad_buffer(ia)) axpy(*ga, g);
    if (Tensor* gb = tp.grad_buffer(ib)) axpy(*gb, g);
  });
}

Var sub(Var a, Var b) {
  Tape& t = tape_of("sub", {a, b});
  require_same("sub", a, b);
  Tensor out = a.value();
  axpy(out, b.value(), -1.0);
  if (!needs_grad({a, b})) return t.push("sub", std::move(out), false, nullptr);
  return t.push("sub", std::move(out), true, [ia = a.id, ib = b.id](Tape& tp, const Tensor& g) {
    if (Tensor* ga = tp.grad_buffer(ia)) axpy(*ga, g);
    if (Tensor* gb = tp.grad_buffer(ib)) axpy(*gb, g, -1.0);
  });
}

Var mul(Var a, Var b) {
  Tape& t = tape_of("mul", {a, b});
  require_same("mul", a, b);
  Tensor out = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  if (!needs_grad({a, b})) return t.push("mul", std::move(out), false, nullptr);
  return t.push("mul", std::move(out), true, [ia = a.id, ib = b.id](Tape& tp, const Tensor& g) {
    const Tensor& av = tp.value(Var{&tp, ia});
    const Tensor& bv = tp.value(Var{&tp, ib});
    if (Tensor* ga = tp.grad_buffer(ia)) {
      for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] * bv[i];
    }
    if (Tensor* gb = tp.grad_buffer(ib)) {
      for (std::size_t i = 0; i < g.size(); ++i) (*gb)[i] += g[i] * av[i];
    }
  });
}

Var div(Var a, Var b) {
  Tape& t = tape_of("div", {a, b});
  require_same("div", a, b);
  Tensor out = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (bv[i] == 0.0) throw DomainError("div: division by zero at index " + std::to_string(i));
    out[i] /= bv[i];
  }
  if (!needs_grad({a, b})) return t.push("div", std::move(out), false, nullptr);
  return t.push("div", std::move(out), true, [ia = a.id, ib = b.id](Tape& tp, const Tensor& g) {
    const Tensor& av = tp.value(Var{&tp, ia});
    const Tensor& bv = tp.value(Var{&tp, ib});
    if (Tensor* ga = tp.grad_buffer(ia)) {
      for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] / bv[i];
    }
    if (Tensor* gb = tp.grad_buffer(ib)) {
      for (std::size_t i = 0; i < g.size(); ++i) (*gb)[i] -= g[i] * av[i] / (bv[i] * bv[i]);
    }
  });
}

Var maximum(Var a, Var b) {
  Tape& t = tape_of("maximum", {a, b});
  require_same("maximum", a, b);
  Tensor out = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::max(out[i], bv[i]);
  if (!needs_grad({a, b})) return t.push("maximum", std::move(out), false, nullptr);
  return t.push("maximum", std::move(out), true, [ia = a.id, ib = b.id](Tape& tp, const Tensor& g) {
    const Tensor& av = tp.value(Var{&tp, ia});
    const Tensor& bv = tp.value(Var{&tp, ib});
    Tensor* ga = tp.grad_buffer(ia);
    Tensor* gb = tp.grad_buffer(ib);
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (av[i] >= bv[i]) {
        if (ga) (*ga)[i] += g[i];
      } else if (gb) {
        (*gb)[i] += g[i];
      }
    }
  });
}

Var neg(Var a) { return scale(a, -1.0); }

Var scale(Var a, double s) {
  Tape& t = *a.tape;
  Tensor out = a.value();
  for (double& x : out.data()) x *= s;
  if (!t.requires_grad(a)) return t.push("scale", std::move(out), false, nullptr);
  return t.push("scale", std::move(out), true, [ia = a.id, s](Tape& tp, const Tensor& g) {
    axpy(*tp.grad_buffer(ia), g, s);
  });
}

Var add_scalar(Var a, double s) {
  Tape& t = *a.tape;
  Tensor out = a.value();
  for (double& x : out.data()) x += s;
  if (!t.requires_grad(a)) return t.push("add_scalar", std::move(out), false, nullptr);
  return t.push("add_scalar", std::move(out), true, [ia = a.id](Tape& tp, const Tensor& g) {
    axpy(*tp.grad_buffer(ia), g);
  });
}

Var mul_scalar(Var a, Var s) {
  Tape& t = tape_of("mul_scalar", {a, s});
  if (s.value().size() != 1) {
    shape_fail("mul_scalar", "scalar operand has shape " + shape_str(s.shape()));
  }
  const double sv = s.value()[0];
  Tensor out = a.value();
  for (double& x : out.data()) x *= sv;
  if (!needs_grad({a, s})) return t.push("mul_scalar", std::move(out), false, nullptr);
  return t.push("mul_scalar", std::move(out), true, [ia = a.id, is = s.id](Tape& tp, const Tensor& g) {
    const Tensor& av = tp.value(Var{&tp, ia});
    const double sv = tp.value(Var{&tp, is})[0];
    if (Tensor* ga = tp.grad_buffer(ia)) axpy(*ga, g, sv);
    if (Tensor* gs = tp.grad_buffer(is)) {
      double acc = 0.0;
      for (std::size_t i = 0; i < g.size(); ++i) acc += g[i] * av[i];
      (*gs)[0] += acc;
    }
  });
}

// ---- elementwise unary ----------------------------------------------------------

Var relu(Var a) {
  return unary("relu", a, [](double x) { return x > 0.0 ? x : 0.0; },
               [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Var leaky_relu(Var a, double alpha) {
  return unary("leaky_relu", a, [alpha](double x) { return x > 0.0 ? x : alpha * x; },
               [alpha](double x, double) { return x > 0.0 ? 1.0 : alpha; });
}

Var exp(Var a) {
  return unary("exp", a, [](double x) { return std::exp(x); },
               [](double, double y) { return y; });
}

Var log(Var a) {
  const Tensor& av = a.value();
  for (std::size_t i = 0; i < av.size(); ++i) {
    // NaN passes through so callers can detect divergence
    if (av[i] <= 0.0) {
      throw DomainError("log: non-positive input " + std::to_string(av[i]) + " at index " +
                        std::to_string(i) + " of " + shape_str(av.shape()));
    }
  }
  return unary("log", a, [](double x) { return std::log(x); },
               [](double x, double) { return 1.0 / x; });
}

Var square(Var a) {
  return unary("square", a, [](double x) { return x * x; },
               [](double x, double) { return 2.0 * x; });
}

Var sqrt(Var a) {
  const Tensor& av = a.value();
  for (std::size_t i = 0; i < av.size(); ++i) {
    if (av[i] < 0.0) {
      throw DomainError("sqrt: negative input " + std::to_string(av[i]) + " at index " +
                        std::to_string(i) + " of " + shape_str(av.shape()));
    }
  }
  return unary("sqrt", a, [](double x) { return std::sqrt(x); },
               [](double, double y) { return 0.5 / y; });
}

// ---- reductions -----------------------------------------------------------------

Var sum(Var a) {
  Tape& t = *a.tape;
  const Tensor& av = a.value();
  double s = std::accumulate(av.data().begin(), av.data().end(), 0.0);
  if (!t.requires_grad(a)) return t.push("sum", Tensor::scalar(s), false, nullptr);
  return t.push("sum", Tensor::scalar(s), true, [ia = a.id](Tape& tp, const Tensor& g) {
    for (double& x : tp.grad_buffer(ia)->data()) x += g[0];
  });
}

Var mean(Var a) { return scale(sum(a), 1.0 / static_cast<double>(a.value().size())); }

namespace {
Var extremum(std::string_view op, Var a, bool take_max) {
  Tape& t = *a.tape;
  const Tensor& av = a.value();
  std::size_t best = 0;
  for (std::size_t i = 1; i < av.size(); ++i) {
    if (take_max ? av[i] > av[best] : av[i] < av[best]) best = i;
  }
  Tensor out = Tensor::scalar(av[best]);
  if (!t.requires_grad(a)) return t.push(op, std::move(out), false, nullptr);
  return t.push(op, std::move(out), true, [ia = a.id, best](Tape& tp, const Tensor& g) {
    (*tp.grad_buffer(ia))[best] += g[0];
  });
}
}  // namespace

Var max(Var a) { return extremum("max", a, true); }
Var min(Var a) { return extremum("min", a, false); }

Var reduce_norm_sq(Var a) {
  Tape& t = *a.tape;
  const Tensor& av = a.value();
  double s = 0.0;
  for (double x : av.data()) s += x * x;
  if (!t.requires_grad(a)) return t.push("reduce_norm_sq", Tensor::scalar(s), false, nullptr);
  return t.push("reduce_norm_sq", Tensor::scalar(s), true, [ia = a.id](Tape& tp, const Tensor& g) {
    axpy(*tp.grad_buffer(ia), tp.value(Var{&tp, ia}), 2.0 * g[0]);
  });
}

Var sum_cols(Var a) {
  Tape& t = *a.tape;
  require_rowwise("sum_cols", a);
  const Tensor& av = a.value();
  const std::size_t m = av.rows();
  const std::size_t d = av.cols();
  Tensor out(Shape{m}, 0.0);
  for (std::size_t r = 0; r < m; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < d; ++c) s += av[r * d + c];
    out[r] = s;
  }
  if (!t.requires_grad(a)) return t.push("sum_cols", std::move(out), false, nullptr);
  return t.push("sum_cols", std::move(out), true, [ia = a.id, m, d](Tape& tp, const Tensor& g) {
    Tensor& ga = *tp.grad_buffer(ia);
    for (std::size_t r = 0; r < m; ++r) {
      for (std::size_t c = 0; c < d; ++c) ga[r * d + c] += g[r];
    }
  });
}

// ---- linear algebra and shape -----------------------------------------------------

Var matmul(Var a, Var b) {
  Tape& t = tape_of("matmul", {a, b});
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.rank() != 2 || bv.rank() != 2 || av.cols() != bv.rows()) {
    shape_fail("matmul", "cannot multiply " + shape_str(av.shape()) + " by " + shape_str(bv.shape()));
  }
  const auto m = static_cast<Eigen::Index>(av.rows());
  const auto k = static_cast<Eigen::Index>(av.cols());
  const auto n = static_cast<Eigen::Index>(bv.cols());
  Tensor out(Shape{av.rows(), bv.cols()});
  MutMap(out.data().data(), m, n).noalias() =
      ConstMap(av.data().data(), m, k) * ConstMap(bv.data().data(), k, n);
  if (!needs_grad({a, b})) return t.push("matmul", std::move(out), false, nullptr);
  return t.push("matmul", std::move(out), true,
                [ia = a.id, ib = b.id, m, k, n](Tape& tp, const Tensor& g) {
                  ConstMap gm(g.data().data(), m, n);
                  if (Tensor* ga = tp.grad_buffer(ia)) {
                    ConstMap bm(tp.value(Var{&tp, ib}).data().data(), k, n);
                    MutMap(ga->data().data(), m, k).noalias() += gm * bm.transpose();
                  }
                  if (Tensor* gb = tp.grad_buffer(ib)) {
                    ConstMap am(tp.value(Var{&tp, ia}).data().data(), m, k);
                    MutMap(gb->data().data(), k, n).noalias() += am.transpose() * gm;
                  }
                });
}

Var add_row(Var a, Var bias) {
  Tape& t = tape_of("add_row", {a, bias});
  require_rowwise("add_row", a);
  const Tensor& av = a.value();
  const Tensor& bv = bias.value();
  const std::size_t m = av.rows();
  const std::size_t d = av.cols();
  if (bv.size() != d || bv.rank() > 1) {
    shape_fail("add_row", "bias " + shape_str(bv.shape()) + " does not match rows of " +
                              shape_str(av.shape()));
  }
  Tensor out = av;
  for (std::size_t r = 0; r < m; ++r) {
    for (std::size_t c = 0; c < d; ++c) out[r * d + c] += bv[c];
  }
  if (!needs_grad({a, bias})) return t.push("add_row", std::move(out), false, nullptr);
  return t.push("add_row", std::move(out), true,
                [ia = a.id, ib = bias.id, m, d](Tape& tp, const Tensor& g) {
                  if (Tensor* ga = tp.grad_buffer(ia)) axpy(*ga, g);
                  if (Tensor* gb = tp.grad_buffer(ib)) {
                    for (std::size_t r = 0; r < m; ++r) {
                      for (std::size_t c = 0; c < d; ++c) (*gb)[c] += g[r * d + c];
                    }
                  }
                });
}

Var mul_rows(Var a, Var s) {
  Tape& t = tape_of("mul_rows", {a, s});
  require_rowwise("mul_rows", a);
  const Tensor& av = a.value();
  const Tensor& sv = s.value();
  const std::size_t m = av.rows();
  const std::size_t d = av.cols();
  if (sv.size() != m || sv.cols() != 1) {
    shape_fail("mul_rows", "row scale " + shape_str(sv.shape()) + " does not match " +
                               shape_str(av.shape()));
  }
  Tensor out = av;
  for (std::size_t r = 0; r < m; ++r) {
    for (std::size_t c = 0; c < d; ++c) out[r * d + c] *= sv[r];
  }
  if (!needs_grad({a, s})) return t.push("mul_rows", std::move(out), false, nullptr);
  return t.push("mul_rows", std::move(out), true,
                [ia = a.id, is = s.id, m, d](Tape& tp, const Tensor& g) {
                  const Tensor& av = tp.value(Var{&tp, ia});
                  const Tensor& sv = tp.value(Var{&tp, is});
                  if (Tensor* ga = tp.grad_buffer(ia)) {
                    for (std::size_t r = 0; r < m; ++r) {
                      for (std::size_t c = 0; c < d; ++c) (*ga)[r * d + c] += g[r * d + c] * sv[r];
                    }
                  }
                  if (Tensor* gs = tp.grad_buffer(is)) {
                    for (std::size_t r = 0; r < m; ++r) {
                      double acc = 0.0;
                      for (std::size_t c = 0; c < d; ++c) acc += g[r * d + c] * av[r * d + c];
                      (*gs)[r] += acc;
                    }
                  }
                });
}

Var concat(std::initializer_list<Var> parts, std::size_t axis) {
  return concat(std::span<const Var>(parts.begin(), parts.size()), axis);
}

Var concat(std::span<const Var> parts, std::size_t axis) {
  if (parts.empty()) shape_fail("concat", "no inputs");
  Tape& t = *parts[0].tape;
  const Tensor& first = parts[0].value();
  const std::size_t rank = first.rank();
  if (rank == 0 || rank > 2 || axis >= rank) {
    shape_fail("concat", "axis " + std::to_string(axis) + " invalid for " + shape_str(first.shape()));
  }
  bool grad = false;
  std::size_t total = 0;
  for (Var p : parts) {
    if (p.tape != &t) shape_fail("concat", "inputs live on different tapes");
    const Tensor& v = p.value();
    bool ok = v.rank() == rank && (rank == 1 || axis == 0 ? v.cols() == first.cols()
                                                           : v.rows() == first.rows());
    if (!ok) shape_fail("concat", "cannot join " + shape_str(first.shape()) + " and " + shape_str(v.shape()));
    total += axis == 0 ? v.rows() : v.cols();
    grad = grad || t.requires_grad(p);
  }
  Shape out_shape = first.shape();
  out_shape[axis] = total;
  Tensor out(out_shape);
  const std::size_t rows = out.rows();
  const std::size_t cols = out.cols();
  std::vector<std::size_t> ids;
  std::vector<std::size_t> offsets;
  std::size_t off = 0;
  for (Var p : parts) {
    const Tensor& v = p.value();
    ids.push_back(p.id);
    offsets.push_back(off);
    if (axis == 0) {
      std::copy(v.data().begin(), v.data().end(), out.data().begin() + off * cols);
      off += v.rows();
    } else {
      const std::size_t pc = v.cols();
      for (std::size_t r = 0; r < rows; ++r) {
        std::copy_n(v.data().begin() + r * pc, pc, out.data().begin() + r * cols + off);
      }
      off += pc;
    }
  }
  if (!grad) return t.push("concat", std::move(out), false, nullptr);
  return t.push("concat", std::move(out), true,
                [ids, offsets, axis, rows, cols](Tape& tp, const Tensor& g) {
                  for (std::size_t p = 0; p < ids.size(); ++p) {
                    Tensor* gp = tp.grad_buffer(ids[p]);
                    if (!gp) continue;
                    if (axis == 0) {
                      const std::size_t base = offsets[p] * cols;
                      for (std::size_t i = 0; i < gp->size(); ++i) (*gp)[i] += g[base + i];
                    } else {
                      const std::size_t pc = gp->cols();
                      for (std::size_t r = 0; r < rows; ++r) {
                        for (std::size_t c = 0; c < pc; ++c) {
                          (*gp)[r * pc + c] += g[r * cols + offsets[p] + c];
                        }
                      }
                    }
                  }
                });
}

Var slice(Var a, std::size_t axis, std::size_t begin, std::size_t end) {
  Tape& t = *a.tape;
  const Tensor& av = a.value();
  if (av.rank() == 0 || av.rank() > 2 || axis >= av.rank() || begin >= end ||
      end > av.shape()[axis]) {
    shape_fail("slice", "range [" + std::to_string(begin) + "," + std::to_string(end) +
                            ") on axis " + std::to_string(axis) + " invalid for " +
                            shape_str(av.shape()));
  }
  Shape out_shape = av.shape();
  out_shape[axis] = end - begin;
  Tensor out(out_shape);
  const std::size_t cols = av.cols();
  const std::size_t oc = out.cols();
  if (axis == 0) {
    std::copy(av.data().begin() + begin * cols, av.data().begin() + end * cols, out.data().begin());
  } else {
    for (std::size_t r = 0; r < av.rows(); ++r) {
      std::copy_n(av.data().begin() + r * cols + begin, oc, out.data().begin() + r * oc);
    }
  }
  if (!t.requires_grad(a)) return t.push("slice", std::move(out), false, nullptr);
  return t.push("slice", std::move(out), true,
                [ia = a.id, axis, begin, cols, oc](Tape& tp, const Tensor& g) {
                  Tensor& ga = *tp.grad_buffer(ia);
                  if (axis == 0) {
                    for (std::size_t i = 0; i < g.size(); ++i) ga[begin * cols + i] += g[i];
                  } else {
                    const std::size_t rows = g.size() / oc;
                    for (std::size_t r = 0; r < rows; ++r) {
                      for (std::size_t c = 0; c < oc; ++c) ga[r * cols + begin + c] += g[r * oc + c];
                    }
                  }
                });
}

Var reshape(Var a, Shape shape) {
  Tape& t = *a.tape;
  const Tensor& av = a.value();
  if (product(shape) != av.size()) {
    shape_fail("reshape", "cannot view " + shape_str(av.shape()) + " as " + shape_str(shape));
  }
  Tensor out(std::move(shape), av.storage());
  if (!t.requires_grad(a)) return t.push("reshape", std::move(out), false, nullptr);
  return t.push("reshape", std::move(out), true, [ia = a.id](Tape& tp, const Tensor& g) {
    Tensor& ga = *tp.grad_buffer(ia);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
  });
}

Var gather_rows(Var a, std::span<const std::size_t> index) {
  Tape& t = *a.tape;
  require_rowwise("gather_rows", a);
  const Tensor& av = a.value();
  const std::size_t d = av.cols();
  for (std::size_t i : index) {
    if (i >= av.rows()) {
      shape_fail("gather_rows", "row " + std::to_string(i) + " out of range for " + shape_str(av.shape()));
    }
  }
  if (index.empty()) shape_fail("gather_rows", "empty index");
  Shape out_shape = av.shape();
  out_shape[0] = index.size();
  Tensor out(out_shape);
  for (std::size_t r = 0; r < index.size(); ++r) {
    std::copy_n(av.data().begin() + index[r] * d, d, out.data().begin() + r * d);
  }
  if (!t.requires_grad(a)) return t.push("gather_rows", std::move(out), false, nullptr);
  std::vector<std::size_t> idx(index.begin(), index.end());
  return t.push("gather_rows", std::move(out), true,
                [ia = a.id, idx = std::move(idx), d](Tape& tp, const Tensor& g) {
                  Tensor& ga = *tp.grad_buffer(ia);
                  for (std::size_t r = 0; r < idx.size(); ++r) {
                    for (std::size_t c = 0; c < d; ++c) ga[idx[r] * d + c] += g[r * d + c];
                  }
                });
}

// ---- segment ops -------------------------------------------------------------------

namespace {
void check_segments(std::string_view op, std::size_t rows, std::span<const std::size_t> ids,
                    std::size_t num_segments) {
  if (ids.size() != rows) {
    shape_fail(op, std::to_string(ids.size()) + " segment ids for " + std::to_string(rows) + " rows");
  }
  if (num_segments == 0) shape_fail(op, "num_segments must be positive");
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] >= num_segments) {
      throw std::out_of_range(std::string(op) + ": segment id " + std::to_string(ids[i]) +
                              " at row " + std::to_string(i) + " out of range [0," +
                              std::to_string(num_segments) + ")");
    }
  }
}
}  // namespace

Var segment_reduce(Var values, std::span<const std::size_t> segment_ids,
                   std::size_t num_segments, SegmentMode mode) {
  Tape& t = *values.tape;
  require_rowwise("segment_reduce", values);
  const Tensor& v = values.value();
  const std::size_t m = v.rows();
  const std::size_t d = v.cols();
  check_segments("segment_reduce", m, segment_ids, num_segments);

  Shape out_shape = v.shape();
  out_shape[0] = num_segments;
  Tensor out(out_shape, 0.0);
  std::vector<std::size_t> ids(segment_ids.begin(), segment_ids.end());
  std::vector<double> count(num_segments, 0.0);
  for (std::size_t id : ids) count[id] += 1.0;

  // argmax row per (segment, column) for max mode; m marks an empty segment
  std::vector<std::size_t> arg;
  if (mode == SegmentMode::max) {
    arg.assign(num_segments * d, m);
    for (std::size_t r = 0; r < m; ++r) {
      const std::size_t s = ids[r];
      for (std::size_t c = 0; c < d; ++c) {
        std::size_t& a = arg[s * d + c];
        if (a == m || v[r * d + c] > v[a * d + c]) a = r;
      }
    }
    for (std::size_t k = 0; k < arg.size(); ++k) {
      if (arg[k] != m) out[k] = v[arg[k] * d + k % d];
    }
  } else {
    for (std::size_t r = 0; r < m; ++r) {
      for (std::size_t c = 0; c < d; ++c) out[ids[r] * d + c] += v[r * d + c];
    }
    if (mode == SegmentMode::mean) {
      for (std::size_t s = 0; s < num_segments; ++s) {
        if (count[s] == 0.0) continue;
        for (std::size_t c = 0; c < d; ++c) out[s * d + c] /= count[s];
      }
    }
  }
  std::string_view op = mode == SegmentMode::sum    ? "segment_sum"
                        : mode == SegmentMode::mean ? "segment_mean"
                                                    : "segment_max";
  if (!t.requires_grad(values)) return t.push(op, std::move(out), false, nullptr);
  return t.push(op, std::move(out), true,
                [iv = values.id, ids = std::move(ids), count = std::move(count),
                 arg = std::move(arg), mode, m, d](Tape& tp, const Tensor& g) {
                  Tensor& gv = *tp.grad_buffer(iv);
                  if (mode == SegmentMode::max) {
                    for (std::size_t k = 0; k < arg.size(); ++k) {
                      if (arg[k] != m) gv[arg[k] * d + k % d] += g[k];
                    }
                    return;
                  }
                  for (std::size_t r = 0; r < m; ++r) {
                    const std::size_t s = ids[r];
                    const double w = mode == SegmentMode::mean ? 1.0 / count[s] : 1.0;
                    for (std::size_t c = 0; c < d; ++c) gv[r * d + c] += w * g[s * d + c];
                  }
                });
}

Var segment_softmax(Var scores, std::span<const std::size_t> segment_ids,
                    std::size_t num_segments) {
  Tape& t = *scores.tape;
  const Tensor& v = scores.value();
  if (v.rank() == 0 || v.rank() > 2 || v.cols() != 1) {
    shape_fail("segment_softmax", "scores must be [M] or [M x 1], got " + shape_str(v.shape()));
  }
  const std::size_t m = v.rows();
  check_segments("segment_softmax", m, segment_ids, num_segments);
  std::vector<std::size_t> ids(segment_ids.begin(), segment_ids.end());

  std::vector<double> seg_max(num_segments, -std::numeric_limits<double>::infinity());
  for (std::size_t r = 0; r < m; ++r) seg_max[ids[r]] = std::max(seg_max[ids[r]], v[r]);
  Tensor out(v.shape());
  std::vector<double> denom(num_segments, 0.0);
  for (std::size_t r = 0; r < m; ++r) {
    out[r] = std::exp(v[r] - seg_max[ids[r]]);
    denom[ids[r]] += out[r];
  }
  for (std::size_t r = 0; r < m; ++r) out[r] /= denom[ids[r]];

  if (!t.requires_grad(scores)) return t.push("segment_softmax", std::move(out), false, nullptr);
  const std::size_t ir = t.size();
  return t.push("segment_softmax", std::move(out), true,
                [is = scores.id, ir, ids = std::move(ids), num_segments](Tape& tp, const Tensor& g) {
                  const Tensor& y = tp.value(Var{&tp, ir});
                  std::vector<double> dot(num_segments, 0.0);
                  for (std::size_t r = 0; r < ids.size(); ++r) dot[ids[r]] += g[r] * y[r];
                  Tensor& gs = *tp.grad_buffer(is);
                  for (std::size_t r = 0; r < ids.size(); ++r) gs[r] += y[r] * (g[r] - dot[ids[r]]);
                });
}

// ---- dispatcher ---------------------------------------------------------------------

Var forward_op(OpKind kind, std::span<const Var> in, const OpAttrs& attrs) {
  auto need = [&](std::size_t n, std::string_view op) {
    if (in.size() != n) {
      shape_fail(op, "expected " + std::to_string(n) + " inputs, got " + std::to_string(in.size()));
    }
  };
  switch (kind) {
    case OpKind::add: need(2, "add"); return add(in[0], in[1]);
    case OpKind::sub: need(2, "sub"); return sub(in[0], in[1]);
    case OpKind::mul: need(2, "mul"); return mul(in[0], in[1]);
    case OpKind::matmul: need(2, "matmul"); return matmul(in[0], in[1]);
    case OpKind::scale: need(1, "scale"); return scale(in[0], attrs.scalar);
    case OpKind::sum: need(1, "sum"); return sum(in[0]);
    case OpKind::mean: need(1, "mean"); return mean(in[0]);
    case OpKind::max: need(1, "max"); return max(in[0]);
    case OpKind::relu: need(1, "relu"); return relu(in[0]);
    case OpKind::leaky_relu: need(1, "leaky_relu"); return leaky_relu(in[0], attrs.scalar);
    case OpKind::exp: need(1, "exp"); return exp(in[0]);
    case OpKind::log: need(1, "log"); return log(in[0]);
    case OpKind::square: need(1, "square"); return square(in[0]);
    case OpKind::sqrt: need(1, "sqrt"); return sqrt(in[0]);
    case OpKind::concat: return concat(in, attrs.axis);
    case OpKind::slice: need(1, "slice"); return slice(in[0], attrs.axis, attrs.begin, attrs.end);
    case OpKind::reduce_norm_sq: need(1, "reduce_norm_sq"); return reduce_norm_sq(in[0]);
  }
  throw std::invalid_argument("forward_op: unknown op kind");
}

// ---- gradient check ------------------------------------------------------------------

double grad_check(const MultiFn& f, std::span<const Tensor> point, const GradCheckOptions& options) {
  if (!(options.eps > 0.0)) throw std::invalid_argument("grad_check: eps must be positive");
  std::vector<Tensor> analytic;
  {
    Tape tape;
    std::vector<Var> vars;
    for (const Tensor& p : point) vars.push_back(tape.variable(p));
    Var out = f(tape, vars);
    tape.backward(out);
    for (Var v : vars) analytic.push_back(tape.grad(v));
  }

  auto evaluate = [&](const std::vector<Tensor>& at) {
    Tape tape;
    std::vector<Var> vars;
    for (const Tensor& p : at) vars.push_back(tape.constant(p));
    return f(tape, vars).value().item();
  };

  std::vector<std::pair<std::size_t, std::size_t>> coords;
  for (std::size_t p = 0; p < point.size(); ++p) {
    for (std::size_t i = 0; i < point[p].size(); ++i) coords.emplace_back(p, i);
  }
  if (options.max_coords != 0 && coords.size() > options.max_coords) {
    std::mt19937_64 rng(options.seed);
    std::shuffle(coords.begin(), coords.end(), rng);
    coords.resize(options.max_coords);
  }

  std::vector<Tensor> work(point.begin(), point.end());
  double worst = 0.0;
  for (auto [p, i] : coords) {
    const double x0 = work[p][i];
    work[p][i] = x0 + options.eps;
    const double fp = evaluate(work);
    work[p][i] = x0 - options.eps;
    const double fm = evaluate(work);
    work[p][i] = x0;
    const double numeric = (fp - fm) / (2.0 * options.eps);
    const double a = analytic[p][i];
    worst = std::max(worst, std::abs(a - numeric) / std::max(1.0, std::abs(a)));
  }
  return worst;
}

double grad_check(const SingleFn& f, const Tensor& point, double eps) {
  MultiFn wrapped = [&f](Tape& t, std::span<const Var> vs) { return f(t, vs[0]); };
  std::vector<Tensor> pts{point};
  return grad_check(wrapped, pts, GradCheckOptions{eps, 0, 0});
}

}  // namespace wgnn::ad
