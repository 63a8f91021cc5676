#pragma once

// Reverse-mode automatic differentiation over dense f64 tensors.
//
// Every forward op appends a node to a Tape; Tape::backward walks the nodes in
// strict reverse order. Tensors are rank 0, 1 or 2 and row-major. Row-wise
// ops treat a rank-1 tensor [M] as a column [M x 1] and keep its rank.
//
// Shape agreement is always explicit. The only implicit broadcast is
// scalar-times-tensor (scale, mul_scalar); row biases and per-row scaling
// have their own named ops (add_row, mul_rows).

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace wgnn::ad {

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& shape);

class Tensor {
 public:
  Tensor() : shape_{}, data_(1, 0.0) {}
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor scalar(double v) { return Tensor(Shape{}, std::vector<double>{v}); }
  static Tensor vector(std::vector<double> v);
  static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  // rows() of a rank-1 tensor is its length; cols() is 1.
  std::size_t rows() const { return shape_.empty() ? 1 : shape_[0]; }
  std::size_t cols() const { return shape_.size() == 2 ? shape_[1] : 1; }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  std::vector<double>& storage() { return data_; }
  const std::vector<double>& storage() const { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double& at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }
  double item() const;

  bool all_finite() const;
  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

class Tape;

// Handle to a node on a tape. Cheap to copy; valid while the tape lives.
struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
};

class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, const Tensor& out_grad)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var variable(Tensor value) { return push("leaf", std::move(value), true, {}); }
  Var constant(Tensor value) { return push("const", std::move(value), false, {}); }

  const Tensor& value(Var v) const { return nodes_[v.id].value; }
  bool requires_grad(Var v) const { return nodes_[v.id].requires_grad; }
  std::string_view op_name(Var v) const { return nodes_[v.id].op; }
  std::size_t size() const { return nodes_.size(); }

  // Gradient of the last backward() output with respect to v. Zeros if v did
  // not influence the output.
  Tensor grad(Var v) const;

  void backward(Var output);

  // Op plumbing, used by the op implementations.
  Var push(std::string_view op, Tensor value, bool requires_grad, BackwardFn backward);
  // Gradient accumulator of node id, or nullptr if it needs no gradient.
  Tensor* grad_buffer(std::size_t id);

 private:
  struct Node {
    std::string_view op;
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    bool has_grad = false;
    BackwardFn backward;
  };
  std::vector<Node> nodes_;
};

// ---- elementwise and reductions ---------------------------------------------

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var div(Var a, Var b);
Var neg(Var a);
Var scale(Var a, double s);
Var add_scalar(Var a, double s);
// Tensor times a rank-0 (or single-element) variable.
Var mul_scalar(Var a, Var s);
// Elementwise max of two equally shaped tensors; ties route to a.
Var maximum(Var a, Var b);
Var relu(Var a);
Var leaky_relu(Var a, double alpha);
Var exp(Var a);
Var log(Var a);
Var square(Var a);
Var sqrt(Var a);

Var sum(Var a);
Var mean(Var a);
// Global max; the subgradient goes to the first maximal entry.
Var max(Var a);
Var min(Var a);
Var reduce_norm_sq(Var a);
// [M x d] -> [M]
Var sum_cols(Var a);

// ---- linear algebra and shape ------------------------------------------------

Var matmul(Var a, Var b);
// [M x d] + [d] broadcast over rows.
Var add_row(Var a, Var bias);
// [M x d] * [M] scaling each row.
Var mul_rows(Var a, Var s);
Var concat(std::span<const Var> parts, std::size_t axis);
Var concat(std::initializer_list<Var> parts, std::size_t axis);
// Half-open range [begin, end) along axis.
Var slice(Var a, std::size_t axis, std::size_t begin, std::size_t end);
Var reshape(Var a, Shape shape);
// out[i] = a[index[i]] (rows).
Var gather_rows(Var a, std::span<const std::size_t> index);

// ---- segment ops (graph aggregation) ----------------------------------------

enum class SegmentMode { sum, mean, max };

// Row s of the result reduces all rows i with segment_ids[i] == s. Empty
// segments yield zero rows in every mode.
Var segment_reduce(Var values, std::span<const std::size_t> segment_ids,
                   std::size_t num_segments, SegmentMode mode);
// Softmax of a rank-1 (or [M x 1]) score vector within each segment.
Var segment_softmax(Var scores, std::span<const std::size_t> segment_ids,
                    std::size_t num_segments);

// ---- generic dispatcher -------------------------------------------------------

enum class OpKind {
  add, sub, mul, matmul, scale, sum, mean, max, relu, leaky_relu,
  exp, log, square, sqrt, concat, slice, reduce_norm_sq
};

struct OpAttrs {
  double scalar = 0.0;  // scale factor / leaky_relu alpha
  std::size_t axis = 0;
  std::size_t begin = 0;
  std::size_t end = 0;
};

Var forward_op(OpKind kind, std::span<const Var> inputs, const OpAttrs& attrs = {});

// ---- finite-difference gradient check --------------------------------------

using MultiFn = std::function<Var(Tape&, std::span<const Var>)>;
using SingleFn = std::function<Var(Tape&, Var)>;

struct GradCheckOptions {
  double eps = 1e-5;
  // Check at most this many coordinates (0 = all), chosen deterministically.
  std::size_t max_coords = 0;
  std::uint64_t seed = 0;
};

// max over coordinates of |analytic - central difference| / max(1, |analytic|)
double grad_check(const MultiFn& f, std::span<const Tensor> point,
                  const GradCheckOptions& options = {});
double grad_check(const SingleFn& f, const Tensor& point, double eps);

}  // namespace wgnn::ad
