#pragma once

// Dense double-precision matrices with reverse-mode differentiation.
//
// Every tensor is two-dimensional (vectors are 1 x n rows, scalars 1 x 1).
// Operations record their parents and a backward closure; calling
// backward() on a scalar result walks the graph once in reverse
// topological order. Leaf gradients accumulate across calls until
// zero_grad(); interior gradients are reset on every backward pass.
//
// The only broadcasting supported is a 1 x n row against an m x n matrix.

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace uprm {
class Rng;
}

namespace uprm::diffnum {

struct Shape {
  std::size_t rows = 0;
  std::size_t cols = 0;

  std::size_t size() const noexcept { return rows * cols; }
  std::string str() const;
  friend bool operator==(const Shape&, const Shape&) = default;
};

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;
  bool requires_grad = false;
  bool is_leaf = true;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  std::vector<double>& ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
    return grad;
  }
};

}  // namespace detail

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(std::size_t rows, std::size_t cols, bool requires_grad = false);
  static Tensor full(std::size_t rows, std::size_t cols, double value, bool requires_grad = false);
  static Tensor from_values(std::size_t rows, std::size_t cols, std::vector<double> values,
                            bool requires_grad = false);
  static Tensor row(std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const noexcept { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t rows() const { return shape().rows; }
  std::size_t cols() const { return shape().cols; }
  std::size_t size() const { return shape().size(); }

  std::span<const double> values() const;
  /// Writable storage. Only meaningful on leaves (parameters); mutating an
  /// interior value does not re-run the graph.
  std::span<double> mutable_values();
  double item() const;
  double at(std::size_t r, std::size_t c) const;

  bool requires_grad() const;
  /// Empty span when no gradient has been accumulated.
  std::span<const double> grad() const;
  std::span<double> mutable_grad();
  void zero_grad();

  /// Same values, cut from the graph.
  Tensor detach() const;

  /// Reverse-mode pass from a 1 x 1 tensor.
  void backward() const;

  const detail::Node* node() const noexcept { return node_.get(); }
  const std::shared_ptr<detail::Node>& node_ptr() const noexcept { return node_; }

  static Tensor wrap(std::shared_ptr<detail::Node> node) {
    Tensor t;
    t.node_ = std::move(node);
    return t;
  }

 private:
  std::shared_ptr<detail::Node> node_;
};

/// Reverse topological order of the differentiable subgraph below a root.
class ComputationTape {
 public:
  explicit ComputationTape(const Tensor& root);

  std::size_t size() const noexcept { return order_.size(); }
  /// Op names in the order backward visits them (root first).
  std::vector<std::string> ops() const;
  void backward();

 private:
  std::shared_ptr<detail::Node> root_;
  std::vector<detail::Node*> order_;  // topological, leaves first
};

struct Parameter {
  std::string name;
  Tensor tensor;
};
using ParameterList = std::vector<Parameter>;

void zero_grad(const ParameterList& params);
/// L2 norm over every parameter gradient.
double grad_norm(const ParameterList& params);

// ---- primitives ----------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
/// a + b with b either the same shape or a 1 x cols row.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
/// Elementwise product; b may be a broadcast row.
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor add_scalar(const Tensor& a, double s);

Tensor relu(const Tensor& a);
/// Exact GELU: x * Phi(x).
Tensor gelu(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor exp(const Tensor& a);
/// Throws NumericError on non-positive input.
Tensor log(const Tensor& a);

Tensor softmax_rows(const Tensor& a);
Tensor log_softmax_rows(const Tensor& a);
/// Per-row standardization, no affine parameters.
Tensor layer_norm_rows(const Tensor& a, double eps = 1e-9);

/// Inverted dropout. Identity when !training or p == 0. The mask is drawn
/// from `rng`, so a fixed seed gives a fixed mask.
Tensor dropout(const Tensor& a, double p, Rng& rng, bool training);

Tensor concat_cols(const Tensor& a, const Tensor& b);
Tensor concat_rows(std::span<const Tensor> parts);
Tensor slice_rows(const Tensor& a, std::size_t begin, std::size_t end);
Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t end);
Tensor element(const Tensor& a, std::size_t r, std::size_t c);

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator*(const Tensor& a, double s) { return scale(a, s); }
inline Tensor operator*(double s, const Tensor& a) { return scale(a, s); }

}  // namespace uprm::diffnum
