#include "uprm/diffnum/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <unordered_set>

#include "uprm/core/random.hpp"
#include "uprm/errors.hpp"

namespace uprm::diffnum {

using detail::Node;
using NodePtr = std::shared_ptr<Node>;

std::string Shape::str() const { return "[" + std::to_string(rows) + "x" + std::to_string(cols) + "]"; }

namespace {

NodePtr make_leaf(Shape shape, std::vector<double> values, bool requires_grad) {
  if (values.size() != shape.size()) {
    throw DomainError("tensor of shape " + shape.str() + " given " + std::to_string(values.size()) + " values");
  }
  for (double v : values) {
    if (!std::isfinite(v)) throw NumericError("non-finite value in tensor " + shape.str());
  }
  auto n = std::make_shared<Node>();
  n->shape = shape;
  n->value = std::move(values);
  n->requires_grad = requires_grad;
  return n;
}

void check_finite(const Node& n) {
  for (double v : n.value) {
    if (!std::isfinite(v)) {
      throw NumericError(std::string("non-finite output from '") + n.op + "' with shape " + n.shape.str());
    }
  }
}

/// Creates an interior node. Parents are kept only when some parent needs a
/// gradient, so inference graphs are freed eagerly.
Tensor make_result(const char* op, Shape shape, std::vector<double> values,
                   std::vector<NodePtr> parents, std::function<void(Node&)> backward) {
  auto n = std::make_shared<Node>();
  n->op = op;
  n->shape = shape;
  n->value = std::move(values);
  n->is_leaf = false;
  check_finite(*n);
  const bool needs = std::any_of(parents.begin(), parents.end(),
                                 [](const NodePtr& p) { return p->requires_grad; });
  if (needs) {
    n->requires_grad = true;
    n->parents = std::move(parents);
    n->backward_fn = std::move(backward);
  }
  return Tensor::wrap(std::move(n));
}

const NodePtr& ptr(const Tensor& t) {
  if (!t.defined()) throw DomainError("operation on an undefined tensor");
  return t.node_ptr();
}

enum class Broadcast { kNone, kRow };

Broadcast check_binary(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() == b.shape()) return Broadcast::kNone;
  if (b.rows() == 1 && b.cols() == a.cols()) return Broadcast::kRow;
  throw DomainError(std::string(op) + ": incompatible shapes " + a.shape().str() + " and " + b.shape().str());
}

template <class Fwd, class Deriv>
Tensor unary(const char* op, const Tensor& a, Fwd fwd, Deriv deriv) {
  const NodePtr& pa = ptr(a);
  std::vector<double> out(pa->value.size());
  std::transform(pa->value.begin(), pa->value.end(), out.begin(), fwd);
  return make_result(op, pa->shape, std::move(out), {pa}, [deriv](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    auto& g = p.ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) {
      g[i] += self.grad[i] * deriv(p.value[i], self.value[i]);
    }
  });
}

}  // namespace

// ---- Tensor ---------------------------------------------------------------

Tensor Tensor::zeros(std::size_t rows, std::size_t cols, bool requires_grad) {
  return full(rows, cols, 0.0, requires_grad);
}

Tensor Tensor::full(std::size_t rows, std::size_t cols, double value, bool requires_grad) {
  return wrap(make_leaf({rows, cols}, std::vector<double>(rows * cols, value), requires_grad));
}

Tensor Tensor::from_values(std::size_t rows, std::size_t cols, std::vector<double> values, bool requires_grad) {
  return wrap(make_leaf({rows, cols}, std::move(values), requires_grad));
}

Tensor Tensor::row(std::vector<double> values, bool requires_grad) {
  const std::size_t n = values.size();
  return from_values(1, n, std::move(values), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) { return from_values(1, 1, {value}, requires_grad); }

const Shape& Tensor::shape() const { return ptr(*this)->shape; }
std::span<const double> Tensor::values() const { return ptr(*this)->value; }
std::span<double> Tensor::mutable_values() { return ptr(*this)->value; }

double Tensor::item() const {
  if (size() != 1) throw DomainError("item() on tensor of shape " + shape().str());
  return node_->value[0];
}

double Tensor::at(std::size_t r, std::size_t c) const {
  const auto& s = shape();
  if (r >= s.rows || c >= s.cols) throw DomainError("index out of range for shape " + s.str());
  return node_->value[r * s.cols + c];
}

bool Tensor::requires_grad() const { return ptr(*this)->requires_grad; }
std::span<const double> Tensor::grad() const { return ptr(*this)->grad; }
std::span<double> Tensor::mutable_grad() { return ptr(*this)->ensure_grad(); }

void Tensor::zero_grad() {
  auto& g = ptr(*this)->grad;
  std::fill(g.begin(), g.end(), 0.0);
}

Tensor Tensor::detach() const {
  const NodePtr& p = ptr(*this);
  return wrap(make_leaf(p->shape, p->value, false));
}

void Tensor::backward() const {
  ComputationTape tape(*this);
  tape.backward();
}

// ---- tape -----------------------------------------------------------------

ComputationTape::ComputationTape(const Tensor& root) : root_(ptr(root)) {
  if (root_->shape.size() != 1) {
    throw DomainError("backward() requires a scalar, got shape " + root_->shape.str());
  }
  if (!root_->requires_grad) return;
  // Iterative post-order DFS.
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack{{root_.get(), 0}};
  visited.insert(root_.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* parent = node->parents[next++].get();
      if (parent->requires_grad && visited.insert(parent).second) {
        stack.emplace_back(parent, 0);
      }
    } else {
      order_.push_back(node);
      stack.pop_back();
    }
  }
}

std::vector<std::string> ComputationTape::ops() const {
  std::vector<std::string> out;
  for (auto it = order_.rbegin(); it != order_.rend(); ++it) out.emplace_back((*it)->op);
  return out;
}

void ComputationTape::backward() {
  if (order_.empty()) return;
  for (Node* n : order_) {
    if (!n->is_leaf) std::fill(n->grad.begin(), n->grad.end(), 0.0);
  }
  root_->ensure_grad()[0] += 1.0;
  for (auto it = order_.rbegin(); it != order_.rend(); ++it) {
    Node* n = *it;
    if (n->backward_fn && !n->grad.empty()) n->backward_fn(*n);
  }
}

void zero_grad(const ParameterList& params) {
  for (const auto& p : params) {
    Tensor t = p.tensor;
    t.zero_grad();
  }
}

double grad_norm(const ParameterList& params) {
  double sq = 0.0;
  for (const auto& p : params) {
    for (double g : p.tensor.grad()) sq += g * g;
  }
  return std::sqrt(sq);
}

// ---- linear algebra ---------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  const NodePtr& pa = ptr(a);
  const NodePtr& pb = ptr(b);
  const std::size_t m = pa->shape.rows, k = pa->shape.cols, n = pb->shape.cols;
  if (pb->shape.rows != k) {
    throw DomainError("matmul: incompatible shapes " + pa->shape.str() + " and " + pb->shape.str());
  }
  std::vector<double> out(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = out.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = pa->value[i * k + p];
      if (av == 0.0) continue;  // hashed features are sparse
      const double* brow = pb->value.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
  return make_result("matmul", {m, n}, std::move(out), {pa, pb}, [m, k, n](Node& self) {
    Node& A = *self.parents[0];
    Node& B = *self.parents[1];
    const auto& dc = self.grad;
    if (A.requires_grad) {
      auto& da = A.ensure_grad();
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
          const double* brow = B.value.data() + p * n;
          const double* dcrow = dc.data() + i * n;
          double acc = 0.0;
          for (std::size_t j = 0; j < n; ++j) acc += dcrow[j] * brow[j];
          da[i * k + p] += acc;
        }
      }
    }
    if (B.requires_grad) {
      auto& db = B.ensure_grad();
      for (std::size_t i = 0; i < m; ++i) {
        const double* dcrow = dc.data() + i * n;
        for (std::size_t p = 0; p < k; ++p) {
          const double av = A.value[i * k + p];
          if (av == 0.0) continue;
          double* dbrow = db.data() + p * n;
          for (std::size_t j = 0; j < n; ++j) dbrow[j] += av * dcrow[j];
        }
      }
    }
  });
}

Tensor transpose(const Tensor& a) {
  const NodePtr& pa = ptr(a);
  const std::size_t r = pa->shape.rows, c = pa->shape.cols;
  std::vector<double> out(r * c);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = pa->value[i * c + j];
  return make_result("transpose", {c, r}, std::move(out), {pa}, [r, c](Node& self) {
    Node& A = *self.parents[0];
    auto& g = A.ensure_grad();
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) g[i * c + j] += self.grad[j * r + i];
  });
}

// ---- elementwise binary ----------------------------------------------------

namespace {

template <class Op, class DA, class DB>
Tensor binary(const char* name, const Tensor& a, const Tensor& b, Op op, DA da_fn, DB db_fn) {
  const Broadcast bc = check_binary(name, a, b);
  const NodePtr& pa = ptr(a);
  const NodePtr& pb = ptr(b);
  const std::size_t cols = pa->shape.cols;
  const std::size_t n = pa->value.size();
  auto bidx = [bc, cols](std::size_t i) { return bc == Broadcast::kRow ? i % cols : i; };
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = op(pa->value[i], pb->value[bidx(i)]);
  return make_result(name, pa->shape, std::move(out), {pa, pb}, [=](Node& self) {
    Node& A = *self.parents[0];
    Node& B = *self.parents[1];
    if (A.requires_grad) {
      auto& g = A.ensure_grad();
      for (std::size_t i = 0; i < n; ++i) g[i] += self.grad[i] * da_fn(A.value[i], B.value[bidx(i)]);
    }
    if (B.requires_grad) {
      auto& g = B.ensure_grad();
      for (std::size_t i = 0; i < n; ++i) g[bidx(i)] += self.grad[i] * db_fn(A.value[i], B.value[bidx(i)]);
    }
  });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary("add", a, b, [](double x, double y) { return x + y; },
                [](double, double) { return 1.0; }, [](double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary("sub", a, b, [](double x, double y) { return x - y; },
                [](double, double) { return 1.0; }, [](double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary("mul", a, b, [](double x, double y) { return x * y; },
                [](double, double y) { return y; }, [](double x, double) { return x; });
}

Tensor scale(const Tensor& a, double s) {
  return unary("scale", a, [s](double x) { return s * x; }, [s](double, double) { return s; });
}

Tensor add_scalar(const Tensor& a, double s) {
  return unary("add_scalar", a, [s](double x) { return x + s; }, [](double, double) { return 1.0; });
}

// ---- elementwise unary ------------------------------------------------------

Tensor relu(const Tensor& a) {
  return unary("relu", a, [](double x) { return x > 0.0 ? x : 0.0; },
               [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor gelu(const Tensor& a) {
  return unary(
      "gelu", a, [](double x) { return 0.5 * x * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0)); },
      [](double x, double) {
        const double cdf = 0.5 * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0));
        const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
        return cdf + x * pdf;
      });
}

Tensor tanh(const Tensor& a) {
  return unary("tanh", a, [](double x) { return std::tanh(x); },
               [](double, double y) { return 1.0 - y * y; });
}

Tensor sigmoid(const Tensor& a) {
  return unary(
      "sigmoid", a,
      [](double x) { return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor exp(const Tensor& a) {
  return unary("exp", a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Tensor log(const Tensor& a) {
  for (double v : a.values()) {
    if (!(v > 0.0)) throw NumericError("log of non-positive value " + std::to_string(v));
  }
  return unary("log", a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

// ---- row-wise ---------------------------------------------------------------

Tensor softmax_rows(const Tensor& a) {
  const NodePtr& pa = ptr(a);
  const std::size_t r = pa->shape.rows, c = pa->shape.cols;
  std::vector<double> out(r * c);
  for (std::size_t i = 0; i < r; ++i) {
    const double* x = pa->value.data() + i * c;
    double* y = out.data() + i * c;
    const double mx = *std::max_element(x, x + c);
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) z += (y[j] = std::exp(x[j] - mx));
    for (std::size_t j = 0; j < c; ++j) y[j] /= z;
  }
  return make_result("softmax_rows", pa->shape, std::move(out), {pa}, [r, c](Node& self) {
    Node& A = *self.parents[0];
    auto& g = A.ensure_grad();
    for (std::size_t i = 0; i < r; ++i) {
      const double* y = self.value.data() + i * c;
      const double* dy = self.grad.data() + i * c;
      double dot = 0.0;
      for (std::size_t j = 0; j < c; ++j) dot += dy[j] * y[j];
      for (std::size_t j = 0; j < c; ++j) g[i * c + j] += y[j] * (dy[j] - dot);
    }
  });
}

Tensor log_softmax_rows(const Tensor& a) {
  const NodePtr& pa = ptr(a);
  const std::size_t r = pa->shape.rows, c = pa->shape.cols;
  std::vector<double> out(r * c);
  for (std::size_t i = 0; i < r; ++i) {
    const double* x = pa->value.data() + i * c;
    const double mx = *std::max_element(x, x + c);
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) z += std::exp(x[j] - mx);
    const double lz = mx + std::log(z);
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] = x[j] - lz;
  }
  return make_result("log_softmax_rows", pa->shape, std::move(out), {pa}, [r, c](Node& self) {
    Node& A = *self.parents[0];
    auto& g = A.ensure_grad();
    for (std::size_t i = 0; i < r; ++i) {
      const double* y = self.value.data() + i * c;
      const double* dy = self.grad.data() + i * c;
      double total = 0.0;
      for (std::size_t j = 0; j < c; ++j) total += dy[j];
      for (std::size_t j = 0; j < c; ++j) g[i * c + j] += dy[j] - std::exp(y[j]) * total;
    }
  });
}

Tensor layer_norm_rows(const Tensor& a, double eps) {
  const NodePtr& pa = ptr(a);
  const std::size_t r = pa->shape.rows, c = pa->shape.cols;
  std::vector<double> out(r * c);
  std::vector<double> inv_std(r);
  for (std::size_t i = 0; i < r; ++i) {
    const double* x = pa->value.data() + i * c;
    double mu = 0.0;
    for (std::size_t j = 0; j < c; ++j) mu += x[j];
    mu /= static_cast<double>(c);
    double var = 0.0;
    for (std::size_t j = 0; j < c; ++j) var += (x[j] - mu) * (x[j] - mu);
    var /= static_cast<double>(c);
    inv_std[i] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] = (x[j] - mu) * inv_std[i];
  }
  return make_result("layer_norm_rows", pa->shape, std::move(out), {pa},
                     [r, c, inv_std = std::move(inv_std)](Node& self) {
                       Node& A = *self.parents[0];
                       auto& g = A.ensure_grad();
                       const double n = static_cast<double>(c);
                       for (std::size_t i = 0; i < r; ++i) {
                         const double* y = self.value.data() + i * c;
                         const double* dy = self.grad.data() + i * c;
                         double mean_dy = 0.0, mean_dy_y = 0.0;
                         for (std::size_t j = 0; j < c; ++j) {
                           mean_dy += dy[j];
                           mean_dy_y += dy[j] * y[j];
                         }
                         mean_dy /= n;
                         mean_dy_y /= n;
                         for (std::size_t j = 0; j < c; ++j) {
                           g[i * c + j] += inv_std[i] * (dy[j] - mean_dy - y[j] * mean_dy_y);
                         }
                       }
                     });
}

Tensor dropout(const Tensor& a, double p, Rng& rng, bool training) {
  if (!(p >= 0.0 && p < 1.0)) throw DomainError("dropout probability must lie in [0, 1)");
  if (!training || p == 0.0) return a;
  const NodePtr& pa = ptr(a);
  std::vector<double> mask(pa->value.size());
  const double keep_scale = 1.0 / (1.0 - p);
  for (double& m : mask) m = rng.uniform() < p ? 0.0 : keep_scale;
  std::vector<double> out(mask.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = pa->value[i] * mask[i];
  return make_result("dropout", pa->shape, std::move(out), {pa}, [mask = std::move(mask)](Node& self) {
    Node& A = *self.parents[0];
    auto& g = A.ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * mask[i];
  });
}

// ---- structural -------------------------------------------------------------

Tensor concat_cols(const Tensor& a, const Tensor& b) {
  const NodePtr& pa = ptr(a);
  const NodePtr& pb = ptr(b);
  if (pa->shape.rows != pb->shape.rows) {
    throw DomainError("concat_cols: incompatible shapes " + pa->shape.str() + " and " + pb->shape.str());
  }
  const std::size_t r = pa->shape.rows, ca = pa->shape.cols, cb = pb->shape.cols;
  std::vector<double> out(r * (ca + cb));
  for (std::size_t i = 0; i < r; ++i) {
    std::copy_n(pa->value.data() + i * ca, ca, out.data() + i * (ca + cb));
    std::copy_n(pb->value.data() + i * cb, cb, out.data() + i * (ca + cb) + ca);
  }
  return make_result("concat_cols", {r, ca + cb}, std::move(out), {pa, pb}, [r, ca, cb](Node& self) {
    Node& A = *self.parents[0];
    Node& B = *self.parents[1];
    for (std::size_t i = 0; i < r; ++i) {
      const double* g = self.grad.data() + i * (ca + cb);
      if (A.requires_grad) {
        auto& ga = A.ensure_grad();
        for (std::size_t j = 0; j < ca; ++j) ga[i * ca + j] += g[j];
      }
      if (B.requires_grad) {
        auto& gb = B.ensure_grad();
        for (std::size_t j = 0; j < cb; ++j) gb[i * cb + j] += g[ca + j];
      }
    }
  });
}

Tensor concat_rows(std::span<const Tensor> parts) {
  if (parts.empty()) throw DomainError("concat_rows of nothing");
  const std::size_t c = parts.front().cols();
  std::size_t r = 0;
  std::vector<NodePtr> parents;
  for (const auto& t : parts) {
    if (t.cols() != c) {
      throw DomainError("concat_rows: incompatible shapes " + parts.front().shape().str() + " and " + t.shape().str());
    }
    r += t.rows();
    parents.push_back(ptr(t));
  }
  std::vector<double> out;
  out.reserve(r * c);
  for (const auto& p : parents) out.insert(out.end(), p->value.begin(), p->value.end());
  return make_result("concat_rows", {r, c}, std::move(out), std::move(parents), [](Node& self) {
    std::size_t offset = 0;
    for (auto& p : self.parents) {
      const std::size_t n = p->value.size();
      if (p->requires_grad) {
        auto& g = p->ensure_grad();
        for (std::size_t i = 0; i < n; ++i) g[i] += self.grad[offset + i];
      }
      offset += n;
    }
  });
}

Tensor slice_rows(const Tensor& a, std::size_t begin, std::size_t end) {
  const NodePtr& pa = ptr(a);
  if (begin >= end || end > pa->shape.rows) {
    throw DomainError("slice_rows [" + std::to_string(begin) + "," + std::to_string(end) + ") of " + pa->shape.str());
  }
  const std::size_t c = pa->shape.cols;
  std::vector<double> out(pa->value.begin() + static_cast<std::ptrdiff_t>(begin * c),
                          pa->value.begin() + static_cast<std::ptrdiff_t>(end * c));
  return make_result("slice_rows", {end - begin, c}, std::move(out), {pa}, [begin, c](Node& self) {
    auto& g = self.parents[0]->ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i) g[begin * c + i] += self.grad[i];
  });
}

Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t end) {
  const NodePtr& pa = ptr(a);
  if (begin >= end || end > pa->shape.cols) {
    throw DomainError("slice_cols [" + std::to_string(begin) + "," + std::to_string(end) + ") of " + pa->shape.str());
  }
  const std::size_t r = pa->shape.rows, c = pa->shape.cols, w = end - begin;
  std::vector<double> out(r * w);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < w; ++j) out[i * w + j] = pa->value[i * c + begin + j];
  return make_result("slice_cols", {r, w}, std::move(out), {pa}, [r, c, w, begin](Node& self) {
    auto& g = self.parents[0]->ensure_grad();
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < w; ++j) g[i * c + begin + j] += self.grad[i * w + j];
  });
}

Tensor element(const Tensor& a, std::size_t r, std::size_t c) {
  return slice_cols(slice_rows(a, r, r + 1), c, c + 1);
}

Tensor sum(const Tensor& a) {
  const NodePtr& pa = ptr(a);
  double s = 0.0;
  for (double v : pa->value) s += v;
  return make_result("sum", {1, 1}, {s}, {pa}, [](Node& self) {
    auto& g = self.parents[0]->ensure_grad();
    for (double& x : g) x += self.grad[0];
  });
}

Tensor mean(const Tensor& a) {
  const double n = static_cast<double>(a.size());
  if (n == 0) throw DomainError("mean of empty tensor");
  return scale(sum(a), 1.0 / n);
}

}  // namespace uprm::diffnum
