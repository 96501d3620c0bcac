#pragma once

// Dense double-precision tensors (rank 0, 1 or 2) and a reverse-mode
// differentiation graph over them.
//
// A Node is a shared handle to a value plus the rule that pushes its gradient
// back into its operands. Graphs are built fresh for every training step and
// dropped afterwards; nothing is recorded globally. Nodes created by
// stop_gradient() and constant() are opaque to backward(): gradient reaching
// them goes nowhere.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <numeric>
#include <span>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "fenrec/errors.hpp"
#include "fenrec/rng.hpp"

namespace fenrec {

class Tensor {
 public:
  Tensor() : shape_{}, values_(1, 0.0) {}

  explicit Tensor(std::vector<std::size_t> shape, double fill = 0.0)
      : shape_(std::move(shape)), values_(count(shape_), fill) {}

  Tensor(std::vector<std::size_t> shape, std::vector<double> values)
      : shape_(std::move(shape)), values_(std::move(values)) {
    if (values_.size() != count(shape_))
      throw ShapeError("tensor: " + std::to_string(values_.size()) + " values for shape of " +
                       std::to_string(count(shape_)));
  }

  static Tensor scalar(double v) { return Tensor({}, std::vector<double>{v}); }
  static Tensor vector(std::vector<double> v) {
    const auto n = v.size();
    return Tensor({n}, std::move(v));
  }
  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> v) {
    return Tensor({rows, cols}, std::move(v));
  }

  const std::vector<std::size_t>& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return values_.size(); }
  std::size_t rows() const noexcept { return shape_.empty() ? 1 : shape_[0]; }
  std::size_t cols() const noexcept { return shape_.size() < 2 ? 1 : shape_[1]; }

  std::span<double> values() noexcept { return values_; }
  std::span<const double> values() const noexcept { return values_; }
  double* data() noexcept { return values_.data(); }
  const double* data() const noexcept { return values_.data(); }

  double& operator[](std::size_t i) { return values_[i]; }
  double operator[](std::size_t i) const { return values_[i]; }
  double& at(std::size_t r, std::size_t c) { return values_[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const { return values_[r * cols() + c]; }

  std::span<double> row(std::size_t r) { return {values_.data() + r * cols(), cols()}; }
  std::span<const double> row(std::size_t r) const { return {values_.data() + r * cols(), cols()}; }

  bool all_finite() const {
    return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
  }

  void fill(double v) { std::fill(values_.begin(), values_.end(), v); }

  friend bool operator==(const Tensor&, const Tensor&) = default;

  static std::size_t count(const std::vector<std::size_t>& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
  }

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> values_;
};

inline std::string shape_string(const std::vector<std::size_t>& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) s += (i ? "," : "") + std::to_string(shape[i]);
  return s + "]";
}

namespace detail {

struct NodeData {
  Tensor value;
  Tensor grad;
  bool has_grad = false;
  bool requires_grad = false;
  bool stop_gradient = false;
  std::vector<std::shared_ptr<NodeData>> parents;
  std::function<void(NodeData&)> backward;

  Tensor& grad_buffer() {
    if (!has_grad) {
      grad = Tensor(value.shape());
      has_grad = true;
    }
    return grad;
  }
};

}  // namespace detail

class Node {
 public:
  Node() = default;

  const Tensor& value() const { return data_->value; }
  const std::vector<std::size_t>& shape() const { return data_->value.shape(); }
  std::size_t size() const { return data_->value.size(); }
  double item() const {
    if (data_->value.size() != 1) throw ShapeError("item() on non-scalar " + shape_string(shape()));
    return data_->value[0];
  }

  /// Accumulated gradient; zeros when backward never reached this node.
  Tensor grad() const { return data_->has_grad ? data_->grad : Tensor(data_->value.shape()); }

  bool requires_grad() const { return data_->requires_grad; }
  bool is_stop_gradient() const { return data_->stop_gradient; }
  explicit operator bool() const { return static_cast<bool>(data_); }

  detail::NodeData* get() const { return data_.get(); }
  const std::shared_ptr<detail::NodeData>& handle() const { return data_; }

  explicit Node(std::shared_ptr<detail::NodeData> d) : data_(std::move(d)) {}

 private:
  std::shared_ptr<detail::NodeData> data_;
};

inline Node leaf(Tensor value, bool requires_grad = true) {
  auto d = std::make_shared<detail::NodeData>();
  d->value = std::move(value);
  d->requires_grad = requires_grad;
  return Node(std::move(d));
}

inline Node constant(Tensor value) { return leaf(std::move(value), false); }

namespace detail {

// The message is built only on failure.
template <class Msg>
inline void require(bool ok, Msg&& what) {
  if (!ok) throw ShapeError(std::string(what()));
}

inline Node make_op(Tensor value, std::vector<Node> parents, std::function<void(NodeData&)> backward) {
  auto d = std::make_shared<NodeData>();
  d->value = std::move(value);
  bool any = false;
  d->parents.reserve(parents.size());
  for (auto& p : parents) {
    any = any || p.requires_grad();
    d->parents.push_back(p.handle());
  }
  d->requires_grad = any;
  if (any) d->backward = std::move(backward);
  return Node(std::move(d));
}

inline bool same_shape(const Node& a, const Node& b) { return a.shape() == b.shape(); }

inline bool is_vector(const Node& a) { return a.value().rank() == 1; }
inline bool is_matrix(const Node& a) { return a.value().rank() == 2; }

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise

inline Node add(const Node& a, const Node& b) {
  detail::require(detail::same_shape(a, b),
                  [&] { return "add: " + shape_string(a.shape()) + " vs " + shape_string(b.shape()); });

  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.value()[i];
  return detail::make_op(std::move(out), {a, b}, [](detail::NodeData& self) {
    for (auto& p : self.parents) {
      if (!p->requires_grad) continue;
      auto& g = p->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
  });
}

inline Node sub(const Node& a, const Node& b) {
  detail::require(detail::same_shape(a, b),
                  [&] { return "sub: " + shape_string(a.shape()) + " vs " + shape_string(b.shape()); });

  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b.value()[i];
  return detail::make_op(std::move(out), {a, b}, [](detail::NodeData& self) {
    const double sign[2] = {1.0, -1.0};
    for (int k = 0; k < 2; ++k) {
      auto& p = self.parents[k];
      if (!p->requires_grad) continue;
      auto& g = p->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += sign[k] * self.grad[i];
    }
  });
}

/// Hadamard product.
inline Node mul(const Node& a, const Node& b) {
  detail::require(detail::same_shape(a, b),
                  [&] { return "mul: " + shape_string(a.shape()) + " vs " + shape_string(b.shape()); });

  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
  return detail::make_op(std::move(out), {a, b}, [](detail::NodeData& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    if (pa.requires_grad) {
      auto& g = pa.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pb.value[i];
    }
    if (pb.requires_grad) {
      auto& g = pb.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pa.value[i];
    }
  });
}

inline Node scale(const Node& a, double c) {
  Tensor out = a.value();
  for (auto& v : out.values()) v *= c;
  return detail::make_op(std::move(out), {a}, [c](detail::NodeData& self) {
    auto& g = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += c * self.grad[i];
  });
}

inline Node add_scalar(const Node& a, double c) {
  Tensor out = a.value();
  for (auto& v : out.values()) v += c;
  return detail::make_op(std::move(out), {a}, [](detail::NodeData& self) {
    auto& g = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
  });
}

namespace detail {

template <class Fwd, class Deriv>
Node unary(const Node& a, Fwd fwd, Deriv deriv) {
  Tensor out = a.value();
  for (auto& v : out.values()) v = fwd(v);
  return make_op(std::move(out), {a}, [deriv](NodeData& self) {
    auto& p = *self.parents[0];
    auto& g = p.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * deriv(p.value[i], self.value[i]);
  });
}

}  // namespace detail

inline Node exp(const Node& a) {
  return detail::unary(a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

inline Node log(const Node& a) {
  return detail::unary(a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

inline Node tanh(const Node& a) {
  return detail::unary(a, [](double x) { return std::tanh(x); },
                       [](double, double y) { return 1.0 - y * y; });
}

inline Node relu(const Node& a) {
  return detail::unary(a, [](double x) { return x > 0.0 ? x : 0.0; },
                       [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

// ---------------------------------------------------------------------------
// Reductions

inline Node sum(const Node& a) {
  double s = 0.0;
  for (double v : a.value().values()) s += v;
  return detail::make_op(Tensor::scalar(s), {a}, [](detail::NodeData& self) {
    auto& g = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[0];
  });
}

inline Node mean(const Node& a) {
  const double n = static_cast<double>(a.size());
  return scale(sum(a), 1.0 / n);
}

inline Node inner(const Node& a, const Node& b) {
  detail::require(detail::is_vector(a) && detail::same_shape(a, b),
                  [&] { return "inner: " + shape_string(a.shape()) + " vs " + shape_string(b.shape()); });

  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a.value()[i] * b.value()[i];
  return detail::make_op(Tensor::scalar(s), {a, b}, [](detail::NodeData& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    const double g0 = self.grad[0];
    if (pa.requires_grad) {
      auto& g = pa.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += g0 * pb.value[i];
    }
    if (pb.requires_grad) {
      auto& g = pb.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += g0 * pa.value[i];
    }
  });
}

/// [inner(a, o) for o in others] as one vector node.
inline Node inner_each(const Node& a, std::span<const Node> others) {
  detail::require(detail::is_vector(a), [&] { return "inner_each: anchor must be a vector"; });
  Tensor out({others.size()});
  for (std::size_t k = 0; k < others.size(); ++k) {
    detail::require(detail::same_shape(a, others[k]), [&] { return "inner_each: operand " + std::to_string(k) +
                                                          " has shape " + shape_string(others[k].shape()); });
    double s = 0.0;
    const auto& o = others[k].value();
    for (std::size_t i = 0; i < a.size(); ++i) s += a.value()[i] * o[i];
    out[k] = s;
  }
  std::vector<Node> parents{a};
  parents.insert(parents.end(), others.begin(), others.end());
  return detail::make_op(std::move(out), std::move(parents), [](detail::NodeData& self) {
    auto& pa = *self.parents[0];
    const std::size_t n = pa.value.size();
    for (std::size_t k = 0; k + 1 < self.parents.size(); ++k) {
      auto& po = *self.parents[k + 1];
      const double gk = self.grad[k];
      if (pa.requires_grad) {
        auto& g = pa.grad_buffer();
        for (std::size_t i = 0; i < n; ++i) g[i] += gk * po.value[i];
      }
      if (po.requires_grad) {
        auto& g = po.grad_buffer();
        for (std::size_t i = 0; i < n; ++i) g[i] += gk * pa.value[i];
      }
    }
  });
}

inline Node l2_norm(const Node& a) {
  double s = 0.0;
  for (double v : a.value().values()) s += v * v;
  const double r = std::sqrt(s);
  return detail::make_op(Tensor::scalar(r), {a}, [r](detail::NodeData& self) {
    if (r == 0.0) return;
    auto& p = *self.parents[0];
    auto& g = p.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[0] * p.value[i] / r;
  });
}

/// v / ||v||_2. Throws DegenerateVectorError when ||v||_2 <= kNormEpsilon.
inline Node normalize(const Node& a) {
  double s = 0.0;
  for (double v : a.value().values()) s += v * v;
  const double r = std::sqrt(s);
  if (r <= kNormEpsilon) throw DegenerateVectorError("normalize: norm " + std::to_string(r) + " at or below guard");
  Tensor out = a.value();
  for (auto& v : out.values()) v /= r;
  return detail::make_op(std::move(out), {a}, [r](detail::NodeData& self) {
    double dot = 0.0;
    for (std::size_t i = 0; i < self.value.size(); ++i) dot += self.value[i] * self.grad[i];
    auto& g = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += (self.grad[i] - self.value[i] * dot) / r;
  });
}

// ---------------------------------------------------------------------------
// Softmax family. Every exponent is shifted by the running maximum.

inline double logsumexp_value(std::span<const double> x) {
  if (x.empty()) return -std::numeric_limits<double>::infinity();
  const double mx = *std::max_element(x.begin(), x.end());
  if (!std::isfinite(mx)) return mx;
  double s = 0.0;
  for (double v : x) s += std::exp(v - mx);
  return mx + std::log(s);
}

inline Node logsumexp(const Node& a) {
  detail::require(a.size() > 0, [&] { return "logsumexp: empty operand"; });
  const double lse = logsumexp_value(a.value().values());
  return detail::make_op(Tensor::scalar(lse), {a}, [lse](detail::NodeData& self) {
    auto& p = *self.parents[0];
    auto& g = p.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[0] * std::exp(p.value[i] - lse);
  });
}

inline Node softmax(const Node& a) {
  detail::require(detail::is_vector(a) && a.size() > 0, [&] { return "softmax: expects a non-empty vector"; });
  const double lse = logsumexp_value(a.value().values());
  Tensor out = a.value();
  for (auto& v : out.values()) v = std::exp(v - lse);
  return detail::make_op(std::move(out), {a}, [](detail::NodeData& self) {
    double dot = 0.0;
    for (std::size_t i = 0; i < self.value.size(); ++i) dot += self.value[i] * self.grad[i];
    auto& g = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.value[i] * (self.grad[i] - dot);
  });
}

inline Node log_softmax(const Node& a) {
  detail::require(detail::is_vector(a) && a.size() > 0, [&] { return "log_softmax: expects a non-empty vector"; });
  const double lse = logsumexp_value(a.value().values());
  Tensor out = a.value();
  for (auto& v : out.values()) v -= lse;
  return detail::make_op(std::move(out), {a}, [](detail::NodeData& self) {
    double gsum = 0.0;
    for (std::size_t i = 0; i < self.grad.size(); ++i) gsum += self.grad[i];
    auto& g = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] - std::exp(self.value[i]) * gsum;
  });
}

/// Row-free layer normalization of a vector (zero mean, unit variance).
inline Node layer_norm(const Node& a, double eps = 1e-8) {
  detail::require(detail::is_vector(a) && a.size() > 0, [&] { return "layer_norm: expects a non-empty vector"; });
  const auto n = static_cast<double>(a.size());
  double mu = 0.0;
  for (double v : a.value().values()) mu += v;
  mu /= n;
  double var = 0.0;
  for (double v : a.value().values()) var += (v - mu) * (v - mu);
  var /= n;
  const double sigma = std::sqrt(var + eps);
  Tensor out = a.value();
  for (auto& v : out.values()) v = (v - mu) / sigma;
  return detail::make_op(std::move(out), {a}, [sigma, n](detail::NodeData& self) {
    double gmean = 0.0, gy = 0.0;
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      gmean += self.grad[i];
      gy += self.grad[i] * self.value[i];
    }
    gmean /= n;
    gy /= n;
    auto& g = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += (self.grad[i] - gmean - self.value[i] * gy) / sigma;
  });
}

// ---------------------------------------------------------------------------
// Linear algebra

inline Node matmul(const Node& a, const Node& b) {
  detail::require(detail::is_matrix(a) && detail::is_matrix(b) && a.value().cols() == b.value().rows(),
                  [&] { return "matmul: " + shape_string(a.shape()) + " x " + shape_string(b.shape()); });

  const std::size_t n = a.value().rows(), k = a.value().cols(), m = b.value().cols();
  Tensor out({n, m});
  const double* A = a.value().data();
  const double* B = b.value().data();
  double* C = out.data();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = A[i * k + p];
      if (aip == 0.0) continue;
      for (std::size_t j = 0; j < m; ++j) C[i * m + j] += aip * B[p * m + j];
    }
  return detail::make_op(std::move(out), {a, b}, [n, k, m](detail::NodeData& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    const double* G = self.grad.data();
    if (pa.requires_grad) {
      double* GA = pa.grad_buffer().data();
      const double* B = pb.value.data();
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          double s = 0.0;
          for (std::size_t j = 0; j < m; ++j) s += G[i * m + j] * B[p * m + j];
          GA[i * k + p] += s;
        }
    }
    if (pb.requires_grad) {
      double* GB = pb.grad_buffer().data();
      const double* A = pa.value.data();
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          const double aip = A[i * k + p];
          if (aip == 0.0) continue;
          for (std::size_t j = 0; j < m; ++j) GB[p * m + j] += aip * G[i * m + j];
        }
    }
  });
}

/// M x for M of shape (r, c) and x of length c.
inline Node matvec(const Node& m, const Node& x) {
  detail::require(detail::is_matrix(m) && detail::is_vector(x) && m.value().cols() == x.size(),
                  [&] { return "matvec: " + shape_string(m.shape()) + " x " + shape_string(x.shape()); });

  const std::size_t r = m.value().rows(), c = m.value().cols();
  Tensor out({r});
  for (std::size_t i = 0; i < r; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < c; ++j) s += m.value()[i * c + j] * x.value()[j];
    out[i] = s;
  }
  return detail::make_op(std::move(out), {m, x}, [r, c](detail::NodeData& self) {
    auto& pm = *self.parents[0];
    auto& px = *self.parents[1];
    if (pm.requires_grad) {
      auto& g = pm.grad_buffer();
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) g[i * c + j] += self.grad[i] * px.value[j];
    }
    if (px.requires_grad) {
      auto& g = px.grad_buffer();
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) g[j] += self.grad[i] * pm.value[i * c + j];
    }
  });
}

/// Rows [first, rows) of M times x: out[i] = M[first + i] . x
inline Node matvec_tail(const Node& m, const Node& x, std::size_t first) {
  detail::require(detail::is_matrix(m) && detail::is_vector(x) && m.value().cols() == x.size() &&
                      first < m.value().rows(),
                  [&] { return "matvec_tail: " + shape_string(m.shape()) + " x " + shape_string(x.shape()); });

  const std::size_t r = m.value().rows() - first, c = m.value().cols();
  Tensor out({r});
  const double* M = m.value().data() + first * c;
  for (std::size_t i = 0; i < r; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < c; ++j) s += M[i * c + j] * x.value()[j];
    out[i] = s;
  }
  return detail::make_op(std::move(out), {m, x}, [r, c, first](detail::NodeData& self) {
    auto& pm = *self.parents[0];
    auto& px = *self.parents[1];
    if (pm.requires_grad) {
      double* g = pm.grad_buffer().data() + first * c;
      for (std::size_t i = 0; i < r; ++i) {
        const double gi = self.grad[i];
        if (gi == 0.0) continue;
        for (std::size_t j = 0; j < c; ++j) g[i * c + j] += gi * px.value[j];
      }
    }
    if (px.requires_grad) {
      auto& g = px.grad_buffer();
      const double* M = pm.value.data() + first * c;
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) g[j] += self.grad[i] * M[i * c + j];
    }
  });
}

/// x^T M for x of length r and M of shape (r, c).
inline Node vecmat(const Node& x, const Node& m) {
  detail::require(detail::is_matrix(m) && detail::is_vector(x) && m.value().rows() == x.size(),
                  [&] { return "vecmat: " + shape_string(x.shape()) + " x " + shape_string(m.shape()); });

  const std::size_t r = m.value().rows(), c = m.value().cols();
  Tensor out({c});
  for (std::size_t i = 0; i < r; ++i) {
    const double xi = x.value()[i];
    for (std::size_t j = 0; j < c; ++j) out[j] += xi * m.value()[i * c + j];
  }
  return detail::make_op(std::move(out), {x, m}, [r, c](detail::NodeData& self) {
    auto& px = *self.parents[0];
    auto& pm = *self.parents[1];
    if (px.requires_grad) {
      auto& g = px.grad_buffer();
      for (std::size_t i = 0; i < r; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < c; ++j) s += self.grad[j] * pm.value[i * c + j];
        g[i] += s;
      }
    }
    if (pm.requires_grad) {
      auto& g = pm.grad_buffer();
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) g[i * c + j] += px.value[i] * self.grad[j];
    }
  });
}

// ---------------------------------------------------------------------------
// Indexing and assembly

/// Rows of M selected by index, as a (ids.size(), cols) matrix.
inline Node gather_rows(const Node& m, std::span<const std::size_t> ids) {
  detail::require(detail::is_matrix(m), [&] { return "gather_rows: expects a matrix"; });
  const std::size_t c = m.value().cols();
  Tensor out({ids.size(), c});
  for (std::size_t k = 0; k < ids.size(); ++k) {
    detail::require(ids[k] < m.value().rows(),
                  [&] { return "gather_rows: row " + std::to_string(ids[k]) + " out of range"; });
    std::copy_n(m.value().data() + ids[k] * c, c, out.data() + k * c);
  }
  std::vector<std::size_t> idx(ids.begin(), ids.end());
  return detail::make_op(std::move(out), {m}, [idx = std::move(idx), c](detail::NodeData& self) {
    double* g = self.parents[0]->grad_buffer().data();
    for (std::size_t k = 0; k < idx.size(); ++k)
      for (std::size_t j = 0; j < c; ++j) g[idx[k] * c + j] += self.grad[k * c + j];
  });
}

inline Node row(const Node& m, std::size_t r) {
  detail::require(detail::is_matrix(m) && r < m.value().rows(), [&] { return "row: index out of range"; });
  const std::size_t c = m.value().cols();
  Tensor out({c}, std::vector<double>(m.value().data() + r * c, m.value().data() + (r + 1) * c));
  return detail::make_op(std::move(out), {m}, [r, c](detail::NodeData& self) {
    double* g = self.parents[0]->grad_buffer().data() + r * c;
    for (std::size_t j = 0; j < c; ++j) g[j] += self.grad[j];
  });
}

inline Node element(const Node& a, std::size_t i) {
  detail::require(i < a.size(), [&] { return "element: index out of range"; });
  return detail::make_op(Tensor::scalar(a.value()[i]), {a}, [i](detail::NodeData& self) {
    self.parents[0]->grad_buffer()[i] += self.grad[0];
  });
}

/// Flattens and concatenates the operands into one vector.
inline Node concat(std::span<const Node> parts) {
  std::vector<double> out;
  std::vector<std::size_t> offsets;
  for (const auto& p : parts) {
    offsets.push_back(out.size());
    out.insert(out.end(), p.value().values().begin(), p.value().values().end());
  }
  return detail::make_op(Tensor::vector(std::move(out)), std::vector<Node>(parts.begin(), parts.end()),
                         [offsets = std::move(offsets)](detail::NodeData& self) {
                           for (std::size_t k = 0; k < self.parents.size(); ++k) {
                             auto& p = *self.parents[k];
                             if (!p.requires_grad) continue;
                             auto& g = p.grad_buffer();
                             for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[offsets[k] + i];
                           }
                         });
}

/// Copies the forward value; backward stops here.
inline Node stop_gradient(const Node& x) {
  auto d = std::make_shared<detail::NodeData>();
  d->value = x.value();
  d->stop_gradient = true;
  d->parents.push_back(x.handle());
  return Node(std::move(d));
}

/// Inverted dropout: zeroes each entry with probability `rate`, scales survivors by 1/(1-rate).
inline Node dropout(const Node& a, double rate, std::uint64_t seed) {
  if (rate <= 0.0) return a;
  if (rate >= 1.0) throw ConfigError("dropout rate must be below 1");
  Rng rng(seed);
  const double keep = 1.0 / (1.0 - rate);
  std::vector<double> mask(a.size());
  for (auto& m : mask) m = rng.uniform() < rate ? 0.0 : keep;
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= mask[i];
  return detail::make_op(std::move(out), {a}, [mask = std::move(mask)](detail::NodeData& self) {
    auto& g = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * mask[i];
  });
}

// ---------------------------------------------------------------------------

/// Reverse sweep from a scalar loss. Gradients accumulate into every node
/// reachable through operands that require gradient and are not stop-gradient.
inline void backward(const Node& loss) {
  if (loss.value().rank() != 0) throw ShapeError("backward: loss must be a scalar, got " + shape_string(loss.shape()));
  if (!loss.requires_grad()) return;

  std::vector<detail::NodeData*> order;
  std::unordered_set<detail::NodeData*> seen;
  std::vector<std::pair<detail::NodeData*, std::size_t>> stack{{loss.get(), 0}};
  seen.insert(loss.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (node->stop_gradient || next == node->parents.size()) {
      order.push_back(node);
      stack.pop_back();
      continue;
    }
    detail::NodeData* parent = node->parents[next++].get();
    if (parent->requires_grad && seen.insert(parent).second) stack.emplace_back(parent, 0);
  }

  loss.get()->grad_buffer()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::NodeData* n = *it;
    if (n->stop_gradient || !n->backward || !n->has_grad) continue;
    n->backward(*n);
  }
}

}  // namespace fenrec
