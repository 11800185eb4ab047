#pragma once

// Reverse-mode differentiation over Tensor values. Every op records its
// parents and a backward closure on a graph node; backward() walks the graph
// from a scalar loss in reverse topological order.

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "vitct/error.hpp"
#include "vitct/kernels.hpp"
#include "vitct/tensor.hpp"

namespace vitct {

namespace detail {
inline thread_local bool grad_enabled = true;
}  // namespace detail

// Disables graph recording on the current thread while alive. Inference and
// finite-difference probes run under this guard.
class NoGradGuard {
 public:
  NoGradGuard() : prev_(detail::grad_enabled) { detail::grad_enabled = false; }
  ~NoGradGuard() { detail::grad_enabled = prev_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

inline bool grad_enabled() { return detail::grad_enabled; }

template <typename T>
struct Node {
  Tensor<T> value;
  std::optional<Tensor<T>> grad;
  bool requires_grad = false;
  bool is_leaf = true;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  // Grad buffer of a node that takes part in the current backward pass.
  std::span<T> grad_span() { return grad->data(); }
};

template <typename T>
class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node<T>> node) : node_(std::move(node)) {}

  static Var constant(Tensor<T> value) {
    auto n = std::make_shared<Node<T>>();
    n->value = std::move(value);
    return Var(std::move(n));
  }

  static Var parameter(Tensor<T> value) {
    auto n = std::make_shared<Node<T>>();
    n->value = std::move(value);
    n->requires_grad = true;
    return Var(std::move(n));
  }

  bool defined() const { return static_cast<bool>(node_); }
  const Tensor<T>& value() const { return node_->value; }
  // Leaf values may be mutated in place (optimizer steps, FD probes).
  Tensor<T>& mutable_value() { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on) { node_->requires_grad = on; }

  bool has_grad() const { return node_->grad.has_value(); }
  const Tensor<T>& grad() const {
    if (!node_->grad) throw ContractError("tensor has no gradient");
    return *node_->grad;
  }
  void clear_grad() { node_->grad.reset(); }

  Node<T>* node() const { return node_.get(); }
  const std::shared_ptr<Node<T>>& node_ptr() const { return node_; }

 private:
  std::shared_ptr<Node<T>> node_;
};

// Creates the output node of an op. When recording is off or no input needs a
// gradient, the node is a detached constant and `backward` is dropped.
template <typename T>
Var<T> make_result(Tensor<T> value, std::vector<Var<T>> inputs,
                   std::function<void(Node<T>&)> backward) {
  auto n = std::make_shared<Node<T>>();
  n->value = std::move(value);
  if (!grad_enabled()) return Var<T>(std::move(n));
  bool any = std::any_of(inputs.begin(), inputs.end(),
                         [](const Var<T>& v) { return v.requires_grad(); });
  if (!any) return Var<T>(std::move(n));
  n->requires_grad = true;
  n->is_leaf = false;
  n->parents.reserve(inputs.size());
  for (auto& v : inputs) n->parents.push_back(v.node_ptr());
  n->backward_fn = std::move(backward);
  return Var<T>(std::move(n));
}

// Populates grads of every requires_grad leaf reachable from `loss`.
// Leaf grads accumulate across calls; interior grads are reset per call.
template <typename T>
void backward(const Var<T>& loss) {
  if (!loss.defined() || loss.value().numel() != 1) {
    throw ContractError("backward() needs a scalar loss, got shape " +
                        (loss.defined() ? shape_str(loss.shape()) : "[]"));
  }
  if (!loss.requires_grad()) {
    throw ContractError("backward() on a loss that records no gradients");
  }

  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> seen;
  std::vector<std::pair<Node<T>*, std::size_t>> stack{{loss.node(), 0}};
  seen.insert(loss.node());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node<T>* p = node->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.push_back({p, 0});
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  for (Node<T>* n : order) {
    if (!n->is_leaf || !n->grad) {
      n->grad = Tensor<T>::zeros(n->value.shape());
    }
  }
  (*loss.node()->grad)[0] += T{1};
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    if (!(*it)->is_leaf && (*it)->backward_fn) (*it)->backward_fn(**it);
  }
}

namespace ops {

template <typename T>
inline bool wants_grad(Node<T>& self, std::size_t i) {
  return self.parents[i]->requires_grad;
}

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError("add: shape mismatch " + shape_str(a.shape()) +
                         " vs " + shape_str(b.shape()));
  }
  Tensor<T> out = a.value();
  const auto& bv = b.value();
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] += bv[i];
  return make_result<T>(std::move(out), {a, b}, [](Node<T>& self) {
    auto g = self.grad_span();
    for (std::size_t p = 0; p < 2; ++p) {
      if (!wants_grad(self, p)) continue;
      auto d = self.parents[p]->grad_span();
      for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i];
    }
  });
}

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError("mul: shape mismatch " + shape_str(a.shape()) +
                         " vs " + shape_str(b.shape()));
  }
  Tensor<T> out = a.value();
  const auto& bv = b.value();
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] *= bv[i];
  return make_result<T>(std::move(out), {a, b}, [](Node<T>& self) {
    auto g = self.grad_span();
    const auto& av = self.parents[0]->value;
    const auto& bv = self.parents[1]->value;
    if (wants_grad(self, 0)) {
      auto d = self.parents[0]->grad_span();
      for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i] * bv[i];
    }
    if (wants_grad(self, 1)) {
      auto d = self.parents[1]->grad_span();
      for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i] * av[i];
    }
  });
}

template <typename T>
Var<T> scale(const Var<T>& a, T s) {
  Tensor<T> out = a.value();
  for (auto& v : out.storage()) v *= s;
  return make_result<T>(std::move(out), {a}, [s](Node<T>& self) {
    auto g = self.grad_span();
    auto d = self.parents[0]->grad_span();
    for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i] * s;
  });
}

template <typename T>
Var<T> sum(const Var<T>& a) {
  T total{0};
  for (auto v : a.value().data()) total += v;
  return make_result<T>(Tensor<T>({1}, total), {a}, [](Node<T>& self) {
    const T g = self.grad_span()[0];
    for (auto& d : self.parents[0]->grad_span()) d += g;
  });
}

// Adds a length-n bias to every row of an m x n matrix.
template <typename T>
Var<T> add_row_bias(const Var<T>& x, const Var<T>& bias) {
  if (x.value().rank() != 2 || bias.value().numel() != x.value().dim(1)) {
    throw DimensionError("add_row_bias: " + shape_str(x.shape()) + " + " +
                         shape_str(bias.shape()));
  }
  const std::size_t m = x.value().dim(0), n = x.value().dim(1);
  Tensor<T> out = x.value();
  const auto& bv = bias.value();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] += bv[j];
  return make_result<T>(std::move(out), {x, bias}, [m, n](Node<T>& self) {
    auto g = self.grad_span();
    if (wants_grad(self, 0)) {
      auto d = self.parents[0]->grad_span();
      for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i];
    }
    if (wants_grad(self, 1)) {
      auto d = self.parents[1]->grad_span();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) d[j] += g[i * n + j];
    }
  });
}

template <typename T>
Var<T> matmul(const Var<T>& a, const Var<T>& b) {
  const auto& av = a.value();
  const auto& bv = b.value();
  if (av.rank() != 2 || bv.rank() != 2 || av.dim(1) != bv.dim(0)) {
    throw DimensionError("matmul: inner dimensions disagree for " +
                         shape_str(av.shape()) + " x " + shape_str(bv.shape()));
  }
  const std::size_t m = av.dim(0), k = av.dim(1), n = bv.dim(1);
  Tensor<T> out({m, n});
  kernels::gemm_nn<T>(m, n, k, av.data(), bv.data(), out.data());
  return make_result<T>(std::move(out), {a, b}, [m, k, n](Node<T>& self) {
    auto g = self.grad_span();
    const auto& av = self.parents[0]->value;
    const auto& bv = self.parents[1]->value;
    if (wants_grad(self, 0)) {  // dA = dC * B^T
      kernels::gemm_nt<T>(m, k, n, g, bv.data(), self.parents[0]->grad_span());
    }
    if (wants_grad(self, 1)) {  // dB = A^T * dC
      kernels::gemm_tn<T>(k, n, m, av.data(), g, self.parents[1]->grad_span());
    }
  });
}

// y = x * W^T + b with x: m x k, W: n x k (torch nn.Linear layout), b: n.
template <typename T>
Var<T> linear(const Var<T>& x, const Var<T>& weight, const Var<T>& bias) {
  const auto& xv = x.value();
  const auto& wv = weight.value();
  if (xv.rank() != 2 || wv.rank() != 2 || xv.dim(1) != wv.dim(1) ||
      bias.value().numel() != wv.dim(0)) {
    throw DimensionError("linear: input " + shape_str(xv.shape()) +
                         ", weight " + shape_str(wv.shape()) + ", bias " +
                         shape_str(bias.shape()));
  }
  const std::size_t m = xv.dim(0), k = xv.dim(1), n = wv.dim(0);
  Tensor<T> out({m, n});
  const auto& bv = bias.value();
  for (std::size_t i = 0; i < m; ++i)
    std::copy(bv.data().begin(), bv.data().end(), out.data().begin() + i * n);
  kernels::gemm_nt<T>(m, n, k, xv.data(), wv.data(), out.data());
  return make_result<T>(
      std::move(out), {x, weight, bias}, [m, k, n](Node<T>& self) {
        auto g = self.grad_span();
        const auto& xv = self.parents[0]->value;
        const auto& wv = self.parents[1]->value;
        if (wants_grad(self, 0)) {  // dX = dY * W
          kernels::gemm_nn<T>(m, k, n, g, wv.data(),
                              self.parents[0]->grad_span());
        }
        if (wants_grad(self, 1)) {  // dW = dY^T * X
          kernels::gemm_tn<T>(n, k, m, g, xv.data(),
                              self.parents[1]->grad_span());
        }
        if (wants_grad(self, 2)) {
          auto d = self.parents[2]->grad_span();
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) d[j] += g[i * n + j];
        }
      });
}

template <typename T>
Var<T> transpose(const Var<T>& a) {
  const auto& av = a.value();
  if (av.rank() != 2) {
    throw DimensionError("transpose needs a matrix, got " +
                         shape_str(av.shape()));
  }
  const std::size_t m = av.dim(0), n = av.dim(1);
  Tensor<T> out({n, m});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = av[i * n + j];
  return make_result<T>(std::move(out), {a}, [m, n](Node<T>& self) {
    auto g = self.grad_span();
    auto d = self.parents[0]->grad_span();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) d[i * n + j] += g[j * m + i];
  });
}

template <typename T>
Var<T> softmax(const Var<T>& x, std::size_t axis) {
  const auto& xv = x.value();
  if (axis >= xv.rank()) {
    throw DimensionError("softmax axis " + std::to_string(axis) +
                         " out of range for " + shape_str(xv.shape()));
  }
  const kernels::AxisLayout layout(xv.shape(), axis);
  Tensor<T> out(xv.shape());
  kernels::softmax_forward<T>(layout, xv.data(), out.data());
  return make_result<T>(std::move(out), {x}, [layout](Node<T>& self) {
    // dx = y * (dy - <dy, y>) along the axis
    const auto y = self.value.data();
    const auto g = self.grad_span();
    auto d = self.parents[0]->grad_span();
    for (std::size_t o = 0; o < layout.outer; ++o) {
      for (std::size_t in = 0; in < layout.inner; ++in) {
        const std::size_t base = o * layout.len * layout.inner + in;
        T dot{0};
        for (std::size_t i = 0; i < layout.len; ++i) {
          const std::size_t idx = base + i * layout.inner;
          dot += g[idx] * y[idx];
        }
        for (std::size_t i = 0; i < layout.len; ++i) {
          const std::size_t idx = base + i * layout.inner;
          d[idx] += y[idx] * (g[idx] - dot);
        }
      }
    }
  });
}

// Normalizes each row of an m x n matrix (or a single vector) with biased
// variance, then applies gamma and beta.
template <typename T>
Var<T> layer_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta,
                  T eps = T(1e-6)) {
  const auto& xv = x.value();
  if (xv.rank() < 1 || xv.rank() > 2) {
    throw DimensionError("layer_norm expects a vector or matrix, got " +
                         shape_str(xv.shape()));
  }
  const std::size_t n = xv.shape().back();
  const std::size_t m = xv.numel() / n;
  if (n < 2) {
    throw DimensionError("layer_norm axis needs length >= 2, got " +
                         shape_str(xv.shape()));
  }
  if (gamma.value().numel() != n || beta.value().numel() != n) {
    throw DimensionError("layer_norm affine " + shape_str(gamma.shape()) +
                         "/" + shape_str(beta.shape()) + " for rows of " +
                         std::to_string(n));
  }
  Tensor<T> out(xv.shape());
  std::vector<T> xhat(xv.numel());
  std::vector<T> rstd(m);
  const auto& gv = gamma.value();
  const auto& bv = beta.value();
  for (std::size_t r = 0; r < m; ++r) {
    const T* row = xv.data().data() + r * n;
    T mean{0};
    for (std::size_t j = 0; j < n; ++j) mean += row[j];
    mean /= static_cast<T>(n);
    T var{0};
    for (std::size_t j = 0; j < n; ++j) var += (row[j] - mean) * (row[j] - mean);
    var /= static_cast<T>(n);
    rstd[r] = T{1} / std::sqrt(var + eps);
    for (std::size_t j = 0; j < n; ++j) {
      const T h = (row[j] - mean) * rstd[r];
      xhat[r * n + j] = h;
      out[r * n + j] = h * gv[j] + bv[j];
    }
  }
  return make_result<T>(
      std::move(out), {x, gamma, beta},
      [m, n, xhat = std::move(xhat), rstd = std::move(rstd)](Node<T>& self) {
        const auto g = self.grad_span();
        const auto& gv = self.parents[1]->value;
        if (wants_grad(self, 1)) {
          auto d = self.parents[1]->grad_span();
          for (std::size_t i = 0; i < m * n; ++i) d[i % n] += g[i] * xhat[i];
        }
        if (wants_grad(self, 2)) {
          auto d = self.parents[2]->grad_span();
          for (std::size_t i = 0; i < m * n; ++i) d[i % n] += g[i];
        }
        if (wants_grad(self, 0)) {
          auto d = self.parents[0]->grad_span();
          const T inv_n = T{1} / static_cast<T>(n);
          for (std::size_t r = 0; r < m; ++r) {
            T mean_dh{0}, mean_dh_h{0};
            for (std::size_t j = 0; j < n; ++j) {
              const T dh = g[r * n + j] * gv[j];
              mean_dh += dh;
              mean_dh_h += dh * xhat[r * n + j];
            }
            mean_dh *= inv_n;
            mean_dh_h *= inv_n;
            for (std::size_t j = 0; j < n; ++j) {
              const T dh = g[r * n + j] * gv[j];
              d[r * n + j] +=
                  rstd[r] * (dh - mean_dh - xhat[r * n + j] * mean_dh_h);
            }
          }
        }
      });
}

enum class GeluMode { Tanh, Erf };

template <typename T>
Var<T> gelu(const Var<T>& x, GeluMode mode = GeluMode::Tanh) {
  Tensor<T> out = x.value();
  for (auto& v : out.storage()) v = kernels::gelu_value(v, mode == GeluMode::Erf);
  return make_result<T>(std::move(out), {x}, [mode](Node<T>& self) {
    const auto g = self.grad_span();
    const auto& xv = self.parents[0]->value;
    auto d = self.parents[0]->grad_span();
    for (std::size_t i = 0; i < g.size(); ++i) {
      d[i] += g[i] * kernels::gelu_derivative(xv[i], mode == GeluMode::Erf);
    }
  });
}

// Columns [begin, begin + count) of a matrix.
template <typename T>
Var<T> slice_cols(const Var<T>& x, std::size_t begin, std::size_t count) {
  const auto& xv = x.value();
  if (xv.rank() != 2 || count == 0 || begin + count > xv.dim(1)) {
    throw DimensionError("slice_cols [" + std::to_string(begin) + ", +" +
                         std::to_string(count) + ") of " +
                         shape_str(xv.shape()));
  }
  const std::size_t m = xv.dim(0), n = xv.dim(1);
  Tensor<T> out({m, count});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < count; ++j)
      out[i * count + j] = xv[i * n + begin + j];
  return make_result<T>(std::move(out), {x}, [m, n, begin, count](Node<T>& self) {
    const auto g = self.grad_span();
    auto d = self.parents[0]->grad_span();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < count; ++j)
        d[i * n + begin + j] += g[i * count + j];
  });
}

// Rows [begin, begin + count) of a matrix.
template <typename T>
Var<T> slice_rows(const Var<T>& x, std::size_t begin, std::size_t count) {
  const auto& xv = x.value();
  if (xv.rank() != 2 || count == 0 || begin + count > xv.dim(0)) {
    throw DimensionError("slice_rows [" + std::to_string(begin) + ", +" +
                         std::to_string(count) + ") of " +
                         shape_str(xv.shape()));
  }
  const std::size_t n = xv.dim(1);
  Tensor<T> out({count, n},
                std::vector<T>(xv.data().begin() + begin * n,
                               xv.data().begin() + (begin + count) * n));
  return make_result<T>(std::move(out), {x}, [begin, n](Node<T>& self) {
    const auto g = self.grad_span();
    auto d = self.parents[0]->grad_span();
    for (std::size_t i = 0; i < g.size(); ++i) d[begin * n + i] += g[i];
  });
}

// Horizontal concatenation of matrices with equal row counts.
template <typename T>
Var<T> concat_cols(const std::vector<Var<T>>& parts) {
  if (parts.empty()) throw DimensionError("concat_cols of nothing");
  const std::size_t m = parts[0].value().dim(0);
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const auto& p : parts) {
    if (p.value().rank() != 2 || p.value().dim(0) != m) {
      throw DimensionError("concat_cols: part " + shape_str(p.shape()) +
                           " does not have " + std::to_string(m) + " rows");
    }
    widths.push_back(p.value().dim(1));
    total += widths.back();
  }
  Tensor<T> out({m, total});
  std::size_t off = 0;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    const auto& pv = parts[p].value();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < widths[p]; ++j)
        out[i * total + off + j] = pv[i * widths[p] + j];
    off += widths[p];
  }
  return make_result<T>(std::move(out), parts,
                        [m, total, widths](Node<T>& self) {
                          const auto g = self.grad_span();
                          std::size_t off = 0;
                          for (std::size_t p = 0; p < widths.size(); ++p) {
                            if (wants_grad(self, p)) {
                              auto d = self.parents[p]->grad_span();
                              for (std::size_t i = 0; i < m; ++i)
                                for (std::size_t j = 0; j < widths[p]; ++j)
                                  d[i * widths[p] + j] += g[i * total + off + j];
                            }
                            off += widths[p];
                          }
                        });
}

// Vertical concatenation; 1-D parts are treated as single rows.
template <typename T>
Var<T> concat_rows(const std::vector<Var<T>>& parts) {
  if (parts.empty()) throw DimensionError("concat_rows of nothing");
  const std::size_t n = parts[0].value().shape().back();
  std::size_t rows = 0;
  std::vector<std::size_t> sizes;
  for (const auto& p : parts) {
    const auto& pv = p.value();
    if (pv.rank() > 2 || pv.shape().back() != n) {
      throw DimensionError("concat_rows: part " + shape_str(pv.shape()) +
                           " does not have " + std::to_string(n) + " columns");
    }
    rows += pv.numel() / n;
    sizes.push_back(pv.numel());
  }
  std::vector<T> data;
  data.reserve(rows * n);
  for (const auto& p : parts)
    data.insert(data.end(), p.value().data().begin(), p.value().data().end());
  return make_result<T>(Tensor<T>({rows, n}, std::move(data)), parts,
                        [sizes](Node<T>& self) {
                          const auto g = self.grad_span();
                          std::size_t off = 0;
                          for (std::size_t p = 0; p < sizes.size(); ++p) {
                            if (wants_grad(self, p)) {
                              auto d = self.parents[p]->grad_span();
                              for (std::size_t i = 0; i < sizes[p]; ++i)
                                d[i] += g[off + i];
                            }
                            off += sizes[p];
                          }
                        });
}

template <typename T>
Var<T> reshape(const Var<T>& x, Shape shape) {
  if (shape_numel(shape) != x.value().numel()) {
    throw DimensionError("reshape " + shape_str(x.shape()) + " -> " +
                         shape_str(shape));
  }
  return make_result<T>(x.value().reshaped(std::move(shape)), {x},
                        [](Node<T>& self) {
                          const auto g = self.grad_span();
                          auto d = self.parents[0]->grad_span();
                          for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i];
                        });
}

}  // namespace ops
}  // namespace vitct
