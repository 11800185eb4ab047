#pragma once

// Raw numeric kernels shared by the differentiable ops. All GEMM variants
// accumulate into C.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <span>
#include <vector>

#include "vitct/tensor.hpp"

namespace vitct::kernels {

// C[m x n] += A[m x k] * B[k x n]
template <typename T>
void gemm_nn(std::size_t m, std::size_t n, std::size_t k,
             std::span<const T> a, std::span<const T> b, std::span<T> c) {
  for (std::size_t i = 0; i < m; ++i) {
    T* crow = c.data() + i * n;
    const T* arow = a.data() + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const T av = arow[p];
      const T* brow = b.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// C[m x n] += A[m x k] * B^T, B stored as [n x k]
template <typename T>
void gemm_nt(std::size_t m, std::size_t n, std::size_t k,
             std::span<const T> a, std::span<const T> b, std::span<T> c) {
  std::vector<T> bt(k * n);
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t p = 0; p < k; ++p) bt[p * n + j] = b[j * k + p];
  gemm_nn<T>(m, n, k, a, bt, c);
}

// C[m x n] += A^T * B, A stored as [k x m], B as [k x n]
template <typename T>
void gemm_tn(std::size_t m, std::size_t n, std::size_t k,
             std::span<const T> a, std::span<const T> b, std::span<T> c) {
  for (std::size_t p = 0; p < k; ++p) {
    const T* arow = a.data() + p * m;
    const T* brow = b.data() + p * n;
    for (std::size_t i = 0; i < m; ++i) {
      const T av = arow[i];
      T* crow = c.data() + i * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// Strides for reducing a row-major tensor along one axis.
struct AxisLayout {
  std::size_t outer = 1, len = 1, inner = 1;
  AxisLayout(const Shape& shape, std::size_t axis) {
    for (std::size_t i = 0; i < axis; ++i) outer *= shape[i];
    len = shape[axis];
    for (std::size_t i = axis + 1; i < shape.size(); ++i) inner *= shape[i];
  }
};

template <typename T>
void softmax_forward(const AxisLayout& l, std::span<const T> x, std::span<T> y) {
  for (std::size_t o = 0; o < l.outer; ++o) {
    for (std::size_t in = 0; in < l.inner; ++in) {
      const std::size_t base = o * l.len * l.inner + in;
      T mx = x[base];
      for (std::size_t i = 1; i < l.len; ++i)
        mx = std::max(mx, x[base + i * l.inner]);
      T total{0};
      for (std::size_t i = 0; i < l.len; ++i) {
        const std::size_t idx = base + i * l.inner;
        y[idx] = std::exp(x[idx] - mx);
        total += y[idx];
      }
      for (std::size_t i = 0; i < l.len; ++i) y[base + i * l.inner] /= total;
    }
  }
}

// GELU. Default is the tanh form
//   0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3)));
// `exact` selects x * Phi(x) with Phi the standard normal CDF.
template <typename T>
T gelu_value(T x, bool exact) {
  if (exact) {
    return T(0.5) * x * (T(1) + std::erf(x / std::numbers::sqrt2_v<T>));
  }
  const T c = std::sqrt(T(2) / std::numbers::pi_v<T>);
  const T u = c * (x + T(0.044715) * x * x * x);
  return T(0.5) * x * (T(1) + std::tanh(u));
}

template <typename T>
T gelu_derivative(T x, bool exact) {
  if (exact) {
    const T cdf = T(0.5) * (T(1) + std::erf(x / std::numbers::sqrt2_v<T>));
    const T pdf = std::exp(T(-0.5) * x * x) /
                  std::sqrt(T(2) * std::numbers::pi_v<T>);
    return cdf + x * pdf;
  }
  // tanh is saturated to working precision well before |x| = 20
  if (std::abs(x) > T(20)) return x > T(0) ? T(1) : T(0);
  const T c = std::sqrt(T(2) / std::numbers::pi_v<T>);
  const T u = c * (x + T(0.044715) * x * x * x);
  const T t = std::tanh(u);
  const T du = c * (T(1) + T(3) * T(0.044715) * x * x);
  return T(0.5) * (T(1) + t) + T(0.5) * x * (T(1) - t * t) * du;
}

}  // namespace vitct::kernels
