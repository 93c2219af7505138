// SPDX-License-Identifier: Apache-2.0
//
// Reference kernels: portable scalar implementations of the dense inner
// loops. Templated so the float32 production path and the float64
// gradient-check path share one definition. The SIMD backends in
// src/kernels_avx2.cpp must match these within floating-point tolerance;
// equivalence is enforced by tests/test_kernels.cpp.

#pragma once

#include <cmath>
#include <cstddef>

namespace presize::kernels::ref {

// C[m,n] = A[m,k] * B[k,n], row-major, overwrite.
template <class T>
void matmul(const T* a, const T* b, T* c, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    T* ci = c + static_cast<std::size_t>(i) * n;
    for (int j = 0; j < n; ++j) ci[j] = T(0);
    const T* ai = a + static_cast<std::size_t>(i) * k;
    for (int p = 0; p < k; ++p) {
      const T aip = ai[p];
      const T* bp = b + static_cast<std::size_t>(p) * n;
      for (int j = 0; j < n; ++j) ci[j] += aip * bp[j];
    }
  }
}

// C[m,n] = A[m,k] * B^T where B is [n,k], overwrite.
template <class T>
void matmul_nt(const T* a, const T* b, T* c, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    const T* ai = a + static_cast<std::size_t>(i) * k;
    T* ci = c + static_cast<std::size_t>(i) * n;
    for (int j = 0; j < n; ++j) {
      const T* bj = b + static_cast<std::size_t>(j) * k;
      T s = T(0);
      for (int p = 0; p < k; ++p) s += ai[p] * bj[p];
      ci[j] = s;
    }
  }
}

// C[m,n] += A^T * B where A is [k,m], B is [k,n]. Accumulates (gradient use).
template <class T>
void matmul_tn_acc(const T* a, const T* b, T* c, int m, int k, int n) {
  for (int p = 0; p < k; ++p) {
    const T* ap = a + static_cast<std::size_t>(p) * m;
    const T* bp = b + static_cast<std::size_t>(p) * n;
    for (int i = 0; i < m; ++i) {
      const T api = ap[i];
      T* ci = c + static_cast<std::size_t>(i) * n;
      for (int j = 0; j < n; ++j) ci[j] += api * bp[j];
    }
  }
}

// y[r,:] += b for each of `rows` rows of width n.
template <class T>
void add_bias(T* y, const T* b, int rows, int n) {
  for (int r = 0; r < rows; ++r) {
    T* yr = y + static_cast<std::size_t>(r) * n;
    for (int j = 0; j < n; ++j) yr[j] += b[j];
  }
}

// out[j] += sum over rows of x[r,j] (column sums; bias gradients).
template <class T>
void colsum_acc(const T* x, T* out, int rows, int n) {
  for (int r = 0; r < rows; ++r) {
    const T* xr = x + static_cast<std::size_t>(r) * n;
    for (int j = 0; j < n; ++j) out[j] += xr[j];
  }
}

template <class T>
void axpy(std::size_t n, T alpha, const T* x, T* y) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

template <class T>
void vadd(std::size_t n, const T* x, const T* y, T* z) {
  for (std::size_t i = 0; i < n; ++i) z[i] = x[i] + y[i];
}

template <class T>
void vscale(std::size_t n, T alpha, T* x) {
  for (std::size_t i = 0; i < n; ++i) x[i] *= alpha;
}

template <class T>
T dot(std::size_t n, const T* x, const T* y) {
  T s = T(0);
  for (std::size_t i = 0; i < n; ++i) s += x[i] * y[i];
  return s;
}

// Exact-erf GELU: gelu(x) = x * Phi(x), Phi(x) = 0.5 * (1 + erf(x / sqrt(2))).
template <class T>
T gelu_scalar(T x) {
  return T(0.5) * x * (T(1) + std::erf(x * T(0.7071067811865475244)));
}

// d/dx gelu(x) = Phi(x) + x * phi(x), phi the standard normal density.
template <class T>
T gelu_grad_scalar(T x) {
  const T phi = std::exp(T(-0.5) * x * x) * T(0.3989422804014326779);
  const T cdf = T(0.5) * (T(1) + std::erf(x * T(0.7071067811865475244)));
  return cdf + x * phi;
}

template <class T>
void gelu_fwd(std::size_t n, const T* x, T* y) {
  for (std::size_t i = 0; i < n; ++i) y[i] = gelu_scalar(x[i]);
}

// dx[i] = dy[i] * gelu'(x[i])
template <class T>
void gelu_bwd(std::size_t n, const T* x, const T* dy, T* dx) {
  for (std::size_t i = 0; i < n; ++i) dx[i] = dy[i] * gelu_grad_scalar(x[i]);
}

// One Adam step over a flat parameter span. inv_bc1 = 1/(1-beta1^t),
// inv_bc2 = 1/(1-beta2^t). p -= lr * m_hat / (sqrt(v_hat) + eps).
template <class T>
void adam_update(std::size_t n, T* p, const T* g, T* m, T* v, T lr, T beta1,
                 T beta2, T eps, T inv_bc1, T inv_bc2) {
  for (std::size_t i = 0; i < n; ++i) {
    m[i] = beta1 * m[i] + (T(1) - beta1) * g[i];
    v[i] = beta2 * v[i] + (T(1) - beta2) * g[i] * g[i];
    const T m_hat = m[i] * inv_bc1;
    const T v_hat = v[i] * inv_bc2;
    p[i] -= lr * m_hat / (std::sqrt(v_hat) + eps);
  }
}

}  // namespace presize::kernels::ref
