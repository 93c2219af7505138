// SPDX-License-Identifier: Apache-2.0

#include "presize/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "presize/kernels.hpp"

namespace presize::nn {

namespace {

// Rows = product of all dims but the last. Scalars (ndim 0) are rejected.
template <class T>
std::pair<std::size_t, int> row_view(const TensorT<T>& x, const char* who) {
  if (x.ndim() < 1) throw DimensionError(std::string(who) + ": need at least 1 dim");
  const int last = x.dim(x.ndim() - 1);
  if (last <= 0) throw DimensionError(std::string(who) + ": empty last dim");
  return {x.size() / static_cast<std::size_t>(last), last};
}

template <class T>
std::vector<int> with_last_dim(const TensorT<T>& x, int last) {
  std::vector<int> s = x.shape;
  s.back() = last;
  return s;
}

}  // namespace

// ---------------------------------------------------------------- linear

template <class T>
TensorT<T> linear(const TensorT<T>& x, const TensorT<T>& w, const TensorT<T>& b,
                  LinearCacheT<T>* cache) {
  const auto [rows, din] = row_view(x, "linear");
  if (w.ndim() != 2 || w.dim(0) != din)
    throw DimensionError("linear: weight is " + w.shape_str() + " but input last dim is " +
                         std::to_string(din));
  const int dout = w.dim(1);
  require_shape(b, {dout}, "linear bias");

  TensorT<T> y(with_last_dim(x, dout));
  kernels::matmul<T>(x.ptr(), w.ptr(), y.ptr(), static_cast<int>(rows), din, dout);
  kernels::add_bias<T>(y.ptr(), b.ptr(), static_cast<int>(rows), dout);
  if (cache) cache->x = x;
  return y;
}

template <class T>
TensorT<T> linear_backward(const LinearCacheT<T>& cache, const TensorT<T>& w,
                           const TensorT<T>& dy, TensorT<T>& dw, TensorT<T>& db) {
  const auto [rows, din] = row_view(cache.x, "linear_backward");
  const auto [drows, dout] = row_view(dy, "linear_backward");
  if (drows != rows) throw DimensionError("linear_backward: row count mismatch");
  require_shape(dw, {din, dout}, "linear dw");
  require_shape(db, {dout}, "linear db");

  // dw += x^T dy, db += column sums of dy, dx = dy w^T
  kernels::matmul_tn_acc<T>(cache.x.ptr(), dy.ptr(), dw.ptr(), din, static_cast<int>(rows),
                            dout);
  kernels::colsum_acc<T>(dy.ptr(), db.ptr(), static_cast<int>(rows), dout);

  TensorT<T> dx(cache.x.shape);
  kernels::matmul_nt<T>(dy.ptr(), w.ptr(), dx.ptr(), static_cast<int>(rows), dout, din);
  return dx;
}

// ------------------------------------------------------------ layer norm

template <class T>
TensorT<T> layer_norm(const TensorT<T>& x, const TensorT<T>& gamma, const TensorT<T>& beta,
                      LayerNormCacheT<T>* cache) {
  const auto [rows, d] = row_view(x, "layer_norm");
  require_shape(gamma, {d}, "layer_norm gamma");
  require_shape(beta, {d}, "layer_norm beta");

  TensorT<T> y(x.shape);
  TensorT<T> x_hat(x.shape);
  std::vector<T> inv_std(rows);
  const T* xp = x.ptr();
  T* yp = y.ptr();
  T* hp = x_hat.ptr();
  for (std::size_t r = 0; r < rows; ++r) {
    const T* row = xp + r * d;
    T mu = 0;
    for (int i = 0; i < d; ++i) mu += row[i];
    mu /= static_cast<T>(d);
    T var = 0;
    for (int i = 0; i < d; ++i) {
      const T c = row[i] - mu;
      var += c * c;
    }
    var /= static_cast<T>(d);
    const T is = T(1) / std::sqrt(var + static_cast<T>(kLayerNormEps));
    inv_std[r] = is;
    T* yrow = yp + r * d;
    T* hrow = hp + r * d;
    for (int i = 0; i < d; ++i) {
      const T h = (row[i] - mu) * is;
      hrow[i] = h;
      yrow[i] = gamma.data[i] * h + beta.data[i];
    }
  }
  if (cache) {
    cache->x_hat = std::move(x_hat);
    cache->inv_std = std::move(inv_std);
  }
  return y;
}

template <class T>
TensorT<T> layer_norm_backward(const LayerNormCacheT<T>& cache, const TensorT<T>& gamma,
                               const TensorT<T>& dy, TensorT<T>& dgamma, TensorT<T>& dbeta) {
  const auto [rows, d] = row_view(dy, "layer_norm_backward");
  if (!same_shape(cache.x_hat, dy))
    throw DimensionError("layer_norm_backward: cache/dy shape mismatch");
  require_shape(dgamma, {d}, "layer_norm dgamma");
  require_shape(dbeta, {d}, "layer_norm dbeta");

  TensorT<T> dx(dy.shape);
  const T* hp = cache.x_hat.ptr();
  const T* gp = dy.ptr();
  T* op = dx.ptr();
  const T inv_d = T(1) / static_cast<T>(d);
  for (std::size_t r = 0; r < rows; ++r) {
    const T* hrow = hp + r * d;
    const T* grow = gp + r * d;
    T* orow = op + r * d;
    T m1 = 0, m2 = 0;
    for (int i = 0; i < d; ++i) {
      const T gh = grow[i] * gamma.data[i];
      m1 += gh;
      m2 += gh * hrow[i];
      dgamma.data[i] += grow[i] * hrow[i];
      dbeta.data[i] += grow[i];
    }
    m1 *= inv_d;
    m2 *= inv_d;
    const T is = cache.inv_std[r];
    for (int i = 0; i < d; ++i) {
      const T gh = grow[i] * gamma.data[i];
      orow[i] = is * (gh - m1 - hrow[i] * m2);
    }
  }
  return dx;
}

// ------------------------------------------------------------------ gelu

template <class T>
TensorT<T> gelu(const TensorT<T>& x, GeluCacheT<T>* cache) {
  TensorT<T> y(x.shape);
  kernels::gelu_fwd<T>(x.size(), x.ptr(), y.ptr());
  if (cache) cache->x = x;
  return y;
}

template <class T>
TensorT<T> gelu_backward(const GeluCacheT<T>& cache, const TensorT<T>& dy) {
  if (!same_shape(cache.x, dy)) throw DimensionError("gelu_backward: shape mismatch");
  TensorT<T> dx(dy.shape);
  kernels::gelu_bwd<T>(dy.size(), cache.x.ptr(), dy.ptr(), dx.ptr());
  return dx;
}

// --------------------------------------------------------------- softmax

template <class T>
void softmax_row_inplace(T* row, int n) {
  T mx = row[0];
  for (int i = 1; i < n; ++i) mx = std::max(mx, row[i]);
  T sum = 0;
  for (int i = 0; i < n; ++i) {
    // Keeps fully masked entries (-inf) at exactly zero probability.
    const T e = std::isinf(row[i]) && row[i] < 0 ? T(0) : std::exp(row[i] - mx);
    row[i] = e;
    sum += e;
  }
  const T inv = T(1) / sum;
  for (int i = 0; i < n; ++i) row[i] *= inv;
}

template <class T>
TensorT<T> softmax(const TensorT<T>& x) {
  const auto [rows, n] = row_view(x, "softmax");
  TensorT<T> y = x;
  for (std::size_t r = 0; r < rows; ++r) softmax_row_inplace<T>(y.ptr() + r * n, n);
  return y;
}

// ------------------------------------------------------------- embedding

template <class T>
TensorT<T> embedding_lookup(const TensorT<T>& table, const std::vector<int>& ids) {
  if (table.ndim() != 2) throw DimensionError("embedding_lookup: table must be 2-D");
  const int v = table.dim(0), d = table.dim(1);
  TensorT<T> out({static_cast<int>(ids.size()), d});
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const int id = ids[i];
    if (id < 0 || id >= v)
      throw IndexError("embedding_lookup: id " + std::to_string(id) + " out of range [0," +
                       std::to_string(v) + ")");
    std::copy_n(table.ptr() + static_cast<std::size_t>(id) * d, d, out.ptr() + i * d);
  }
  return out;
}

template <class T>
void embedding_backward(const std::vector<int>& ids, const TensorT<T>& dy, TensorT<T>& dtable) {
  if (dtable.ndim() != 2) throw DimensionError("embedding_backward: table must be 2-D");
  const int v = dtable.dim(0), d = dtable.dim(1);
  require_shape(dy, {static_cast<int>(ids.size()), d}, "embedding_backward dy");
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const int id = ids[i];
    if (id < 0 || id >= v) throw IndexError("embedding_backward: id out of range");
    kernels::axpy<T>(static_cast<std::size_t>(d), T(1), dy.ptr() + i * d,
                     dtable.ptr() + static_cast<std::size_t>(id) * d);
  }
}

#define PRESIZE_INSTANTIATE_OPS(T)                                                       \
  template TensorT<T> linear<T>(const TensorT<T>&, const TensorT<T>&, const TensorT<T>&, \
                                LinearCacheT<T>*);                                       \
  template TensorT<T> linear_backward<T>(const LinearCacheT<T>&, const TensorT<T>&,      \
                                         const TensorT<T>&, TensorT<T>&, TensorT<T>&);   \
  template TensorT<T> layer_norm<T>(const TensorT<T>&, const TensorT<T>&,                \
                                    const TensorT<T>&, LayerNormCacheT<T>*);             \
  template TensorT<T> layer_norm_backward<T>(const LayerNormCacheT<T>&, const TensorT<T>&, \
                                             const TensorT<T>&, TensorT<T>&, TensorT<T>&); \
  template TensorT<T> gelu<T>(const TensorT<T>&, GeluCacheT<T>*);                        \
  template TensorT<T> gelu_backward<T>(const GeluCacheT<T>&, const TensorT<T>&);         \
  template TensorT<T> softmax<T>(const TensorT<T>&);                                     \
  template void softmax_row_inplace<T>(T*, int);                                         \
  template TensorT<T> embedding_lookup<T>(const TensorT<T>&, const std::vector<int>&);   \
  template void embedding_backward<T>(const std::vector<int>&, const TensorT<T>&, TensorT<T>&);

PRESIZE_INSTANTIATE_OPS(float)
PRESIZE_INSTANTIATE_OPS(double)

#undef PRESIZE_INSTANTIATE_OPS

}  // namespace presize::nn
