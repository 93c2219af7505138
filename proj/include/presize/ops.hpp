// SPDX-License-Identifier: Apache-2.0
//
// Neural-net primitives with explicit forward and backward passes. No
// autodiff graph: each forward optionally fills an op-specific cache, and
// the matching backward consumes that cache exactly once. All *_backward
// functions ACCUMULATE into parameter-gradient tensors (callers zero them
// at batch start) and return fresh input gradients.

#pragma once

#include <cstdint>
#include <vector>

#include "presize/tensor.hpp"

namespace presize::nn {

struct IndexError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------- linear

template <class T>
struct LinearCacheT {
  TensorT<T> x;  // saved input, flattened rows x last-dim
};

/// y = x @ w + b. x may have any leading shape; its last dim must equal
/// w.dim(0). Returns a tensor with the same leading shape and last dim
/// w.dim(1).
template <class T>
TensorT<T> linear(const TensorT<T>& x, const TensorT<T>& w, const TensorT<T>& b,
                  LinearCacheT<T>* cache = nullptr);

/// Returns dL/dx; accumulates dL/dw into dw and dL/db into db.
template <class T>
TensorT<T> linear_backward(const LinearCacheT<T>& cache, const TensorT<T>& w,
                           const TensorT<T>& dy, TensorT<T>& dw, TensorT<T>& db);

// ------------------------------------------------------------ layer norm

inline constexpr double kLayerNormEps = 1e-5;

template <class T>
struct LayerNormCacheT {
  TensorT<T> x_hat;          // normalized rows
  std::vector<T> inv_std;    // one per row
};

/// Per-row zero-mean unit-variance over the last dim, then affine.
template <class T>
TensorT<T> layer_norm(const TensorT<T>& x, const TensorT<T>& gamma,
                      const TensorT<T>& beta, LayerNormCacheT<T>* cache = nullptr);

template <class T>
TensorT<T> layer_norm_backward(const LayerNormCacheT<T>& cache, const TensorT<T>& gamma,
                               const TensorT<T>& dy, TensorT<T>& dgamma, TensorT<T>& dbeta);

// ------------------------------------------------------------------ gelu

template <class T>
struct GeluCacheT {
  TensorT<T> x;
};

/// Elementwise x * Phi(x) in the exact erf formulation (no tanh approximation).
template <class T>
TensorT<T> gelu(const TensorT<T>& x, GeluCacheT<T>* cache = nullptr);

template <class T>
TensorT<T> gelu_backward(const GeluCacheT<T>& cache, const TensorT<T>& dy);

// --------------------------------------------------------------- softmax

/// Row softmax over the last dim with max-subtraction for stability.
template <class T>
TensorT<T> softmax(const TensorT<T>& x);

/// In-place row softmax on a raw buffer (used inside attention).
template <class T>
void softmax_row_inplace(T* row, int n);

// ------------------------------------------------------------- embedding

/// Row gather: out[i,:] = table[ids[i],:]. Empty ids yield a [0,d] tensor.
template <class T>
TensorT<T> embedding_lookup(const TensorT<T>& table, const std::vector<int>& ids);

/// Scatter-add: dtable[ids[i],:] += dy[i,:]. Duplicate ids sum.
template <class T>
void embedding_backward(const std::vector<int>& ids, const TensorT<T>& dy,
                        TensorT<T>& dtable);

}  // namespace presize::nn
