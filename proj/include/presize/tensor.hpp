// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstddef>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace presize::nn {

/// Thrown when tensor shapes disagree with an op's contract.
struct DimensionError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline std::size_t shape_numel(const std::vector<int>& shape) {
  std::size_t n = 1;
  for (int d : shape) {
    if (d < 0) throw DimensionError("negative dimension");
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

/// Dense row-major tensor. float is the production dtype; double backs the
/// finite-difference gradient checks.
template <class T>
struct TensorT {
  std::vector<int> shape;
  std::vector<T> data;

  TensorT() = default;
  explicit TensorT(std::vector<int> s) : shape(std::move(s)), data(shape_numel(shape), T(0)) {}
  TensorT(std::vector<int> s, std::vector<T> d) : shape(std::move(s)), data(std::move(d)) {
    if (shape_numel(shape) != data.size()) {
      throw DimensionError("tensor data length does not match shape");
    }
  }

  static TensorT zeros(std::vector<int> s) {
    const std::size_t n = shape_numel(s);
    return TensorT(std::move(s), std::vector<T>(n, T(0)));
  }
  static TensorT full(std::vector<int> s, T v) {
    const std::size_t n = shape_numel(s);
    return TensorT(std::move(s), std::vector<T>(n, v));
  }

  std::size_t size() const { return data.size(); }
  int ndim() const { return static_cast<int>(shape.size()); }
  int dim(int i) const { return shape.at(static_cast<std::size_t>(i)); }

  T* ptr() { return data.data(); }
  const T* ptr() const { return data.data(); }

  T& operator[](std::size_t i) { return data[i]; }
  const T& operator[](std::size_t i) const { return data[i]; }

  bool all_finite() const {
    for (const T v : data) {
      if (!std::isfinite(v)) return false;
    }
    return true;
  }

  void fill(T v) { data.assign(data.size(), v); }

  TensorT zeros_like() const { return zeros(shape); }

  bool same_shape(const TensorT& o) const { return shape == o.shape; }

  std::string shape_str() const {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
      if (i > 0) s += ",";
      s += std::to_string(shape[i]);
    }
    return s + "]";
  }

  template <class U>
  TensorT<U> cast() const {
    TensorT<U> out;
    out.shape = shape;
    out.data.resize(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) out.data[i] = static_cast<U>(data[i]);
    return out;
  }
};

using Tensor = TensorT<float>;
using Tensor64 = TensorT<double>;

template <class T>
bool same_shape(const TensorT<T>& a, const TensorT<T>& b) {
  return a.shape == b.shape;
}

template <class T>
void require_shape(const TensorT<T>& t, const std::vector<int>& shape, const char* what) {
  if (t.shape != shape) {
    throw DimensionError(std::string(what) + ": expected shape mismatch, got " + t.shape_str());
  }
}

}  // namespace presize::nn
