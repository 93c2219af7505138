// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include "presize/tensor.hpp"

namespace presize::nn {

struct GradientError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

template <class T>
struct AdamConfigT {
  T beta1 = T(0.9);
  T beta2 = T(0.999);
  T eps = T(1e-8);
};

// First and second moment buffers, congruent with the parameter list they
// were initialized against. step counts completed updates.
template <class T>
struct AdamStateT {
  long long step = 0;
  std::vector<TensorT<T>> m, v;

  void init(const std::vector<TensorT<T>*>& params) {
    step = 0;
    m.clear();
    v.clear();
    m.reserve(params.size());
    v.reserve(params.size());
    for (const auto* p : params) {
      m.push_back(TensorT<T>::zeros(p->shape));
      v.push_back(TensorT<T>::zeros(p->shape));
    }
  }
};

/// One bias-corrected Adam update over a fixed-order parameter list.
/// params, grads and names are parallel. Throws GradientError naming the
/// first parameter whose gradient contains a non-finite value; in that
/// case no parameter is modified and step is not advanced.
template <class T>
void adam_step(const std::vector<TensorT<T>*>& params,
               const std::vector<const TensorT<T>*>& grads,
               const std::vector<std::string>& names, AdamStateT<T>& state, T lr,
               const AdamConfigT<T>& cfg = {});

}  // namespace presize::nn
