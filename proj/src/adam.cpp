// SPDX-License-Identifier: Apache-2.0

#include "presize/adam.hpp"

#include <cmath>

#include "presize/kernels.hpp"

namespace presize::nn {

template <class T>
void adam_step(const std::vector<TensorT<T>*>& params,
               const std::vector<const TensorT<T>*>& grads,
               const std::vector<std::string>& names, AdamStateT<T>& state, T lr,
               const AdamConfigT<T>& cfg) {
  if (params.size() != grads.size() || params.size() != names.size())
    throw DimensionError("adam_step: params/grads/names size mismatch");
  if (state.m.empty()) state.init(params);
  if (state.m.size() != params.size())
    throw DimensionError("adam_step: optimizer state does not match parameter list");

  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!same_shape(*params[i], *grads[i]) || !same_shape(*params[i], state.m[i]))
      throw DimensionError("adam_step: shape mismatch at " + names[i]);
    if (!grads[i]->all_finite())
      throw GradientError("non-finite gradient in " + names[i]);
  }

  const long long t = state.step + 1;
  // Bias corrections in double regardless of T; pow drift in float is
  // visible after a few thousand steps.
  const double bc1 = 1.0 - std::pow(static_cast<double>(cfg.beta1), static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(static_cast<double>(cfg.beta2), static_cast<double>(t));
  const T inv_bc1 = static_cast<T>(1.0 / bc1);
  const T inv_bc2 = static_cast<T>(1.0 / bc2);

  for (std::size_t i = 0; i < params.size(); ++i) {
    kernels::adam_update<T>(params[i]->size(), params[i]->ptr(), grads[i]->ptr(),
                            state.m[i].ptr(), state.v[i].ptr(), lr, cfg.beta1, cfg.beta2,
                            cfg.eps, inv_bc1, inv_bc2);
  }
  state.step = t;
}

template void adam_step<float>(const std::vector<TensorT<float>*>&,
                               const std::vector<const TensorT<float>*>&,
                               const std::vector<std::string>&, AdamStateT<float>&, float,
                               const AdamConfigT<float>&);
template void adam_step<double>(const std::vector<TensorT<double>*>&,
                                const std::vector<const TensorT<double>*>&,
                                const std::vector<std::string>&, AdamStateT<double>&, double,
                                const AdamConfigT<double>&);

}  // namespace presize::nn
