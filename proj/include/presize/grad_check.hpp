// SPDX-License-Identifier: Apache-2.0
//
// Central finite-difference gradient verification. Runs in double; the
// loss callback must recompute the full forward pass from the current
// contents of the parameter tensors every time it is called.

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "presize/tensor.hpp"

namespace presize::nn {

struct GradCheckResult {
  struct Entry {
    std::string name;
    double max_rel_err = 0;
    std::size_t checked = 0;
  };
  std::vector<Entry> per_tensor;
  double worst_rel_err = 0;
  std::string worst_name;

  bool pass(double tol) const { return worst_rel_err < tol; }
};

/// Compares analytic gradients against (f(p+h) - f(p-h)) / 2h elementwise.
/// Relative error uses max(|fd|, |analytic|, 1e-6) as denominator.
/// max_per_tensor = 0 probes every element; otherwise a deterministic
/// sample of that many indices per tensor.
inline GradCheckResult grad_check(const std::function<double()>& loss,
                                  const std::vector<std::pair<std::string, Tensor64*>>& params,
                                  const std::vector<const Tensor64*>& analytic, double h = 1e-5,
                                  std::size_t max_per_tensor = 0, unsigned seed = 12345) {
  if (params.size() != analytic.size())
    throw DimensionError("grad_check: params/analytic size mismatch");
  GradCheckResult out;
  for (std::size_t ti = 0; ti < params.size(); ++ti) {
    Tensor64& p = *params[ti].second;
    const Tensor64& an = *analytic[ti];
    if (!same_shape(p, an))
      throw DimensionError("grad_check: gradient shape mismatch at " + params[ti].first);

    std::vector<std::size_t> idx(p.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    if (max_per_tensor > 0 && idx.size() > max_per_tensor) {
      std::mt19937 rng(seed + static_cast<unsigned>(ti) * 7919u);
      std::shuffle(idx.begin(), idx.end(), rng);
      idx.resize(max_per_tensor);
      std::sort(idx.begin(), idx.end());
    }

    GradCheckResult::Entry e;
    e.name = params[ti].first;
    e.checked = idx.size();
    for (const std::size_t j : idx) {
      const double saved = p.data[j];
      p.data[j] = saved + h;
      const double lp = loss();
      p.data[j] = saved - h;
      const double lm = loss();
      p.data[j] = saved;
      const double fd = (lp - lm) / (2.0 * h);
      const double a = an.data[j];
      const double rel = std::abs(fd - a) / std::max({std::abs(fd), std::abs(a), 1e-6});
      e.max_rel_err = std::max(e.max_rel_err, rel);
    }
    if (e.max_rel_err > out.worst_rel_err) {
      out.worst_rel_err = e.max_rel_err;
      out.worst_name = e.name;
    }
    out.per_tensor.push_back(std::move(e));
  }
  return out;
}

}  // namespace presize::nn
