// SPDX-License-Identifier: Apache-2.0

#include "presize/kernels.hpp"

namespace presize::kernels {

const Backend& scalar_backend() {
  static const Backend b = {
      "scalar",
      &ref::matmul<float>,
      &ref::matmul_nt<float>,
      &ref::matmul_tn_acc<float>,
      &ref::add_bias<float>,
      &ref::colsum_acc<float>,
      &ref::axpy<float>,
      &ref::vadd<float>,
      &ref::vscale<float>,
      &ref::dot<float>,
      &ref::gelu_fwd<float>,
      &ref::gelu_bwd<float>,
      &ref::adam_update<float>,
  };
  return b;
}

}  // namespace presize::kernels
