// SPDX-License-Identifier: Apache-2.0

#include <cstdlib>
#include <stdexcept>
#include <string>

#include "presize/kernels.hpp"

namespace presize::kernels {

namespace {

const Backend& resolve() {
  const char* force = std::getenv("PRESIZE_KERNELS");
  if (force != nullptr) {
    const std::string want(force);
    if (want == "scalar") return scalar_backend();
    if (want == "avx2") {
      const Backend* b = avx2_backend();
      if (b == nullptr) {
        throw std::runtime_error("PRESIZE_KERNELS=avx2 but AVX2 is unavailable on this machine/build");
      }
      return *b;
    }
    if (want != "auto") {
      throw std::runtime_error("unknown PRESIZE_KERNELS value: " + want + " (expected scalar|avx2|auto)");
    }
  }
  const Backend* b = avx2_backend();
  return b != nullptr ? *b : scalar_backend();
}

}  // namespace

const Backend& active_backend() {
  static const Backend& b = resolve();
  return b;
}

template <>
void matmul<float>(const float* a, const float* b, float* c, int m, int k, int n) {
  active_backend().matmul(a, b, c, m, k, n);
}
template <>
void matmul_nt<float>(const float* a, const float* b, float* c, int m, int k, int n) {
  active_backend().matmul_nt(a, b, c, m, k, n);
}
template <>
void matmul_tn_acc<float>(const float* a, const float* b, float* c, int m, int k, int n) {
  active_backend().matmul_tn_acc(a, b, c, m, k, n);
}
template <>
void add_bias<float>(float* y, const float* b, int rows, int n) {
  active_backend().add_bias(y, b, rows, n);
}
template <>
void colsum_acc<float>(const float* x, float* out, int rows, int n) {
  active_backend().colsum_acc(x, out, rows, n);
}
template <>
void axpy<float>(std::size_t n, float alpha, const float* x, float* y) {
  active_backend().axpy(n, alpha, x, y);
}
template <>
void vadd<float>(std::size_t n, const float* x, const float* y, float* z) {
  active_backend().vadd(n, x, y, z);
}
template <>
void vscale<float>(std::size_t n, float alpha, float* x) {
  active_backend().vscale(n, alpha, x);
}
template <>
float dot<float>(std::size_t n, const float* x, const float* y) {
  return active_backend().dot(n, x, y);
}
template <>
void gelu_fwd<float>(std::size_t n, const float* x, float* y) {
  active_backend().gelu_fwd(n, x, y);
}
template <>
void gelu_bwd<float>(std::size_t n, const float* x, const float* dy, float* dx) {
  active_backend().gelu_bwd(n, x, dy, dx);
}
template <>
void adam_update<float>(std::size_t n, float* p, const float* g, float* m, float* v,
                        float lr, float beta1, float beta2, float eps,
                        float inv_bc1, float inv_bc2) {
  active_backend().adam_update(n, p, g, m, v, lr, beta1, beta2, eps, inv_bc1, inv_bc2);
}

}  // namespace presize::kernels
