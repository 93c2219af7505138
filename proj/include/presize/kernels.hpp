// SPDX-License-Identifier: Apache-2.0
//
// Runtime-dispatched float32 kernels. The active backend is chosen once per
// process: AVX2+FMA when the CPU supports it, scalar otherwise. Set
// PRESIZE_KERNELS=scalar|avx2 to force a backend (avx2 fails loudly if the
// CPU or build cannot provide it). float64 calls always use the scalar
// reference, which is what the gradient checker runs on.

#pragma once

#include <cstddef>

#include "presize/kernels_ref.hpp"

namespace presize::kernels {

struct Backend {
  const char* name;
  void (*matmul)(const float* a, const float* b, float* c, int m, int k, int n);
  void (*matmul_nt)(const float* a, const float* b, float* c, int m, int k, int n);
  void (*matmul_tn_acc)(const float* a, const float* b, float* c, int m, int k, int n);
  void (*add_bias)(float* y, const float* b, int rows, int n);
  void (*colsum_acc)(const float* x, float* out, int rows, int n);
  void (*axpy)(std::size_t n, float alpha, const float* x, float* y);
  void (*vadd)(std::size_t n, const float* x, const float* y, float* z);
  void (*vscale)(std::size_t n, float alpha, float* x);
  float (*dot)(std::size_t n, const float* x, const float* y);
  void (*gelu_fwd)(std::size_t n, const float* x, float* y);
  void (*gelu_bwd)(std::size_t n, const float* x, const float* dy, float* dx);
  void (*adam_update)(std::size_t n, float* p, const float* g, float* m,
                      float* v, float lr, float beta1, float beta2, float eps,
                      float inv_bc1, float inv_bc2);
};

const Backend& scalar_backend();

// nullptr when the binary was built without AVX2 support or the CPU lacks it.
const Backend* avx2_backend();

const Backend& active_backend();

// Generic entry points used by the nn ops. double resolves to the scalar
// reference; float resolves to the active backend.
template <class T>
inline void matmul(const T* a, const T* b, T* c, int m, int k, int n) {
  ref::matmul(a, b, c, m, k, n);
}
template <class T>
inline void matmul_nt(const T* a, const T* b, T* c, int m, int k, int n) {
  ref::matmul_nt(a, b, c, m, k, n);
}
template <class T>
inline void matmul_tn_acc(const T* a, const T* b, T* c, int m, int k, int n) {
  ref::matmul_tn_acc(a, b, c, m, k, n);
}
template <class T>
inline void add_bias(T* y, const T* b, int rows, int n) {
  ref::add_bias(y, b, rows, n);
}
template <class T>
inline void colsum_acc(const T* x, T* out, int rows, int n) {
  ref::colsum_acc(x, out, rows, n);
}
template <class T>
inline void axpy(std::size_t n, T alpha, const T* x, T* y) {
  ref::axpy(n, alpha, x, y);
}
template <class T>
inline void vadd(std::size_t n, const T* x, const T* y, T* z) {
  ref::vadd(n, x, y, z);
}
template <class T>
inline void vscale(std::size_t n, T alpha, T* x) {
  ref::vscale(n, alpha, x);
}
template <class T>
inline T dot(std::size_t n, const T* x, const T* y) {
  return ref::dot(n, x, y);
}
template <class T>
inline void gelu_fwd(std::size_t n, const T* x, T* y) {
  ref::gelu_fwd(n, x, y);
}
template <class T>
inline void gelu_bwd(std::size_t n, const T* x, const T* dy, T* dx) {
  ref::gelu_bwd(n, x, dy, dx);
}
template <class T>
inline void adam_update(std::size_t n, T* p, const T* g, T* m, T* v, T lr,
                        T beta1, T beta2, T eps, T inv_bc1, T inv_bc2) {
  ref::adam_update(n, p, g, m, v, lr, beta1, beta2, eps, inv_bc1, inv_bc2);
}

template <>
void matmul<float>(const float* a, const float* b, float* c, int m, int k, int n);
template <>
void matmul_nt<float>(const float* a, const float* b, float* c, int m, int k, int n);
template <>
void matmul_tn_acc<float>(const float* a, const float* b, float* c, int m, int k, int n);
template <>
void add_bias<float>(float* y, const float* b, int rows, int n);
template <>
void colsum_acc<float>(const float* x, float* out, int rows, int n);
template <>
void axpy<float>(std::size_t n, float alpha, const float* x, float* y);
template <>
void vadd<float>(std::size_t n, const float* x, const float* y, float* z);
template <>
void vscale<float>(std::size_t n, float alpha, float* x);
template <>
float dot<float>(std::size_t n, const float* x, const float* y);
template <>
void gelu_fwd<float>(std::size_t n, const float* x, float* y);
template <>
void gelu_bwd<float>(std::size_t n, const float* x, const float* dy, float* dx);
template <>
void adam_update<float>(std::size_t n, float* p, const float* g, float* m,
                        float* v, float lr, float beta1, float beta2, float eps,
                        float inv_bc1, float inv_bc2);

}  // namespace presize::kernels
