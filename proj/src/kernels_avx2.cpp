// SPDX-License-Identifier: Apache-2.0
//
// AVX2+FMA variants of the float32 kernels. This translation unit is the
// only one compiled with -mavx2 -mfma; everything else stays at the base
// ISA so the binary still runs on non-AVX2 machines (dispatch.cpp checks
// the CPU at startup). Accumulation order within a kernel is fixed, so a
// given backend is deterministic run-to-run; scalar and AVX2 results agree
// to rounding only, which is what the equivalence tests assert.
//
// gelu stays scalar (std::erf has no AVX2 equivalent worth hand-rolling);
// the dispatch table points those entries at the reference implementation.

#include "presize/kernels.hpp"

#if defined(__AVX2__) && defined(__FMA__)
#include <immintrin.h>

namespace presize::kernels {
namespace {

inline float hsum256(__m256 v) {
  __m128 lo = _mm256_castps256_ps128(v);
  __m128 hi = _mm256_extractf128_ps(v, 1);
  lo = _mm_add_ps(lo, hi);
  lo = _mm_add_ps(lo, _mm_movehl_ps(lo, lo));
  lo = _mm_add_ss(lo, _mm_shuffle_ps(lo, lo, 1));
  return _mm_cvtss_f32(lo);
}

// C = A * B. Row-of-C accumulation: for each output row, stream the rows of
// B scaled by the matching A element. Unrolled by 2 over k.
void matmul_avx2(const float* a, const float* b, float* c, int m, int k, int n) {
  const int n8 = n & ~7;
  for (int i = 0; i < m; ++i) {
    float* ci = c + static_cast<std::size_t>(i) * n;
    for (int j = 0; j < n8; j += 8) _mm256_storeu_ps(ci + j, _mm256_setzero_ps());
    for (int j = n8; j < n; ++j) ci[j] = 0.0f;

    const float* ai = a + static_cast<std::size_t>(i) * k;
    int p = 0;
    for (; p + 1 < k; p += 2) {
      const __m256 a0 = _mm256_set1_ps(ai[p]);
      const __m256 a1 = _mm256_set1_ps(ai[p + 1]);
      const float* b0 = b + static_cast<std::size_t>(p) * n;
      const float* b1 = b0 + n;
      int j = 0;
      for (; j < n8; j += 8) {
        __m256 acc = _mm256_loadu_ps(ci + j);
        acc = _mm256_fmadd_ps(a0, _mm256_loadu_ps(b0 + j), acc);
        acc = _mm256_fmadd_ps(a1, _mm256_loadu_ps(b1 + j), acc);
        _mm256_storeu_ps(ci + j, acc);
      }
      for (; j < n; ++j) ci[j] += ai[p] * b0[j] + ai[p + 1] * b1[j];
    }
    for (; p < k; ++p) {
      const __m256 a0 = _mm256_set1_ps(ai[p]);
      const float* b0 = b + static_cast<std::size_t>(p) * n;
      int j = 0;
      for (; j < n8; j += 8) {
        __m256 acc = _mm256_loadu_ps(ci + j);
        acc = _mm256_fmadd_ps(a0, _mm256_loadu_ps(b0 + j), acc);
        _mm256_storeu_ps(ci + j, acc);
      }
      for (; j < n; ++j) ci[j] += ai[p] * b0[j];
    }
  }
}

inline float dot_avx2_raw(const float* x, const float* y, std::size_t n) {
  __m256 acc0 = _mm256_setzero_ps();
  __m256 acc1 = _mm256_setzero_ps();
  std::size_t i = 0;
  for (; i + 16 <= n; i += 16) {
    acc0 = _mm256_fmadd_ps(_mm256_loadu_ps(x + i), _mm256_loadu_ps(y + i), acc0);
    acc1 = _mm256_fmadd_ps(_mm256_loadu_ps(x + i + 8), _mm256_loadu_ps(y + i + 8), acc1);
  }
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_fmadd_ps(_mm256_loadu_ps(x + i), _mm256_loadu_ps(y + i), acc0);
  }
  float s = hsum256(_mm256_add_ps(acc0, acc1));
  for (; i < n; ++i) s += x[i] * y[i];
  return s;
}

// C = A * B^T, B stored [n,k]: every output element is a contiguous dot.
void matmul_nt_avx2(const float* a, const float* b, float* c, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    const float* ai = a + static_cast<std::size_t>(i) * k;
    float* ci = c + static_cast<std::size_t>(i) * n;
    for (int j = 0; j < n; ++j) {
      ci[j] = dot_avx2_raw(ai, b + static_cast<std::size_t>(j) * k, static_cast<std::size_t>(k));
    }
  }
}

// C += A^T * B, A stored [k,m]: rank-1 updates streamed over k.
void matmul_tn_acc_avx2(const float* a, const float* b, float* c, int m, int k, int n) {
  const int n8 = n & ~7;
  for (int p = 0; p < k; ++p) {
    const float* ap = a + static_cast<std::size_t>(p) * m;
    const float* bp = b + static_cast<std::size_t>(p) * n;
    for (int i = 0; i < m; ++i) {
      const __m256 av = _mm256_set1_ps(ap[i]);
      float* ci = c + static_cast<std::size_t>(i) * n;
      int j = 0;
      for (; j < n8; j += 8) {
        _mm256_storeu_ps(ci + j, _mm256_fmadd_ps(av, _mm256_loadu_ps(bp + j), _mm256_loadu_ps(ci + j)));
      }
      for (; j < n; ++j) ci[j] += ap[i] * bp[j];
    }
  }
}

void add_bias_avx2(float* y, const float* b, int rows, int n) {
  const int n8 = n & ~7;
  for (int r = 0; r < rows; ++r) {
    float* yr = y + static_cast<std::size_t>(r) * n;
    int j = 0;
    for (; j < n8; j += 8) {
      _mm256_storeu_ps(yr + j, _mm256_add_ps(_mm256_loadu_ps(yr + j), _mm256_loadu_ps(b + j)));
    }
    for (; j < n; ++j) yr[j] += b[j];
  }
}

void colsum_acc_avx2(const float* x, float* out, int rows, int n) {
  const int n8 = n & ~7;
  for (int r = 0; r < rows; ++r) {
    const float* xr = x + static_cast<std::size_t>(r) * n;
    int j = 0;
    for (; j < n8; j += 8) {
      _mm256_storeu_ps(out + j, _mm256_add_ps(_mm256_loadu_ps(out + j), _mm256_loadu_ps(xr + j)));
    }
    for (; j < n; ++j) out[j] += xr[j];
  }
}

void axpy_avx2(std::size_t n, float alpha, const float* x, float* y) {
  const __m256 av = _mm256_set1_ps(alpha);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    _mm256_storeu_ps(y + i, _mm256_fmadd_ps(av, _mm256_loadu_ps(x + i), _mm256_loadu_ps(y + i)));
  }
  for (; i < n; ++i) y[i] += alpha * x[i];
}

void vadd_avx2(std::size_t n, const float* x, const float* y, float* z) {
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    _mm256_storeu_ps(z + i, _mm256_add_ps(_mm256_loadu_ps(x + i), _mm256_loadu_ps(y + i)));
  }
  for (; i < n; ++i) z[i] = x[i] + y[i];
}

void vscale_avx2(std::size_t n, float alpha, float* x) {
  const __m256 av = _mm256_set1_ps(alpha);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    _mm256_storeu_ps(x + i, _mm256_mul_ps(av, _mm256_loadu_ps(x + i)));
  }
  for (; i < n; ++i) x[i] *= alpha;
}

float dot_avx2(std::size_t n, const float* x, const float* y) {
  return dot_avx2_raw(x, y, n);
}

void adam_update_avx2(std::size_t n, float* p, const float* g, float* m, float* v,
                      float lr, float beta1, float beta2, float eps,
                      float inv_bc1, float inv_bc2) {
  const __m256 b1 = _mm256_set1_ps(beta1);
  const __m256 b2 = _mm256_set1_ps(beta2);
  const __m256 one_b1 = _mm256_set1_ps(1.0f - beta1);
  const __m256 one_b2 = _mm256_set1_ps(1.0f - beta2);
  const __m256 lrv = _mm256_set1_ps(lr);
  const __m256 epsv = _mm256_set1_ps(eps);
  const __m256 bc1 = _mm256_set1_ps(inv_bc1);
  const __m256 bc2 = _mm256_set1_ps(inv_bc2);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 gv = _mm256_loadu_ps(g + i);
    __m256 mv = _mm256_loadu_ps(m + i);
    __m256 vv = _mm256_loadu_ps(v + i);
    mv = _mm256_fmadd_ps(b1, mv, _mm256_mul_ps(one_b1, gv));
    vv = _mm256_fmadd_ps(b2, vv, _mm256_mul_ps(one_b2, _mm256_mul_ps(gv, gv)));
    _mm256_storeu_ps(m + i, mv);
    _mm256_storeu_ps(v + i, vv);
    const __m256 m_hat = _mm256_mul_ps(mv, bc1);
    const __m256 v_hat = _mm256_mul_ps(vv, bc2);
    const __m256 denom = _mm256_add_ps(_mm256_sqrt_ps(v_hat), epsv);
    const __m256 step = _mm256_div_ps(_mm256_mul_ps(lrv, m_hat), denom);
    _mm256_storeu_ps(p + i, _mm256_sub_ps(_mm256_loadu_ps(p + i), step));
  }
  if (i < n) {
    ref::adam_update(n - i, p + i, g + i, m + i, v + i, lr, beta1, beta2, eps, inv_bc1, inv_bc2);
  }
}

bool cpu_has_avx2() {
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
}

}  // namespace

const Backend* avx2_backend() {
  static const bool ok = cpu_has_avx2();
  if (!ok) return nullptr;
  static const Backend b = {
      "avx2",
      &matmul_avx2,
      &matmul_nt_avx2,
      &matmul_tn_acc_avx2,
      &add_bias_avx2,
      &colsum_acc_avx2,
      &axpy_avx2,
      &vadd_avx2,
      &vscale_avx2,
      &dot_avx2,
      &ref::gelu_fwd<float>,
      &ref::gelu_bwd<float>,
      &adam_update_avx2,
  };
  return &b;
}

}  // namespace presize::kernels

#else  // architecture without AVX2 support in this build

namespace presize::kernels {
const Backend* avx2_backend() { return nullptr; }
}  // namespace presize::kernels

#endif
