// SPDX-License-Identifier: Apache-2.0

#include "presize/attention.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "presize/kernels.hpp"

namespace presize::nn {

namespace {

template <class T>
void check_nld(const TensorT<T>& x, const std::vector<std::uint8_t>& mask, int heads,
               const char* who) {
  if (x.ndim() != 3) throw DimensionError(std::string(who) + ": input must be [N,L,d]");
  const int d = x.dim(2);
  if (heads <= 0 || d % heads != 0)
    throw DimensionError(std::string(who) + ": d=" + std::to_string(d) +
                         " not divisible by heads=" + std::to_string(heads));
  if (mask.size() != static_cast<std::size_t>(x.dim(0)) * x.dim(1))
    throw DimensionError(std::string(who) + ": mask length " + std::to_string(mask.size()) +
                         " != N*L");
}

// Copy one head's columns between the packed [L, d] view and [L, hd] scratch.
template <class T>
void gather_head(const T* src, T* dst, int L, int d, int hd, int head) {
  const T* s = src + head * hd;
  for (int i = 0; i < L; ++i) std::copy_n(s + static_cast<std::size_t>(i) * d, hd, dst + static_cast<std::size_t>(i) * hd);
}

template <class T>
void scatter_head(const T* src, T* dst, int L, int d, int hd, int head) {
  T* t = dst + head * hd;
  for (int i = 0; i < L; ++i) std::copy_n(src + static_cast<std::size_t>(i) * hd, hd, t + static_cast<std::size_t>(i) * d);
}

}  // namespace

template <class T>
TensorT<T> multi_head_attention(const TensorT<T>& x, const std::vector<std::uint8_t>& mask,
                                int heads, const MhaParamsT<T>& p, MhaCacheT<T>* cache) {
  check_nld(x, mask, heads, "multi_head_attention");
  const int N = x.dim(0), L = x.dim(1), d = x.dim(2);
  const int hd = d / heads;
  const int rows = N * L;
  const T scale = T(1) / std::sqrt(static_cast<T>(hd));
  const T neg_inf = -std::numeric_limits<T>::infinity();

  TensorT<T> q(x.shape), k(x.shape), v(x.shape);
  kernels::matmul<T>(x.ptr(), p.wq.ptr(), q.ptr(), rows, d, d);
  kernels::add_bias<T>(q.ptr(), p.bq.ptr(), rows, d);
  kernels::matmul<T>(x.ptr(), p.wk.ptr(), k.ptr(), rows, d, d);
  kernels::add_bias<T>(k.ptr(), p.bk.ptr(), rows, d);
  kernels::matmul<T>(x.ptr(), p.wv.ptr(), v.ptr(), rows, d, d);
  kernels::add_bias<T>(v.ptr(), p.bv.ptr(), rows, d);

  TensorT<T> probs({N, heads, L, L});
  TensorT<T> ctx(x.shape);

  std::vector<T> qh(static_cast<std::size_t>(L) * hd), kh(qh.size()), vh(qh.size()),
      ch(qh.size());
  std::vector<T> scores(static_cast<std::size_t>(L) * L);

  for (int n = 0; n < N; ++n) {
    const std::uint8_t* m = mask.data() + static_cast<std::size_t>(n) * L;
    const std::size_t base = static_cast<std::size_t>(n) * L * d;
    for (int h = 0; h < heads; ++h) {
      gather_head(q.ptr() + base, qh.data(), L, d, hd, h);
      gather_head(k.ptr() + base, kh.data(), L, d, hd, h);
      gather_head(v.ptr() + base, vh.data(), L, d, hd, h);

      kernels::matmul_nt<T>(qh.data(), kh.data(), scores.data(), L, hd, L);
      for (int i = 0; i < L; ++i) {
        T* row = scores.data() + static_cast<std::size_t>(i) * L;
        for (int j = 0; j < L; ++j) row[j] = m[j] ? row[j] * scale : neg_inf;
        softmax_row_inplace<T>(row, L);
      }
      std::copy(scores.begin(), scores.end(),
                probs.ptr() + (static_cast<std::size_t>(n) * heads + h) * L * L);

      kernels::matmul<T>(scores.data(), vh.data(), ch.data(), L, L, hd);
      scatter_head(ch.data(), ctx.ptr() + base, L, d, hd, h);
    }
  }

  TensorT<T> y(x.shape);
  kernels::matmul<T>(ctx.ptr(), p.wo.ptr(), y.ptr(), rows, d, d);
  kernels::add_bias<T>(y.ptr(), p.bo.ptr(), rows, d);

  if (cache) {
    cache->x = x;
    cache->q = std::move(q);
    cache->k = std::move(k);
    cache->v = std::move(v);
    cache->probs = std::move(probs);
    cache->ctx = std::move(ctx);
  }
  return y;
}

template <class T>
TensorT<T> multi_head_attention_backward(const MhaCacheT<T>& cache,
                                         const std::vector<std::uint8_t>& mask, int heads,
                                         const MhaParamsT<T>& p, const TensorT<T>& dy,
                                         MhaParamsT<T>& grads) {
  check_nld(cache.x, mask, heads, "multi_head_attention_backward");
  if (!same_shape(dy, cache.x)) throw DimensionError("mha_backward: dy shape mismatch");
  const int N = cache.x.dim(0), L = cache.x.dim(1), d = cache.x.dim(2);
  const int hd = d / heads;
  const int rows = N * L;
  const T scale = T(1) / std::sqrt(static_cast<T>(hd));

  // Output projection.
  kernels::matmul_tn_acc<T>(cache.ctx.ptr(), dy.ptr(), grads.wo.ptr(), d, rows, d);
  kernels::colsum_acc<T>(dy.ptr(), grads.bo.ptr(), rows, d);
  TensorT<T> dctx(cache.x.shape);
  kernels::matmul_nt<T>(dy.ptr(), p.wo.ptr(), dctx.ptr(), rows, d, d);

  TensorT<T> dq = TensorT<T>::zeros(cache.x.shape);
  TensorT<T> dk = TensorT<T>::zeros(cache.x.shape);
  TensorT<T> dv = TensorT<T>::zeros(cache.x.shape);

  std::vector<T> qh(static_cast<std::size_t>(L) * hd), kh(qh.size()), vh(qh.size()),
      dch(qh.size()), dqh(qh.size()), dkh(qh.size()), dvh(qh.size());
  std::vector<T> dprobs(static_cast<std::size_t>(L) * L), ds(dprobs.size());

  for (int n = 0; n < N; ++n) {
    const std::size_t base = static_cast<std::size_t>(n) * L * d;
    for (int h = 0; h < heads; ++h) {
      const T* probs = cache.probs.ptr() + (static_cast<std::size_t>(n) * heads + h) * L * L;
      gather_head(cache.q.ptr() + base, qh.data(), L, d, hd, h);
      gather_head(cache.k.ptr() + base, kh.data(), L, d, hd, h);
      gather_head(cache.v.ptr() + base, vh.data(), L, d, hd, h);
      gather_head(dctx.ptr() + base, dch.data(), L, d, hd, h);

      // dprobs = dctx_h v_h^T ; dv_h = probs^T dctx_h
      kernels::matmul_nt<T>(dch.data(), vh.data(), dprobs.data(), L, hd, L);
      std::fill(dvh.begin(), dvh.end(), T(0));
      kernels::matmul_tn_acc<T>(probs, dch.data(), dvh.data(), L, L, hd);

      // Softmax backward per row; masked keys have prob 0 and stay 0.
      for (int i = 0; i < L; ++i) {
        const T* prow = probs + static_cast<std::size_t>(i) * L;
        const T* dprow = dprobs.data() + static_cast<std::size_t>(i) * L;
        T* srow = ds.data() + static_cast<std::size_t>(i) * L;
        T dot = 0;
        for (int j = 0; j < L; ++j) dot += prow[j] * dprow[j];
        for (int j = 0; j < L; ++j) srow[j] = prow[j] * (dprow[j] - dot) * scale;
      }

      // dq_h = ds k_h ; dk_h = ds^T q_h
      kernels::matmul<T>(ds.data(), kh.data(), dqh.data(), L, L, hd);
      std::fill(dkh.begin(), dkh.end(), T(0));
      kernels::matmul_tn_acc<T>(ds.data(), qh.data(), dkh.data(), L, L, hd);

      scatter_head(dqh.data(), dq.ptr() + base, L, d, hd, h);
      scatter_head(dkh.data(), dk.ptr() + base, L, d, hd, h);
      scatter_head(dvh.data(), dv.ptr() + base, L, d, hd, h);
    }
  }

  // Back through the three input projections; dx sums their contributions.
  TensorT<T> dx(cache.x.shape);
  TensorT<T> tmp(cache.x.shape);

  kernels::matmul_tn_acc<T>(cache.x.ptr(), dq.ptr(), grads.wq.ptr(), d, rows, d);
  kernels::colsum_acc<T>(dq.ptr(), grads.bq.ptr(), rows, d);
  kernels::matmul_nt<T>(dq.ptr(), p.wq.ptr(), dx.ptr(), rows, d, d);

  kernels::matmul_tn_acc<T>(cache.x.ptr(), dk.ptr(), grads.wk.ptr(), d, rows, d);
  kernels::colsum_acc<T>(dk.ptr(), grads.bk.ptr(), rows, d);
  kernels::matmul_nt<T>(dk.ptr(), p.wk.ptr(), tmp.ptr(), rows, d, d);
  kernels::vadd<T>(dx.size(), dx.ptr(), tmp.ptr(), dx.ptr());

  kernels::matmul_tn_acc<T>(cache.x.ptr(), dv.ptr(), grads.wv.ptr(), d, rows, d);
  kernels::colsum_acc<T>(dv.ptr(), grads.bv.ptr(), rows, d);
  kernels::matmul_nt<T>(dv.ptr(), p.wv.ptr(), tmp.ptr(), rows, d, d);
  kernels::vadd<T>(dx.size(), dx.ptr(), tmp.ptr(), dx.ptr());

  return dx;
}

template <class T>
TensorT<T> encoder_layer(const TensorT<T>& x, const std::vector<std::uint8_t>& mask, int heads,
                         const EncoderLayerParamsT<T>& p, EncoderLayerCacheT<T>* cache) {
  MhaCacheT<T> attn_cache;
  TensorT<T> a = multi_head_attention(x, mask, heads, p.attn, cache ? &attn_cache : nullptr);
  kernels::vadd<T>(a.size(), a.ptr(), x.ptr(), a.ptr());

  LayerNormCacheT<T> ln1_cache;
  TensorT<T> h1 = layer_norm(a, p.ln1_gamma, p.ln1_beta, cache ? &ln1_cache : nullptr);

  GeluCacheT<T> gelu_cache;
  TensorT<T> pre = linear(h1, p.ffn.w1, p.ffn.b1);
  TensorT<T> act = gelu(pre, cache ? &gelu_cache : nullptr);
  TensorT<T> f = linear(act, p.ffn.w2, p.ffn.b2);
  kernels::vadd<T>(f.size(), f.ptr(), h1.ptr(), f.ptr());

  LayerNormCacheT<T> ln2_cache;
  TensorT<T> y = layer_norm(f, p.ln2_gamma, p.ln2_beta, cache ? &ln2_cache : nullptr);

  if (cache) {
    cache->attn = std::move(attn_cache);
    cache->ln1 = std::move(ln1_cache);
    cache->h1 = std::move(h1);
    cache->gelu = std::move(gelu_cache);
    cache->ffn_act = std::move(act);
    cache->ln2 = std::move(ln2_cache);
  }
  return y;
}

template <class T>
TensorT<T> encoder_layer_backward(const EncoderLayerCacheT<T>& cache,
                                  const std::vector<std::uint8_t>& mask, int heads,
                                  const EncoderLayerParamsT<T>& p, const TensorT<T>& dy,
                                  EncoderLayerParamsT<T>& grads) {
  const int d = cache.attn.x.dim(2);
  const int rows = static_cast<int>(cache.attn.x.size()) / d;
  const int hidden = p.ffn.w1.dim(1);

  TensorT<T> ds2 = layer_norm_backward(cache.ln2, p.ln2_gamma, dy, grads.ln2_gamma, grads.ln2_beta);

  // Second FFN projection.
  kernels::matmul_tn_acc<T>(cache.ffn_act.ptr(), ds2.ptr(), grads.ffn.w2.ptr(), hidden, rows, d);
  kernels::colsum_acc<T>(ds2.ptr(), grads.ffn.b2.ptr(), rows, d);
  TensorT<T> dact({cache.attn.x.dim(0), cache.attn.x.dim(1), hidden});
  kernels::matmul_nt<T>(ds2.ptr(), p.ffn.w2.ptr(), dact.ptr(), rows, d, hidden);

  TensorT<T> dpre = gelu_backward(cache.gelu, dact);

  // First FFN projection; dh1 collects the FFN path plus the residual.
  kernels::matmul_tn_acc<T>(cache.h1.ptr(), dpre.ptr(), grads.ffn.w1.ptr(), d, rows, hidden);
  kernels::colsum_acc<T>(dpre.ptr(), grads.ffn.b1.ptr(), rows, hidden);
  TensorT<T> dh1(cache.attn.x.shape);
  kernels::matmul_nt<T>(dpre.ptr(), p.ffn.w1.ptr(), dh1.ptr(), rows, hidden, d);
  kernels::vadd<T>(dh1.size(), dh1.ptr(), ds2.ptr(), dh1.ptr());

  TensorT<T> ds1 = layer_norm_backward(cache.ln1, p.ln1_gamma, dh1, grads.ln1_gamma, grads.ln1_beta);

  TensorT<T> dx = multi_head_attention_backward(cache.attn, mask, heads, p.attn, ds1, grads.attn);
  kernels::vadd<T>(dx.size(), dx.ptr(), ds1.ptr(), dx.ptr());
  return dx;
}

template <class T>
TensorT<T> transformer_stack(const TensorT<T>& x, const std::vector<std::uint8_t>& mask,
                             int heads, const StackParamsT<T>& p,
                             std::vector<EncoderLayerCacheT<T>>* caches) {
  if (caches) {
    caches->clear();
    caches->resize(p.layers.size());
  }
  TensorT<T> h = x;
  for (std::size_t i = 0; i < p.layers.size(); ++i)
    h = encoder_layer(h, mask, heads, p.layers[i], caches ? &(*caches)[i] : nullptr);
  return h;
}

template <class T>
TensorT<T> transformer_stack_backward(const std::vector<EncoderLayerCacheT<T>>& caches,
                                      const std::vector<std::uint8_t>& mask, int heads,
                                      const StackParamsT<T>& p, const TensorT<T>& dy,
                                      StackParamsT<T>& grads) {
  if (caches.size() != p.layers.size() || grads.layers.size() != p.layers.size())
    throw DimensionError("transformer_stack_backward: cache/grad layer count mismatch");
  TensorT<T> g = dy;
  for (std::size_t i = p.layers.size(); i-- > 0;)
    g = encoder_layer_backward(caches[i], mask, heads, p.layers[i], g, grads.layers[i]);
  return g;
}

#define PRESIZE_INSTANTIATE_ATTN(T)                                                             \
  template TensorT<T> multi_head_attention<T>(const TensorT<T>&,                                \
                                              const std::vector<std::uint8_t>&, int,            \
                                              const MhaParamsT<T>&, MhaCacheT<T>*);             \
  template TensorT<T> multi_head_attention_backward<T>(                                         \
      const MhaCacheT<T>&, const std::vector<std::uint8_t>&, int, const MhaParamsT<T>&,         \
      const TensorT<T>&, MhaParamsT<T>&);                                                       \
  template TensorT<T> encoder_layer<T>(const TensorT<T>&, const std::vector<std::uint8_t>&,    \
                                       int, const EncoderLayerParamsT<T>&,                      \
                                       EncoderLayerCacheT<T>*);                                 \
  template TensorT<T> encoder_layer_backward<T>(                                                \
      const EncoderLayerCacheT<T>&, const std::vector<std::uint8_t>&, int,                      \
      const EncoderLayerParamsT<T>&, const TensorT<T>&, EncoderLayerParamsT<T>&);               \
  template TensorT<T> transformer_stack<T>(const TensorT<T>&,                                   \
                                           const std::vector<std::uint8_t>&, int,               \
                                           const StackParamsT<T>&,                              \
                                           std::vector<EncoderLayerCacheT<T>>*);                \
  template TensorT<T> transformer_stack_backward<T>(                                            \
      const std::vector<EncoderLayerCacheT<T>>&, const std::vector<std::uint8_t>&, int,        \
      const StackParamsT<T>&, const TensorT<T>&, StackParamsT<T>&);

PRESIZE_INSTANTIATE_ATTN(float)
PRESIZE_INSTANTIATE_ATTN(double)

#undef PRESIZE_INSTANTIATE_ATTN

}  // namespace presize::nn
