// SPDX-License-Identifier: Apache-2.0
//
// Multi-head self-attention and post-norm encoder layers. Layout is
// [N, L, d] row-major throughout; masks are per-position bytes (1 = real
// token, 0 = padding). Masked keys get -inf scores before softmax, so
// padded positions receive exactly zero attention and propagate no
// gradient through the score path.

#pragma once

#include <cstdint>
#include <vector>

#include "presize/ops.hpp"
#include "presize/tensor.hpp"

namespace presize::nn {

// Weights are stored [in, out]; x @ w + b convention everywhere.
template <class T>
struct MhaParamsT {
  TensorT<T> wq, bq, wk, bk, wv, bv, wo, bo;

  static MhaParamsT zeros(int d) {
    MhaParamsT p;
    p.wq = TensorT<T>::zeros({d, d});
    p.bq = TensorT<T>::zeros({d});
    p.wk = TensorT<T>::zeros({d, d});
    p.bk = TensorT<T>::zeros({d});
    p.wv = TensorT<T>::zeros({d, d});
    p.bv = TensorT<T>::zeros({d});
    p.wo = TensorT<T>::zeros({d, d});
    p.bo = TensorT<T>::zeros({d});
    return p;
  }

  template <class F>
  void visit(const std::string& prefix, F&& f) {
    f(prefix + ".wq", wq);
    f(prefix + ".bq", bq);
    f(prefix + ".wk", wk);
    f(prefix + ".bk", bk);
    f(prefix + ".wv", wv);
    f(prefix + ".bv", bv);
    f(prefix + ".wo", wo);
    f(prefix + ".bo", bo);
  }

  template <class F>
  void visit(const std::string& prefix, F&& f) const {
    f(prefix + ".wq", wq);
    f(prefix + ".bq", bq);
    f(prefix + ".wk", wk);
    f(prefix + ".bk", bk);
    f(prefix + ".wv", wv);
    f(prefix + ".bv", bv);
    f(prefix + ".wo", wo);
    f(prefix + ".bo", bo);
  }
};

template <class T>
struct FfnParamsT {
  TensorT<T> w1, b1, w2, b2;

  static FfnParamsT zeros(int d, int hidden) {
    FfnParamsT p;
    p.w1 = TensorT<T>::zeros({d, hidden});
    p.b1 = TensorT<T>::zeros({hidden});
    p.w2 = TensorT<T>::zeros({hidden, d});
    p.b2 = TensorT<T>::zeros({d});
    return p;
  }

  template <class F>
  void visit(const std::string& prefix, F&& f) {
    f(prefix + ".w1", w1);
    f(prefix + ".b1", b1);
    f(prefix + ".w2", w2);
    f(prefix + ".b2", b2);
  }

  template <class F>
  void visit(const std::string& prefix, F&& f) const {
    f(prefix + ".w1", w1);
    f(prefix + ".b1", b1);
    f(prefix + ".w2", w2);
    f(prefix + ".b2", b2);
  }
};

template <class T>
struct EncoderLayerParamsT {
  MhaParamsT<T> attn;
  TensorT<T> ln1_gamma, ln1_beta;
  FfnParamsT<T> ffn;
  TensorT<T> ln2_gamma, ln2_beta;

  static EncoderLayerParamsT zeros(int d, int ffn_hidden) {
    EncoderLayerParamsT p;
    p.attn = MhaParamsT<T>::zeros(d);
    p.ln1_gamma = TensorT<T>::zeros({d});
    p.ln1_beta = TensorT<T>::zeros({d});
    p.ffn = FfnParamsT<T>::zeros(d, ffn_hidden);
    p.ln2_gamma = TensorT<T>::zeros({d});
    p.ln2_beta = TensorT<T>::zeros({d});
    return p;
  }

  template <class F>
  void visit(const std::string& prefix, F&& f) {
    attn.visit(prefix + ".attn", f);
    f(prefix + ".ln1.gamma", ln1_gamma);
    f(prefix + ".ln1.beta", ln1_beta);
    ffn.visit(prefix + ".ffn", f);
    f(prefix + ".ln2.gamma", ln2_gamma);
    f(prefix + ".ln2.beta", ln2_beta);
  }

  template <class F>
  void visit(const std::string& prefix, F&& f) const {
    attn.visit(prefix + ".attn", f);
    f(prefix + ".ln1.gamma", ln1_gamma);
    f(prefix + ".ln1.beta", ln1_beta);
    ffn.visit(prefix + ".ffn", f);
    f(prefix + ".ln2.gamma", ln2_gamma);
    f(prefix + ".ln2.beta", ln2_beta);
  }
};

template <class T>
struct StackParamsT {
  std::vector<EncoderLayerParamsT<T>> layers;

  static StackParamsT zeros(int n_layers, int d, int ffn_hidden) {
    StackParamsT p;
    p.layers.reserve(n_layers);
    for (int i = 0; i < n_layers; ++i) p.layers.push_back(EncoderLayerParamsT<T>::zeros(d, ffn_hidden));
    return p;
  }

  template <class F>
  void visit(const std::string& prefix, F&& f) {
    for (std::size_t i = 0; i < layers.size(); ++i)
      layers[i].visit(prefix + ".layer" + std::to_string(i), f);
  }

  template <class F>
  void visit(const std::string& prefix, F&& f) const {
    for (std::size_t i = 0; i < layers.size(); ++i)
      layers[i].visit(prefix + ".layer" + std::to_string(i), f);
  }
};

// ------------------------------------------------------------ caches

template <class T>
struct MhaCacheT {
  TensorT<T> x;      // layer input (also the residual source)
  TensorT<T> q, k, v;
  TensorT<T> probs;  // [N, heads, L, L] post-softmax attention weights
  TensorT<T> ctx;    // heads re-concatenated, before the output projection
};

template <class T>
struct EncoderLayerCacheT {
  MhaCacheT<T> attn;
  LayerNormCacheT<T> ln1;
  TensorT<T> h1;       // first sub-layer output (FFN input)
  GeluCacheT<T> gelu;  // holds the pre-activation
  TensorT<T> ffn_act;  // gelu output
  LayerNormCacheT<T> ln2;
};

// ------------------------------------------------------------ forward

/// Scaled dot-product multi-head self-attention with output projection.
/// x: [N, L, d], mask: N*L bytes. d must be divisible by heads.
template <class T>
TensorT<T> multi_head_attention(const TensorT<T>& x, const std::vector<std::uint8_t>& mask,
                                int heads, const MhaParamsT<T>& p, MhaCacheT<T>* cache = nullptr);

template <class T>
TensorT<T> multi_head_attention_backward(const MhaCacheT<T>& cache,
                                         const std::vector<std::uint8_t>& mask, int heads,
                                         const MhaParamsT<T>& p, const TensorT<T>& dy,
                                         MhaParamsT<T>& grads);

/// Post-norm encoder layer: LN(x + MHA(x)) then LN(h + FFN(h)).
template <class T>
TensorT<T> encoder_layer(const TensorT<T>& x, const std::vector<std::uint8_t>& mask, int heads,
                         const EncoderLayerParamsT<T>& p, EncoderLayerCacheT<T>* cache = nullptr);

template <class T>
TensorT<T> encoder_layer_backward(const EncoderLayerCacheT<T>& cache,
                                  const std::vector<std::uint8_t>& mask, int heads,
                                  const EncoderLayerParamsT<T>& p, const TensorT<T>& dy,
                                  EncoderLayerParamsT<T>& grads);

/// Stack of encoder layers applied in order. Zero layers is the identity.
template <class T>
TensorT<T> transformer_stack(const TensorT<T>& x, const std::vector<std::uint8_t>& mask,
                             int heads, const StackParamsT<T>& p,
                             std::vector<EncoderLayerCacheT<T>>* caches = nullptr);

template <class T>
TensorT<T> transformer_stack_backward(const std::vector<EncoderLayerCacheT<T>>& caches,
                                      const std::vector<std::uint8_t>& mask, int heads,
                                      const StackParamsT<T>& p, const TensorT<T>& dy,
                                      StackParamsT<T>& grads);

}  // namespace presize::nn
