// SPDX-License-Identifier: Apache-2.0
//
// The size-prediction network. An item is serialized into (token,
// position, attribute-name) triplets and encoded by a transformer whose
// [CLS] output is the item embedding. A buyer's history of item
// embeddings, each summed with a temporal-bucket embedding, feeds a second
// transformer whose [CLS] output is the buyer embedding. The target item
// is encoded by the SAME item transformer (shared tensors, not copies)
// with its maskable attributes removed, and the concatenated buyer and
// context embeddings pass through a three-layer classifier head.

#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "presize/attention.hpp"
#include "presize/bpe.hpp"
#include "presize/data.hpp"
#include "presize/errors.hpp"
#include "presize/tensor.hpp"

namespace presize::model {

// ---------------------------------------------------------------- config

struct ModelConfig {
  int d = 512;
  int n_layers = 4;
  int heads = 8;
  int ffn = 0;  // 0 selects 4*d
  int item_seq_len = 45;   // token budget per item, excluding [CLS]
  int history_len = 25;    // most recent purchases fed to the history encoder
  int n_classes = 0;
  int vocab_size = 0;
  int n_attr_names = 0;    // includes the reserved pad id 0
  int n_positions = 45;    // position table has n_positions+1 rows; row 0 pads
  int n_temporal_ids = 17;
  std::set<std::string> maskable_attributes{"title", "size"};

  int resolved_ffn() const { return ffn > 0 ? ffn : 4 * d; }
  void validate() const;  // ConfigError on violation

  bool operator==(const ModelConfig&) const = default;
};

struct SizeDistribution {
  std::vector<float> probs;  // nonnegative, sums to 1 within 1e-5
};

// ------------------------------------------------------------ parameters

template <class T>
struct ModelParamsT {
  nn::TensorT<T> tok_emb;       // [vocab_size, d]
  nn::TensorT<T> pos_emb;       // [n_positions + 1, d]
  nn::TensorT<T> attr_emb;      // [n_attr_names, d]
  nn::TensorT<T> temporal_emb;  // [n_temporal_ids, d]
  nn::TensorT<T> cls_item;      // [d], learned [CLS] input for item sequences
  nn::TensorT<T> cls_hist;      // [d], learned [CLS] input for history sequences
  nn::StackParamsT<T> item_stack;  // encodes items AND masked contexts
  nn::StackParamsT<T> hist_stack;
  nn::TensorT<T> clf_w1, clf_b1;  // [2d, d], [d]
  nn::TensorT<T> clf_w2, clf_b2;  // [d, d/2], [d/2]
  nn::TensorT<T> clf_w3, clf_b3;  // [d/2, n_classes], [n_classes]

  static ModelParamsT zeros(const ModelConfig& cfg);
  /// Weights and embeddings ~ N(0, 0.02), biases 0, layer-norm scales 1.
  /// The draw order follows visit(), so equal seeds give equal parameters.
  static ModelParamsT init(const ModelConfig& cfg, std::uint64_t seed);

  long long count() const;

  template <class F>
  void visit(F&& f) {
    f(std::string("tok_emb"), tok_emb);
    f(std::string("pos_emb"), pos_emb);
    f(std::string("attr_emb"), attr_emb);
    f(std::string("temporal_emb"), temporal_emb);
    f(std::string("cls_item"), cls_item);
    f(std::string("cls_hist"), cls_hist);
    item_stack.visit("item", f);
    hist_stack.visit("hist", f);
    f(std::string("classifier.w1"), clf_w1);
    f(std::string("classifier.b1"), clf_b1);
    f(std::string("classifier.w2"), clf_w2);
    f(std::string("classifier.b2"), clf_b2);
    f(std::string("classifier.w3"), clf_w3);
    f(std::string("classifier.b3"), clf_b3);
  }

  template <class F>
  void visit(F&& f) const {
    f(std::string("tok_emb"), tok_emb);
    f(std::string("pos_emb"), pos_emb);
    f(std::string("attr_emb"), attr_emb);
    f(std::string("temporal_emb"), temporal_emb);
    f(std::string("cls_item"), cls_item);
    f(std::string("cls_hist"), cls_hist);
    item_stack.visit("item", f);
    hist_stack.visit("hist", f);
    f(std::string("classifier.w1"), clf_w1);
    f(std::string("classifier.b1"), clf_b1);
    f(std::string("classifier.w2"), clf_w2);
    f(std::string("classifier.b2"), clf_b2);
    f(std::string("classifier.w3"), clf_w3);
    f(std::string("classifier.b3"), clf_b3);
  }
};

using ModelParams = ModelParamsT<float>;

/// Closed-form parameter count; matches ModelParamsT::count() exactly.
long long count_parameters(const ModelConfig& cfg);

// ------------------------------------------------------- item serialization

/// Fixed-length triplet encoding of one item. Padding slots carry the pad
/// token with position 0 and attribute id 0 and are masked out.
struct ItemTokens {
  std::vector<int> token_ids;
  std::vector<int> pos_ids;   // restart at 1 for each attribute
  std::vector<int> attr_ids;
  std::vector<std::uint8_t> valid;
};

/// Serializes attributes in the canonical order: title, category (the
/// path joined into a single ':'-separated value), the remaining maskable
/// attributes in name order, then all other attributes in name order.
/// The concatenation is truncated at the tail to item_seq_len. When
/// mask_context is set, maskable attributes are omitted entirely.
ItemTokens item_token_triplets(const data::Item& item, const bpe::BpeVocab& vocab,
                               const ModelConfig& cfg, const data::AttributeRegistry& reg,
                               bool mask_context);

/// Bucket index floor(log2(elapsed_days + 1)) clamped to
/// [0, n_temporal_ids - 1]. Negative elapsed time is a caller bug.
int temporal_id(long purchase_day, long ref_day, int n_temporal_ids);

// ----------------------------------------------------------- item encoder

template <class T>
struct ItemEncodeCacheT {
  std::vector<int> tok_ids, pos_ids, attr_ids;  // flattened n_rows * item_seq_len
  std::vector<std::uint8_t> mask;               // n_rows * (item_seq_len + 1)
  std::vector<nn::EncoderLayerCacheT<T>> layers;
  int n_rows = 0;
};

/// Embeds and encodes a batch of item token sequences; returns the [CLS]
/// outputs as [n_rows, d]. Rows are independent: any subset encodes to
/// the same values alone as in a larger batch.
template <class T>
nn::TensorT<T> encode_items(const std::vector<ItemTokens>& rows, const ModelParamsT<T>& params,
                        const ModelConfig& cfg, ItemEncodeCacheT<T>* cache = nullptr);

/// dcls: [n_rows, d] gradient of the [CLS] outputs. Accumulates into the
/// embedding tables, cls_item, and the item stack.
template <class T>
void encode_items_backward(const ItemEncodeCacheT<T>& cache, const ModelParamsT<T>& params,
                           const ModelConfig& cfg, const nn::TensorT<T>& dcls,
                           ModelParamsT<T>& grads);

/// Single-item convenience wrapper; returns the item embedding [d].
template <class T>
nn::TensorT<T> embed_item(const data::Item& item, const ModelParamsT<T>& params,
                      const ModelConfig& cfg, const bpe::BpeVocab& vocab,
                      const data::AttributeRegistry& reg, bool mask_context);

// -------------------------------------------------- history encoder + head

template <class T>
struct HeadCacheT {
  std::vector<int> temporal_ids;   // batch * history_len, 0 on padding
  std::vector<int> hist_lens;
  std::vector<std::uint8_t> mask;  // batch * (history_len + 1)
  std::vector<nn::EncoderLayerCacheT<T>> layers;
  nn::LinearCacheT<T> lc1, lc2, lc3;
  nn::GeluCacheT<T> g1, g2;
  int batch = 0;
};

/// History encoder plus classifier. hist_embs: [B, history_len, d] with
/// slots beyond hist_lens[b] ignored; temporal_ids: B * history_len;
/// context_embs: [B, d]. Returns logits [B, n_classes].
template <class T>
nn::TensorT<T> head_forward(const nn::TensorT<T>& hist_embs, const std::vector<int>& hist_lens,
                        const std::vector<int>& temporal_ids, const nn::TensorT<T>& context_embs,
                        const ModelParamsT<T>& params, const ModelConfig& cfg,
                        HeadCacheT<T>* cache = nullptr);

/// Fills dhist_embs [B, history_len, d] and dcontext_embs [B, d] (fresh,
/// not accumulated); accumulates parameter gradients.
template <class T>
void head_backward(const HeadCacheT<T>& cache, const ModelParamsT<T>& params,
                   const ModelConfig& cfg, const nn::TensorT<T>& dlogits, ModelParamsT<T>& grads,
                   nn::TensorT<T>& dhist_embs, nn::TensorT<T>& dcontext_embs);

/// Buyer embedding from (item embedding, temporal id) pairs: slot = item
/// embedding + temporal embedding, [CLS] prepended, history stack applied.
template <class T>
nn::TensorT<T> embed_history(const std::vector<std::pair<nn::TensorT<T>, int>>& history,
                         const ModelParamsT<T>& params, const ModelConfig& cfg);

// ------------------------------------------------------------- full model

/// Reference time for temporal buckets: the last history item's purchase
/// day while training, the query day at inference.
enum class RefTime { kTraining, kInference };

template <class T>
struct ForwardCacheT {
  ItemEncodeCacheT<T> items;
  HeadCacheT<T> head;
  std::vector<int> hist_rows;  // batch * history_len -> item row, -1 padding
  std::vector<int> ctx_rows;   // batch -> item row
  int batch = 0;
};

/// End-to-end forward over a batch of examples; returns logits
/// [batch, n_classes]. Histories longer than cfg.history_len keep only
/// the most recent purchases.
template <class T>
nn::TensorT<T> model_forward(const data::Dataset& ds,
                         const std::vector<data::TrainingExample>& batch,
                         const ModelParamsT<T>& params, const ModelConfig& cfg,
                         const bpe::BpeVocab& vocab, const data::AttributeRegistry& reg,
                         RefTime ref, ForwardCacheT<T>* cache = nullptr);

template <class T>
void model_backward(const ForwardCacheT<T>& cache, const ModelParamsT<T>& params,
                    const ModelConfig& cfg, const nn::TensorT<T>& dlogits,
                    ModelParamsT<T>& grads);

/// Softmaxed single-example prediction at inference reference time.
SizeDistribution predict(const data::Dataset& ds, const data::TrainingExample& ex,
                         const ModelParams& params, const ModelConfig& cfg,
                         const bpe::BpeVocab& vocab, const data::AttributeRegistry& reg);

}  // namespace presize::model
