// SPDX-License-Identifier: Apache-2.0

#include "presize/model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <random>
#include <stdexcept>
#include <utility>

#include "presize/kernels.hpp"
#include "presize/ops.hpp"

namespace presize::model {

using nn::DimensionError;
using nn::TensorT;

// ---------------------------------------------------------------- config

void ModelConfig::validate() const {
  if (d < 1) throw ConfigError("model dim must be positive");
  if (heads < 1 || d % heads != 0) throw ConfigError("model dim must divide by heads");
  if (d % 2 != 0) throw ConfigError("model dim must be even (classifier uses d/2)");
  if (n_layers < 1) throw ConfigError("at least one encoder layer required");
  if (resolved_ffn() < 1) throw ConfigError("ffn hidden size must be positive");
  if (item_seq_len < 1) throw ConfigError("item_seq_len must be positive");
  if (history_len < 1) throw ConfigError("history_len must be positive");
  if (n_positions < item_seq_len)
    throw ConfigError("n_positions must cover item_seq_len (positions restart per attribute)");
  if (n_temporal_ids < 1) throw ConfigError("n_temporal_ids must be positive");
  if (n_classes < 1) throw ConfigError("n_classes must be positive");
  if (vocab_size < bpe::kMinVocabSize)
    throw ConfigError("vocab_size below the byte+specials minimum");
  if (n_attr_names < 2) throw ConfigError("n_attr_names must cover pad plus one name");
}

// ------------------------------------------------------------ parameters

template <class T>
ModelParamsT<T> ModelParamsT<T>::zeros(const ModelConfig& cfg) {
  cfg.validate();
  ModelParamsT<T> p;
  p.tok_emb = TensorT<T>::zeros({cfg.vocab_size, cfg.d});
  p.pos_emb = TensorT<T>::zeros({cfg.n_positions + 1, cfg.d});
  p.attr_emb = TensorT<T>::zeros({cfg.n_attr_names, cfg.d});
  p.temporal_emb = TensorT<T>::zeros({cfg.n_temporal_ids, cfg.d});
  p.cls_item = TensorT<T>::zeros({cfg.d});
  p.cls_hist = TensorT<T>::zeros({cfg.d});
  p.item_stack = nn::StackParamsT<T>::zeros(cfg.n_layers, cfg.d, cfg.resolved_ffn());
  p.hist_stack = nn::StackParamsT<T>::zeros(cfg.n_layers, cfg.d, cfg.resolved_ffn());
  p.clf_w1 = TensorT<T>::zeros({2 * cfg.d, cfg.d});
  p.clf_b1 = TensorT<T>::zeros({cfg.d});
  p.clf_w2 = TensorT<T>::zeros({cfg.d, cfg.d / 2});
  p.clf_b2 = TensorT<T>::zeros({cfg.d / 2});
  p.clf_w3 = TensorT<T>::zeros({cfg.d / 2, cfg.n_classes});
  p.clf_b3 = TensorT<T>::zeros({cfg.n_classes});
  return p;
}

namespace {

// Box-Muller over explicit 53-bit uniforms: identical draws on every
// platform for a given seed, unlike std::normal_distribution.
class NormalSampler {
 public:
  explicit NormalSampler(std::uint64_t seed) : rng_(seed) {}

  double next() {
    if (have_) {
      have_ = false;
      return spare_;
    }
    double u1 = 0.0;
    do {
      u1 = std::ldexp(static_cast<double>(rng_() >> 11), -53);
    } while (u1 <= 0.0);
    const double u2 = std::ldexp(static_cast<double>(rng_() >> 11), -53);
    const double r = std::sqrt(-2.0 * std::log(u1));
    constexpr double kTau = 6.28318530717958647692528676655900577;
    spare_ = r * std::sin(kTau * u2);
    have_ = true;
    return r * std::cos(kTau * u2);
  }

 private:
  std::mt19937_64 rng_;
  bool have_ = false;
  double spare_ = 0.0;
};

}  // namespace

template <class T>
ModelParamsT<T> ModelParamsT<T>::init(const ModelConfig& cfg, std::uint64_t seed) {
  auto p = zeros(cfg);
  NormalSampler normal(seed);
  p.visit([&](const std::string& name, TensorT<T>& t) {
    const auto dot = name.rfind('.');
    const std::string leaf = dot == std::string::npos ? name : name.substr(dot + 1);
    if (leaf == "gamma") {
      t.fill(T(1));
      return;
    }
    if (!leaf.empty() && leaf[0] == 'b') return;  // biases and betas stay zero
    for (auto& v : t.data) v = static_cast<T>(0.02 * normal.next());
  });
  return p;
}

template <class T>
long long ModelParamsT<T>::count() const {
  long long n = 0;
  visit([&](const std::string&, const TensorT<T>& t) { n += static_cast<long long>(t.size()); });
  return n;
}

long long count_parameters(const ModelConfig& cfg) {
  const long long d = cfg.d;
  const long long f = cfg.resolved_ffn();
  const long long per_layer = 4 * (d * d + d)  // q/k/v/o projections
                              + 2 * d          // ln1
                              + (d * f + f) + (f * d + d)  // ffn
                              + 2 * d;         // ln2
  const long long embeddings = static_cast<long long>(cfg.vocab_size) * d +
                               (cfg.n_positions + 1LL) * d +
                               static_cast<long long>(cfg.n_attr_names) * d +
                               static_cast<long long>(cfg.n_temporal_ids) * d + 2 * d;
  const long long classifier = (2 * d * d + d) + (d * (d / 2) + d / 2) +
                               ((d / 2) * cfg.n_classes + cfg.n_classes);
  return embeddings + 2 * cfg.n_layers * per_layer + classifier;
}

// ------------------------------------------------------- item serialization

ItemTokens item_token_triplets(const data::Item& item, const bpe::BpeVocab& vocab,
                               const ModelConfig& cfg, const data::AttributeRegistry& reg,
                               bool mask_context) {
  const auto masked = [&](const std::string& name) {
    return mask_context && cfg.maskable_attributes.count(name) > 0;
  };

  std::vector<std::pair<std::string, std::string>> fields;
  if (const std::string* title = item.find_attribute("title"); title && !masked("title"))
    fields.emplace_back("title", *title);

  if (!masked("category")) {
    std::string joined;
    for (const auto& part : item.category_path) {
      if (!joined.empty()) joined.push_back(':');
      joined += part;
    }
    fields.emplace_back("category", joined);
  }

  // Maskable attributes other than the title (the size fields) come next,
  // already name-ordered by the set.
  for (const auto& name : cfg.maskable_attributes) {
    if (name == "title" || name == "category" || masked(name)) continue;
    if (const std::string* v = item.find_attribute(name)) fields.emplace_back(name, *v);
  }

  std::vector<std::pair<std::string, std::string>> rest;
  for (const auto& a : item.attributes) {
    if (a.name == "title" || a.name == "category") continue;
    if (cfg.maskable_attributes.count(a.name) > 0) continue;
    rest.emplace_back(a.name, a.value);
  }
  std::sort(rest.begin(), rest.end());
  fields.insert(fields.end(), rest.begin(), rest.end());

  const int L = cfg.item_seq_len;
  ItemTokens out;
  out.token_ids.assign(static_cast<std::size_t>(L), bpe::kPadId);
  out.pos_ids.assign(static_cast<std::size_t>(L), 0);
  out.attr_ids.assign(static_cast<std::size_t>(L), 0);
  out.valid.assign(static_cast<std::size_t>(L), 0);

  int slot = 0;
  for (const auto& [name, value] : fields) {
    const int aid = reg.id_of(name);  // RegistryError on unknown names
    if (aid >= cfg.n_attr_names)
      throw ConfigError("attribute id " + std::to_string(aid) + " for '" + name +
                        "' exceeds n_attr_names");
    const std::vector<int> toks = bpe::encode(bpe::lowercase_ascii(value), vocab);
    for (std::size_t k = 0; k < toks.size() && slot < L; ++k, ++slot) {
      out.token_ids[static_cast<std::size_t>(slot)] = toks[k];
      out.pos_ids[static_cast<std::size_t>(slot)] = static_cast<int>(k) + 1;
      out.attr_ids[static_cast<std::size_t>(slot)] = aid;
      out.valid[static_cast<std::size_t>(slot)] = 1;
    }
    if (slot >= L) break;
  }
  return out;
}

int temporal_id(long purchase_day, long ref_day, int n_temporal_ids) {
  if (purchase_day > ref_day)
    throw std::invalid_argument("temporal_id: purchase after the reference day");
  const unsigned long long elapsed1 =
      static_cast<unsigned long long>(ref_day - purchase_day) + 1ULL;
  const int id = std::bit_width(elapsed1) - 1;  // floor(log2), exact
  return std::min(id, n_temporal_ids - 1);
}

// ----------------------------------------------------------- item encoder

template <class T>
TensorT<T> encode_items(const std::vector<ItemTokens>& rows, const ModelParamsT<T>& params,
                        const ModelConfig& cfg, ItemEncodeCacheT<T>* cache) {
  const int N = static_cast<int>(rows.size());
  if (N == 0) throw DimensionError("encode_items: empty batch");
  const int L = cfg.item_seq_len;
  const int Lp = L + 1;
  const int d = cfg.d;

  std::vector<int> tok(static_cast<std::size_t>(N) * L);
  std::vector<int> pos(static_cast<std::size_t>(N) * L);
  std::vector<int> att(static_cast<std::size_t>(N) * L);
  std::vector<std::uint8_t> mask(static_cast<std::size_t>(N) * Lp, 0);
  for (int r = 0; r < N; ++r) {
    const ItemTokens& row = rows[static_cast<std::size_t>(r)];
    if (static_cast<int>(row.token_ids.size()) != L ||
        static_cast<int>(row.pos_ids.size()) != L ||
        static_cast<int>(row.attr_ids.size()) != L ||
        static_cast<int>(row.valid.size()) != L)
      throw DimensionError("encode_items: row length != item_seq_len");
    mask[static_cast<std::size_t>(r) * Lp] = 1;  // [CLS]
    for (int j = 0; j < L; ++j) {
      const std::size_t flat = static_cast<std::size_t>(r) * L + j;
      tok[flat] = row.token_ids[static_cast<std::size_t>(j)];
      pos[flat] = row.pos_ids[static_cast<std::size_t>(j)];
      att[flat] = row.attr_ids[static_cast<std::size_t>(j)];
      mask[static_cast<std::size_t>(r) * Lp + 1 + j] = row.valid[static_cast<std::size_t>(j)];
    }
  }

  TensorT<T> slots = nn::embedding_lookup(params.tok_emb, tok);  // [N*L, d]
  {
    const TensorT<T> e_pos = nn::embedding_lookup(params.pos_emb, pos);
    const TensorT<T> e_att = nn::embedding_lookup(params.attr_emb, att);
    kernels::vadd(slots.size(), slots.ptr(), e_pos.ptr(), slots.ptr());
    kernels::vadd(slots.size(), slots.ptr(), e_att.ptr(), slots.ptr());
  }

  TensorT<T> x({N, Lp, d});
  for (int r = 0; r < N; ++r) {
    std::memcpy(&x.data[(static_cast<std::size_t>(r) * Lp) * d], params.cls_item.ptr(),
                sizeof(T) * static_cast<std::size_t>(d));
    std::memcpy(&x.data[(static_cast<std::size_t>(r) * Lp + 1) * d],
                &slots.data[static_cast<std::size_t>(r) * L * d],
                sizeof(T) * static_cast<std::size_t>(L) * d);
  }

  const TensorT<T> y = nn::transformer_stack(x, mask, cfg.heads, params.item_stack,
                                             cache ? &cache->layers : nullptr);

  TensorT<T> cls({N, d});
  for (int r = 0; r < N; ++r)
    std::memcpy(&cls.data[static_cast<std::size_t>(r) * d],
                &y.data[(static_cast<std::size_t>(r) * Lp) * d],
                sizeof(T) * static_cast<std::size_t>(d));

  if (cache) {
    cache->tok_ids = std::move(tok);
    cache->pos_ids = std::move(pos);
    cache->attr_ids = std::move(att);
    cache->mask = std::move(mask);
    cache->n_rows = N;
  }
  return cls;
}

template <class T>
void encode_items_backward(const ItemEncodeCacheT<T>& cache, const ModelParamsT<T>& params,
                           const ModelConfig& cfg, const TensorT<T>& dcls,
                           ModelParamsT<T>& grads) {
  const int N = cache.n_rows;
  const int L = cfg.item_seq_len;
  const int Lp = L + 1;
  const int d = cfg.d;
  nn::require_shape(dcls, {N, d}, "encode_items_backward dcls");

  TensorT<T> dy({N, Lp, d});
  for (int r = 0; r < N; ++r)
    std::memcpy(&dy.data[(static_cast<std::size_t>(r) * Lp) * d],
                &dcls.data[static_cast<std::size_t>(r) * d],
                sizeof(T) * static_cast<std::size_t>(d));

  const TensorT<T> dx = nn::transformer_stack_backward(cache.layers, cache.mask, cfg.heads,
                                                       params.item_stack, dy, grads.item_stack);

  TensorT<T> dslots({N * L, d});
  for (int r = 0; r < N; ++r) {
    kernels::vadd(static_cast<std::size_t>(d), grads.cls_item.ptr(),
                  &dx.data[(static_cast<std::size_t>(r) * Lp) * d], grads.cls_item.ptr());
    std::memcpy(&dslots.data[static_cast<std::size_t>(r) * L * d],
                &dx.data[(static_cast<std::size_t>(r) * Lp + 1) * d],
                sizeof(T) * static_cast<std::size_t>(L) * d);
  }
  // Padded slots carry exactly zero gradient, so scattering every slot is
  // a no-op for the pad rows of all three tables.
  nn::embedding_backward(cache.tok_ids, dslots, grads.tok_emb);
  nn::embedding_backward(cache.pos_ids, dslots, grads.pos_emb);
  nn::embedding_backward(cache.attr_ids, dslots, grads.attr_emb);
}

template <class T>
TensorT<T> embed_item(const data::Item& item, const ModelParamsT<T>& params,
                      const ModelConfig& cfg, const bpe::BpeVocab& vocab,
                      const data::AttributeRegistry& reg, bool mask_context) {
  const std::vector<ItemTokens> rows{item_token_triplets(item, vocab, cfg, reg, mask_context)};
  TensorT<T> cls = encode_items(rows, params, cfg);
  cls.shape = {cfg.d};
  return cls;
}

// -------------------------------------------------- history encoder + head

template <class T>
TensorT<T> head_forward(const TensorT<T>& hist_embs, const std::vector<int>& hist_lens,
                        const std::vector<int>& temporal_ids, const TensorT<T>& context_embs,
                        const ModelParamsT<T>& params, const ModelConfig& cfg,
                        HeadCacheT<T>* cache) {
  const int H = cfg.history_len;
  const int d = cfg.d;
  if (hist_embs.ndim() != 3 || hist_embs.dim(1) != H || hist_embs.dim(2) != d)
    throw DimensionError("head_forward: hist_embs must be [B, history_len, d], got " +
                         hist_embs.shape_str());
  const int B = hist_embs.dim(0);
  nn::require_shape(context_embs, {B, d}, "head_forward context_embs");
  if (static_cast<int>(hist_lens.size()) != B ||
      static_cast<int>(temporal_ids.size()) != B * H)
    throw DimensionError("head_forward: hist_lens/temporal_ids length mismatch");

  const TensorT<T> e_tmp = nn::embedding_lookup(params.temporal_emb, temporal_ids);

  const int Hp = H + 1;
  TensorT<T> hx({B, Hp, d});
  std::vector<std::uint8_t> mask(static_cast<std::size_t>(B) * Hp, 0);
  for (int b = 0; b < B; ++b) {
    const int len = hist_lens[static_cast<std::size_t>(b)];
    if (len < 1 || len > H)
      throw DimensionError("head_forward: history length out of [1, history_len]");
    std::memcpy(&hx.data[(static_cast<std::size_t>(b) * Hp) * d], params.cls_hist.ptr(),
                sizeof(T) * static_cast<std::size_t>(d));
    mask[static_cast<std::size_t>(b) * Hp] = 1;
    for (int i = 0; i < len; ++i) {
      const std::size_t src = (static_cast<std::size_t>(b) * H + i) * d;
      kernels::vadd(static_cast<std::size_t>(d), &hist_embs.data[src], &e_tmp.data[src],
                    &hx.data[(static_cast<std::size_t>(b) * Hp + 1 + i) * d]);
      mask[static_cast<std::size_t>(b) * Hp + 1 + i] = 1;
    }
  }

  const TensorT<T> hy = nn::transformer_stack(hx, mask, cfg.heads, params.hist_stack,
                                              cache ? &cache->layers : nullptr);

  TensorT<T> concat({B, 2 * d});
  for (int b = 0; b < B; ++b) {
    std::memcpy(&concat.data[static_cast<std::size_t>(b) * 2 * d],
                &hy.data[(static_cast<std::size_t>(b) * Hp) * d],
                sizeof(T) * static_cast<std::size_t>(d));
    std::memcpy(&concat.data[static_cast<std::size_t>(b) * 2 * d + d],
                &context_embs.data[static_cast<std::size_t>(b) * d],
                sizeof(T) * static_cast<std::size_t>(d));
  }

  const TensorT<T> a1 = nn::linear(concat, params.clf_w1, params.clf_b1,
                                   cache ? &cache->lc1 : nullptr);
  const TensorT<T> g1 = nn::gelu(a1, cache ? &cache->g1 : nullptr);
  const TensorT<T> a2 = nn::linear(g1, params.clf_w2, params.clf_b2,
                                   cache ? &cache->lc2 : nullptr);
  const TensorT<T> g2 = nn::gelu(a2, cache ? &cache->g2 : nullptr);
  TensorT<T> logits = nn::linear(g2, params.clf_w3, params.clf_b3,
                                 cache ? &cache->lc3 : nullptr);

  if (cache) {
    cache->temporal_ids = temporal_ids;
    cache->hist_lens = hist_lens;
    cache->mask = std::move(mask);
    cache->batch = B;
  }
  return logits;
}

template <class T>
void head_backward(const HeadCacheT<T>& cache, const ModelParamsT<T>& params,
                   const ModelConfig& cfg, const TensorT<T>& dlogits, ModelParamsT<T>& grads,
                   TensorT<T>& dhist_embs, TensorT<T>& dcontext_embs) {
  const int B = cache.batch;
  const int H = cfg.history_len;
  const int Hp = H + 1;
  const int d = cfg.d;
  nn::require_shape(dlogits, {B, cfg.n_classes}, "head_backward dlogits");

  const TensorT<T> dg2 = nn::linear_backward(cache.lc3, params.clf_w3, dlogits, grads.clf_w3,
                                             grads.clf_b3);
  const TensorT<T> da2 = nn::gelu_backward(cache.g2, dg2);
  const TensorT<T> dg1 = nn::linear_backward(cache.lc2, params.clf_w2, da2, grads.clf_w2,
                                             grads.clf_b2);
  const TensorT<T> da1 = nn::gelu_backward(cache.g1, dg1);
  const TensorT<T> dconcat = nn::linear_backward(cache.lc1, params.clf_w1, da1, grads.clf_w1,
                                                 grads.clf_b1);

  dcontext_embs = TensorT<T>({B, d});
  TensorT<T> dhy({B, Hp, d});
  for (int b = 0; b < B; ++b) {
    std::memcpy(&dhy.data[(static_cast<std::size_t>(b) * Hp) * d],
                &dconcat.data[static_cast<std::size_t>(b) * 2 * d],
                sizeof(T) * static_cast<std::size_t>(d));
    std::memcpy(&dcontext_embs.data[static_cast<std::size_t>(b) * d],
                &dconcat.data[static_cast<std::size_t>(b) * 2 * d + d],
                sizeof(T) * static_cast<std::size_t>(d));
  }

  const TensorT<T> dhx = nn::transformer_stack_backward(cache.layers, cache.mask, cfg.heads,
                                                        params.hist_stack, dhy,
                                                        grads.hist_stack);

  TensorT<T> dslots({B * H, d});
  for (int b = 0; b < B; ++b) {
    kernels::vadd(static_cast<std::size_t>(d), grads.cls_hist.ptr(),
                  &dhx.data[(static_cast<std::size_t>(b) * Hp) * d], grads.cls_hist.ptr());
    std::memcpy(&dslots.data[static_cast<std::size_t>(b) * H * d],
                &dhx.data[(static_cast<std::size_t>(b) * Hp + 1) * d],
                sizeof(T) * static_cast<std::size_t>(H) * d);
  }
  // Padded slots carry exactly zero gradient, so the blanket scatter is a
  // no-op for temporal id 0's pad-filled entries.
  nn::embedding_backward(cache.temporal_ids, dslots, grads.temporal_emb);
  dhist_embs.shape = {B, H, d};
  dhist_embs.data = std::move(dslots.data);  // same row-major layout
}

template <class T>
TensorT<T> embed_history(const std::vector<std::pair<TensorT<T>, int>>& history,
                         const ModelParamsT<T>& params, const ModelConfig& cfg) {
  const int len = static_cast<int>(history.size());
  if (len < 1) throw std::invalid_argument("embed_history: empty history");
  if (len > cfg.history_len) throw std::invalid_argument("embed_history: history too long");
  const int d = cfg.d;

  TensorT<T> hist_embs({1, cfg.history_len, d});
  std::vector<int> temporal_ids(static_cast<std::size_t>(cfg.history_len), 0);
  for (int i = 0; i < len; ++i) {
    const auto& [emb, tid] = history[static_cast<std::size_t>(i)];
    nn::require_shape(emb, {d}, "embed_history item embedding");
    std::memcpy(&hist_embs.data[static_cast<std::size_t>(i) * d], emb.ptr(),
                sizeof(T) * static_cast<std::size_t>(d));
    temporal_ids[static_cast<std::size_t>(i)] = tid;
  }

  const int Hp = cfg.history_len + 1;
  const TensorT<T> e_tmp = nn::embedding_lookup(params.temporal_emb, temporal_ids);
  TensorT<T> hx({1, Hp, d});
  std::vector<std::uint8_t> mask(static_cast<std::size_t>(Hp), 0);
  std::memcpy(hx.ptr(), params.cls_hist.ptr(), sizeof(T) * static_cast<std::size_t>(d));
  mask[0] = 1;
  for (int i = 0; i < len; ++i) {
    kernels::vadd(static_cast<std::size_t>(d), &hist_embs.data[static_cast<std::size_t>(i) * d],
                  &e_tmp.data[static_cast<std::size_t>(i) * d],
                  &hx.data[static_cast<std::size_t>(1 + i) * d]);
    mask[static_cast<std::size_t>(1 + i)] = 1;
  }

  const TensorT<T> hy = nn::transformer_stack(hx, mask, cfg.heads, params.hist_stack);
  TensorT<T> out({d});
  std::memcpy(out.ptr(), hy.ptr(), sizeof(T) * static_cast<std::size_t>(d));
  return out;
}

// ------------------------------------------------------------- full model

template <class T>
TensorT<T> model_forward(const data::Dataset& ds,
                         const std::vector<data::TrainingExample>& batch,
                         const ModelParamsT<T>& params, const ModelConfig& cfg,
                         const bpe::BpeVocab& vocab, const data::AttributeRegistry& reg,
                         RefTime ref, ForwardCacheT<T>* cache) {
  const int B = static_cast<int>(batch.size());
  if (B == 0) throw DimensionError("model_forward: empty batch");
  const int H = cfg.history_len;
  const int d = cfg.d;

  std::vector<ItemTokens> rows;
  std::vector<int> hist_rows(static_cast<std::size_t>(B) * H, -1);
  std::vector<int> ctx_rows(static_cast<std::size_t>(B), -1);
  std::vector<int> hist_lens(static_cast<std::size_t>(B), 0);
  std::vector<int> temporal_ids(static_cast<std::size_t>(B) * H, 0);

  for (int b = 0; b < B; ++b) {
    const data::TrainingExample& ex = batch[static_cast<std::size_t>(b)];
    const int provided = ex.history_len();
    if (provided < 1) throw std::invalid_argument("model_forward: example without history");
    const int len = std::min(provided, H);
    const int skip = provided - len;  // drop the oldest beyond the window
    hist_lens[static_cast<std::size_t>(b)] = len;
    const long ref_day = ref == RefTime::kTraining
                             ? ds.history_at(ex, provided - 1).purchase_day
                             : ex.target_day;
    for (int i = 0; i < len; ++i) {
      const data::Purchase& p = ds.history_at(ex, skip + i);
      hist_rows[static_cast<std::size_t>(b) * H + i] = static_cast<int>(rows.size());
      rows.push_back(item_token_triplets(p.item, vocab, cfg, reg, false));
      temporal_ids[static_cast<std::size_t>(b) * H + i] =
          temporal_id(p.purchase_day, ref_day, cfg.n_temporal_ids);
    }
  }
  for (int b = 0; b < B; ++b) {
    const data::TrainingExample& ex = batch[static_cast<std::size_t>(b)];
    ctx_rows[static_cast<std::size_t>(b)] = static_cast<int>(rows.size());
    rows.push_back(item_token_triplets(ds.target_of(ex).item, vocab, cfg, reg, true));
  }

  const TensorT<T> cls = encode_items(rows, params, cfg, cache ? &cache->items : nullptr);

  TensorT<T> hist_embs({B, H, d});
  TensorT<T> ctx_embs({B, d});
  for (int b = 0; b < B; ++b) {
    for (int i = 0; i < hist_lens[static_cast<std::size_t>(b)]; ++i) {
      const int r = hist_rows[static_cast<std::size_t>(b) * H + i];
      std::memcpy(&hist_embs.data[(static_cast<std::size_t>(b) * H + i) * d],
                  &cls.data[static_cast<std::size_t>(r) * d],
                  sizeof(T) * static_cast<std::size_t>(d));
    }
    std::memcpy(&ctx_embs.data[static_cast<std::size_t>(b) * d],
                &cls.data[static_cast<std::size_t>(ctx_rows[static_cast<std::size_t>(b)]) * d],
                sizeof(T) * static_cast<std::size_t>(d));
  }

  TensorT<T> logits = head_forward(hist_embs, hist_lens, temporal_ids, ctx_embs, params, cfg,
                                   cache ? &cache->head : nullptr);
  if (cache) {
    cache->hist_rows = std::move(hist_rows);
    cache->ctx_rows = std::move(ctx_rows);
    cache->batch = B;
  }
  return logits;
}

template <class T>
void model_backward(const ForwardCacheT<T>& cache, const ModelParamsT<T>& params,
                    const ModelConfig& cfg, const TensorT<T>& dlogits,
                    ModelParamsT<T>& grads) {
  const int B = cache.batch;
  const int H = cfg.history_len;
  const int d = cfg.d;

  TensorT<T> dhist_embs, dctx_embs;
  head_backward(cache.head, params, cfg, dlogits, grads, dhist_embs, dctx_embs);

  TensorT<T> dcls({cache.items.n_rows, d});
  for (int b = 0; b < B; ++b) {
    for (int i = 0; i < cache.head.hist_lens[static_cast<std::size_t>(b)]; ++i) {
      const int r = cache.hist_rows[static_cast<std::size_t>(b) * H + i];
      std::memcpy(&dcls.data[static_cast<std::size_t>(r) * d],
                  &dhist_embs.data[(static_cast<std::size_t>(b) * H + i) * d],
                  sizeof(T) * static_cast<std::size_t>(d));
    }
    const int r = cache.ctx_rows[static_cast<std::size_t>(b)];
    std::memcpy(&dcls.data[static_cast<std::size_t>(r) * d],
                &dctx_embs.data[static_cast<std::size_t>(b) * d],
                sizeof(T) * static_cast<std::size_t>(d));
  }
  encode_items_backward(cache.items, params, cfg, dcls, grads);
}

SizeDistribution predict(const data::Dataset& ds, const data::TrainingExample& ex,
                         const ModelParams& params, const ModelConfig& cfg,
                         const bpe::BpeVocab& vocab, const data::AttributeRegistry& reg) {
  const TensorT<float> logits =
      model_forward<float>(ds, {ex}, params, cfg, vocab, reg, RefTime::kInference, nullptr);
  const TensorT<float> probs = nn::softmax(logits);
  SizeDistribution out;
  out.probs.assign(probs.data.begin(), probs.data.end());
  return out;
}

// ---------------------------------------------------------- instantiation

#define PRESIZE_INSTANTIATE_MODEL(T)                                                          \
  template struct ModelParamsT<T>;                                                            \
  template TensorT<T> encode_items<T>(const std::vector<ItemTokens>&, const ModelParamsT<T>&, \
                                      const ModelConfig&, ItemEncodeCacheT<T>*);              \
  template void encode_items_backward<T>(const ItemEncodeCacheT<T>&, const ModelParamsT<T>&,  \
                                         const ModelConfig&, const TensorT<T>&,               \
                                         ModelParamsT<T>&);                                   \
  template TensorT<T> embed_item<T>(const data::Item&, const ModelParamsT<T>&,                \
                                    const ModelConfig&, const bpe::BpeVocab&,                 \
                                    const data::AttributeRegistry&, bool);                    \
  template TensorT<T> head_forward<T>(const TensorT<T>&, const std::vector<int>&,             \
                                      const std::vector<int>&, const TensorT<T>&,             \
                                      const ModelParamsT<T>&, const ModelConfig&,             \
                                      HeadCacheT<T>*);                                        \
  template void head_backward<T>(const HeadCacheT<T>&, const ModelParamsT<T>&,                \
                                 const ModelConfig&, const TensorT<T>&, ModelParamsT<T>&,     \
                                 TensorT<T>&, TensorT<T>&);                                   \
  template TensorT<T> embed_history<T>(const std::vector<std::pair<TensorT<T>, int>>&,        \
                                       const ModelParamsT<T>&, const ModelConfig&);           \
  template TensorT<T> model_forward<T>(const data::Dataset&,                                  \
                                       const std::vector<data::TrainingExample>&,             \
                                       const ModelParamsT<T>&, const ModelConfig&,            \
                                       const bpe::BpeVocab&, const data::AttributeRegistry&,  \
                                       RefTime, ForwardCacheT<T>*);                           \
  template void model_backward<T>(const ForwardCacheT<T>&, const ModelParamsT<T>&,            \
                                  const ModelConfig&, const TensorT<T>&, ModelParamsT<T>&);

PRESIZE_INSTANTIATE_MODEL(float)
PRESIZE_INSTANTIATE_MODEL(double)

#undef PRESIZE_INSTANTIATE_MODEL

}  // namespace presize::model
