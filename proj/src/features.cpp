// SPDX-License-Identifier: Apache-2.0
//
// Ranking features over size distributions, plus the offline item-embedding
// cache: build, versioned binary io, and prediction assembly that matches
// the end-to-end forward pass bit for bit.

#include "presize/features.hpp"

#include <algorithm>
#include <bit>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <numeric>
#include <stdexcept>

#include <json.hpp>

#include "presize/ops.hpp"

namespace presize::features {

// ------------------------------------------------------- ranking features

SizeFeatures size_features(const model::SizeDistribution& dist,
                           const std::vector<int>& available) {
  const int n = static_cast<int>(dist.probs.size());
  if (n < 1) throw std::invalid_argument("size_features: empty distribution");
  if (available.empty()) throw std::invalid_argument("size_features: no available sizes");
  std::vector<char> offered(static_cast<std::size_t>(n), 0);
  for (const int id : available) {
    if (id < 0 || id >= n) throw std::invalid_argument("size_features: size id out of range");
    offered[static_cast<std::size_t>(id)] = 1;
  }

  double total = 0;
  int best = -1;
  for (int c = 0; c < n; ++c) {
    if (!offered[static_cast<std::size_t>(c)]) continue;
    total += dist.probs[static_cast<std::size_t>(c)];
    if (best < 0 || dist.probs[static_cast<std::size_t>(c)] > dist.probs[static_cast<std::size_t>(best)])
      best = c;
  }
  int rank = 1;
  for (int c = 0; c < n; ++c)
    if (dist.probs[static_cast<std::size_t>(c)] > dist.probs[static_cast<std::size_t>(best)]) ++rank;

  SizeFeatures f;
  f.total_score = total;
  f.best_score = dist.probs[static_cast<std::size_t>(best)];
  f.best_rank = rank;
  return f;
}

std::vector<int> available_ids(const data::Item& item, const data::SizeVocabulary& vocab) {
  const int n = vocab.n_classes();
  std::vector<char> seen(static_cast<std::size_t>(n), 0);
  std::vector<int> out;
  for (const auto& label : item.available_sizes) {
    const int id = vocab.id_of(label);
    if (id >= 0 && !seen[static_cast<std::size_t>(id)]) {
      seen[static_cast<std::size_t>(id)] = 1;
      out.push_back(id);
    }
  }
  if (out.empty()) {
    out.resize(static_cast<std::size_t>(n));
    std::iota(out.begin(), out.end(), 0);
    return out;
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::string feature_line(const std::string& buyer_id, const std::string& item_id,
                         const SizeFeatures& f) {
  nlohmann::json j;
  j["buyer_id"] = buyer_id;
  j["item_id"] = item_id;
  j["total_score"] = f.total_score;
  j["best_score"] = f.best_score;
  j["best_rank"] = f.best_rank;
  return j.dump();
}

// ----------------------------------------------------------- fingerprint

namespace {

struct Fnv1a {
  std::uint64_t h = 1469598103934665603ULL;

  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= b[i];
      h *= 1099511628211ULL;
    }
  }
  void i64(long long v) {
    const auto u = static_cast<std::uint64_t>(v);
    bytes(&u, sizeof u);
  }
  void str(const std::string& s) {
    i64(static_cast<long long>(s.size()));
    bytes(s.data(), s.size());
  }
};

static_assert(std::endian::native == std::endian::little,
              "fingerprints and cache io assume a little-endian host");

}  // namespace

std::uint64_t model_fingerprint(const model::ModelParams& params, const model::ModelConfig& cfg) {
  Fnv1a fnv;
  fnv.i64(cfg.d);
  fnv.i64(cfg.n_layers);
  fnv.i64(cfg.heads);
  fnv.i64(cfg.ffn);
  fnv.i64(cfg.item_seq_len);
  fnv.i64(cfg.history_len);
  fnv.i64(cfg.n_classes);
  fnv.i64(cfg.vocab_size);
  fnv.i64(cfg.n_attr_names);
  fnv.i64(cfg.n_positions);
  fnv.i64(cfg.n_temporal_ids);
  fnv.i64(static_cast<long long>(cfg.maskable_attributes.size()));
  for (const auto& name : cfg.maskable_attributes) fnv.str(name);
  params.visit([&fnv](const std::string& name, const nn::Tensor& t) {
    fnv.str(name);
    fnv.i64(t.ndim());
    for (int i = 0; i < t.ndim(); ++i) fnv.i64(t.shape[static_cast<std::size_t>(i)]);
    fnv.bytes(t.data.data(), t.data.size() * sizeof(float));
  });
  return fnv.h;
}

// ------------------------------------------------------- embedding cache

const std::vector<float>& ItemEmbeddingCache::at(const std::string& item_id) const {
  const auto it = vectors.find(item_id);
  if (it == vectors.end())
    throw CacheMissError("embedding cache miss: item '" + item_id + "' not cached");
  return it->second;
}

ItemEmbeddingCache build_embedding_cache(const std::vector<data::Item>& items,
                                         const model::ModelParams& params,
                                         const model::ModelConfig& cfg,
                                         const bpe::BpeVocab& vocab,
                                         const data::AttributeRegistry& reg) {
  cfg.validate();
  ItemEmbeddingCache cache;
  cache.fingerprint = model_fingerprint(params, cfg);
  cache.d = cfg.d;
  for (const auto& item : items) {
    const nn::Tensor emb = model::embed_item(item, params, cfg, vocab, reg, false);
    auto [it, inserted] = cache.vectors.emplace(item.item_id, emb.data);
    if (!inserted &&
        std::memcmp(it->second.data(), emb.data.data(), emb.data.size() * sizeof(float)) != 0)
      throw CacheError("embedding cache: item '" + item.item_id +
                       "' appears twice with different content");
  }
  return cache;
}

// -------------------------------------------------------------- cache io

namespace {

constexpr char kMagic[8] = {'P', 'S', 'Z', 'E', 'M', 'B', '\0', '\0'};
constexpr char kFooter[8] = {'P', 'S', 'Z', 'E', 'N', 'D', '\0', '\0'};
constexpr std::uint32_t kVersion = 1;

struct Writer {
  std::FILE* f;

  void bytes(const void* p, std::size_t n) {
    if (std::fwrite(p, 1, n, f) != n) throw IoError("cache write failed");
  }
  void u32(std::uint32_t v) { bytes(&v, sizeof v); }
  void u64(std::uint64_t v) { bytes(&v, sizeof v); }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }
};

struct Reader {
  std::FILE* f;

  void bytes(void* p, std::size_t n) {
    if (std::fread(p, 1, n, f) != n) throw CacheError("cache file truncated");
  }
  std::uint32_t u32() {
    std::uint32_t v;
    bytes(&v, sizeof v);
    return v;
  }
  std::uint64_t u64() {
    std::uint64_t v;
    bytes(&v, sizeof v);
    return v;
  }
  std::string str() {
    const std::uint32_t n = u32();
    if (n > (1u << 20)) throw CacheError("cache string length implausible");
    std::string s(n, '\0');
    bytes(s.data(), n);
    return s;
  }
};

}  // namespace

void save_cache(const std::string& path, const ItemEmbeddingCache& cache) {
  const std::string tmp = path + ".tmp";
  std::FILE* f = std::fopen(tmp.c_str(), "wb");
  if (!f) throw IoError("cannot open '" + tmp + "' for writing");
  try {
    Writer w{f};
    w.bytes(kMagic, sizeof kMagic);
    w.u32(kVersion);
    w.u64(cache.fingerprint);
    w.u64(static_cast<std::uint64_t>(cache.d));
    w.u64(cache.vectors.size());
    for (const auto& [id, vec] : cache.vectors) {
      if (static_cast<int>(vec.size()) != cache.d)
        throw CacheError("embedding cache: entry '" + id + "' has wrong width");
      w.str(id);
      w.bytes(vec.data(), vec.size() * sizeof(float));
    }
    w.bytes(kFooter, sizeof kFooter);
    if (std::fclose(f) != 0) throw IoError("cache close failed");
    std::filesystem::rename(tmp, path);
  } catch (...) {
    std::fclose(f);
    std::error_code ec;
    std::filesystem::remove(tmp, ec);
    throw;
  }
}

ItemEmbeddingCache load_cache(const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "rb");
  if (!f) throw IoError("cannot open '" + path + "' for reading");
  try {
    Reader r{f};
    char magic[8];
    r.bytes(magic, sizeof magic);
    if (std::memcmp(magic, kMagic, sizeof kMagic) != 0)
      throw CacheError("not an embedding cache file (bad magic)");
    const std::uint32_t version = r.u32();
    if (version != kVersion)
      throw CacheError("unsupported cache version " + std::to_string(version));
    ItemEmbeddingCache cache;
    cache.fingerprint = r.u64();
    cache.d = static_cast<int>(r.u64());
    if (cache.d < 1) throw CacheError("cache embedding width invalid");
    const std::uint64_t count = r.u64();
    for (std::uint64_t i = 0; i < count; ++i) {
      std::string id = r.str();
      std::vector<float> vec(static_cast<std::size_t>(cache.d));
      r.bytes(vec.data(), vec.size() * sizeof(float));
      if (!cache.vectors.emplace(std::move(id), std::move(vec)).second)
        throw CacheError("cache holds a duplicate item id");
    }
    char footer[8];
    r.bytes(footer, sizeof footer);
    if (std::memcmp(footer, kFooter, sizeof kFooter) != 0)
      throw CacheError("cache footer corrupted");
    std::fclose(f);
    return cache;
  } catch (...) {
    std::fclose(f);
    throw;
  }
}

ItemEmbeddingCache load_cache(const std::string& path, std::uint64_t expected_fingerprint) {
  ItemEmbeddingCache cache = load_cache(path);
  if (cache.fingerprint != expected_fingerprint)
    throw CacheError("cache was built by different model parameters");
  return cache;
}

// ------------------------------------------------- assembly from the cache

model::SizeDistribution predict_from_cache(const std::vector<HistoryRef>& history,
                                           const data::Item& target, long target_day,
                                           const ItemEmbeddingCache& cache,
                                           const model::ModelParams& params,
                                           const model::ModelConfig& cfg,
                                           const bpe::BpeVocab& vocab,
                                           const data::AttributeRegistry& reg) {
  if (history.empty()) throw std::invalid_argument("predict_from_cache: example without history");
  if (cache.d != cfg.d) throw CacheError("cache embedding width does not match the model");
  const int H = cfg.history_len;
  const int d = cfg.d;
  const int provided = static_cast<int>(history.size());
  const int len = std::min(provided, H);
  const int skip = provided - len;  // drop the oldest beyond the window

  nn::Tensor hist_embs({1, H, d});
  std::vector<int> temporal_ids(static_cast<std::size_t>(H), 0);
  for (int i = 0; i < len; ++i) {
    const HistoryRef& h = history[static_cast<std::size_t>(skip + i)];
    const std::vector<float>& vec = cache.at(h.item_id);
    std::memcpy(&hist_embs.data[static_cast<std::size_t>(i) * d], vec.data(),
                sizeof(float) * static_cast<std::size_t>(d));
    temporal_ids[static_cast<std::size_t>(i)] =
        model::temporal_id(h.purchase_day, target_day, cfg.n_temporal_ids);
  }

  const nn::Tensor ctx_vec = model::embed_item(target, params, cfg, vocab, reg, true);
  nn::Tensor ctx_embs({1, d});
  std::memcpy(ctx_embs.data.data(), ctx_vec.data.data(), sizeof(float) * static_cast<std::size_t>(d));

  const nn::Tensor logits =
      model::head_forward(hist_embs, {len}, temporal_ids, ctx_embs, params, cfg);
  const nn::Tensor probs = nn::softmax(logits);
  model::SizeDistribution out;
  out.probs.assign(probs.data.begin(), probs.data.end());
  return out;
}

model::SizeDistribution predict_from_cache(const data::Dataset& ds,
                                           const data::TrainingExample& ex,
                                           const ItemEmbeddingCache& cache,
                                           const model::ModelParams& params,
                                           const model::ModelConfig& cfg,
                                           const bpe::BpeVocab& vocab,
                                           const data::AttributeRegistry& reg) {
  std::vector<HistoryRef> history;
  history.reserve(static_cast<std::size_t>(ex.history_len()));
  for (int i = 0; i < ex.history_len(); ++i) {
    const data::Purchase& p = ds.history_at(ex, i);
    history.push_back({p.item.item_id, p.purchase_day});
  }
  return predict_from_cache(history, ds.target_of(ex).item, ex.target_day, cache, params, cfg,
                            vocab, reg);
}

}  // namespace presize::features
