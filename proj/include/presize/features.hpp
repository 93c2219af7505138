// SPDX-License-Identifier: Apache-2.0
//
// Size-aware ranking features and the offline item-embedding cache. The
// cache stores unmasked item embeddings keyed by item id so inference can
// skip the per-item encoder passes; assembly from the cache reproduces the
// end-to-end prediction bit for bit.

#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "presize/bpe.hpp"
#include "presize/data.hpp"
#include "presize/model.hpp"

namespace presize::features {

struct CacheError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// A history item id the cache does not hold.
struct CacheMissError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// ------------------------------------------------------- ranking features

struct SizeFeatures {
  double total_score = 0;  // probability mass on the offered sizes
  double best_score = 0;   // top offered size's probability
  int best_rank = 1;       // 1 + number of sizes scored strictly higher
};

/// total = sum of p over `available`, best = max over `available` (ties
/// pick the lower class id), rank counts classes anywhere in the
/// distribution scored strictly above the best offered one. Duplicate ids
/// in `available` are counted once.
SizeFeatures size_features(const model::SizeDistribution& dist,
                           const std::vector<int>& available);

/// Class ids of the item's offered sizes; labels outside the vocabulary
/// are dropped, duplicates collapse. An item listing nothing (or only
/// unknown labels) offers every size. Ascending.
std::vector<int> available_ids(const data::Item& item, const data::SizeVocabulary& vocab);

/// One dump record as a single JSON line (no trailing newline).
std::string feature_line(const std::string& buyer_id, const std::string& item_id,
                         const SizeFeatures& f);

// ------------------------------------------------------- embedding cache

/// FNV-1a over the model configuration and every parameter byte; any
/// change to weights, shapes, or settings yields a new fingerprint.
std::uint64_t model_fingerprint(const model::ModelParams& params, const model::ModelConfig& cfg);

struct ItemEmbeddingCache {
  std::uint64_t fingerprint = 0;
  int d = 0;
  std::map<std::string, std::vector<float>> vectors;  // item_id -> [d]

  bool contains(const std::string& item_id) const { return vectors.count(item_id) > 0; }
  /// CacheMissError naming the id when absent.
  const std::vector<float>& at(const std::string& item_id) const;
};

/// Unmasked embedding per item, stamped with the producing parameters'
/// fingerprint. An empty item list yields an empty (still valid) cache.
ItemEmbeddingCache build_embedding_cache(const std::vector<data::Item>& items,
                                         const model::ModelParams& params,
                                         const model::ModelConfig& cfg,
                                         const bpe::BpeVocab& vocab,
                                         const data::AttributeRegistry& reg);

/// Versioned binary, written atomically (temp file + rename).
void save_cache(const std::string& path, const ItemEmbeddingCache& cache);
ItemEmbeddingCache load_cache(const std::string& path);
/// Rejects a cache produced by different parameters.
ItemEmbeddingCache load_cache(const std::string& path, std::uint64_t expected_fingerprint);

// ------------------------------------------------- assembly from the cache

struct HistoryRef {
  std::string item_id;
  long purchase_day = 0;
};

/// Prediction with history item embeddings served from the cache; only
/// the buyer and context passes run. Histories longer than
/// cfg.history_len keep the most recent purchases. Bit-identical to
/// predict() on the same inputs.
model::SizeDistribution predict_from_cache(const std::vector<HistoryRef>& history,
                                           const data::Item& target, long target_day,
                                           const ItemEmbeddingCache& cache,
                                           const model::ModelParams& params,
                                           const model::ModelConfig& cfg,
                                           const bpe::BpeVocab& vocab,
                                           const data::AttributeRegistry& reg);

/// Convenience over a dataset example's history window.
model::SizeDistribution predict_from_cache(const data::Dataset& ds,
                                           const data::TrainingExample& ex,
                                           const ItemEmbeddingCache& cache,
                                           const model::ModelParams& params,
                                           const model::ModelConfig& cfg,
                                           const bpe::BpeVocab& vocab,
                                           const data::AttributeRegistry& reg);

}  // namespace presize::features
