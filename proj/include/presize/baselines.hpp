// SPDX-License-Identifier: Apache-2.0
//
// Frequency and recency size heuristics with category back-off. All three
// predictors are total: when the preferred evidence is missing they fall
// back to coarser categories and, last, to the global size distribution.

#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "presize/data.hpp"
#include "presize/errors.hpp"
#include "presize/model.hpp"

namespace presize::baselines {

struct BaselinePrediction {
  model::SizeDistribution dist;
  int label = 0;  // class id; argmax ties resolve to the lower id
};

// Per-node size counts over the training targets. A node's row covers its
// whole subtree: each observation increments every node from its deepest
// existing category prefix up to the root, so the root row is the global
// distribution.
struct CategorySizeStats {
  data::CategoryTree tree;
  std::vector<std::vector<long long>> counts;  // [node][class id]
  std::vector<long long> totals;               // [node], row sums of counts
  data::SizeVocabulary vocab;
  int n_classes = 0;
};

/// EmptyDatasetError on an empty training set.
CategorySizeStats build_size_stats(const data::Dataset& ds,
                                   const std::vector<data::TrainingExample>& train_set);

/// Walk from the deepest existing prefix of leaf_path toward the root and
/// return the first node satisfying probe, or -1 when even the root fails.
int backoff_lookup(const data::CategoryTree& tree,
                   const std::vector<std::string>& leaf_path,
                   const std::function<bool(int)>& probe);

/// Most common size in the most granular category with any data;
/// buyer-independent.
BaselinePrediction mcv_predict(const data::Item& item, const CategorySizeStats& stats);

/// Most recent size among the buyer's purchases in the most granular
/// matching category, newest by (day, item id); MCV when the history has
/// no usable size anywhere. dist is one-hot at the winning label.
///
/// History back-off compares raw path prefixes of the target item, so a
/// category absent from the training tree still matches at full depth.
/// Purchases whose size is not in the vocabulary are not evidence.
BaselinePrediction mrv_predict(const data::Item& item,
                               std::span<const data::Purchase> history,
                               const CategorySizeStats& stats);

/// The buyer's own size frequencies in the most granular matching
/// category; MCV on an empty match. Back-off and evidence rules as in
/// mrv_predict.
BaselinePrediction pmcv_predict(const data::Item& item,
                                std::span<const data::Purchase> history,
                                const CategorySizeStats& stats);

enum class BaselineKind { kMcv, kMrv, kPmcv };

/// "mcv" | "mrv" | "pmcv" (ConfigError otherwise).
BaselineKind baseline_from_name(const std::string& name);
std::string baseline_name(BaselineKind kind);

/// The example's history window, the same purchases the model conditions on.
std::span<const data::Purchase> example_history(const data::Dataset& ds,
                                                const data::TrainingExample& ex);

BaselinePrediction baseline_predict(BaselineKind kind, const data::Dataset& ds,
                                    const data::TrainingExample& ex,
                                    const CategorySizeStats& stats);

}  // namespace presize::baselines
