// SPDX-License-Identifier: Apache-2.0

#include "presize/baselines.hpp"

#include <algorithm>

namespace presize::baselines {

namespace {

int argmax_low_tie(const std::vector<float>& v) {
  int best = 0;
  for (int i = 1; i < static_cast<int>(v.size()); ++i)
    if (v[i] > v[best]) best = i;
  return best;
}

BaselinePrediction from_counts(const std::vector<long long>& counts, long long total,
                               int n_classes) {
  BaselinePrediction out;
  out.dist.probs.assign(static_cast<std::size_t>(n_classes), 0.0f);
  for (int c = 0; c < n_classes; ++c)
    out.dist.probs[static_cast<std::size_t>(c)] =
        static_cast<float>(static_cast<double>(counts[static_cast<std::size_t>(c)]) /
                           static_cast<double>(total));
  out.label = argmax_low_tie(out.dist.probs);
  return out;
}

// True when path agrees with the query's first k segments.
bool matches_prefix(const std::vector<std::string>& path, const std::vector<std::string>& query,
                    int k) {
  if (static_cast<int>(path.size()) < k) return false;
  for (int i = 0; i < k; ++i)
    if (path[static_cast<std::size_t>(i)] != query[static_cast<std::size_t>(i)]) return false;
  return true;
}

bool newer(const data::Purchase& a, const data::Purchase& b) {
  if (a.purchase_day != b.purchase_day) return a.purchase_day > b.purchase_day;
  return a.item.item_id > b.item.item_id;
}

}  // namespace

CategorySizeStats build_size_stats(const data::Dataset& ds,
                                   const std::vector<data::TrainingExample>& train_set) {
  if (train_set.empty())
    throw data::EmptyDatasetError("build_size_stats: empty training set");
  CategorySizeStats stats;
  stats.vocab = ds.vocab;
  stats.n_classes = ds.vocab.n_classes();
  for (const auto& ex : train_set) {
    const data::Purchase& target = ds.target_of(ex);
    int node = stats.tree.insert_path(target.item.category_path);
    if (stats.tree.node_count() > static_cast<int>(stats.counts.size())) {
      stats.counts.resize(static_cast<std::size_t>(stats.tree.node_count()),
                          std::vector<long long>(static_cast<std::size_t>(stats.n_classes), 0));
      stats.totals.resize(static_cast<std::size_t>(stats.tree.node_count()), 0);
    }
    for (; node >= 0; node = stats.tree.parent(node)) {
      ++stats.counts[static_cast<std::size_t>(node)][static_cast<std::size_t>(ex.label_id)];
      ++stats.totals[static_cast<std::size_t>(node)];
    }
  }
  return stats;
}

int backoff_lookup(const data::CategoryTree& tree, const std::vector<std::string>& leaf_path,
                   const std::function<bool(int)>& probe) {
  for (int node = tree.deepest_prefix(leaf_path); node >= 0; node = tree.parent(node))
    if (probe(node)) return node;
  return -1;
}

BaselinePrediction mcv_predict(const data::Item& item, const CategorySizeStats& stats) {
  const int node = backoff_lookup(stats.tree, item.category_path, [&](int n) {
    return stats.totals[static_cast<std::size_t>(n)] > 0;
  });
  if (node < 0) {
    // Possible only with stats built from nothing; spread evenly.
    BaselinePrediction out;
    out.dist.probs.assign(static_cast<std::size_t>(stats.n_classes),
                          1.0f / static_cast<float>(stats.n_classes));
    out.label = 0;
    return out;
  }
  return from_counts(stats.counts[static_cast<std::size_t>(node)],
                     stats.totals[static_cast<std::size_t>(node)], stats.n_classes);
}

BaselinePrediction mrv_predict(const data::Item& item,
                               std::span<const data::Purchase> history,
                               const CategorySizeStats& stats) {
  for (int k = static_cast<int>(item.category_path.size()); k >= 0; --k) {
    const data::Purchase* latest = nullptr;
    for (const auto& p : history) {
      if (stats.vocab.id_of(p.size_label) < 0) continue;
      if (!matches_prefix(p.item.category_path, item.category_path, k)) continue;
      if (!latest || newer(p, *latest)) latest = &p;
    }
    if (latest) {
      BaselinePrediction out;
      out.label = stats.vocab.id_of(latest->size_label);
      out.dist.probs.assign(static_cast<std::size_t>(stats.n_classes), 0.0f);
      out.dist.probs[static_cast<std::size_t>(out.label)] = 1.0f;
      return out;
    }
  }
  return mcv_predict(item, stats);
}

BaselinePrediction pmcv_predict(const data::Item& item,
                                std::span<const data::Purchase> history,
                                const CategorySizeStats& stats) {
  for (int k = static_cast<int>(item.category_path.size()); k >= 0; --k) {
    std::vector<long long> counts(static_cast<std::size_t>(stats.n_classes), 0);
    long long total = 0;
    for (const auto& p : history) {
      const int label = stats.vocab.id_of(p.size_label);
      if (label < 0) continue;
      if (!matches_prefix(p.item.category_path, item.category_path, k)) continue;
      ++counts[static_cast<std::size_t>(label)];
      ++total;
    }
    if (total > 0) return from_counts(counts, total, stats.n_classes);
  }
  return mcv_predict(item, stats);
}

BaselineKind baseline_from_name(const std::string& name) {
  if (name == "mcv") return BaselineKind::kMcv;
  if (name == "mrv") return BaselineKind::kMrv;
  if (name == "pmcv") return BaselineKind::kPmcv;
  throw ConfigError("unknown baseline '" + name + "' (expected mcv, mrv, or pmcv)");
}

std::string baseline_name(BaselineKind kind) {
  switch (kind) {
    case BaselineKind::kMcv: return "mcv";
    case BaselineKind::kMrv: return "mrv";
    default: return "pmcv";
  }
}

std::span<const data::Purchase> example_history(const data::Dataset& ds,
                                                const data::TrainingExample& ex) {
  const auto& purchases = ds.buyer_of(ex).purchases;
  return std::span<const data::Purchase>(purchases).subspan(
      static_cast<std::size_t>(ex.hist_begin),
      static_cast<std::size_t>(ex.history_len()));
}

BaselinePrediction baseline_predict(BaselineKind kind, const data::Dataset& ds,
                                    const data::TrainingExample& ex,
                                    const CategorySizeStats& stats) {
  const data::Item& item = ds.target_of(ex).item;
  switch (kind) {
    case BaselineKind::kMcv: return mcv_predict(item, stats);
    case BaselineKind::kMrv: return mrv_predict(item, example_history(ds, ex), stats);
    default: return pmcv_predict(item, example_history(ds, ex), stats);
  }
}

}  // namespace presize::baselines
