// SPDX-License-Identifier: Apache-2.0
//
// Domain types for purchases and histories, label normalization and
// filtering, the size vocabulary, category tree, temporal splits, and
// training-example construction. All operations here are pure; types are
// treated as immutable once the dataset is assembled.

#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "presize/errors.hpp"

namespace presize::data {

struct RegistryError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct EmptyDatasetError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// ------------------------------------------------------------- attributes

struct AttributePair {
  std::string name;
  std::string value;
};

/// Closed set of attribute names. Id 0 is reserved for padding; the
/// serialized pseudo-attributes "title" and "category" come first so their
/// ids are stable across configurations.
struct AttributeRegistry {
  std::vector<std::string> names;  // index == id; names[0] is ""
  std::unordered_map<std::string, int> id_by_name;
  std::set<std::string> maskable;  // omitted from the masked context encoding

  static AttributeRegistry defaults();

  int id_of(const std::string& name) const;  // RegistryError on unknown
  bool contains(const std::string& name) const { return id_by_name.count(name) > 0; }
  bool is_maskable(const std::string& name) const { return maskable.count(name) > 0; }
  int size() const { return static_cast<int>(names.size()); }
};

// ------------------------------------------------------------------ items

struct Item {
  std::string item_id;
  std::vector<std::string> category_path;  // root -> leaf, non-empty
  std::vector<AttributePair> attributes;   // at most one value per name
  std::vector<std::string> available_sizes;  // normalized; may be empty

  /// nullptr when the attribute is absent.
  const std::string* find_attribute(const std::string& name) const;
};

struct Purchase {
  Item item;
  long purchase_day = 0;   // days since epoch, >= 0
  std::string size_label;  // normalized value of the general size attribute
};

struct PurchaseHistory {
  std::string buyer_id;
  std::vector<Purchase> purchases;  // ascending (purchase_day, item_id)
};

// ---------------------------------------------------------- normalization

struct NormalizerConfig {
  std::map<std::string, std::string> synonyms;  // canonical -> canonical
  std::set<std::string> stoplist;

  static NormalizerConfig defaults();
  /// Tab-separated "from<TAB>to" synonym lines and one-per-line stoplist;
  /// '#' starts a comment. Synonym chains are resolved transitively at
  /// load; cycles and stoplisted targets are config errors.
  static NormalizerConfig from_files(const std::string& synonyms_path,
                                     const std::string& stoplist_path);
};

/// Lowercase, trim, collapse internal whitespace, map through the synonym
/// table, and drop stoplisted values. Idempotent. Empty result from an
/// all-whitespace input is treated as uninformative.
std::optional<std::string> normalize_size_label(const std::string& raw,
                                                const NormalizerConfig& cfg);

// -------------------------------------------------------------- filtering

struct FilterConfig {
  int min_purchases = 5;   // buyers below this are dropped
  long min_count = 500;    // per-category label count floor
  double min_frac = 0.01;  // per-category label share floor
};

/// Per-category label filter (count >= min_count AND share >= min_frac over
/// the purchases of that exact category path), then the buyer minimum.
/// Throws EmptyDatasetError when nothing survives.
std::vector<PurchaseHistory> filter_dataset(const std::vector<PurchaseHistory>& histories,
                                            const FilterConfig& cfg);

// ------------------------------------------------------------- vocabulary

struct SizeVocabulary {
  std::vector<std::string> labels;  // id -> label
  std::unordered_map<std::string, int> ids;

  int n_classes() const { return static_cast<int>(labels.size()); }
  /// -1 when the label is unknown.
  int id_of(const std::string& label) const;
  const std::string& label_of(int id) const;  // std::out_of_range on bad id
};

/// Ids by descending purchase frequency, ties broken lexicographically.
SizeVocabulary build_size_vocab(const std::vector<PurchaseHistory>& histories);

// ----------------------------------------------------------- category tree

/// Prefix tree over category paths. Node 0 is the root (empty path); every
/// prefix of an inserted path exists as a node. Consumers attach per-node
/// statistics in arrays indexed by node id.
class CategoryTree {
 public:
  CategoryTree() : parents_{-1}, names_{""}, children_(1) {}

  int root() const { return 0; }
  int node_count() const { return static_cast<int>(parents_.size()); }
  int parent(int node) const { return parents_.at(static_cast<std::size_t>(node)); }
  const std::string& name(int node) const { return names_.at(static_cast<std::size_t>(node)); }

  /// Creates missing prefix nodes; returns the leaf node id.
  int insert_path(const std::vector<std::string>& path);
  /// -1 when the exact path was never inserted.
  int find_path(const std::vector<std::string>& path) const;
  /// Deepest existing node on the path (root when nothing matches).
  int deepest_prefix(const std::vector<std::string>& path) const;

 private:
  std::vector<int> parents_;
  std::vector<std::string> names_;
  std::vector<std::map<std::string, int>> children_;
};

// ---------------------------------------------------------------- examples

struct TrainingExample {
  int buyer = 0;       // index into the histories vector
  int target = 0;      // purchase index within the buyer
  int hist_begin = 0;  // history = purchases [hist_begin, target)
  long target_day = 0;
  int label_id = 0;

  int history_len() const { return target - hist_begin; }
};

/// One example per purchase with at least one strictly earlier purchase;
/// history is the up-to-max_history most recent prior purchases.
std::vector<TrainingExample> build_examples(const PurchaseHistory& history, int buyer_index,
                                            const SizeVocabulary& vocab, int max_history = 25);

struct Dataset {
  std::vector<PurchaseHistory> histories;
  SizeVocabulary vocab;

  const PurchaseHistory& buyer_of(const TrainingExample& ex) const {
    return histories.at(static_cast<std::size_t>(ex.buyer));
  }
  const Purchase& target_of(const TrainingExample& ex) const {
    return buyer_of(ex).purchases.at(static_cast<std::size_t>(ex.target));
  }
  const Purchase& history_at(const TrainingExample& ex, int i) const {
    return buyer_of(ex).purchases.at(static_cast<std::size_t>(ex.hist_begin + i));
  }
};

/// Filter + vocabulary assembly.
Dataset prepare_dataset(std::vector<PurchaseHistory> histories, const FilterConfig& cfg);

struct ExampleSplit {
  std::vector<TrainingExample> train, val, test;
  long max_day = 0;
};

/// Temporal split keyed solely by target_day: test = (D-test_days, D],
/// val = (D-test_days-val_days, D-test_days], train = the rest, where D is
/// the latest purchase day in the dataset. Empty splits warn on stderr.
ExampleSplit split_temporal(const Dataset& ds, int test_days = 5, int val_days = 5,
                            int max_history = 25);

// -------------------------------------------------------------------- io

struct LoadResult {
  std::vector<PurchaseHistory> histories;
  long long total_rows = 0;
  long long dropped_unlabeled = 0;  // missing size attribute or stoplisted label
};

/// Line-delimited records: {"buyer_id", "item_id", "day", "category_path":
/// [..], "attributes": {name: value}, "available_sizes": [..] (optional)}.
/// Attribute names must belong to the registry; title must be present.
/// Purchases whose size label normalizes to absent are dropped. Purchases
/// are grouped per buyer and sorted by (day, item_id).
LoadResult load_jsonl(const std::string& path, const NormalizerConfig& norm,
                      const AttributeRegistry& reg);

void save_jsonl(const std::string& path, const std::vector<PurchaseHistory>& histories);

}  // namespace presize::data
