// SPDX-License-Identifier: Apache-2.0

#include "presize/data.hpp"

#include <algorithm>
#include <fstream>
#include <iostream>

#include <json.hpp>

namespace presize::data {

namespace {

using nlohmann::json;

std::string canon_label(const std::string& raw) {
  std::string out;
  out.reserve(raw.size());
  bool pending_space = false;
  for (const char ch : raw) {
    const unsigned char c = static_cast<unsigned char>(ch);
    if (c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v') {
      if (!out.empty()) pending_space = true;
      continue;
    }
    if (pending_space) {
      out.push_back(' ');
      pending_space = false;
    }
    out.push_back(c >= 'A' && c <= 'Z' ? static_cast<char>(c - 'A' + 'a') : ch);
  }
  return out;
}

// Chains like a->b, b->c collapse to a->c; cycles and stoplisted or
// non-canonical targets are configuration mistakes.
void validate_and_resolve(NormalizerConfig& cfg, const std::string& origin) {
  std::map<std::string, std::string> resolved;
  for (const auto& [key, value] : cfg.synonyms) {
    if (cfg.stoplist.count(key))
      throw ConfigError(origin + ": synonym key '" + key + "' is also stoplisted");
    std::string cur = value;
    std::size_t hops = 0;
    while (true) {
      if (cur == key)
        throw ConfigError(origin + ": synonym cycle through '" + key + "'");
      const auto it = cfg.synonyms.find(cur);
      if (it == cfg.synonyms.end()) break;
      cur = it->second;
      if (++hops > cfg.synonyms.size())
        throw ConfigError(origin + ": synonym cycle through '" + key + "'");
    }
    if (canon_label(cur) != cur)
      throw ConfigError(origin + ": synonym target '" + cur + "' is not canonical");
    if (cfg.stoplist.count(cur))
      throw ConfigError(origin + ": synonym target '" + cur + "' is stoplisted");
    resolved[key] = cur;
  }
  cfg.synonyms = std::move(resolved);
}

std::string join_path(const std::vector<std::string>& path) {
  std::string key;
  for (const auto& p : path) {
    key += p;
    key.push_back('\x1f');
  }
  return key;
}

}  // namespace

// ------------------------------------------------------------- attributes

AttributeRegistry AttributeRegistry::defaults() {
  AttributeRegistry reg;
  reg.names = {"",        "title",   "category", "size",   "department",
               "brand type", "style", "material", "type",  "brand",
               "occasion", "manufacture country", "fabric type", "season", "gender"};
  for (int i = 1; i < static_cast<int>(reg.names.size()); ++i)
    reg.id_by_name.emplace(reg.names[static_cast<std::size_t>(i)], i);
  reg.maskable = {"title", "size"};
  return reg;
}

int AttributeRegistry::id_of(const std::string& name) const {
  const auto it = id_by_name.find(name);
  if (it == id_by_name.end())
    throw RegistryError("attribute name '" + name + "' is not registered");
  return it->second;
}

const std::string* Item::find_attribute(const std::string& name) const {
  for (const auto& a : attributes)
    if (a.name == name) return &a.value;
  return nullptr;
}

// ---------------------------------------------------------- normalization

NormalizerConfig NormalizerConfig::defaults() {
  NormalizerConfig cfg;
  cfg.synonyms = {
      {"extra small", "xs"},       {"x-small", "xs"},
      {"x small", "xs"},           {"xsmall", "xs"},
      {"small", "s"},              {"medium", "m"},
      {"large", "l"},              {"extra large", "xl"},
      {"x-large", "xl"},           {"x large", "xl"},
      {"xlarge", "xl"},            {"xxl", "2xl"},
      {"xx-large", "2xl"},         {"xx large", "2xl"},
      {"extra extra large", "2xl"}, {"xxxl", "3xl"},
      {"xxx large", "3xl"},        {"xxx-large", "3xl"},
  };
  cfg.stoplist = {"one size", "fits all", "one size fits all", "not applicable",
                  "n/a",      "na",       "unknown",           "none",
                  "various",  "multi",    "multicolor",        "see description",
                  "osfa",     "os"};
  validate_and_resolve(cfg, "default normalizer");
  return cfg;
}

NormalizerConfig NormalizerConfig::from_files(const std::string& synonyms_path,
                                              const std::string& stoplist_path) {
  NormalizerConfig cfg;
  std::ifstream syn(synonyms_path);
  if (!syn) throw IoError("cannot read synonym table " + synonyms_path);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(syn, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos)
      throw ParseError(synonyms_path + ":" + std::to_string(lineno) +
                       ": expected FROM<TAB>TO");
    const std::string from = canon_label(line.substr(0, tab));
    const std::string to = canon_label(line.substr(tab + 1));
    if (from.empty() || to.empty())
      throw ParseError(synonyms_path + ":" + std::to_string(lineno) + ": empty side");
    cfg.synonyms[from] = to;
  }
  std::ifstream stop(stoplist_path);
  if (!stop) throw IoError("cannot read stoplist " + stoplist_path);
  lineno = 0;
  while (std::getline(stop, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    const std::string entry = canon_label(line);
    if (!entry.empty()) cfg.stoplist.insert(entry);
  }
  validate_and_resolve(cfg, synonyms_path);
  return cfg;
}

std::optional<std::string> normalize_size_label(const std::string& raw,
                                                const NormalizerConfig& cfg) {
  std::string c = canon_label(raw);
  if (c.empty()) return std::nullopt;
  const auto it = cfg.synonyms.find(c);
  if (it != cfg.synonyms.end()) c = it->second;
  if (cfg.stoplist.count(c)) return std::nullopt;
  return c;
}

// -------------------------------------------------------------- filtering

std::vector<PurchaseHistory> filter_dataset(const std::vector<PurchaseHistory>& histories,
                                            const FilterConfig& cfg) {
  std::map<std::string, std::map<std::string, long>> label_counts;
  std::map<std::string, long> totals;
  for (const auto& h : histories)
    for (const auto& p : h.purchases) {
      const std::string key = join_path(p.item.category_path);
      ++label_counts[key][p.size_label];
      ++totals[key];
    }

  std::vector<PurchaseHistory> out;
  for (const auto& h : histories) {
    PurchaseHistory kept;
    kept.buyer_id = h.buyer_id;
    for (const auto& p : h.purchases) {
      const std::string key = join_path(p.item.category_path);
      const long count = label_counts[key][p.size_label];
      const double share = static_cast<double>(count) / static_cast<double>(totals[key]);
      if (count >= cfg.min_count && share >= cfg.min_frac) kept.purchases.push_back(p);
    }
    if (static_cast<int>(kept.purchases.size()) >= cfg.min_purchases && !kept.purchases.empty())
      out.push_back(std::move(kept));
  }
  if (out.empty()) throw EmptyDatasetError("no purchases survive filtering");
  return out;
}

// ------------------------------------------------------------- vocabulary

int SizeVocabulary::id_of(const std::string& label) const {
  const auto it = ids.find(label);
  return it == ids.end() ? -1 : it->second;
}

const std::string& SizeVocabulary::label_of(int id) const {
  return labels.at(static_cast<std::size_t>(id));
}

SizeVocabulary build_size_vocab(const std::vector<PurchaseHistory>& histories) {
  std::map<std::string, long> counts;
  for (const auto& h : histories)
    for (const auto& p : h.purchases) ++counts[p.size_label];

  std::vector<std::pair<std::string, long>> order(counts.begin(), counts.end());
  std::sort(order.begin(), order.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });

  SizeVocabulary vocab;
  vocab.labels.reserve(order.size());
  for (const auto& [label, count] : order) {
    vocab.ids.emplace(label, static_cast<int>(vocab.labels.size()));
    vocab.labels.push_back(label);
  }
  return vocab;
}

// ----------------------------------------------------------- category tree

int CategoryTree::insert_path(const std::vector<std::string>& path) {
  int node = 0;
  for (const auto& part : path) {
    auto& kids = children_[static_cast<std::size_t>(node)];
    const auto it = kids.find(part);
    if (it != kids.end()) {
      node = it->second;
      continue;
    }
    const int child = node_count();
    kids.emplace(part, child);
    parents_.push_back(node);
    names_.push_back(part);
    children_.emplace_back();
    node = child;
  }
  return node;
}

int CategoryTree::find_path(const std::vector<std::string>& path) const {
  int node = 0;
  for (const auto& part : path) {
    const auto& kids = children_[static_cast<std::size_t>(node)];
    const auto it = kids.find(part);
    if (it == kids.end()) return -1;
    node = it->second;
  }
  return node;
}

int CategoryTree::deepest_prefix(const std::vector<std::string>& path) const {
  int node = 0;
  for (const auto& part : path) {
    const auto& kids = children_[static_cast<std::size_t>(node)];
    const auto it = kids.find(part);
    if (it == kids.end()) break;
    node = it->second;
  }
  return node;
}

// ---------------------------------------------------------------- examples

std::vector<TrainingExample> build_examples(const PurchaseHistory& history, int buyer_index,
                                            const SizeVocabulary& vocab, int max_history) {
  std::vector<TrainingExample> out;
  const int n = static_cast<int>(history.purchases.size());
  for (int j = 1; j < n; ++j) {
    const Purchase& target = history.purchases[static_cast<std::size_t>(j)];
    const int label = vocab.id_of(target.size_label);
    if (label < 0)
      throw std::out_of_range("size label '" + target.size_label +
                              "' missing from vocabulary (filter before building examples)");
    TrainingExample ex;
    ex.buyer = buyer_index;
    ex.target = j;
    ex.hist_begin = std::max(0, j - max_history);
    ex.target_day = target.purchase_day;
    ex.label_id = label;
    out.push_back(ex);
  }
  return out;
}

Dataset prepare_dataset(std::vector<PurchaseHistory> histories, const FilterConfig& cfg) {
  Dataset ds;
  ds.histories = filter_dataset(histories, cfg);
  ds.vocab = build_size_vocab(ds.histories);
  return ds;
}

ExampleSplit split_temporal(const Dataset& ds, int test_days, int val_days, int max_history) {
  ExampleSplit split;
  for (const auto& h : ds.histories)
    for (const auto& p : h.purchases) split.max_day = std::max(split.max_day, p.purchase_day);

  const long test_lo = split.max_day - test_days;                // exclusive
  const long val_lo = split.max_day - test_days - val_days;      // exclusive
  for (int b = 0; b < static_cast<int>(ds.histories.size()); ++b) {
    for (auto& ex : build_examples(ds.histories[static_cast<std::size_t>(b)], b, ds.vocab,
                                   max_history)) {
      if (ex.target_day > test_lo)
        split.test.push_back(ex);
      else if (ex.target_day > val_lo)
        split.val.push_back(ex);
      else
        split.train.push_back(ex);
    }
  }
  if (split.train.empty()) std::cerr << "warning: empty train split\n";
  if (split.val.empty()) std::cerr << "warning: empty val split\n";
  if (split.test.empty()) std::cerr << "warning: empty test split\n";
  return split;
}

// -------------------------------------------------------------------- io

LoadResult load_jsonl(const std::string& path, const NormalizerConfig& norm,
                      const AttributeRegistry& reg) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open dataset " + path);

  std::map<std::string, std::vector<Purchase>> by_buyer;
  LoadResult result;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty()) continue;
    ++result.total_rows;
    const std::string where = path + ":" + std::to_string(lineno);

    json row;
    try {
      row = json::parse(line);
    } catch (const json::exception& e) {
      throw ParseError(where + ": invalid json: " + e.what());
    }
    try {
      Purchase p;
      p.item.item_id = row.at("item_id").get<std::string>();
      const std::string buyer_id = row.at("buyer_id").get<std::string>();
      p.purchase_day = row.at("day").get<long>();
      if (p.purchase_day < 0) throw ParseError(where + ": negative day");
      p.item.category_path = row.at("category_path").get<std::vector<std::string>>();
      if (p.item.category_path.empty()) throw ParseError(where + ": empty category_path");

      const json& attrs = row.at("attributes");
      if (!attrs.is_object()) throw ParseError(where + ": attributes must be an object");
      for (const auto& [name, value] : attrs.items()) {
        if (name == "category")
          throw ParseError(where + ": 'category' is derived from category_path");
        if (!reg.contains(name))
          throw RegistryError(where + ": attribute name '" + name + "' is not registered");
        p.item.attributes.push_back({name, value.get<std::string>()});
      }
      if (!p.item.find_attribute("title")) throw ParseError(where + ": title missing");

      if (row.contains("available_sizes")) {
        for (const auto& s : row.at("available_sizes")) {
          if (auto n = normalize_size_label(s.get<std::string>(), norm))
            p.item.available_sizes.push_back(*n);
        }
        std::sort(p.item.available_sizes.begin(), p.item.available_sizes.end());
        p.item.available_sizes.erase(
            std::unique(p.item.available_sizes.begin(), p.item.available_sizes.end()),
            p.item.available_sizes.end());
      }

      const std::string* size_attr = p.item.find_attribute("size");
      std::optional<std::string> label =
          size_attr ? normalize_size_label(*size_attr, norm) : std::nullopt;
      if (!label) {
        ++result.dropped_unlabeled;
        continue;
      }
      p.size_label = *label;
      by_buyer[buyer_id].push_back(std::move(p));
    } catch (const json::exception& e) {
      throw ParseError(where + ": " + e.what());
    }
  }

  result.histories.reserve(by_buyer.size());
  for (auto& [buyer_id, purchases] : by_buyer) {
    PurchaseHistory h;
    h.buyer_id = buyer_id;
    h.purchases = std::move(purchases);
    std::sort(h.purchases.begin(), h.purchases.end(), [](const Purchase& a, const Purchase& b) {
      if (a.purchase_day != b.purchase_day) return a.purchase_day < b.purchase_day;
      return a.item.item_id < b.item.item_id;
    });
    result.histories.push_back(std::move(h));
  }
  return result;
}

void save_jsonl(const std::string& path, const std::vector<PurchaseHistory>& histories) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write dataset " + path);
  for (const auto& h : histories) {
    for (const auto& p : h.purchases) {
      json row;
      row["buyer_id"] = h.buyer_id;
      row["item_id"] = p.item.item_id;
      row["day"] = p.purchase_day;
      row["category_path"] = p.item.category_path;
      json attrs = json::object();
      for (const auto& a : p.item.attributes) attrs[a.name] = a.value;
      row["attributes"] = std::move(attrs);
      if (!p.item.available_sizes.empty()) row["available_sizes"] = p.item.available_sizes;
      f << row.dump() << "\n";
    }
  }
  if (!f) throw IoError("short write to " + path);
}

}  // namespace presize::data
