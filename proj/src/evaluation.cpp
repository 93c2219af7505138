// SPDX-License-Identifier: Apache-2.0

#include "presize/evaluation.hpp"

#include <cstdio>
#include <stdexcept>

#include <json.hpp>

#include "presize/bpe.hpp"

namespace presize::eval {

Metrics compute_metrics(const std::vector<int>& pred_labels,
                        const std::vector<int>& true_labels, int n_classes) {
  if (true_labels.empty()) throw data::EmptyDatasetError("compute_metrics: no examples");
  if (pred_labels.size() != true_labels.size())
    throw std::invalid_argument("compute_metrics: one prediction per truth");
  if (n_classes < 1) throw std::invalid_argument("compute_metrics: n_classes must be positive");

  std::vector<long long> tp(static_cast<std::size_t>(n_classes), 0);
  std::vector<long long> fp(static_cast<std::size_t>(n_classes), 0);
  std::vector<long long> fn(static_cast<std::size_t>(n_classes), 0);
  Metrics m;
  m.n_examples = static_cast<long long>(true_labels.size());
  m.support.assign(static_cast<std::size_t>(n_classes), 0);

  for (std::size_t i = 0; i < true_labels.size(); ++i) {
    const int t = true_labels[i], p = pred_labels[i];
    if (t < 0 || t >= n_classes || p < 0 || p >= n_classes)
      throw std::invalid_argument("compute_metrics: label outside [0, n_classes)");
    ++m.support[static_cast<std::size_t>(t)];
    if (t == p) {
      ++tp[static_cast<std::size_t>(t)];
    } else {
      ++fp[static_cast<std::size_t>(p)];
      ++fn[static_cast<std::size_t>(t)];
    }
  }

  long long tp_total = 0, fp_total = 0, fn_total = 0;
  for (int c = 0; c < n_classes; ++c) {
    tp_total += tp[static_cast<std::size_t>(c)];
    fp_total += fp[static_cast<std::size_t>(c)];
    fn_total += fn[static_cast<std::size_t>(c)];
  }
  m.micro_precision = static_cast<double>(tp_total) / static_cast<double>(m.n_examples);
  // Single-label data: every miss is one false positive and one false
  // negative, so micro precision, recall, and F1 coincide.
  if (fp_total != fn_total)
    throw std::logic_error("compute_metrics: micro precision/recall diverged");

  int included = 0;
  double psum = 0.0, rsum = 0.0, fsum = 0.0;
  for (int c = 0; c < n_classes; ++c) {
    const auto ci = static_cast<std::size_t>(c);
    if (m.support[ci] == 0) continue;
    ++included;
    const long long denom_p = tp[ci] + fp[ci];
    const double p = denom_p > 0 ? static_cast<double>(tp[ci]) / static_cast<double>(denom_p)
                                 : 0.0;
    const double r = static_cast<double>(tp[ci]) / static_cast<double>(m.support[ci]);
    const double f1 = (p + r) > 0.0 ? 2.0 * p * r / (p + r) : 0.0;
    psum += p;
    rsum += r;
    fsum += f1;
  }
  m.macro_precision = psum / included;
  m.macro_recall = rsum / included;
  m.macro_f1 = fsum / included;
  return m;
}

// ---------------------------------------------------------------- mapping

CategoryMapping CategoryMapping::defaults() {
  CategoryMapping m;
  for (const char* s : {"men", "mens"}) m.department_by_segment[s] = "mens";
  for (const char* s : {"women", "womens"}) m.department_by_segment[s] = "womens";
  for (const char* s : {"kid", "kids", "boys", "girls", "baby"})
    m.department_by_segment[s] = "kids";
  m.department_by_segment["unisex"] = "unisex";

  for (const char* s : {"tops", "shirts", "tees", "sweaters"})
    m.item_type_by_segment[s] = "tops";
  for (const char* s : {"bottoms", "pants", "jeans", "shorts"})
    m.item_type_by_segment[s] = "bottoms";
  for (const char* s : {"dress", "dresses", "skirt", "skirts"})
    m.item_type_by_segment[s] = "dress-skirt";
  for (const char* s : {"footwear", "shoes", "boots", "sneakers"})
    m.item_type_by_segment[s] = "footwear";
  return m;
}

std::string CategoryMapping::department_of(const data::Item& item) const {
  if (!item.category_path.empty()) {
    const auto it = department_by_segment.find(bpe::lowercase_ascii(item.category_path[0]));
    if (it != department_by_segment.end()) return it->second;
  }
  return "unisex";
}

std::string CategoryMapping::item_type_of(const data::Item& item) const {
  for (const auto& seg : item.category_path) {
    const auto it = item_type_by_segment.find(bpe::lowercase_ascii(seg));
    if (it != item_type_by_segment.end()) return it->second;
  }
  return "other";
}

// ------------------------------------------------------------- accounts

std::string gender_name(GenderType g) {
  switch (g) {
    case GenderType::kMenOnly: return "men-only";
    case GenderType::kWomenOnly: return "women-only";
    case GenderType::kMixed: return "mixed-gender";
    default: return "undetermined-gender";
  }
}

std::string age_name(AgeType a) {
  switch (a) {
    case AgeType::kAdultOnly: return "adult-only";
    case AgeType::kKidsOnly: return "kids-only";
    case AgeType::kMixed: return "mixed-age";
    default: return "undetermined-age";
  }
}

std::pair<GenderType, AgeType> classify_account(std::span<const data::Purchase> history,
                                                const CategoryMapping& mapping) {
  long long men = 0, women = 0, kids = 0, adult = 0;
  for (const auto& p : history) {
    const std::string dept = mapping.department_of(p.item);
    if (dept == "mens") ++men;
    if (dept == "womens") ++women;
    if (dept == "kids")
      ++kids;
    else
      ++adult;  // unisex counts as adult wear
  }
  GenderType g = GenderType::kUndetermined;
  if (men > 0 && women > 0)
    g = GenderType::kMixed;
  else if (men > 0)
    g = GenderType::kMenOnly;
  else if (women > 0)
    g = GenderType::kWomenOnly;
  AgeType a = AgeType::kUndetermined;
  if (adult > 0 && kids > 0)
    a = AgeType::kMixed;
  else if (adult > 0)
    a = AgeType::kAdultOnly;
  else if (kids > 0)
    a = AgeType::kKidsOnly;
  return {g, a};
}

// --------------------------------------------------------------- slicing

namespace {

struct SlicePairs {
  std::vector<int> preds, truths;
};

SliceGroup finish_group(const std::string& axis, const std::vector<std::string>& order,
                        std::map<std::string, SlicePairs>& buckets, int n_classes) {
  SliceGroup g;
  g.axis = axis;
  for (const auto& name : order) {
    const auto it = buckets.find(name);
    if (it == buckets.end() || it->second.truths.empty()) {
      g.omitted.push_back(name);
      continue;
    }
    g.slices.emplace_back(name,
                          compute_metrics(it->second.preds, it->second.truths, n_classes));
  }
  return g;
}

}  // namespace

EvalReport slice_evaluate(const data::Dataset& ds,
                          const std::vector<data::TrainingExample>& examples,
                          const std::vector<int>& pred_labels,
                          const CategoryMapping& mapping) {
  if (examples.empty()) throw data::EmptyDatasetError("slice_evaluate: no examples");
  if (pred_labels.size() != examples.size())
    throw std::invalid_argument("slice_evaluate: one prediction per example");
  const int n_classes = ds.vocab.n_classes();

  static const std::vector<std::string> kDepartments = {"mens", "womens", "unisex", "kids"};
  static const std::vector<std::string> kItemTypes = {"tops", "bottoms", "dress-skirt",
                                                      "footwear", "other"};
  static const std::vector<std::string> kNovelty = {"novel", "observed"};
  static const std::vector<std::string> kGenders = {"men-only", "women-only", "mixed-gender",
                                                    "undetermined-gender"};
  static const std::vector<std::string> kAges = {"adult-only", "kids-only", "mixed-age",
                                                 "undetermined-age"};

  std::map<std::string, SlicePairs> by_dept, by_type, by_dept_novel, by_type_novel, by_gender,
      by_age;
  std::vector<int> truths;
  truths.reserve(examples.size());

  for (std::size_t i = 0; i < examples.size(); ++i) {
    const auto& ex = examples[i];
    const int pred = pred_labels[i];
    truths.push_back(ex.label_id);

    const data::Item& target = ds.target_of(ex).item;
    const auto& purchases = ds.buyer_of(ex).purchases;
    const std::span<const data::Purchase> hist =
        std::span<const data::Purchase>(purchases).subspan(
            static_cast<std::size_t>(ex.hist_begin), static_cast<std::size_t>(ex.history_len()));

    const std::string dept = mapping.department_of(target);
    const std::string type = mapping.item_type_of(target);
    bool dept_seen = false, type_seen = false;
    for (const auto& p : hist) {
      dept_seen = dept_seen || mapping.department_of(p.item) == dept;
      type_seen = type_seen || mapping.item_type_of(p.item) == type;
    }
    const auto [gender, age] = classify_account(hist, mapping);

    const auto push = [&](std::map<std::string, SlicePairs>& buckets, const std::string& key) {
      buckets[key].preds.push_back(pred);
      buckets[key].truths.push_back(ex.label_id);
    };
    push(by_dept, dept);
    push(by_type, type);
    push(by_dept_novel, dept_seen ? "observed" : "novel");
    push(by_type_novel, type_seen ? "observed" : "novel");
    push(by_gender, gender_name(gender));
    push(by_age, age_name(age));
  }

  EvalReport report;
  report.overall = compute_metrics(pred_labels, truths, n_classes);
  report.groups.push_back(finish_group("department", kDepartments, by_dept, n_classes));
  report.groups.push_back(finish_group("item-type", kItemTypes, by_type, n_classes));
  report.groups.push_back(
      finish_group("department-novelty", kNovelty, by_dept_novel, n_classes));
  report.groups.push_back(finish_group("item-type-novelty", kNovelty, by_type_novel, n_classes));
  report.groups.push_back(finish_group("account-gender", kGenders, by_gender, n_classes));
  report.groups.push_back(finish_group("account-age", kAges, by_age, n_classes));
  return report;
}

// -------------------------------------------------------------- reports

namespace {

void metrics_line(std::string& out, const std::string& name, const Metrics& m, int indent) {
  char buf[192];
  std::snprintf(buf, sizeof buf, "%*s%-20s n=%-7lld micro_p=%.4f macro_p=%.4f macro_r=%.4f macro_f1=%.4f\n",
                indent, "", name.c_str(), m.n_examples, m.micro_precision, m.macro_precision,
                m.macro_recall, m.macro_f1);
  out += buf;
}

}  // namespace

std::string report_text(const EvalReport& report) {
  std::string out;
  metrics_line(out, "overall", report.overall, 0);
  for (const auto& g : report.groups) {
    out += "[" + g.axis + "]\n";
    for (const auto& [name, m] : g.slices) metrics_line(out, name, m, 2);
    for (const auto& name : g.omitted) out += "  " + name + ": no examples\n";
  }
  return out;
}

namespace {

nlohmann::json metrics_json(const Metrics& m) {
  return {{"n", m.n_examples},
          {"micro_precision", m.micro_precision},
          {"macro_precision", m.macro_precision},
          {"macro_recall", m.macro_recall},
          {"macro_f1", m.macro_f1}};
}

}  // namespace

std::string report_json(const EvalReport& report) {
  nlohmann::json j;
  j["overall"] = metrics_json(report.overall);
  j["overall"]["support"] = report.overall.support;
  j["groups"] = nlohmann::json::array();
  for (const auto& g : report.groups) {
    nlohmann::json jg;
    jg["axis"] = g.axis;
    jg["slices"] = nlohmann::json::object();
    for (const auto& [name, m] : g.slices) jg["slices"][name] = metrics_json(m);
    jg["omitted"] = g.omitted;
    j["groups"].push_back(jg);
  }
  return j.dump(2);
}

}  // namespace presize::eval
