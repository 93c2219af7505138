// SPDX-License-Identifier: Apache-2.0
//
// Multi-class metrics and sliced reporting: department, item type, novelty
// of each axis relative to the buyer's history, and account type.

#pragma once

#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "presize/data.hpp"
#include "presize/errors.hpp"

namespace presize::eval {

// -------------------------------------------------------------- metrics

struct Metrics {
  double micro_precision = 0.0;  // == accuracy == micro recall == micro F1
  double macro_precision = 0.0;
  double macro_recall = 0.0;
  double macro_f1 = 0.0;
  long long n_examples = 0;
  std::vector<long long> support;  // per-class truth counts; sums to n_examples
};

/// Per-class metrics averaged over classes with nonzero support. A class
/// never predicted and never true contributes nothing; P (or F1) with a
/// zero denominator is 0. EmptyDatasetError on empty input,
/// std::invalid_argument on length mismatch or out-of-range labels.
Metrics compute_metrics(const std::vector<int>& pred_labels,
                        const std::vector<int>& true_labels, int n_classes);

// -------------------------------------------------------------- mapping

// Category paths carry the department as their first segment and the item
// type somewhere below it. The table is data, not code: real catalogs
// rename freely.
struct CategoryMapping {
  std::map<std::string, std::string> department_by_segment;  // path[0] -> department
  std::map<std::string, std::string> item_type_by_segment;   // any segment -> item type

  static CategoryMapping defaults();

  /// "mens" | "womens" | "kids" | "unisex"; unmapped or empty paths are
  /// unisex, the gender- and age-neutral bucket.
  std::string department_of(const data::Item& item) const;
  /// First mapped segment wins; nothing mapped -> "other".
  std::string item_type_of(const data::Item& item) const;
};

// --------------------------------------------------------- account types

enum class GenderType { kMenOnly, kWomenOnly, kMixed, kUndetermined };
enum class AgeType { kAdultOnly, kKidsOnly, kMixed, kUndetermined };

std::string gender_name(GenderType g);
std::string age_name(AgeType a);

/// Gender follows the men's/women's departments only; unisex and kids
/// purchases leave it undetermined. Kids purchases drive the age axis,
/// everything else counts as adult.
std::pair<GenderType, AgeType> classify_account(std::span<const data::Purchase> history,
                                                const CategoryMapping& mapping);

// -------------------------------------------------------------- slicing

struct SliceGroup {
  std::string axis;
  std::vector<std::pair<std::string, Metrics>> slices;  // canonical order
  std::vector<std::string> omitted;                     // slices with no examples
};

struct EvalReport {
  Metrics overall;
  std::vector<SliceGroup> groups;
};

/// Overall metrics plus one group per axis: department, item-type, the
/// two novelty partitions (an example is novel on an axis iff no history
/// purchase shares the target's value on that axis), and the two account
/// axes. Account typing uses the same history window the model sees.
EvalReport slice_evaluate(const data::Dataset& ds,
                          const std::vector<data::TrainingExample>& examples,
                          const std::vector<int>& pred_labels,
                          const CategoryMapping& mapping);

/// Aligned human-readable table.
std::string report_text(const EvalReport& report);
/// Machine-readable JSON document.
std::string report_json(const EvalReport& report);

}  // namespace presize::eval
