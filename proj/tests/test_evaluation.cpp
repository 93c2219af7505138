// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "presize/evaluation.hpp"

using namespace presize;
using namespace presize::eval;

namespace {

data::Purchase make_purchase(const std::string& id, long day, const std::string& size,
                             std::vector<std::string> path) {
  data::Purchase p;
  p.item.item_id = id;
  p.item.category_path = std::move(path);
  p.item.attributes = {{"title", "tee"}, {"size", size}};
  p.purchase_day = day;
  p.size_label = size;
  return p;
}

// Independent oracle built on a full confusion matrix.
Metrics oracle_metrics(const std::vector<int>& preds, const std::vector<int>& truths, int n) {
  std::vector<std::vector<long long>> cm(static_cast<std::size_t>(n),
                                         std::vector<long long>(static_cast<std::size_t>(n), 0));
  for (std::size_t i = 0; i < truths.size(); ++i)
    ++cm[static_cast<std::size_t>(truths[i])][static_cast<std::size_t>(preds[i])];
  Metrics m;
  m.n_examples = static_cast<long long>(truths.size());
  long long diag = 0;
  for (int c = 0; c < n; ++c) diag += cm[static_cast<std::size_t>(c)][static_cast<std::size_t>(c)];
  m.micro_precision = static_cast<double>(diag) / static_cast<double>(m.n_examples);
  m.support.assign(static_cast<std::size_t>(n), 0);
  int used = 0;
  for (int c = 0; c < n; ++c) {
    long long row = 0, col = 0;
    for (int j = 0; j < n; ++j) {
      row += cm[static_cast<std::size_t>(c)][static_cast<std::size_t>(j)];
      col += cm[static_cast<std::size_t>(j)][static_cast<std::size_t>(c)];
    }
    m.support[static_cast<std::size_t>(c)] = row;
    if (row == 0) continue;
    ++used;
    const double tp = static_cast<double>(cm[static_cast<std::size_t>(c)][static_cast<std::size_t>(c)]);
    const double p = col > 0 ? tp / static_cast<double>(col) : 0.0;
    const double r = tp / static_cast<double>(row);
    m.macro_precision += p;
    m.macro_recall += r;
    m.macro_f1 += (p + r) > 0 ? 2 * p * r / (p + r) : 0.0;
  }
  m.macro_precision /= used;
  m.macro_recall /= used;
  m.macro_f1 /= used;
  return m;
}

}  // namespace

TEST_CASE("perfect predictions score one everywhere") {
  const auto m = compute_metrics({0, 1, 2, 1}, {0, 1, 2, 1}, 3);
  CHECK(m.micro_precision == 1.0);
  CHECK(m.macro_precision == 1.0);
  CHECK(m.macro_recall == 1.0);
  CHECK(m.macro_f1 == 1.0);
  CHECK(m.n_examples == 4);
  CHECK(m.support == std::vector<long long>{1, 2, 1});
}

TEST_CASE("hand-checked confusion case") {
  const auto m = compute_metrics({0, 1, 1}, {0, 0, 1}, 2);
  CHECK(m.micro_precision == doctest::Approx(2.0 / 3.0));
  CHECK(m.macro_precision == doctest::Approx(0.75));
  CHECK(m.macro_recall == doctest::Approx(0.75));
  CHECK(m.macro_f1 == doctest::Approx(2.0 / 3.0));
}

TEST_CASE("zero-support classes stay out of the macro averages") {
  const auto m = compute_metrics({0, 1}, {0, 0}, 3);
  CHECK(m.support == std::vector<long long>{2, 0, 0});
  // Only class 0 is averaged: P=1 (its lone prediction is right), R=1/2.
  CHECK(m.macro_precision == doctest::Approx(1.0));
  CHECK(m.macro_recall == doctest::Approx(0.5));
  CHECK(m.macro_f1 == doctest::Approx(2.0 / 3.0));
}

TEST_CASE("a class with zero precision and recall gets F1 zero, not NaN") {
  const auto m = compute_metrics({1, 0}, {0, 1}, 2);
  CHECK(m.micro_precision == 0.0);
  CHECK(m.macro_precision == 0.0);
  CHECK(m.macro_recall == 0.0);
  CHECK(m.macro_f1 == 0.0);
}

TEST_CASE("metric input validation") {
  CHECK_THROWS_AS(compute_metrics({}, {}, 3), data::EmptyDatasetError);
  CHECK_THROWS_AS(compute_metrics({0}, {0, 1}, 3), std::invalid_argument);
  CHECK_THROWS_AS(compute_metrics({3}, {0}, 3), std::invalid_argument);
  CHECK_THROWS_AS(compute_metrics({0}, {-1}, 3), std::invalid_argument);
  CHECK_THROWS_AS(compute_metrics({0}, {0}, 0), std::invalid_argument);
}

TEST_CASE("metrics match an independent confusion-matrix oracle") {
  std::mt19937_64 rng(424242);
  for (int trial = 0; trial < 60; ++trial) {
    const int n_classes = 2 + static_cast<int>(rng() % 9);
    const int n = 1 + static_cast<int>(rng() % 1000);
    std::vector<int> truths(static_cast<std::size_t>(n)), preds(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      truths[static_cast<std::size_t>(i)] = static_cast<int>(rng() % n_classes);
      // Skew predictions toward the truth so diagonals are non-trivial.
      preds[static_cast<std::size_t>(i)] = (rng() % 3) ? truths[static_cast<std::size_t>(i)]
                                                       : static_cast<int>(rng() % n_classes);
    }
    const auto got = compute_metrics(preds, truths, n_classes);
    const auto want = oracle_metrics(preds, truths, n_classes);
    INFO("trial " << trial);
    CHECK(got.micro_precision == doctest::Approx(want.micro_precision).epsilon(1e-12));
    CHECK(got.macro_precision == doctest::Approx(want.macro_precision).epsilon(1e-12));
    CHECK(got.macro_recall == doctest::Approx(want.macro_recall).epsilon(1e-12));
    CHECK(got.macro_f1 == doctest::Approx(want.macro_f1).epsilon(1e-12));
    CHECK(got.support == want.support);
    long long total = 0;
    for (const auto s : got.support) total += s;
    CHECK(total == got.n_examples);
  }
}

TEST_CASE("category mapping resolves departments and item types") {
  const auto m = CategoryMapping::defaults();
  data::Item it;
  it.category_path = {"Women", "dresses"};
  CHECK(m.department_of(it) == "womens");
  CHECK(m.item_type_of(it) == "dress-skirt");
  it.category_path = {"men", "SHOES"};
  CHECK(m.department_of(it) == "mens");
  CHECK(m.item_type_of(it) == "footwear");
  it.category_path = {"kids", "accessories"};
  CHECK(m.department_of(it) == "kids");
  CHECK(m.item_type_of(it) == "other");
  it.category_path = {"pets", "beds"};
  CHECK(m.department_of(it) == "unisex");
  CHECK(m.item_type_of(it) == "other");
  it.category_path = {};
  CHECK(m.department_of(it) == "unisex");
}

TEST_CASE("account classification follows department evidence") {
  const auto m = CategoryMapping::defaults();
  const auto men_tee = make_purchase("a", 0, "m", {"men", "tops"});
  const auto women_dress = make_purchase("b", 1, "s", {"women", "dresses"});
  const auto kids_tee = make_purchase("c", 2, "s", {"kids", "tops"});
  const auto unisex_cap = make_purchase("d", 3, "m", {"unisex", "accessories"});

  using P = std::vector<data::Purchase>;
  auto got = classify_account(P{men_tee, men_tee}, m);
  CHECK(got.first == GenderType::kMenOnly);
  CHECK(got.second == AgeType::kAdultOnly);

  got = classify_account(P{men_tee, kids_tee}, m);
  CHECK(got.first == GenderType::kMenOnly);
  CHECK(got.second == AgeType::kMixed);

  got = classify_account(P{unisex_cap}, m);
  CHECK(got.first == GenderType::kUndetermined);
  CHECK(got.second == AgeType::kAdultOnly);

  got = classify_account(P{men_tee, women_dress}, m);
  CHECK(got.first == GenderType::kMixed);

  got = classify_account(P{kids_tee}, m);
  CHECK(got.first == GenderType::kUndetermined);
  CHECK(got.second == AgeType::kKidsOnly);

  got = classify_account({}, m);
  CHECK(got.first == GenderType::kUndetermined);
  CHECK(got.second == AgeType::kUndetermined);
}

namespace {

data::Dataset slicing_dataset() {
  data::PurchaseHistory x;  // men's tops, all observed
  x.buyer_id = "x";
  x.purchases = {make_purchase("x0", 0, "m", {"men", "tops"}),
                 make_purchase("x1", 1, "m", {"men", "tops"}),
                 make_purchase("x2", 2, "l", {"men", "tops"})};
  data::PurchaseHistory y;  // dress history, footwear target: novel on both axes
  y.buyer_id = "y";
  y.purchases = {make_purchase("y0", 0, "s", {"women", "dresses"}),
                 make_purchase("y1", 2, "m", {"men", "shoes"})};
  data::PurchaseHistory z;  // kids account, new item type
  z.buyer_id = "z";
  z.purchases = {make_purchase("z0", 0, "m", {"kids", "tops"}),
                 make_purchase("z1", 1, "m", {"kids", "bottoms"})};
  data::Dataset ds;
  ds.histories = {x, y, z};
  ds.vocab = data::build_size_vocab(ds.histories);
  return ds;
}

std::vector<data::TrainingExample> all_examples(const data::Dataset& ds) {
  std::vector<data::TrainingExample> out;
  for (std::size_t b = 0; b < ds.histories.size(); ++b) {
    auto v = data::build_examples(ds.histories[b], static_cast<int>(b), ds.vocab);
    out.insert(out.end(), v.begin(), v.end());
  }
  return out;
}

const SliceGroup& group_named(const EvalReport& r, const std::string& axis) {
  for (const auto& g : r.groups)
    if (g.axis == axis) return g;
  REQUIRE(false);
  return r.groups.front();
}

long long slice_n(const SliceGroup& g, const std::string& name) {
  for (const auto& [n, m] : g.slices)
    if (n == name) return m.n_examples;
  return 0;
}

}  // namespace

TEST_CASE("slice evaluation partitions every axis and omits empty slices") {
  const auto ds = slicing_dataset();
  const auto examples = all_examples(ds);
  REQUIRE(examples.size() == 4);
  REQUIRE(ds.vocab.id_of("m") == 0);

  // Wrong only on buyer y's target.
  std::vector<int> preds;
  for (const auto& ex : examples) preds.push_back(ex.label_id);
  preds[2] = preds[2] == 0 ? 1 : 0;

  const auto report = slice_evaluate(ds, examples, preds, CategoryMapping::defaults());
  CHECK(report.overall.n_examples == 4);
  CHECK(report.overall.micro_precision == doctest::Approx(0.75));
  REQUIRE(report.groups.size() == 6);

  const auto& dept = group_named(report, "department");
  CHECK(slice_n(dept, "mens") == 3);
  CHECK(slice_n(dept, "kids") == 1);
  CHECK(dept.omitted == std::vector<std::string>{"womens", "unisex"});

  const auto& type = group_named(report, "item-type");
  CHECK(slice_n(type, "tops") == 2);
  CHECK(slice_n(type, "bottoms") == 1);
  CHECK(slice_n(type, "footwear") == 1);
  CHECK(type.omitted == std::vector<std::string>{"dress-skirt", "other"});

  // Buyer y's only history purchase is a women's dress; the men's-shoes
  // target is novel on both axes.
  const auto& dnov = group_named(report, "department-novelty");
  CHECK(slice_n(dnov, "novel") == 1);
  CHECK(slice_n(dnov, "observed") == 3);
  const auto& tnov = group_named(report, "item-type-novelty");
  CHECK(slice_n(tnov, "novel") == 2);  // buyer z's bottoms target is also new
  CHECK(slice_n(tnov, "observed") == 2);

  const auto& gender = group_named(report, "account-gender");
  CHECK(slice_n(gender, "men-only") == 2);
  CHECK(slice_n(gender, "women-only") == 1);
  CHECK(slice_n(gender, "undetermined-gender") == 1);
  CHECK(gender.omitted == std::vector<std::string>{"mixed-gender"});

  const auto& age = group_named(report, "account-age");
  CHECK(slice_n(age, "adult-only") == 3);
  CHECK(slice_n(age, "kids-only") == 1);

  // Every axis partitions the full set.
  for (const auto& g : report.groups) {
    long long total = 0;
    for (const auto& [name, m] : g.slices) total += m.n_examples;
    CHECK(total == 4);
  }

  // The novel slice holds exactly the one miss.
  const auto& novel_metrics = dnov.slices.front();
  REQUIRE(novel_metrics.first == "novel");
  CHECK(novel_metrics.second.micro_precision == 0.0);
}

TEST_CASE("reports serialize to text and json") {
  const auto ds = slicing_dataset();
  const auto examples = all_examples(ds);
  std::vector<int> preds;
  for (const auto& ex : examples) preds.push_back(ex.label_id);
  const auto report = slice_evaluate(ds, examples, preds, CategoryMapping::defaults());

  const auto text = report_text(report);
  CHECK(text.find("overall") != std::string::npos);
  CHECK(text.find("[department]") != std::string::npos);
  CHECK(text.find("womens: no examples") != std::string::npos);

  const auto j = nlohmann::json::parse(report_json(report));
  CHECK(j["overall"]["micro_precision"] == 1.0);
  CHECK(j["overall"]["n"] == 4);
  CHECK(j["groups"].size() == 6);
  CHECK(j["groups"][0]["axis"] == "department");
  CHECK(j["groups"][0]["slices"]["mens"]["n"] == 3);
}

TEST_CASE("slice evaluation validates its inputs") {
  const auto ds = slicing_dataset();
  const auto examples = all_examples(ds);
  CHECK_THROWS_AS(slice_evaluate(ds, {}, {}, CategoryMapping::defaults()),
                  data::EmptyDatasetError);
  CHECK_THROWS_AS(slice_evaluate(ds, examples, {0}, CategoryMapping::defaults()),
                  std::invalid_argument);
}
