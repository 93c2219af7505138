// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "presize/baselines.hpp"
#include "presize/synthgen.hpp"

using namespace presize;
using namespace presize::synth;

namespace {

WorldConfig small_cfg() {
  WorldConfig cfg;
  cfg.buyers = 30;
  cfg.brands = 3;
  cfg.categories_per_department = 3;
  cfg.items_per_category = 5;
  cfg.purchases_per_buyer = 8;
  cfg.seed = 1234;
  return cfg;
}

data::Dataset to_dataset(const std::vector<data::PurchaseHistory>& histories) {
  data::Dataset ds;
  ds.histories = histories;
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

bool purchases_equal(const data::Purchase& a, const data::Purchase& b) {
  if (a.item.item_id != b.item.item_id || a.purchase_day != b.purchase_day ||
      a.size_label != b.size_label || a.item.category_path != b.item.category_path ||
      a.item.available_sizes != b.item.available_sizes ||
      a.item.attributes.size() != b.item.attributes.size())
    return false;
  for (std::size_t i = 0; i < a.item.attributes.size(); ++i)
    if (a.item.attributes[i].name != b.item.attributes[i].name ||
        a.item.attributes[i].value != b.item.attributes[i].value)
      return false;
  return true;
}

bool histories_equal(const std::vector<data::PurchaseHistory>& a,
                     const std::vector<data::PurchaseHistory>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].buyer_id != b[i].buyer_id || a[i].purchases.size() != b[i].purchases.size())
      return false;
    for (std::size_t j = 0; j < a[i].purchases.size(); ++j)
      if (!purchases_equal(a[i].purchases[j], b[i].purchases[j])) return false;
  }
  return true;
}

// The persona that produced a purchase is identified by the item's
// department; a buyer's personas always have distinct departments.
const Persona& persona_for(const World& w, const std::string& buyer_id,
                           const data::Item& item) {
  for (const auto& p : w.personas.at(buyer_id))
    if (p.department == item.category_path[0]) return p;
  REQUIRE(false);
  return w.personas.at(buyer_id).front();
}

}  // namespace

TEST_CASE("same seed reproduces the world, different seed does not") {
  const auto cfg = small_cfg();
  auto w1 = generate_world(cfg);
  auto w2 = generate_world(cfg);
  REQUIRE(w1.items.size() == w2.items.size());
  for (std::size_t i = 0; i < w1.items.size(); ++i) {
    CHECK(w1.items[i].item_id == w2.items[i].item_id);
    CHECK(w1.items[i].category_path == w2.items[i].category_path);
    for (std::size_t a = 0; a < w1.items[i].attributes.size(); ++a)
      CHECK(w1.items[i].attributes[a].value == w2.items[i].attributes[a].value);
  }
  for (std::size_t j = 0; j < w1.brands.size(); ++j)
    CHECK(w1.brands[j].offset == w2.brands[j].offset);

  const auto h1 = generate_histories(w1);
  const auto h2 = generate_histories(w2);
  CHECK(histories_equal(h1, h2));

  auto cfg3 = cfg;
  cfg3.seed = 999;
  auto w3 = generate_world(cfg3);
  const auto h3 = generate_histories(w3);
  CHECK_FALSE(histories_equal(h1, h3));
}

TEST_CASE("catalog and history counts match the config") {
  const auto cfg = small_cfg();
  auto w = generate_world(cfg);
  CHECK(w.items.size() == 3u * 3u * 5u);
  CHECK(w.brands.size() == 3u);
  const auto histories = generate_histories(w);
  REQUIRE(histories.size() == 30u);
  for (const auto& h : histories) {
    CHECK(h.purchases.size() == 8u);
    for (std::size_t i = 1; i < h.purchases.size(); ++i)
      CHECK(h.purchases[i].purchase_day > h.purchases[i - 1].purchase_day);
  }
  CHECK(w.personas.size() == 30u);
}

TEST_CASE("config validation") {
  auto cfg = small_cfg();
  cfg.brands = 0;
  CHECK_THROWS_AS(generate_world(cfg), ConfigError);
  cfg = small_cfg();
  cfg.epsilon = 0.5;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = small_cfg();
  cfg.letter_chart.clear();
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = small_cfg();
  cfg.brand_offset_range = 3;  // span 7 exceeds the 6-label letter chart
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = small_cfg();
  cfg.categories_per_department = 5;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = small_cfg();
  cfg.purchases_per_buyer = 1;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("axes and charts") {
  const WorldConfig cfg;
  CHECK(axis_of({"kids", "shoes"}) == SizeAxis::kKids);
  CHECK(axis_of({"men", "shoes"}) == SizeAxis::kShoe);
  CHECK(axis_of({"women", "tops"}) == SizeAxis::kLetter);
  CHECK(chart_for(cfg, SizeAxis::kShoe).size() == 10u);
  CHECK(chart_for(cfg, SizeAxis::kKids).size() == 10u);
  CHECK(chart_for(cfg, SizeAxis::kLetter).size() == 6u);
}

TEST_CASE("noise-free labels follow the generative formula exactly") {
  auto cfg = small_cfg();
  cfg.epsilon = 0.0;
  cfg.brand_offset_range = 1;
  cfg.mixed_persona_prob = 0.4;
  cfg.drift_every_days = 5;  // engages for kids personas
  cfg.purchases_per_buyer = 15;
  cfg.buyers = 40;
  auto w = generate_world(cfg);
  const auto histories = generate_histories(w);

  bool saw_drift = false;
  for (const auto& h : histories) {
    for (const auto& p : h.purchases) {
      const Persona& persona = persona_for(w, h.buyer_id, p.item);
      const auto& chart = chart_for(cfg, axis_of(p.item.category_path));
      const int idx = effective_index(w, persona, p.item, p.purchase_day);
      REQUIRE(p.size_label == chart[static_cast<std::size_t>(idx)]);
      if (persona.drifts && drift_steps(p.purchase_day, cfg) >= 2) saw_drift = true;
    }
  }
  CHECK(saw_drift);
}

TEST_CASE("drift arithmetic matches the advertised rate") {
  WorldConfig cfg;
  cfg.drift_every_days = 30;
  CHECK(drift_steps(180, cfg) - drift_steps(0, cfg) == 6);
  CHECK(drift_steps(29, cfg) == 0);
  cfg.drift_every_days = 0;
  CHECK(drift_steps(1000, cfg) == 0);
}

TEST_CASE("single zero-offset brand keeps per-category labels constant") {
  auto cfg = small_cfg();
  cfg.brands = 1;
  cfg.brand_offset_range = 0;
  cfg.epsilon = 0.0;
  cfg.drift_every_days = 0;
  cfg.purchases_per_buyer = 12;
  auto w = generate_world(cfg);
  const auto histories = generate_histories(w);
  for (const auto& h : histories) {
    std::map<std::string, std::string> label_by_category;
    for (const auto& p : h.purchases) {
      const std::string key = p.item.category_path[0] + "/" + p.item.category_path[1];
      const auto [it, fresh] = label_by_category.emplace(key, p.size_label);
      if (!fresh) CHECK(it->second == p.size_label);
    }
  }
}

TEST_CASE("label noise hits at the configured rate") {
  auto cfg = small_cfg();
  cfg.buyers = 300;
  cfg.purchases_per_buyer = 10;
  cfg.epsilon = 0.3;
  auto w = generate_world(cfg);
  const auto histories = generate_histories(w);
  long long flipped = 0, total = 0;
  for (const auto& h : histories) {
    for (const auto& p : h.purchases) {
      const Persona& persona = persona_for(w, h.buyer_id, p.item);
      const auto& chart = chart_for(cfg, axis_of(p.item.category_path));
      const int idx = effective_index(w, persona, p.item, p.purchase_day);
      flipped += p.size_label != chart[static_cast<std::size_t>(idx)];
      ++total;
    }
  }
  const double rate = static_cast<double>(flipped) / static_cast<double>(total);
  CHECK(rate > 0.25);
  CHECK(rate < 0.35);
}

TEST_CASE("mixed persona probability controls account composition") {
  auto cfg = small_cfg();
  cfg.mixed_persona_prob = 1.0;
  auto w = generate_world(cfg);
  auto histories = generate_histories(w);
  for (const auto& [buyer, personas] : w.personas) {
    REQUIRE(personas.size() == 2u);
    CHECK(personas[0].department != personas[1].department);
  }
  for (const auto& h : histories) {
    std::set<std::string> persona_depts;
    for (const auto& p : w.personas.at(h.buyer_id)) persona_depts.insert(p.department);
    for (const auto& p : h.purchases)
      CHECK(persona_depts.count(p.item.category_path[0]) == 1u);
  }

  cfg.mixed_persona_prob = 0.0;
  auto w2 = generate_world(cfg);
  generate_histories(w2);
  for (const auto& [buyer, personas] : w2.personas) CHECK(personas.size() == 1u);
}

TEST_CASE("oracle is one-hot on the truth without noise") {
  auto cfg = small_cfg();
  cfg.epsilon = 0.0;
  cfg.mixed_persona_prob = 0.3;
  cfg.drift_every_days = 7;
  auto w = generate_world(cfg);
  const auto ds = to_dataset(generate_histories(w));
  const auto examples = all_examples(ds);
  REQUIRE(!examples.empty());
  for (const auto& ex : examples) {
    const auto dist = bayes_oracle(w, ds, ex);
    REQUIRE(static_cast<int>(dist.probs.size()) == ds.vocab.n_classes());
    CHECK(dist.probs[static_cast<std::size_t>(ex.label_id)] == 1.0f);
  }
}

TEST_CASE("oracle spreads exactly epsilon onto adjacent labels") {
  auto cfg = small_cfg();
  cfg.buyers = 60;
  cfg.epsilon = 0.2;
  auto w = generate_world(cfg);
  const auto ds = to_dataset(generate_histories(w));
  const auto examples = all_examples(ds);

  int interior_checked = 0;
  for (const auto& ex : examples) {
    const auto& target = ds.target_of(ex).item;
    const Persona& persona = persona_for(w, ds.buyer_of(ex).buyer_id, target);
    const auto& chart = chart_for(cfg, axis_of(target.category_path));
    const int idx = effective_index(w, persona, target, ex.target_day);
    if (idx == 0 || idx + 1 == static_cast<int>(chart.size())) continue;
    const int truth = ds.vocab.id_of(chart[static_cast<std::size_t>(idx)]);
    const int below = ds.vocab.id_of(chart[static_cast<std::size_t>(idx - 1)]);
    const int above = ds.vocab.id_of(chart[static_cast<std::size_t>(idx + 1)]);
    if (truth < 0 || below < 0 || above < 0) continue;

    const auto dist = bayes_oracle(w, ds, ex);
    CHECK(dist.probs[static_cast<std::size_t>(truth)] == doctest::Approx(0.8).epsilon(1e-6));
    CHECK(dist.probs[static_cast<std::size_t>(below)] == doctest::Approx(0.1).epsilon(1e-6));
    CHECK(dist.probs[static_cast<std::size_t>(above)] == doctest::Approx(0.1).epsilon(1e-6));
    double sum = 0;
    for (const float v : dist.probs) sum += v;
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-5));
    if (++interior_checked >= 25) break;
  }
  CHECK(interior_checked >= 25);
}

TEST_CASE("repeat-category purchases are perfectly predictable without noise") {
  auto cfg = small_cfg();
  cfg.buyers = 40;
  cfg.purchases_per_buyer = 10;
  cfg.brand_offset_range = 0;
  cfg.epsilon = 0.0;
  cfg.drift_every_days = 0;
  cfg.mixed_persona_prob = 0.3;
  auto w = generate_world(cfg);
  const auto ds = to_dataset(generate_histories(w));
  const auto examples = all_examples(ds);
  const auto stats = baselines::build_size_stats(ds, examples);

  int repeats = 0;
  for (const auto& ex : examples) {
    const auto& target = ds.target_of(ex).item;
    const auto history = baselines::example_history(ds, ex);
    bool repeat = false;
    for (const auto& p : history)
      repeat = repeat || p.item.category_path == target.category_path;
    if (!repeat) continue;
    ++repeats;
    const auto pred = baselines::pmcv_predict(target, history, stats);
    CHECK(pred.label == ex.label_id);
  }
  CHECK(repeats > 50);
}

TEST_CASE("world truth files round-trip") {
  auto cfg = small_cfg();
  cfg.epsilon = 0.125;
  cfg.mixed_persona_prob = 0.5;
  cfg.drift_every_days = 9;
  auto w = generate_world(cfg);
  const auto ds = to_dataset(generate_histories(w));

  const auto path =
      (std::filesystem::temp_directory_path() / "presize_world_roundtrip.json").string();
  save_world(path, w);
  const auto back = load_world(path);
  std::filesystem::remove(path);

  CHECK(back.cfg.buyers == cfg.buyers);
  CHECK(back.cfg.epsilon == cfg.epsilon);
  CHECK(back.cfg.seed == cfg.seed);
  CHECK(back.cfg.letter_chart == cfg.letter_chart);
  REQUIRE(back.brands.size() == w.brands.size());
  for (std::size_t i = 0; i < w.brands.size(); ++i) {
    CHECK(back.brands[i].name == w.brands[i].name);
    CHECK(back.brands[i].offset == w.brands[i].offset);
  }
  REQUIRE(back.personas.size() == w.personas.size());
  for (const auto& [buyer, list] : w.personas) {
    const auto& other = back.personas.at(buyer);
    REQUIRE(other.size() == list.size());
    for (std::size_t i = 0; i < list.size(); ++i) {
      CHECK(other[i].department == list[i].department);
      CHECK(other[i].latent == list[i].latent);
      CHECK(other[i].drifts == list[i].drifts);
    }
  }
  REQUIRE(back.items.size() == w.items.size());
  CHECK(back.tree.find_path(w.items[0].category_path) >= 0);

  const auto examples = all_examples(ds);
  for (std::size_t i = 0; i < examples.size() && i < 40; ++i) {
    const auto a = bayes_oracle(w, ds, examples[i]);
    const auto b = bayes_oracle(back, ds, examples[i]);
    REQUIRE(a.probs == b.probs);
  }
}

TEST_CASE("missing world files and bad json are io errors") {
  CHECK_THROWS_AS(load_world("/nonexistent/world.json"), IoError);
  const auto path = (std::filesystem::temp_directory_path() / "presize_world_bad.json").string();
  {
    std::ofstream out(path);
    out << "{ not json";
  }
  CHECK_THROWS_AS(load_world(path), IoError);
  {
    std::ofstream out(path, std::ios::trunc);
    out << "{\"config\": {}}";
  }
  CHECK_THROWS_AS(load_world(path), IoError);
  std::filesystem::remove(path);
}
