// SPDX-License-Identifier: Apache-2.0
//
// World generation and the exact label posterior. Draw order is part of
// the format: reordering any rng consumption changes every seeded world.

#include "presize/synthgen.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <random>
#include <stdexcept>

#include <json.hpp>

namespace presize::synth {

namespace {

const std::vector<std::string> kDepartments = {"men", "women", "kids"};
const std::vector<std::string> kItemTypes = {"tops", "bottoms", "dresses", "shoes"};
const std::vector<std::string> kColors = {"red", "blue", "green", "black", "white", "navy"};
const std::vector<std::string> kFits = {"slim", "classic", "relaxed", "sport", "cozy"};
const std::vector<std::vector<std::string>> kNouns = {
    {"tee", "shirt", "sweater"},      // tops
    {"jeans", "pants", "shorts"},     // bottoms
    {"dress", "skirt", "gown"},       // dresses
    {"sneaker", "boot", "loafer"}};   // shoes

double u01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

std::string item_attr(const data::Item& item, const std::string& name) {
  for (const auto& a : item.attributes)
    if (a.name == name) return a.value;
  return "";
}

int clamp_index(int idx, int chart_len) { return std::clamp(idx, 0, chart_len - 1); }

}  // namespace

void WorldConfig::validate() const {
  if (buyers < 1) throw ConfigError("world: buyers must be positive");
  if (brands < 1) throw ConfigError("world: brands must be positive");
  if (categories_per_department < 1 ||
      categories_per_department > static_cast<int>(kItemTypes.size()))
    throw ConfigError("world: categories per department must be 1..4");
  if (items_per_category < 1) throw ConfigError("world: items per category must be positive");
  if (purchases_per_buyer < 2)
    throw ConfigError("world: buyers need at least two purchases");
  if (max_day_gap < 1) throw ConfigError("world: max day gap must be positive");
  if (brand_offset_range < 0) throw ConfigError("world: brand offset range must be >= 0");
  if (!(epsilon >= 0.0 && epsilon < 0.5))
    throw ConfigError("world: epsilon must be in [0, 0.5)");
  if (drift_every_days < 0) throw ConfigError("world: drift period must be >= 0");
  if (!(mixed_persona_prob >= 0.0 && mixed_persona_prob <= 1.0))
    throw ConfigError("world: mixed persona probability must be in [0, 1]");
  for (const auto* chart : {&letter_chart, &shoe_chart, &kids_chart})
    if (chart->empty()) throw ConfigError("world: size charts must be non-empty");
  const std::size_t min_chart =
      std::min({letter_chart.size(), shoe_chart.size(), kids_chart.size()});
  if (2 * static_cast<std::size_t>(brand_offset_range) + 1 > min_chart)
    throw ConfigError("world: brand offsets span more than the smallest chart");
}

SizeAxis axis_of(const std::vector<std::string>& category_path) {
  if (!category_path.empty() && category_path[0] == "kids") return SizeAxis::kKids;
  if (category_path.size() > 1 && category_path[1] == "shoes") return SizeAxis::kShoe;
  return SizeAxis::kLetter;
}

const std::vector<std::string>& chart_for(const WorldConfig& cfg, SizeAxis axis) {
  switch (axis) {
    case SizeAxis::kShoe: return cfg.shoe_chart;
    case SizeAxis::kKids: return cfg.kids_chart;
    default: return cfg.letter_chart;
  }
}

int drift_steps(long day, const WorldConfig& cfg) {
  if (cfg.drift_every_days <= 0) return 0;
  return static_cast<int>(day / cfg.drift_every_days);
}

int World::offset_of(const std::string& brand_name) const {
  for (const auto& b : brands)
    if (b.name == brand_name) return b.offset;
  throw ConfigError("world: unknown brand '" + brand_name + "'");
}

World generate_world(const WorldConfig& cfg) {
  cfg.validate();
  World w;
  w.cfg = cfg;
  std::mt19937_64 rng(cfg.seed ^ 0xD1B54A32D192ED03ULL);

  w.brands.resize(static_cast<std::size_t>(cfg.brands));
  for (int j = 0; j < cfg.brands; ++j) {
    w.brands[static_cast<std::size_t>(j)].name = "brand_" + std::to_string(j);
    w.brands[static_cast<std::size_t>(j)].offset =
        static_cast<int>(rng() % (2ULL * cfg.brand_offset_range + 1)) - cfg.brand_offset_range;
  }

  int next_item = 0;
  for (const auto& dept : kDepartments) {
    for (int t = 0; t < cfg.categories_per_department; ++t) {
      const std::string& type = kItemTypes[static_cast<std::size_t>(t)];
      const std::vector<std::string> path = {dept, type};
      w.tree.insert_path(path);
      const auto& chart = chart_for(cfg, axis_of(path));
      for (int k = 0; k < cfg.items_per_category; ++k) {
        const std::string& brand = w.brands[rng() % w.brands.size()].name;
        const std::string title = kColors[rng() % kColors.size()] + " " +
                                  kFits[rng() % kFits.size()] + " " +
                                  kNouns[static_cast<std::size_t>(t)][rng() % 3];
        data::Item item;
        char id[24];
        std::snprintf(id, sizeof id, "item_%05d", next_item++);
        item.item_id = id;
        item.category_path = path;
        item.attributes = {{"title", title}, {"brand", brand}, {"department", dept}};
        item.available_sizes = chart;
        w.items.push_back(std::move(item));
      }
    }
  }
  return w;
}

int effective_index(const World& world, const Persona& persona, const data::Item& item,
                    long day) {
  const SizeAxis axis = axis_of(item.category_path);
  const auto& chart = chart_for(world.cfg, axis);
  int idx = persona.latent[static_cast<std::size_t>(axis)];
  const std::string brand = item_attr(item, "brand");
  if (!brand.empty()) idx += world.offset_of(brand);
  if (persona.drifts) idx += drift_steps(day, world.cfg);
  return clamp_index(idx, static_cast<int>(chart.size()));
}

std::vector<data::PurchaseHistory> generate_histories(World& world) {
  const WorldConfig& cfg = world.cfg;
  cfg.validate();
  if (world.items.empty()) throw ConfigError("world: no items generated");

  std::map<std::string, std::vector<int>> items_by_dept;
  for (std::size_t i = 0; i < world.items.size(); ++i)
    items_by_dept[world.items[i].category_path[0]].push_back(static_cast<int>(i));

  world.personas.clear();
  std::vector<data::PurchaseHistory> histories;
  histories.reserve(static_cast<std::size_t>(cfg.buyers));

  for (int b = 0; b < cfg.buyers; ++b) {
    std::mt19937_64 rng(cfg.seed ^
                        (0xBF58476D1CE4E5B9ULL * (static_cast<std::uint64_t>(b) + 1)));
    char bid[24];
    std::snprintf(bid, sizeof bid, "buyer_%05d", b);

    std::vector<Persona> personas;
    const std::size_t primary = rng() % kDepartments.size();
    std::vector<std::size_t> depts = {primary};
    if (cfg.mixed_persona_prob > 0.0 && u01(rng) < cfg.mixed_persona_prob) {
      std::vector<std::size_t> rest;
      for (std::size_t d = 0; d < kDepartments.size(); ++d)
        if (d != primary) rest.push_back(d);
      depts.push_back(rest[rng() % rest.size()]);
    }
    for (const std::size_t d : depts) {
      Persona p;
      p.department = kDepartments[d];
      const double body = u01(rng);
      for (int axis = 0; axis < 3; ++axis) {
        const auto& chart = chart_for(cfg, static_cast<SizeAxis>(axis));
        p.latent[static_cast<std::size_t>(axis)] =
            std::min(static_cast<int>(body * static_cast<double>(chart.size())),
                     static_cast<int>(chart.size()) - 1);
      }
      p.drifts = p.department == "kids" && cfg.drift_every_days > 0;
      personas.push_back(std::move(p));
    }

    data::PurchaseHistory h;
    h.buyer_id = bid;
    long day = 0;
    for (int i = 0; i < cfg.purchases_per_buyer; ++i) {
      day += 1 + static_cast<long>(rng() % static_cast<std::uint64_t>(cfg.max_day_gap));
      const Persona& p = personas[rng() % personas.size()];
      const auto& pool = items_by_dept.at(p.department);
      const data::Item& item = world.items[static_cast<std::size_t>(pool[rng() % pool.size()])];
      const auto& chart = chart_for(cfg, axis_of(item.category_path));
      int idx = effective_index(world, p, item, day);
      if (cfg.epsilon > 0.0 && u01(rng) < cfg.epsilon) {
        std::vector<int> adjacent;
        if (idx > 0) adjacent.push_back(idx - 1);
        if (idx + 1 < static_cast<int>(chart.size())) adjacent.push_back(idx + 1);
        if (!adjacent.empty()) idx = adjacent[rng() % adjacent.size()];
      }
      data::Purchase purchase;
      purchase.item = item;
      purchase.item.attributes.push_back({"size", chart[static_cast<std::size_t>(idx)]});
      purchase.purchase_day = day;
      purchase.size_label = chart[static_cast<std::size_t>(idx)];
      h.purchases.push_back(std::move(purchase));
    }
    world.personas.emplace(h.buyer_id, std::move(personas));
    histories.push_back(std::move(h));
  }
  return histories;
}

model::SizeDistribution bayes_oracle(const World& world, const data::Dataset& ds,
                                     const data::TrainingExample& ex) {
  const data::Item& target = ds.target_of(ex).item;
  const std::string& buyer_id = ds.buyer_of(ex).buyer_id;
  const auto& chart = chart_for(world.cfg, axis_of(target.category_path));
  const int n = ds.vocab.n_classes();

  model::SizeDistribution out;
  out.probs.assign(static_cast<std::size_t>(n), 0.0f);
  std::vector<double> mass(static_cast<std::size_t>(n), 0.0);

  std::vector<const Persona*> matching;
  const auto it = world.personas.find(buyer_id);
  if (it != world.personas.end())
    for (const auto& p : it->second)
      if (p.department == target.category_path[0]) matching.push_back(&p);

  if (matching.empty()) {
    // Example not producible by this world's recorded state.
    for (auto& v : out.probs) v = 1.0f / static_cast<float>(n);
    return out;
  }

  const double eps = world.cfg.epsilon;
  const double weight = 1.0 / static_cast<double>(matching.size());
  const auto add = [&](int chart_idx, double p) {
    const int id = ds.vocab.id_of(chart[static_cast<std::size_t>(chart_idx)]);
    if (id >= 0) mass[static_cast<std::size_t>(id)] += p;
  };
  for (const Persona* p : matching) {
    const int idx = effective_index(world, *p, target, ex.target_day);
    std::vector<int> adjacent;
    if (idx > 0) adjacent.push_back(idx - 1);
    if (idx + 1 < static_cast<int>(chart.size())) adjacent.push_back(idx + 1);
    if (adjacent.empty()) {
      add(idx, weight);
    } else {
      add(idx, weight * (1.0 - eps));
      for (const int a : adjacent)
        add(a, weight * eps / static_cast<double>(adjacent.size()));
    }
  }

  double total = 0;
  for (const double v : mass) total += v;
  if (total <= 0) {
    for (auto& v : out.probs) v = 1.0f / static_cast<float>(n);
    return out;
  }
  for (std::size_t i = 0; i < mass.size(); ++i)
    out.probs[i] = static_cast<float>(mass[i] / total);
  return out;
}

// ------------------------------------------------------------ world truth

void save_world(const std::string& path, const World& world) {
  nlohmann::json j;
  j["config"] = {{"buyers", world.cfg.buyers},
                 {"brands", world.cfg.brands},
                 {"categories_per_department", world.cfg.categories_per_department},
                 {"items_per_category", world.cfg.items_per_category},
                 {"purchases_per_buyer", world.cfg.purchases_per_buyer},
                 {"max_day_gap", world.cfg.max_day_gap},
                 {"brand_offset_range", world.cfg.brand_offset_range},
                 {"epsilon", world.cfg.epsilon},
                 {"drift_every_days", world.cfg.drift_every_days},
                 {"mixed_persona_prob", world.cfg.mixed_persona_prob},
                 {"seed", world.cfg.seed},
                 {"letter_chart", world.cfg.letter_chart},
                 {"shoe_chart", world.cfg.shoe_chart},
                 {"kids_chart", world.cfg.kids_chart}};
  j["brands"] = nlohmann::json::array();
  for (const auto& b : world.brands)
    j["brands"].push_back({{"name", b.name}, {"offset", b.offset}});
  j["personas"] = nlohmann::json::object();
  for (const auto& [buyer, list] : world.personas) {
    auto arr = nlohmann::json::array();
    for (const auto& p : list)
      arr.push_back({{"department", p.department},
                     {"latent", std::vector<int>(p.latent.begin(), p.latent.end())},
                     {"drifts", p.drifts}});
    j["personas"][buyer] = std::move(arr);
  }
  j["items"] = nlohmann::json::array();
  for (const auto& item : world.items)
    j["items"].push_back({{"item_id", item.item_id},
                          {"category_path", item.category_path},
                          {"title", item_attr(item, "title")},
                          {"brand", item_attr(item, "brand")},
                          {"available_sizes", item.available_sizes}});

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << j.dump(2) << "\n";
  if (!out.flush()) throw IoError("world write failed");
}

World load_world(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw IoError("world file is not valid json: " + std::string(e.what()));
  }

  World w;
  try {
    const auto& c = j.at("config");
    w.cfg.buyers = c.at("buyers").get<int>();
    w.cfg.brands = c.at("brands").get<int>();
    w.cfg.categories_per_department = c.at("categories_per_department").get<int>();
    w.cfg.items_per_category = c.at("items_per_category").get<int>();
    w.cfg.purchases_per_buyer = c.at("purchases_per_buyer").get<int>();
    w.cfg.max_day_gap = c.at("max_day_gap").get<int>();
    w.cfg.brand_offset_range = c.at("brand_offset_range").get<int>();
    w.cfg.epsilon = c.at("epsilon").get<double>();
    w.cfg.drift_every_days = c.at("drift_every_days").get<int>();
    w.cfg.mixed_persona_prob = c.at("mixed_persona_prob").get<double>();
    w.cfg.seed = c.at("seed").get<std::uint64_t>();
    w.cfg.letter_chart = c.at("letter_chart").get<std::vector<std::string>>();
    w.cfg.shoe_chart = c.at("shoe_chart").get<std::vector<std::string>>();
    w.cfg.kids_chart = c.at("kids_chart").get<std::vector<std::string>>();

    for (const auto& b : j.at("brands"))
      w.brands.push_back({b.at("name").get<std::string>(), b.at("offset").get<int>()});
    for (const auto& [buyer, arr] : j.at("personas").items()) {
      std::vector<Persona> list;
      for (const auto& pj : arr) {
        Persona p;
        p.department = pj.at("department").get<std::string>();
        const auto latent = pj.at("latent").get<std::vector<int>>();
        if (latent.size() != p.latent.size())
          throw IoError("world persona has malformed latent indices");
        std::copy(latent.begin(), latent.end(), p.latent.begin());
        p.drifts = pj.at("drifts").get<bool>();
        list.push_back(std::move(p));
      }
      w.personas.emplace(buyer, std::move(list));
    }
    for (const auto& ij : j.at("items")) {
      data::Item item;
      item.item_id = ij.at("item_id").get<std::string>();
      item.category_path = ij.at("category_path").get<std::vector<std::string>>();
      item.attributes = {{"title", ij.at("title").get<std::string>()},
                         {"brand", ij.at("brand").get<std::string>()},
                         {"department", item.category_path.empty() ? "" : item.category_path[0]}};
      item.available_sizes = ij.at("available_sizes").get<std::vector<std::string>>();
      w.tree.insert_path(item.category_path);
      w.items.push_back(std::move(item));
    }
  } catch (const nlohmann::json::exception& e) {
    throw IoError("world file is missing fields: " + std::string(e.what()));
  }
  w.cfg.validate();
  return w;
}

}  // namespace presize::synth
