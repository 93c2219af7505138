// SPDX-License-Identifier: Apache-2.0
//
// Seeded synthetic shopping world: buyers carry latent size personas,
// brands shift fit by an integer offset, kids sizes drift upward over
// time, and labels are smeared onto adjacent sizes with rate epsilon.
// The generative state is fully recorded, so an exact posterior over
// labels (the Bayes oracle) is available for any example.

#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "presize/data.hpp"
#include "presize/model.hpp"

namespace presize::synth {

struct WorldConfig {
  int buyers = 200;
  int brands = 4;
  int categories_per_department = 3;  // drawn from the four canonical item types
  int items_per_category = 12;
  int purchases_per_buyer = 12;
  int max_day_gap = 7;         // consecutive purchases are 1..max_day_gap days apart
  int brand_offset_range = 1;  // per-brand size shift drawn from [-range, range]
  double epsilon = 0.0;        // adjacent-label noise rate, [0, 0.5)
  int drift_every_days = 0;    // kids size index +1 per this many days; 0 disables
  double mixed_persona_prob = 0.0;  // chance of a second, different-department persona
  std::uint64_t seed = 0;
  std::vector<std::string> letter_chart = {"xs", "s", "m", "l", "xl", "2xl"};
  std::vector<std::string> shoe_chart = {"36", "37", "38", "39", "40",
                                         "41", "42", "43", "44", "45"};
  std::vector<std::string> kids_chart = {"0-3m",  "3-6m", "6-12m", "12-18m", "18-24m",
                                         "2-3y", "4-5y", "6-7y",  "8-9y",   "10-12y"};

  void validate() const;  // ConfigError on violation
};

/// Which size chart an item resolves against: the kids department has its
/// own chart for everything; elsewhere shoes are numeric and the rest
/// share the letter chart.
enum class SizeAxis { kLetter = 0, kShoe = 1, kKids = 2 };

SizeAxis axis_of(const std::vector<std::string>& category_path);
const std::vector<std::string>& chart_for(const WorldConfig& cfg, SizeAxis axis);

/// floor(day / drift_every_days); 0 while drift is disabled.
int drift_steps(long day, const WorldConfig& cfg);

struct BrandInfo {
  std::string name;
  int offset = 0;
};

struct Persona {
  std::string department;        // category root segment: men, women, kids
  std::array<int, 3> latent{};   // size index per axis, indexed by SizeAxis
  bool drifts = false;
};

struct World {
  WorldConfig cfg;
  data::CategoryTree tree;
  std::vector<BrandInfo> brands;
  std::vector<data::Item> items;  // catalog; available_sizes = full chart
  std::map<std::string, std::vector<Persona>> personas;  // buyer id -> 1..2

  int offset_of(const std::string& brand_name) const;  // ConfigError on unknown
};

/// Catalog, tree, and brand offsets; personas stay empty until histories
/// are generated. Same config (seed included) gives an identical world.
World generate_world(const WorldConfig& cfg);

/// Draws each buyer's personas into world.personas and emits purchase
/// histories. Every purchase picks one persona, an item from that
/// persona's department, and the label
///   chart[clamp(latent + brand_offset + drift(day))],
/// replaced by a uniformly random adjacent chart label with probability
/// epsilon. Buyers use per-buyer derived seeds.
std::vector<data::PurchaseHistory> generate_histories(World& world);

/// Noise-free size index a persona resolves to for this item and day.
int effective_index(const World& world, const Persona& persona, const data::Item& item,
                    long day);

/// Exact label posterior under the generative process, projected onto the
/// dataset's size vocabulary (off-vocabulary mass renormalized away).
model::SizeDistribution bayes_oracle(const World& world, const data::Dataset& ds,
                                     const data::TrainingExample& ex);

/// World ground truth as JSON: config, brands, personas, catalog.
void save_world(const std::string& path, const World& world);
World load_world(const std::string& path);

}  // namespace presize::synth
