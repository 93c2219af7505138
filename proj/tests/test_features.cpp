// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "presize/features.hpp"

using namespace presize;
using namespace presize::features;

namespace {

model::SizeDistribution dist(std::vector<float> p) {
  model::SizeDistribution d;
  d.probs = std::move(p);
  return d;
}

data::Purchase make_purchase(const std::string& id, long day, const std::string& label,
                             const std::string& title) {
  data::Purchase p;
  p.item.item_id = id;
  p.item.category_path = {"w", "t"};
  p.item.attributes = {{"title", title}, {"size", label}, {"brand", "acme"}};
  p.purchase_day = day;
  p.size_label = label;
  return p;
}

bpe::BpeVocab test_vocab() {
  return bpe::train_bpe({"red big shirt jacket acme w t m xl s l",
                         "red red big big acme acme shirt jacket"},
                        270);
}

model::ModelConfig tiny_cfg(const bpe::BpeVocab& vocab, const data::AttributeRegistry& reg,
                            int n_classes) {
  model::ModelConfig cfg;
  cfg.d = 8;
  cfg.n_layers = 1;
  cfg.heads = 2;
  cfg.ffn = 16;
  cfg.item_seq_len = 20;
  cfg.history_len = 3;
  cfg.n_positions = 20;
  cfg.n_classes = n_classes;
  cfg.vocab_size = static_cast<int>(vocab.size());
  cfg.n_attr_names = reg.size();
  return cfg;
}

// Buyers with random titles, sizes, and day gaps; histories long enough
// that the model window truncates some of them.
data::Dataset random_dataset(std::uint64_t seed, int buyers, int purchases_each) {
  static const std::vector<std::string> kWords = {"red", "big", "shirt", "jacket", "acme"};
  static const std::vector<std::string> kSizes = {"m", "l", "s", "xl"};
  std::mt19937_64 rng(seed);
  data::Dataset ds;
  int next_item = 0;
  for (int b = 0; b < buyers; ++b) {
    data::PurchaseHistory h;
    h.buyer_id = "b" + std::to_string(b);
    long day = 0;
    for (int i = 0; i < purchases_each; ++i) {
      std::string title = kWords[rng() % kWords.size()];
      if (rng() % 2) title += " " + kWords[rng() % kWords.size()];
      h.purchases.push_back(make_purchase("i" + std::to_string(next_item++), day,
                                          kSizes[rng() % kSizes.size()], title));
      day += static_cast<long>(rng() % 4);
    }
    ds.histories.push_back(std::move(h));
  }
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

std::vector<data::Item> all_items(const data::Dataset& ds) {
  std::vector<data::Item> items;
  for (const auto& h : ds.histories)
    for (const auto& p : h.purchases) items.push_back(p.item);
  return items;
}

bool probs_bitwise_equal(const model::SizeDistribution& a, const model::SizeDistribution& b) {
  return a.probs.size() == b.probs.size() &&
         std::memcmp(a.probs.data(), b.probs.data(), a.probs.size() * sizeof(float)) == 0;
}

std::string tmp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_CASE("size features on a hand-checked distribution") {
  const auto f = size_features(dist({0.5f, 0.3f, 0.2f}), {1, 2});
  CHECK(f.total_score == doctest::Approx(0.5));
  CHECK(f.best_score == doctest::Approx(0.3));
  CHECK(f.best_rank == 2);
}

TEST_CASE("full availability covers the whole distribution") {
  const auto f = size_features(dist({0.5f, 0.3f, 0.2f}), {0, 1, 2});
  CHECK(f.total_score == doctest::Approx(1.0).epsilon(1e-5));
  CHECK(f.best_score == doctest::Approx(0.5));
  CHECK(f.best_rank == 1);
}

TEST_CASE("singleton argmax availability") {
  const auto f = size_features(dist({0.2f, 0.7f, 0.1f}), {1});
  CHECK(f.best_score == f.total_score);
  CHECK(f.best_rank == 1);
}

TEST_CASE("probability ties resolve to the lower class id") {
  auto f = size_features(dist({0.4f, 0.4f, 0.2f}), {0, 1});
  CHECK(f.best_score == doctest::Approx(0.4));
  CHECK(f.best_rank == 1);
  // Only the tied higher id offered: nothing strictly exceeds it.
  f = size_features(dist({0.4f, 0.4f, 0.2f}), {1});
  CHECK(f.best_rank == 1);
  // Duplicated ids do not double-count mass.
  f = size_features(dist({0.4f, 0.4f, 0.2f}), {1, 1, 2});
  CHECK(f.total_score == doctest::Approx(0.6));
}

TEST_CASE("size feature input validation") {
  CHECK_THROWS_AS(size_features(dist({0.5f, 0.5f}), {}), std::invalid_argument);
  CHECK_THROWS_AS(size_features(dist({0.5f, 0.5f}), {2}), std::invalid_argument);
  CHECK_THROWS_AS(size_features(dist({0.5f, 0.5f}), {-1}), std::invalid_argument);
  CHECK_THROWS_AS(size_features(dist({}), {0}), std::invalid_argument);
}

TEST_CASE("feature properties hold on random distributions") {
  std::mt19937_64 rng(777);
  for (int trial = 0; trial < 300; ++trial) {
    const int n = 2 + static_cast<int>(rng() % 9);
    std::vector<float> p(static_cast<std::size_t>(n));
    double z = 0;
    for (auto& v : p) {
      v = static_cast<float>((rng() % 1000) + 1) / 1000.0f;
      z += v;
    }
    for (auto& v : p) v = static_cast<float>(v / z);
    std::vector<int> avail;
    for (int c = 0; c < n; ++c)
      if (rng() % 2) avail.push_back(c);
    if (avail.empty()) avail.push_back(static_cast<int>(rng() % n));

    const auto f = size_features(dist(p), avail);
    CHECK(f.best_score <= f.total_score + 1e-9);
    CHECK(f.total_score <= 1.0 + 1e-6);
    CHECK(f.best_rank >= 1);
    CHECK(f.best_rank <= n);

    // Rank 1 exactly when a top-probability class is offered.
    float global_max = 0;
    for (const float v : p) global_max = std::max(global_max, v);
    bool top_offered = false;
    for (const int id : avail) top_offered = top_offered || p[static_cast<std::size_t>(id)] == global_max;
    CHECK((f.best_rank == 1) == top_offered);

    // Offering more sizes never lowers the total.
    std::vector<int> wider = avail;
    for (int c = 0; c < n; ++c)
      if (rng() % 2) wider.push_back(c);
    const auto g = size_features(dist(p), wider);
    CHECK(g.total_score >= f.total_score - 1e-12);

    // Rank depends only on the ordering, not the scale.
    std::vector<float> scaled(p.size());
    for (std::size_t i = 0; i < p.size(); ++i) scaled[i] = 0.25f * p[i];
    std::vector<float> shifted(p.size());
    for (std::size_t i = 0; i < p.size(); ++i) shifted[i] = p[i] + 0.125f;
    CHECK(size_features(dist(scaled), avail).best_rank == f.best_rank);
    CHECK(size_features(dist(shifted), avail).best_rank == f.best_rank);
  }
}

TEST_CASE("available ids map labels, drop unknowns, and default to all") {
  const auto ds = random_dataset(3, 4, 6);
  data::Item item;
  item.available_sizes = {"m", "zz", "m", "xl"};
  const auto ids = available_ids(item, ds.vocab);
  REQUIRE(ids.size() == 2);
  CHECK(ids[0] == ds.vocab.id_of("m"));
  CHECK(ids[1] == ds.vocab.id_of("xl"));
  CHECK(ids[0] < ids[1]);

  item.available_sizes = {};
  CHECK(available_ids(item, ds.vocab).size() ==
        static_cast<std::size_t>(ds.vocab.n_classes()));
  item.available_sizes = {"zz"};
  CHECK(available_ids(item, ds.vocab).size() ==
        static_cast<std::size_t>(ds.vocab.n_classes()));
}

TEST_CASE("feature lines are valid single-line json") {
  SizeFeatures f;
  f.total_score = 0.625;
  f.best_score = 0.5;
  f.best_rank = 2;
  const auto line = feature_line("buyer7", "item42", f);
  CHECK(line.find('\n') == std::string::npos);
  const auto j = nlohmann::json::parse(line);
  CHECK(j["buyer_id"] == "buyer7");
  CHECK(j["item_id"] == "item42");
  CHECK(j["total_score"] == 0.625);
  CHECK(j["best_score"] == 0.5);
  CHECK(j["best_rank"] == 2);
}

TEST_CASE("fingerprints track parameters and configuration") {
  const auto vocab = test_vocab();
  const auto reg = data::AttributeRegistry::defaults();
  const auto cfg = tiny_cfg(vocab, reg, 4);
  const auto a = model::ModelParams::init(cfg, 11);
  CHECK(model_fingerprint(a, cfg) == model_fingerprint(a, cfg));
  const auto b = model::ModelParams::init(cfg, 12);
  CHECK(model_fingerprint(a, cfg) != model_fingerprint(b, cfg));

  auto c = model::ModelParams::init(cfg, 11);
  c.clf_b3.data[0] += 0.5f;
  CHECK(model_fingerprint(a, cfg) != model_fingerprint(c, cfg));

  auto cfg2 = cfg;
  cfg2.history_len = 2;
  CHECK(model_fingerprint(a, cfg) != model_fingerprint(a, cfg2));
}

TEST_CASE("cache lookups return the item encoder's output") {
  const auto ds = random_dataset(5, 3, 4);
  const auto vocab = test_vocab();
  const auto reg = data::AttributeRegistry::defaults();
  const auto cfg = tiny_cfg(vocab, reg, ds.vocab.n_classes());
  const auto params = model::ModelParams::init(cfg, 7);
  const auto items = all_items(ds);

  const auto cache = build_embedding_cache(items, params, cfg, vocab, reg);
  CHECK(cache.d == cfg.d);
  CHECK(cache.fingerprint == model_fingerprint(params, cfg));
  CHECK(cache.vectors.size() == items.size());
  for (const auto& item : items) {
    REQUIRE(cache.contains(item.item_id));
    const auto emb = model::embed_item(item, params, cfg, vocab, reg, false);
    const auto& vec = cache.at(item.item_id);
    REQUIRE(vec.size() == emb.data.size());
    CHECK(std::memcmp(vec.data(), emb.data.data(), vec.size() * sizeof(float)) == 0);
  }

  CHECK_FALSE(cache.contains("nope"));
  try {
    cache.at("missing_item_99");
    FAIL("expected a cache miss");
  } catch (const CacheMissError& e) {
    CHECK(std::string(e.what()).find("missing_item_99") != std::string::npos);
  }

  const auto empty = build_embedding_cache({}, params, cfg, vocab, reg);
  CHECK(empty.vectors.empty());
  CHECK(empty.fingerprint == cache.fingerprint);
}

TEST_CASE("cache files round-trip and reject mismatches") {
  const auto ds = random_dataset(6, 3, 4);
  const auto vocab = test_vocab();
  const auto reg = data::AttributeRegistry::defaults();
  const auto cfg = tiny_cfg(vocab, reg, ds.vocab.n_classes());
  const auto params = model::ModelParams::init(cfg, 8);
  const auto cache = build_embedding_cache(all_items(ds), params, cfg, vocab, reg);

  const auto path = tmp_path("presize_emb_roundtrip.bin");
  save_cache(path, cache);
  const auto back = load_cache(path);
  CHECK(back.fingerprint == cache.fingerprint);
  CHECK(back.d == cache.d);
  REQUIRE(back.vectors.size() == cache.vectors.size());
  for (const auto& [id, vec] : cache.vectors) {
    REQUIRE(back.contains(id));
    CHECK(std::memcmp(back.at(id).data(), vec.data(), vec.size() * sizeof(float)) == 0);
  }

  // Saving the same cache twice produces identical bytes.
  const auto path2 = tmp_path("presize_emb_roundtrip2.bin");
  save_cache(path2, cache);
  CHECK(read_file(path) == read_file(path2));

  CHECK_NOTHROW(load_cache(path, cache.fingerprint));
  CHECK_THROWS_AS(load_cache(path, cache.fingerprint + 1), CacheError);
  CHECK_THROWS_AS(load_cache(tmp_path("presize_emb_nonexistent.bin")), IoError);

  auto bytes = read_file(path);
  const auto bad_magic = tmp_path("presize_emb_badmagic.bin");
  {
    auto damaged = bytes;
    damaged[0] = 'X';
    std::ofstream(bad_magic, std::ios::binary) << damaged;
  }
  CHECK_THROWS_AS(load_cache(bad_magic), CacheError);

  const auto truncated = tmp_path("presize_emb_truncated.bin");
  std::ofstream(truncated, std::ios::binary) << bytes.substr(0, bytes.size() / 2);
  CHECK_THROWS_AS(load_cache(truncated), CacheError);

  const auto bad_footer = tmp_path("presize_emb_badfooter.bin");
  {
    auto damaged = bytes;
    damaged[damaged.size() - 3] ^= 0x40;
    std::ofstream(bad_footer, std::ios::binary) << damaged;
  }
  CHECK_THROWS_AS(load_cache(bad_footer), CacheError);

  for (const auto& p : {path, path2, bad_magic, truncated, bad_footer})
    std::filesystem::remove(p);
}

TEST_CASE("cache assembly equals the end-to-end prediction bit for bit") {
  const auto ds = random_dataset(9, 13, 9);
  const auto vocab = test_vocab();
  const auto reg = data::AttributeRegistry::defaults();
  const auto cfg = tiny_cfg(vocab, reg, ds.vocab.n_classes());
  const auto params = model::ModelParams::init(cfg, 21);
  const auto cache = build_embedding_cache(all_items(ds), params, cfg, vocab, reg);

  const auto path = tmp_path("presize_emb_exact.bin");
  save_cache(path, cache);
  const auto loaded = load_cache(path, model_fingerprint(params, cfg));
  std::filesystem::remove(path);

  const auto examples = all_examples(ds);
  REQUIRE(examples.size() >= 100);
  int checked = 0;
  for (const auto& ex : examples) {
    const auto direct = model::predict(ds, ex, params, cfg, vocab, reg);
    const auto assembled = predict_from_cache(ds, ex, cache, params, cfg, vocab, reg);
    REQUIRE(probs_bitwise_equal(direct, assembled));
    const auto from_disk = predict_from_cache(ds, ex, loaded, params, cfg, vocab, reg);
    REQUIRE(probs_bitwise_equal(direct, from_disk));
    ++checked;
  }
  CHECK(checked >= 100);
}

TEST_CASE("cache assembly error paths") {
  const auto ds = random_dataset(10, 2, 5);
  const auto vocab = test_vocab();
  const auto reg = data::AttributeRegistry::defaults();
  const auto cfg = tiny_cfg(vocab, reg, ds.vocab.n_classes());
  const auto params = model::ModelParams::init(cfg, 31);

  // Leave one history item out of the cache.
  auto items = all_items(ds);
  const std::string dropped = ds.histories[0].purchases[1].item.item_id;
  std::erase_if(items, [&](const data::Item& it) { return it.item_id == dropped; });
  const auto cache = build_embedding_cache(items, params, cfg, vocab, reg);

  const auto examples = all_examples(ds);
  bool hit_miss = false;
  for (const auto& ex : examples) {
    bool needs_dropped = false;
    for (int i = 0; i < ex.history_len(); ++i)
      needs_dropped = needs_dropped || ds.history_at(ex, i).item.item_id == dropped;
    if (!needs_dropped) continue;
    try {
      predict_from_cache(ds, ex, cache, params, cfg, vocab, reg);
      FAIL("expected a cache miss");
    } catch (const CacheMissError& e) {
      CHECK(std::string(e.what()).find(dropped) != std::string::npos);
      hit_miss = true;
    }
    break;
  }
  CHECK(hit_miss);

  data::Item target = ds.histories[0].purchases[0].item;
  CHECK_THROWS_AS(predict_from_cache({}, target, 10, cache, params, cfg, vocab, reg),
                  std::invalid_argument);

  auto wide = cache;
  wide.d = cfg.d + 1;
  CHECK_THROWS_AS(predict_from_cache({{dropped, 0}}, target, 10, wide, params, cfg, vocab, reg),
                  CacheError);
}
