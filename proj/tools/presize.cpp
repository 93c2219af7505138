// SPDX-License-Identifier: Apache-2.0
//
// presize: command-line front door over the library. Subcommands cover the
// whole workflow: synthetic data generation, tokenizer training, model
// training, slice evaluation, ablations, capacity sweeps, item-embedding
// caches, ranking features, and raw predictions. Every run is deterministic
// given its flags; rerunning a command overwrites its outputs bit for bit
// (wallclock appears only inside the training log).

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <memory>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "presize/baselines.hpp"
#include "presize/bpe.hpp"
#include "presize/data.hpp"
#include "presize/errors.hpp"
#include "presize/evaluation.hpp"
#include "presize/features.hpp"
#include "presize/model.hpp"
#include "presize/synthgen.hpp"
#include "presize/train.hpp"

namespace {

using presize::ConfigError;
using presize::IoError;

// ------------------------------------------------------------------ opts

// One flat option bag; each subcommand binds the subset it understands.
struct Opts {
  // io
  std::string data;
  std::string out;
  std::string checkpoint;
  std::string tokenizer;
  std::string world;
  std::string cache;
  std::string synonyms;
  std::string stoplist;

  // dataset filtering and split
  int min_purchases = 2;
  long min_count = 1;
  double min_frac = 0.0;
  int test_days = 5;
  int val_days = 5;
  int max_history = 25;

  // model
  int dim = 64;
  int layers = 2;
  int heads = 4;
  int ffn = 0;
  int seq_len = 32;
  int history_len = 12;
  int temporal_ids = 17;
  int vocab_size = 800;

  // training
  int batch = 32;
  double lr = 1e-3;
  double lr_floor = 1e-7;
  long long eval_every = 100;
  int val_sample = 2000;
  int patience = 3;
  long long max_iters = 0;
  bool resume = false;
  std::uint64_t seed = 0;

  // ablation
  std::vector<std::string> remove;
  std::string keep_only;

  // evaluation
  std::string baseline;  // mcv | mrv | pmcv | oracle; empty = checkpoint model

  // sweep
  std::vector<int> dims{16, 32, 64};
  std::vector<int> history_lens;

  // world generation
  presize::synth::WorldConfig wcfg;
};

bool has(const std::vector<std::string>& v, const std::string& s) {
  return std::find(v.begin(), v.end(), s) != v.end();
}

std::string join_path(const std::vector<std::string>& path) {
  std::string out;
  for (std::size_t i = 0; i < path.size(); ++i) {
    if (i) out += ':';
    out += path[i];
  }
  return out;
}

int argmax_lower(const std::vector<float>& probs) {
  int best = 0;
  for (int i = 1; i < static_cast<int>(probs.size()); ++i)
    if (probs[i] > probs[best]) best = i;
  return best;
}

// History purchases of one catalog item differ by the purchased size, so a
// bare item id can map to several distinct token sequences. Cache entries
// are therefore keyed by the id plus a content hash; identical contents
// share an entry, and a hash collision between different contents trips
// the duplicate-content check at build time instead of corrupting lookups.
std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (const unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::string cache_key(const presize::data::Item& item) {
  std::vector<std::pair<std::string, std::string>> attrs;
  attrs.reserve(item.attributes.size());
  for (const auto& a : item.attributes) attrs.emplace_back(a.name, a.value);
  std::sort(attrs.begin(), attrs.end());
  std::string blob = item.item_id;
  blob += '\x1f';
  for (const auto& seg : item.category_path) {
    blob += seg;
    blob += '\x1f';
  }
  for (const auto& [n, v] : attrs) {
    blob += n;
    blob += '=';
    blob += v;
    blob += '\x1f';
  }
  char hex[24];
  std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(fnv1a(blob)));
  return item.item_id + "#" + hex;
}

// --------------------------------------------------------------- loading

presize::data::Dataset load_dataset(const Opts& o, const presize::data::AttributeRegistry& reg) {
  auto norm = (!o.synonyms.empty() || !o.stoplist.empty())
                  ? presize::data::NormalizerConfig::from_files(o.synonyms, o.stoplist)
                  : presize::data::NormalizerConfig::defaults();
  auto res = presize::data::load_jsonl(o.data, norm, reg);
  presize::data::FilterConfig f;
  f.min_purchases = o.min_purchases;
  f.min_count = o.min_count;
  f.min_frac = o.min_frac;
  auto ds = presize::data::prepare_dataset(std::move(res.histories), f);
  std::cerr << "loaded " << res.total_rows << " purchases (" << res.dropped_unlabeled
            << " unlabeled dropped): " << ds.histories.size() << " buyers, "
            << ds.vocab.n_classes() << " size classes after filtering\n";
  return ds;
}

// -------------------------------------------------------------- ablation

// "temporal" freezes the temporal embedding table instead of touching the
// data; "all-context" strips every non-size attribute and the category
// path; "category" clears the path; any other token names an attribute to
// erase from every item. --keep-only keeps {size, <attr>} and drops the
// rest (plus the path unless the kept feature is the category itself).
void check_ablation(const Opts& o, const presize::data::AttributeRegistry& reg) {
  for (const auto& r : o.remove) {
    if (r == "temporal" || r == "all-context" || r == "category") continue;
    if (r == "size") throw ConfigError("--remove size would erase the prediction signal");
    if (!reg.contains(r)) throw ConfigError("--remove: unknown attribute '" + r + "'");
  }
  if (!o.keep_only.empty()) {
    if (o.keep_only == "size")
      throw ConfigError("--keep-only size is spelled --remove all-context");
    if (o.keep_only != "category" && !reg.contains(o.keep_only))
      throw ConfigError("--keep-only: unknown attribute '" + o.keep_only + "'");
    for (const auto& r : o.remove)
      if (r != "temporal")
        throw ConfigError("--keep-only cannot be combined with --remove " + r);
  }
}

presize::data::Dataset apply_ablation(presize::data::Dataset ds, const Opts& o) {
  const bool all_ctx = has(o.remove, "all-context");
  const bool keep = !o.keep_only.empty();
  const bool drop_category =
      all_ctx || has(o.remove, "category") || (keep && o.keep_only != "category");
  auto keep_attr = [&](const std::string& name) {
    if (name == "size") return true;
    if (keep) return name == o.keep_only;
    if (all_ctx) return false;
    return !has(o.remove, name);
  };
  for (auto& h : ds.histories)
    for (auto& p : h.purchases) {
      auto& attrs = p.item.attributes;
      attrs.erase(
          std::remove_if(attrs.begin(), attrs.end(),
                         [&](const presize::data::AttributePair& a) { return !keep_attr(a.name); }),
          attrs.end());
      if (drop_category) p.item.category_path.clear();
    }
  return ds;
}

// ------------------------------------------------------------- tokenizer

// One line per purchase: attribute values then the joined category path.
// Trained on the unablated dataset so ablation variants share a vocabulary.
std::vector<std::string> tokenizer_corpus(const presize::data::Dataset& ds) {
  std::vector<std::string> corpus;
  for (const auto& h : ds.histories)
    for (const auto& p : h.purchases) {
      std::string line;
      for (const auto& a : p.item.attributes)
        if (!a.value.empty()) {
          line += a.value;
          line += ' ';
        }
      line += join_path(p.item.category_path);
      corpus.push_back(std::move(line));
    }
  return corpus;
}

// ----------------------------------------------------------- model setup

presize::model::ModelConfig make_model_cfg(const Opts& o, const presize::data::Dataset& ds,
                                           int vocab_size,
                                           const presize::data::AttributeRegistry& reg) {
  presize::model::ModelConfig cfg;
  cfg.d = o.dim;
  cfg.n_layers = o.layers;
  cfg.heads = o.heads;
  cfg.ffn = o.ffn;
  cfg.item_seq_len = o.seq_len;
  cfg.history_len = o.history_len;
  cfg.n_classes = ds.vocab.n_classes();
  cfg.vocab_size = vocab_size;
  cfg.n_attr_names = reg.size();
  cfg.n_positions = o.seq_len;
  cfg.n_temporal_ids = o.temporal_ids;
  cfg.maskable_attributes = reg.maskable;
  cfg.validate();
  return cfg;
}

presize::model::SizeDistribution example_dist(
    const presize::data::Dataset& model_ds, const presize::data::TrainingExample& ex,
    const presize::features::ItemEmbeddingCache* cache, const presize::train::Checkpoint& ck,
    const presize::bpe::BpeVocab& vocab, const presize::data::AttributeRegistry& reg) {
  if (!cache)
    return presize::model::predict(model_ds, ex, ck.params, ck.model_cfg, vocab, reg);
  std::vector<presize::features::HistoryRef> refs;
  refs.reserve(static_cast<std::size_t>(ex.history_len()));
  for (int i = 0; i < ex.history_len(); ++i) {
    const auto& p = model_ds.history_at(ex, i);
    refs.push_back({cache_key(p.item), p.purchase_day});
  }
  return presize::features::predict_from_cache(refs, model_ds.target_of(ex).item, ex.target_day,
                                               *cache, ck.params, ck.model_cfg, vocab, reg);
}

presize::bpe::BpeVocab load_checkpoint_vocab(const Opts& o,
                                             const presize::model::ModelConfig& mcfg) {
  const std::string path = o.tokenizer.empty() ? o.checkpoint + ".vocab" : o.tokenizer;
  auto vocab = presize::bpe::load_vocab(path);
  if (vocab.size() != mcfg.vocab_size)
    throw ConfigError("tokenizer at " + path + " has vocab size " +
                      std::to_string(vocab.size()) + ", checkpoint expects " +
                      std::to_string(mcfg.vocab_size));
  return vocab;
}

void check_dataset_compat(const presize::model::ModelConfig& mcfg,
                          const presize::data::Dataset& ds,
                          const presize::data::AttributeRegistry& reg) {
  if (mcfg.n_classes != ds.vocab.n_classes())
    throw ConfigError("checkpoint predicts " + std::to_string(mcfg.n_classes) +
                      " classes, dataset has " + std::to_string(ds.vocab.n_classes()));
  if (mcfg.n_attr_names != reg.size())
    throw ConfigError("checkpoint attribute-name table does not match the registry");
}

// --------------------------------------------------------------- sidecar

// Resolved configuration (defaults plus overrides) next to every artifact.
void write_sidecar(const CLI::App& app, const std::string& out) {
  if (out.empty()) return;
  const std::string path = out + ".config.ini";
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  f << app.config_to_str(true, false);
  f.flush();
  if (!f) throw IoError("cannot write config sidecar: " + path);
}

// ------------------------------------------------------------- gen-data

int cmd_gen_data(const Opts& o, const CLI::App& app) {
  auto world = presize::synth::generate_world(o.wcfg);
  auto histories = presize::synth::generate_histories(world);
  presize::data::save_jsonl(o.out + ".jsonl", histories);
  presize::synth::save_world(o.out + ".world.json", world);
  write_sidecar(app, o.out);
  long long purchases = 0;
  for (const auto& h : histories) purchases += static_cast<long long>(h.purchases.size());
  std::cout << "wrote " << o.out << ".jsonl: " << histories.size() << " buyers, " << purchases
            << " purchases over " << world.items.size() << " items\n"
            << "wrote " << o.out << ".world.json\n";
  return 0;
}

// ------------------------------------------------------- tokenizer-train

int cmd_tokenizer_train(const Opts& o, const CLI::App& app) {
  const auto reg = presize::data::AttributeRegistry::defaults();
  const auto ds = load_dataset(o, reg);
  const auto corpus = tokenizer_corpus(ds);
  const auto vocab = presize::bpe::train_bpe(corpus, o.vocab_size);
  presize::bpe::save_vocab(vocab, o.out);
  write_sidecar(app, o.out);
  std::cout << "trained on " << corpus.size() << " lines, vocab size " << vocab.size()
            << ", wrote " << o.out << "\n";
  return 0;
}

// ----------------------------------------------------------------- train

int cmd_train(const Opts& o, const CLI::App& app) {
  const auto reg = presize::data::AttributeRegistry::defaults();
  check_ablation(o, reg);
  const auto ds = load_dataset(o, reg);
  const auto model_ds = apply_ablation(ds, o);
  const auto split = presize::data::split_temporal(ds, o.test_days, o.val_days, o.max_history);
  std::cerr << "split: " << split.train.size() << " train / " << split.val.size() << " val / "
            << split.test.size() << " test examples\n";

  presize::bpe::BpeVocab vocab = o.tokenizer.empty()
                                     ? presize::bpe::train_bpe(tokenizer_corpus(ds), o.vocab_size)
                                     : presize::bpe::load_vocab(o.tokenizer);
  presize::bpe::save_vocab(vocab, o.out + ".vocab");

  const auto mcfg = make_model_cfg(o, ds, vocab.size(), reg);

  presize::train::TrainConfig tcfg;
  tcfg.batch_size = o.batch;
  tcfg.lr0 = o.lr;
  tcfg.lr_floor = o.lr_floor;
  tcfg.eval_every = o.eval_every;
  tcfg.val_sample = o.val_sample;
  tcfg.patience = o.patience;
  tcfg.seed = o.seed;
  tcfg.max_iters = o.max_iters;
  tcfg.freeze_temporal = has(o.remove, "temporal");
  tcfg.checkpoint_path = o.out;
  tcfg.log_path = o.out + ".log.csv";
  if (std::filesystem::exists(tcfg.log_path) && !o.resume)
    std::filesystem::remove(tcfg.log_path);

  std::unique_ptr<presize::train::Checkpoint> prev;
  if (o.resume) {
    if (!std::filesystem::exists(o.out))
      throw ConfigError("--resume: no checkpoint at " + o.out);
    prev = std::make_unique<presize::train::Checkpoint>(
        presize::train::load_checkpoint(o.out, mcfg));
  }

  const auto res = presize::train::train(model_ds, split.train, split.val, mcfg, tcfg, vocab, reg,
                                         prev.get());
  write_sidecar(app, o.out);

  std::cout << "trained " << res.cursor.iter << " iterations ("
            << (res.schedule_halted ? "schedule halted" : "iteration cap") << ")";
  if (!res.log.empty())
    std::cout << ", final val loss " << res.log.back().val_loss << " at lr "
              << res.log.back().lr;
  std::cout << "\nwrote " << o.out << ", " << o.out << ".vocab, " << o.out << ".log.csv\n";
  return 0;
}

// -------------------------------------------------------------- evaluate

int cmd_evaluate(const Opts& o, const CLI::App& app) {
  const auto reg = presize::data::AttributeRegistry::defaults();
  check_ablation(o, reg);
  const auto ds = load_dataset(o, reg);
  const auto split = presize::data::split_temporal(ds, o.test_days, o.val_days, o.max_history);
  if (split.test.empty())
    throw presize::data::EmptyDatasetError("evaluate: the temporal test split is empty");

  std::vector<int> preds;
  preds.reserve(split.test.size());
  if (o.baseline == "oracle") {
    if (o.world.empty()) throw ConfigError("--baseline oracle requires --world");
    const auto world = presize::synth::load_world(o.world);
    for (const auto& ex : split.test)
      preds.push_back(argmax_lower(presize::synth::bayes_oracle(world, ds, ex).probs));
  } else if (!o.baseline.empty()) {
    const auto kind = presize::baselines::baseline_from_name(o.baseline);
    const auto stats = presize::baselines::build_size_stats(ds, split.train);
    for (const auto& ex : split.test)
      preds.push_back(presize::baselines::baseline_predict(kind, ds, ex, stats).label);
  } else {
    if (o.checkpoint.empty())
      throw ConfigError("evaluate needs --checkpoint or --baseline");
    const auto ck = presize::train::load_checkpoint(o.checkpoint);
    check_dataset_compat(ck.model_cfg, ds, reg);
    const auto vocab = load_checkpoint_vocab(o, ck.model_cfg);
    const auto model_ds = apply_ablation(ds, o);
    for (const auto& ex : split.test)
      preds.push_back(argmax_lower(
          presize::model::predict(model_ds, ex, ck.params, ck.model_cfg, vocab, reg).probs));
  }

  const auto report = presize::eval::slice_evaluate(ds, split.test, preds,
                                                    presize::eval::CategoryMapping::defaults());
  std::cout << presize::eval::report_text(report);
  if (!o.out.empty()) {
    const std::string path = o.out + ".json";
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    f << presize::eval::report_json(report) << "\n";
    f.flush();
    if (!f) throw IoError("cannot write report: " + path);
    write_sidecar(app, o.out);
    std::cout << "wrote " << path << "\n";
  }
  return 0;
}

// ---------------------------------------------------------------- ablate

int cmd_ablate(const Opts& o, const CLI::App& app) {
  if (o.remove.empty() && o.keep_only.empty())
    throw ConfigError("ablate needs --remove or --keep-only");
  if (const int rc = cmd_train(o, app); rc != 0) return rc;
  Opts eo = o;
  eo.checkpoint = o.out;
  eo.tokenizer.clear();  // the vocab written next to the checkpoint
  eo.out = o.out + ".eval";
  return cmd_evaluate(eo, app);
}

// ----------------------------------------------------------------- sweep

int cmd_sweep(const Opts& o, const CLI::App& app) {
  const std::vector<int> hists = o.history_lens.empty() ? std::vector<int>{o.history_len}
                                                        : o.history_lens;
  nlohmann::json summary = nlohmann::json::array();
  for (const int d : o.dims)
    for (const int h : hists) {
      Opts v = o;
      v.dim = d;
      v.history_len = h;
      const std::string tag = "d" + std::to_string(d) + "_h" + std::to_string(h);
      v.out = o.out + "." + tag;
      std::cerr << "sweep variant " << tag << "\n";
      if (const int rc = cmd_train(v, app); rc != 0) return rc;
      Opts eo = v;
      eo.checkpoint = v.out;
      eo.tokenizer.clear();
      eo.out = v.out + ".eval";
      if (const int rc = cmd_evaluate(eo, app); rc != 0) return rc;

      std::ifstream f(eo.out + ".json");
      nlohmann::json rep = nlohmann::json::parse(f);
      summary.push_back({{"variant", tag},
                         {"dim", d},
                         {"history_len", h},
                         {"micro_precision", rep.at("overall").at("micro_precision")},
                         {"n", rep.at("overall").at("n")}});
    }
  const std::string path = o.out + ".sweep.json";
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  f << summary.dump(2) << "\n";
  f.flush();
  if (!f) throw IoError("cannot write sweep summary: " + path);
  std::cout << summary.dump(2) << "\n" << "wrote " << path << "\n";
  return 0;
}

// ----------------------------------------------------------- embed-items

int cmd_embed_items(const Opts& o, const CLI::App& app) {
  const auto reg = presize::data::AttributeRegistry::defaults();
  check_ablation(o, reg);
  const auto ds = load_dataset(o, reg);
  const auto model_ds = apply_ablation(ds, o);
  const auto ck = presize::train::load_checkpoint(o.checkpoint);
  check_dataset_compat(ck.model_cfg, ds, reg);
  const auto vocab = load_checkpoint_vocab(o, ck.model_cfg);

  std::vector<presize::data::Item> items;
  std::set<std::string> seen;
  for (const auto& h : model_ds.histories)
    for (const auto& p : h.purchases) {
      auto key = cache_key(p.item);
      if (seen.insert(key).second) {
        items.push_back(p.item);
        items.back().item_id = std::move(key);  // id is not tokenized; rename is free
      }
    }

  const auto cache =
      presize::features::build_embedding_cache(items, ck.params, ck.model_cfg, vocab, reg);
  presize::features::save_cache(o.out, cache);
  write_sidecar(app, o.out);
  std::cout << "wrote " << items.size() << " item embeddings (d=" << cache.d << ") to " << o.out
            << "\n";
  return 0;
}

// -------------------------------------------------------------- features

int cmd_features(const Opts& o, const CLI::App& app) {
  const auto reg = presize::data::AttributeRegistry::defaults();
  check_ablation(o, reg);
  const auto ds = load_dataset(o, reg);
  const auto model_ds = apply_ablation(ds, o);
  const auto split = presize::data::split_temporal(ds, o.test_days, o.val_days, o.max_history);
  const auto ck = presize::train::load_checkpoint(o.checkpoint);
  check_dataset_compat(ck.model_cfg, ds, reg);
  const auto vocab = load_checkpoint_vocab(o, ck.model_cfg);

  std::unique_ptr<presize::features::ItemEmbeddingCache> cache;
  if (!o.cache.empty())
    cache = std::make_unique<presize::features::ItemEmbeddingCache>(presize::features::load_cache(
        o.cache, presize::features::model_fingerprint(ck.params, ck.model_cfg)));

  std::ofstream file;
  if (!o.out.empty()) {
    file.open(o.out, std::ios::binary | std::ios::trunc);
    if (!file) throw IoError("cannot open " + o.out + " for write");
  }
  std::ostream& out = o.out.empty() ? std::cout : file;

  for (const auto& ex : split.test) {
    const auto dist = example_dist(model_ds, ex, cache.get(), ck, vocab, reg);
    const auto& target = ds.target_of(ex).item;
    const auto avail = presize::features::available_ids(target, ds.vocab);
    const auto f = presize::features::size_features(dist, avail);
    out << presize::features::feature_line(ds.buyer_of(ex).buyer_id, target.item_id, f) << "\n";
  }
  out.flush();
  if (!out) throw IoError("failed writing feature lines");
  if (!o.out.empty()) {
    write_sidecar(app, o.out);
    std::cout << "wrote " << split.test.size() << " feature lines to " << o.out << "\n";
  }
  return 0;
}

// --------------------------------------------------------------- predict

int cmd_predict(const Opts& o, const CLI::App& app) {
  const auto reg = presize::data::AttributeRegistry::defaults();
  check_ablation(o, reg);
  const auto ds = load_dataset(o, reg);
  const auto model_ds = apply_ablation(ds, o);
  const auto split = presize::data::split_temporal(ds, o.test_days, o.val_days, o.max_history);
  const auto ck = presize::train::load_checkpoint(o.checkpoint);
  check_dataset_compat(ck.model_cfg, ds, reg);
  const auto vocab = load_checkpoint_vocab(o, ck.model_cfg);

  std::unique_ptr<presize::features::ItemEmbeddingCache> cache;
  if (!o.cache.empty())
    cache = std::make_unique<presize::features::ItemEmbeddingCache>(presize::features::load_cache(
        o.cache, presize::features::model_fingerprint(ck.params, ck.model_cfg)));

  std::ofstream file;
  if (!o.out.empty()) {
    file.open(o.out, std::ios::binary | std::ios::trunc);
    if (!file) throw IoError("cannot open " + o.out + " for write");
  }
  std::ostream& out = o.out.empty() ? std::cout : file;

  for (const auto& ex : split.test) {
    const auto dist = example_dist(model_ds, ex, cache.get(), ck, vocab, reg);
    const int pred = argmax_lower(dist.probs);
    nlohmann::json j;
    j["buyer_id"] = ds.buyer_of(ex).buyer_id;
    j["item_id"] = ds.target_of(ex).item.item_id;
    j["target_day"] = ex.target_day;
    j["label"] = ds.vocab.label_of(ex.label_id);
    j["predicted"] = ds.vocab.label_of(pred);
    j["probs"] = dist.probs;
    out << j.dump() << "\n";
  }
  out.flush();
  if (!out) throw IoError("failed writing predictions");
  if (!o.out.empty()) {
    write_sidecar(app, o.out);
    std::cout << "wrote " << split.test.size() << " predictions to " << o.out << "\n";
  }
  return 0;
}

// ------------------------------------------------------------------ main

void add_filter_flags(CLI::App* c, Opts& o) {
  c->add_option("--data", o.data, "input dataset (jsonl)")->required();
  c->add_option("--min-purchases", o.min_purchases, "minimum purchases per buyer")
      ->capture_default_str();
  c->add_option("--min-count", o.min_count, "per-category size label count floor")
      ->capture_default_str();
  c->add_option("--min-frac", o.min_frac, "per-category size label share floor")
      ->capture_default_str();
  auto* syn = c->add_option("--synonyms", o.synonyms, "size synonym table (tsv)");
  auto* stop = c->add_option("--stoplist", o.stoplist, "size stoplist (one per line)");
  syn->needs(stop);
  stop->needs(syn);
}

void add_split_flags(CLI::App* c, Opts& o) {
  c->add_option("--test-days", o.test_days, "trailing days held out for test")
      ->capture_default_str();
  c->add_option("--val-days", o.val_days, "days before the test window held out for validation")
      ->capture_default_str();
  c->add_option("--max-history", o.max_history, "history window cap per example")
      ->capture_default_str();
}

void add_model_flags(CLI::App* c, Opts& o) {
  c->add_option("--dim", o.dim, "embedding width")->capture_default_str();
  c->add_option("--layers", o.layers, "encoder layers per stack")->capture_default_str();
  c->add_option("--heads", o.heads, "attention heads")->capture_default_str();
  c->add_option("--ffn", o.ffn, "feed-forward width (0 = 4*dim)")->capture_default_str();
  c->add_option("--seq-len", o.seq_len, "token budget per item")->capture_default_str();
  c->add_option("--history-len", o.history_len, "purchases fed to the history encoder")
      ->capture_default_str();
  c->add_option("--temporal-ids", o.temporal_ids, "temporal bucket count")->capture_default_str();
}

void add_train_flags(CLI::App* c, Opts& o) {
  c->add_option("--tokenizer", o.tokenizer, "existing tokenizer file (default: train one)");
  c->add_option("--vocab-size", o.vocab_size, "tokenizer vocab size when training one")
      ->capture_default_str();
  c->add_option("--batch", o.batch, "batch size")->capture_default_str();
  c->add_option("--lr", o.lr, "initial learning rate")->capture_default_str();
  c->add_option("--lr-floor", o.lr_floor, "halt once halving takes lr below this")
      ->capture_default_str();
  c->add_option("--eval-every", o.eval_every, "iterations between validation evals")
      ->capture_default_str();
  c->add_option("--val-sample", o.val_sample, "validation subsample cap")->capture_default_str();
  c->add_option("--patience", o.patience, "non-improving evals before halving")
      ->capture_default_str();
  c->add_option("--max-iters", o.max_iters, "iteration cap (0 = schedule decides)")
      ->capture_default_str();
  c->add_option("--seed", o.seed, "run seed")->capture_default_str();
  c->add_flag("--resume", o.resume, "continue from the checkpoint at --out");
}

void add_ablation_flags(CLI::App* c, Opts& o) {
  c->add_option("--remove", o.remove,
                "drop a feature: an attribute name, 'category', 'temporal', or 'all-context'")
      ->delimiter(',');
  c->add_option("--keep-only", o.keep_only, "keep a single context feature besides size");
}

void add_eval_source_flags(CLI::App* c, Opts& o) {
  c->add_option("--checkpoint", o.checkpoint, "trained model checkpoint");
  c->add_option("--tokenizer", o.tokenizer, "tokenizer file (default: <checkpoint>.vocab)");
  c->add_option("--baseline", o.baseline, "mcv | mrv | pmcv | oracle instead of a checkpoint");
  c->add_option("--world", o.world, "world truth json (for --baseline oracle)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"transformer size prediction over purchase histories"};
  app.require_subcommand(1);
  app.set_config("--config", "", "INI config file; command-line flags override it");

  Opts o;
  std::function<int()> action;

  auto* gen = app.add_subcommand("gen-data", "generate a synthetic dataset with world truth");
  gen->add_option("--out", o.out, "output prefix (<out>.jsonl, <out>.world.json)")->required();
  gen->add_option("--seed", o.wcfg.seed, "world seed")->capture_default_str();
  gen->add_option("--buyers", o.wcfg.buyers, "buyer count")->capture_default_str();
  gen->add_option("--brands", o.wcfg.brands, "brand count")->capture_default_str();
  gen->add_option("--categories", o.wcfg.categories_per_department,
                  "item types per department (max 4)")
      ->capture_default_str();
  gen->add_option("--items-per-category", o.wcfg.items_per_category, "items per category")
      ->capture_default_str();
  gen->add_option("--purchases", o.wcfg.purchases_per_buyer, "purchases per buyer")
      ->capture_default_str();
  gen->add_option("--max-day-gap", o.wcfg.max_day_gap, "max days between purchases")
      ->capture_default_str();
  gen->add_option("--brand-offset-range", o.wcfg.brand_offset_range,
                  "per-brand size shift range [-r, r]")
      ->capture_default_str();
  gen->add_option("--epsilon", o.wcfg.epsilon, "adjacent-label noise rate")
      ->capture_default_str();
  gen->add_option("--drift-every-days", o.wcfg.drift_every_days,
                  "kids size index +1 per this many days (0 = off)")
      ->capture_default_str();
  gen->add_option("--mixed-persona-prob", o.wcfg.mixed_persona_prob,
                  "chance of a second, different-department persona")
      ->capture_default_str();
  gen->add_option("--letter-chart", o.wcfg.letter_chart, "letter size chart, smallest first")
      ->delimiter(',');
  gen->add_option("--shoe-chart", o.wcfg.shoe_chart, "shoe size chart, smallest first")
      ->delimiter(',');
  gen->add_option("--kids-chart", o.wcfg.kids_chart, "kids size chart, smallest first")
      ->delimiter(',');
  gen->callback([&] { action = [&] { return cmd_gen_data(o, app); }; });

  auto* tok = app.add_subcommand("tokenizer-train", "train the subword tokenizer on a dataset");
  add_filter_flags(tok, o);
  tok->add_option("--out", o.out, "output tokenizer file")->required();
  tok->add_option("--vocab-size", o.vocab_size, "target vocab size")->capture_default_str();
  tok->callback([&] { action = [&] { return cmd_tokenizer_train(o, app); }; });

  auto* tr = app.add_subcommand("train", "train a size prediction model");
  add_filter_flags(tr, o);
  add_split_flags(tr, o);
  add_model_flags(tr, o);
  add_train_flags(tr, o);
  add_ablation_flags(tr, o);
  tr->add_option("--out", o.out, "checkpoint path (also <out>.vocab, <out>.log.csv)")->required();
  tr->callback([&] { action = [&] { return cmd_train(o, app); }; });

  auto* ev = app.add_subcommand("evaluate", "slice-evaluate a model or baseline on the test split");
  add_filter_flags(ev, o);
  add_split_flags(ev, o);
  add_eval_source_flags(ev, o);
  add_ablation_flags(ev, o);
  ev->add_option("--out", o.out, "report prefix (<out>.json); stdout only when omitted");
  ev->callback([&] { action = [&] { return cmd_evaluate(o, app); }; });

  auto* ab = app.add_subcommand("ablate", "train and evaluate one feature-ablation variant");
  add_filter_flags(ab, o);
  add_split_flags(ab, o);
  add_model_flags(ab, o);
  add_train_flags(ab, o);
  add_ablation_flags(ab, o);
  ab->add_option("--out", o.out, "checkpoint path; report lands at <out>.eval.json")->required();
  ab->callback([&] { action = [&] { return cmd_ablate(o, app); }; });

  auto* sw = app.add_subcommand("sweep", "train and evaluate across dims and history caps");
  add_filter_flags(sw, o);
  add_split_flags(sw, o);
  add_model_flags(sw, o);
  add_train_flags(sw, o);
  sw->add_option("--dims", o.dims, "embedding widths to sweep")
      ->delimiter(',')
      ->capture_default_str();
  sw->add_option("--history-lens", o.history_lens, "history caps to sweep (default: --history-len)")
      ->delimiter(',');
  sw->add_option("--out", o.out, "prefix; variants at <out>.<tag>, summary at <out>.sweep.json")
      ->required();
  sw->callback([&] { action = [&] { return cmd_sweep(o, app); }; });

  auto* em = app.add_subcommand("embed-items", "precompute unmasked item embeddings");
  add_filter_flags(em, o);
  add_ablation_flags(em, o);
  em->add_option("--checkpoint", o.checkpoint, "trained model checkpoint")->required();
  em->add_option("--tokenizer", o.tokenizer, "tokenizer file (default: <checkpoint>.vocab)");
  em->add_option("--out", o.out, "output cache file")->required();
  em->callback([&] { action = [&] { return cmd_embed_items(o, app); }; });

  auto* fe = app.add_subcommand("features", "emit ranking features for the test split");
  add_filter_flags(fe, o);
  add_split_flags(fe, o);
  add_ablation_flags(fe, o);
  fe->add_option("--checkpoint", o.checkpoint, "trained model checkpoint")->required();
  fe->add_option("--tokenizer", o.tokenizer, "tokenizer file (default: <checkpoint>.vocab)");
  fe->add_option("--cache", o.cache, "item embedding cache to serve history embeddings from");
  fe->add_option("--out", o.out, "output jsonl; stdout when omitted");
  fe->callback([&] { action = [&] { return cmd_features(o, app); }; });

  auto* pr = app.add_subcommand("predict", "emit size distributions for the test split");
  add_filter_flags(pr, o);
  add_split_flags(pr, o);
  add_ablation_flags(pr, o);
  pr->add_option("--checkpoint", o.checkpoint, "trained model checkpoint")->required();
  pr->add_option("--tokenizer", o.tokenizer, "tokenizer file (default: <checkpoint>.vocab)");
  pr->add_option("--cache", o.cache, "item embedding cache to serve history embeddings from");
  pr->add_option("--out", o.out, "output jsonl; stdout when omitted");
  pr->callback([&] { action = [&] { return cmd_predict(o, app); }; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }
  try {
    return action ? action() : 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
