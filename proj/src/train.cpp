// SPDX-License-Identifier: Apache-2.0

#include "presize/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <random>

#include "presize/ops.hpp"

namespace presize::train {

void TrainConfig::validate() const {
  if (batch_size < 1) throw ConfigError("batch_size must be positive");
  if (!(lr0 > 0.0)) throw ConfigError("lr0 must be positive");
  if (!(lr_floor > 0.0)) throw ConfigError("lr_floor must be positive");
  if (!(lr_floor < lr0)) throw ConfigError("lr_floor must be below lr0");
  if (eval_every < 1) throw ConfigError("eval_every must be positive");
  if (val_sample < 1) throw ConfigError("val_sample must be positive");
  if (patience < 1) throw ConfigError("patience must be positive");
  if (max_iters < 0) throw ConfigError("max_iters must be nonnegative");
}

bool schedule_compatible(const TrainConfig& a, const TrainConfig& b) {
  return a.batch_size == b.batch_size && a.lr0 == b.lr0 && a.lr_floor == b.lr_floor &&
         a.eval_every == b.eval_every && a.val_sample == b.val_sample &&
         a.patience == b.patience && a.seed == b.seed &&
         a.freeze_temporal == b.freeze_temporal;
}

ScheduleState lr_schedule_step(double val_loss, ScheduleState s, int patience) {
  if (patience < 1) throw ConfigError("patience must be positive");
  if (val_loss < s.best) {
    s.best = val_loss;
    s.bad_evals = 0;
  } else if (++s.bad_evals >= patience) {
    s.lr /= 2.0;
    s.bad_evals = 0;
    s.best = val_loss;
  }
  return s;
}

// ------------------------------------------------------------------ loss

template <class T>
double cross_entropy(const nn::TensorT<T>& logits, const std::vector<int>& labels,
                     nn::TensorT<T>* dlogits) {
  if (logits.ndim() != 2) throw nn::DimensionError("cross_entropy expects [batch, classes]");
  const int b = logits.dim(0), n = logits.dim(1);
  if (static_cast<int>(labels.size()) != b)
    throw nn::DimensionError("cross_entropy: one label per logits row");
  if (dlogits) {
    dlogits->shape = logits.shape;
    dlogits->data.assign(logits.size(), T(0));
  }
  double total = 0.0;
  for (int i = 0; i < b; ++i) {
    const int y = labels[i];
    if (y < 0 || y >= n) throw nn::IndexError("cross_entropy: label id out of range");
    const T* row = logits.ptr() + static_cast<std::size_t>(i) * n;
    double mx = row[0];
    for (int j = 1; j < n; ++j) mx = std::max(mx, static_cast<double>(row[j]));
    double sum = 0.0;
    for (int j = 0; j < n; ++j) sum += std::exp(static_cast<double>(row[j]) - mx);
    const double lse = mx + std::log(sum);
    total += lse - static_cast<double>(row[y]);
    if (dlogits) {
      T* drow = dlogits->ptr() + static_cast<std::size_t>(i) * n;
      for (int j = 0; j < n; ++j)
        drow[j] = static_cast<T>(std::exp(static_cast<double>(row[j]) - lse) / b);
      drow[y] -= static_cast<T>(1.0 / b);
    }
  }
  return total / b;
}

template <class T>
double batch_loss(const data::Dataset& ds, const std::vector<data::TrainingExample>& batch,
                  const model::ModelParamsT<T>& params, const model::ModelConfig& cfg,
                  const bpe::BpeVocab& vocab, const data::AttributeRegistry& reg,
                  model::ModelParamsT<T>* grads) {
  if (batch.empty()) throw data::EmptyDatasetError("batch_loss: empty batch");
  model::ForwardCacheT<T> cache;
  const nn::TensorT<T> logits = model::model_forward(
      ds, batch, params, cfg, vocab, reg, model::RefTime::kTraining, grads ? &cache : nullptr);
  std::vector<int> labels;
  labels.reserve(batch.size());
  for (const auto& ex : batch) labels.push_back(ex.label_id);
  nn::TensorT<T> dlogits;
  const double loss = cross_entropy(logits, labels, grads ? &dlogits : nullptr);
  if (!std::isfinite(loss))
    throw nn::GradientError("batch_loss: non-finite loss, aborting before the update");
  if (grads) model::model_backward(cache, params, cfg, dlogits, *grads);
  return loss;
}

template double cross_entropy<float>(const nn::TensorT<float>&, const std::vector<int>&,
                                     nn::TensorT<float>*);
template double cross_entropy<double>(const nn::TensorT<double>&, const std::vector<int>&,
                                      nn::TensorT<double>*);
template double batch_loss<float>(const data::Dataset&,
                                  const std::vector<data::TrainingExample>&,
                                  const model::ModelParamsT<float>&, const model::ModelConfig&,
                                  const bpe::BpeVocab&, const data::AttributeRegistry&,
                                  model::ModelParamsT<float>*);
template double batch_loss<double>(const data::Dataset&,
                                   const std::vector<data::TrainingExample>&,
                                   const model::ModelParamsT<double>&, const model::ModelConfig&,
                                   const bpe::BpeVocab&, const data::AttributeRegistry&,
                                   model::ModelParamsT<double>*);

// ------------------------------------------------------------- train loop

namespace {

// Both orderings are produced by a private Fisher-Yates over a seeded
// mt19937_64 rather than std::shuffle / std::sample, whose draw patterns
// are implementation-defined; traces must reproduce across toolchains.
std::vector<int> epoch_order(std::size_t n, std::uint64_t seed, long long epoch) {
  std::vector<int> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = static_cast<int>(i);
  std::mt19937_64 rng(seed ^ (0x9E3779B97F4A7C15ULL * static_cast<std::uint64_t>(epoch + 1)));
  for (std::size_t i = 0; i + 1 < n; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng() % (n - i));
    std::swap(order[i], order[j]);
  }
  return order;
}

std::vector<int> val_subsample(std::size_t n, int cap, std::uint64_t seed) {
  std::vector<int> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = static_cast<int>(i);
  if (n <= static_cast<std::size_t>(cap)) return idx;
  std::mt19937_64 rng(seed ^ 0xC2B2AE3D27D4EB4FULL);
  for (std::size_t i = 0; i < static_cast<std::size_t>(cap); ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng() % (n - i));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(static_cast<std::size_t>(cap));
  std::sort(idx.begin(), idx.end());
  return idx;
}

double eval_loss(const data::Dataset& ds, const std::vector<data::TrainingExample>& val,
                 const std::vector<int>& subsample, const model::ModelParams& params,
                 const model::ModelConfig& cfg, const TrainConfig& tcfg,
                 const bpe::BpeVocab& vocab, const data::AttributeRegistry& reg) {
  double total = 0.0;
  std::size_t count = 0;
  std::vector<data::TrainingExample> batch;
  for (std::size_t at = 0; at < subsample.size(); at += tcfg.batch_size) {
    const std::size_t b =
        std::min<std::size_t>(tcfg.batch_size, subsample.size() - at);
    batch.clear();
    for (std::size_t i = 0; i < b; ++i) batch.push_back(val[subsample[at + i]]);
    total += batch_loss(ds, batch, params, cfg, vocab, reg) * static_cast<double>(b);
    count += b;
  }
  return total / static_cast<double>(count);
}

void append_log_row(const std::string& path, const LogRow& row) {
  const bool fresh = !std::filesystem::exists(path) || std::filesystem::file_size(path) == 0;
  std::FILE* f = std::fopen(path.c_str(), "a");
  if (!f) throw IoError("cannot open training log for append: " + path);
  if (fresh) std::fputs("iter,train_loss,val_loss,lr,wallclock\n", f);
  std::fprintf(f, "%lld,%.17g,%.17g,%.17g,%.3f\n", row.iter, row.train_loss, row.val_loss,
               row.lr, row.wallclock_s);
  std::fclose(f);
}

}  // namespace

TrainResult train(const data::Dataset& ds,
                  const std::vector<data::TrainingExample>& train_set,
                  const std::vector<data::TrainingExample>& val_set,
                  const model::ModelConfig& mcfg, const TrainConfig& tcfg,
                  const bpe::BpeVocab& vocab, const data::AttributeRegistry& reg,
                  const Checkpoint* resume) {
  mcfg.validate();
  tcfg.validate();
  if (train_set.empty()) throw data::EmptyDatasetError("train: empty training split");
  if (val_set.empty()) throw data::EmptyDatasetError("train: empty validation split");
  for (const auto& ex : train_set)
    if (ex.label_id < 0 || ex.label_id >= mcfg.n_classes)
      throw ConfigError("train: label id outside the configured class count");

  TrainResult out;
  if (resume) {
    if (!(resume->model_cfg == mcfg))
      throw CheckpointError("resume checkpoint was built for a different model config");
    if (!schedule_compatible(resume->train_cfg, tcfg))
      throw CheckpointError("resume checkpoint was built for a different train config");
    out.params = resume->params;
    out.schedule = resume->schedule;
    out.cursor = resume->cursor;
  } else {
    out.params = model::ModelParams::init(mcfg, tcfg.seed);
    out.schedule = ScheduleState{tcfg.lr0, std::numeric_limits<double>::infinity(), 0};
    if (tcfg.freeze_temporal) out.params.temporal_emb.fill(0.0f);
  }

  model::ModelParams grads = model::ModelParams::zeros(mcfg);
  std::vector<std::string> names;
  std::vector<nn::Tensor*> ps;
  std::vector<const nn::Tensor*> gs;
  out.params.visit([&](const std::string& n, nn::Tensor& t) {
    names.push_back(n);
    ps.push_back(&t);
  });
  grads.visit([&](const std::string&, nn::Tensor& t) { gs.push_back(&t); });

  nn::AdamStateT<float> adam;
  if (resume) {
    adam = resume->adam;
    if (adam.m.size() != ps.size())
      throw CheckpointError("resume checkpoint optimizer state does not match the model");
  } else {
    adam.init(ps);
  }
  const nn::AdamConfigT<float> acfg;

  const std::vector<int> val_idx = val_subsample(val_set.size(), tcfg.val_sample, tcfg.seed);
  std::vector<int> order = epoch_order(train_set.size(), tcfg.seed, out.cursor.epoch);

  const auto t0 = std::chrono::steady_clock::now();
  double window_loss = 0.0;
  long long window_count = 0;
  std::vector<data::TrainingExample> batch;

  while (!(tcfg.max_iters > 0 && out.cursor.iter >= tcfg.max_iters)) {
    const long long n = static_cast<long long>(train_set.size());
    const long long b = std::min<long long>(tcfg.batch_size, n - out.cursor.pos);
    batch.clear();
    for (long long i = 0; i < b; ++i)
      batch.push_back(train_set[order[out.cursor.pos + i]]);
    out.cursor.pos += b;
    if (out.cursor.pos >= n) {
      out.cursor.pos = 0;
      ++out.cursor.epoch;
      order = epoch_order(train_set.size(), tcfg.seed, out.cursor.epoch);
    }

    grads.visit([](const std::string&, nn::Tensor& t) { t.fill(0.0f); });
    const double loss = batch_loss(ds, batch, out.params, mcfg, vocab, reg, &grads);
    window_loss += loss * static_cast<double>(b);
    window_count += b;
    if (tcfg.freeze_temporal) grads.temporal_emb.fill(0.0f);
    nn::adam_step(ps, gs, names, adam, static_cast<float>(out.schedule.lr), acfg);
    ++out.cursor.iter;

    if (out.cursor.iter % tcfg.eval_every == 0) {
      const double val = eval_loss(ds, val_set, val_idx, out.params, mcfg, tcfg, vocab, reg);
      if (!std::isfinite(val))
        throw nn::GradientError("train: non-finite validation loss");
      LogRow row;
      row.iter = out.cursor.iter;
      row.train_loss = window_loss / static_cast<double>(window_count);
      row.val_loss = val;
      row.lr = out.schedule.lr;
      row.wallclock_s =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      out.log.push_back(row);
      if (!tcfg.log_path.empty()) append_log_row(tcfg.log_path, row);
      window_loss = 0.0;
      window_count = 0;
      out.schedule = lr_schedule_step(val, out.schedule, tcfg.patience);
      if (!tcfg.checkpoint_path.empty())
        save_checkpoint(tcfg.checkpoint_path,
                        Checkpoint{mcfg, tcfg, out.params, adam, out.schedule, out.cursor});
      if (out.schedule.lr < tcfg.lr_floor) {
        out.schedule_halted = true;
        break;
      }
    }
  }
  return out;
}

}  // namespace presize::train
