// SPDX-License-Identifier: Apache-2.0
//
// Training loop: cross-entropy over the size classes, Adam, and a
// plateau-halving learning-rate schedule. Checkpoints capture the full
// optimizer and data-cursor state, so a resumed run emits the same loss
// trace as an uninterrupted one.

#pragma once

#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "presize/adam.hpp"
#include "presize/bpe.hpp"
#include "presize/data.hpp"
#include "presize/errors.hpp"
#include "presize/model.hpp"
#include "presize/tensor.hpp"

namespace presize::train {

struct CheckpointError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------- config

struct TrainConfig {
  int batch_size = 128;
  double lr0 = 1e-5;
  double lr_floor = 1e-7;  // run halts once halving takes lr below this
  long long eval_every = 1000;
  int val_sample = 15000;  // validation subsample cap, drawn once per run
  int patience = 10;       // non-improving evals before a halving
  std::uint64_t seed = 0;
  long long max_iters = 0;      // 0 = run until the schedule halts
  bool freeze_temporal = false; // temporal embeddings stay zero for the whole run
  std::string checkpoint_path;  // empty = no checkpoints written
  std::string log_path;         // empty = in-memory log only

  void validate() const;  // ConfigError on violation
  bool operator==(const TrainConfig&) const = default;
};

// Fields that must agree between a checkpoint and the run resuming from
// it; output paths and the iteration cap may differ.
bool schedule_compatible(const TrainConfig& a, const TrainConfig& b);

// -------------------------------------------------------------- schedule

// lr never increases. best is the lowest validation loss seen since the
// last halving (or run start); bad_evals counts consecutive evals that
// failed to improve on it.
struct ScheduleState {
  double lr = 0.0;
  double best = std::numeric_limits<double>::infinity();
  int bad_evals = 0;

  bool operator==(const ScheduleState&) const = default;
};

/// Fold one validation measurement into the schedule. An improvement is a
/// strict decrease below best. After patience consecutive non-improving
/// evals the rate halves, the counter clears, and best restarts at the
/// current measurement.
ScheduleState lr_schedule_step(double val_loss, ScheduleState s, int patience);

// ------------------------------------------------------------------ loss

/// Mean negative log-likelihood of labels under row-wise softmax(logits),
/// computed via log-sum-exp. If dlogits is non-null it is resized to
/// logits' shape and receives d(loss)/d(logits). IndexError on a label
/// outside [0, n_classes).
template <class T>
double cross_entropy(const nn::TensorT<T>& logits, const std::vector<int>& labels,
                     nn::TensorT<T>* dlogits = nullptr);

/// Forward the batch (training-time reference days), return the mean
/// cross-entropy, and, when grads is non-null, accumulate parameter
/// gradients into it (caller zeroes). Throws nn::GradientError if the
/// loss is non-finite.
template <class T>
double batch_loss(const data::Dataset& ds, const std::vector<data::TrainingExample>& batch,
                  const model::ModelParamsT<T>& params, const model::ModelConfig& cfg,
                  const bpe::BpeVocab& vocab, const data::AttributeRegistry& reg,
                  model::ModelParamsT<T>* grads = nullptr);

// ------------------------------------------------------------ checkpoint

// Position in the training stream. Epoch orderings are derived from the
// run seed and the epoch index, so (iter, epoch, pos) pins the exact next
// batch without serializing generator internals.
struct TrainCursor {
  long long iter = 0;
  long long epoch = 0;
  long long pos = 0;  // next offset within the current epoch's ordering

  bool operator==(const TrainCursor&) const = default;
};

struct Checkpoint {
  model::ModelConfig model_cfg;
  TrainConfig train_cfg;
  model::ModelParams params;
  nn::AdamStateT<float> adam;
  ScheduleState schedule;
  TrainCursor cursor;
};

/// Versioned binary format, little-endian. Writes to a temporary file and
/// renames, so an interrupted save never corrupts the previous checkpoint.
void save_checkpoint(const std::string& path, const Checkpoint& ck);

/// CheckpointError on unreadable files, bad magic, unsupported version,
/// or tensors that do not match the embedded config.
Checkpoint load_checkpoint(const std::string& path);

/// As above, then rejects the file if its model config differs from expect.
Checkpoint load_checkpoint(const std::string& path, const model::ModelConfig& expect);

// ------------------------------------------------------------- train loop

struct LogRow {
  long long iter = 0;
  double train_loss = 0.0;  // mean batch loss since the previous eval
  double val_loss = 0.0;
  double lr = 0.0;  // rate in effect for the batches in this window
  double wallclock_s = 0.0;

  // Wallclock is excluded: it differs across runs of the same seed.
  bool same_trace(const LogRow& o) const {
    return iter == o.iter && train_loss == o.train_loss && val_loss == o.val_loss &&
           lr == o.lr;
  }
};

struct TrainResult {
  model::ModelParams params;
  std::vector<LogRow> log;
  ScheduleState schedule;
  TrainCursor cursor;
  bool schedule_halted = false;  // lr fell below lr_floor (vs. max_iters cap)
};

/// Stream shuffled epochs of train_set, one Adam step per batch; every
/// eval_every steps measure loss on a fixed validation subsample, log,
/// advance the schedule, and checkpoint. Fully deterministic given the
/// seed. Resume continues the stream exactly where the checkpoint stopped.
TrainResult train(const data::Dataset& ds,
                  const std::vector<data::TrainingExample>& train_set,
                  const std::vector<data::TrainingExample>& val_set,
                  const model::ModelConfig& mcfg, const TrainConfig& tcfg,
                  const bpe::BpeVocab& vocab, const data::AttributeRegistry& reg,
                  const Checkpoint* resume = nullptr);

}  // namespace presize::train
