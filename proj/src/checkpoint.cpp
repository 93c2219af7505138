// SPDX-License-Identifier: Apache-2.0
//
// Checkpoint container: magic, format version, model and train configs,
// named parameter tensors, Adam moments, schedule state, data cursor,
// footer. All integers and floats are little-endian.

#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

#include "presize/train.hpp"

namespace presize::train {

namespace {

constexpr char kMagic[8] = {'P', 'S', 'Z', 'C', 'K', 'P', 'T', '\0'};
constexpr char kFooter[8] = {'P', 'S', 'Z', 'E', 'N', 'D', '\0', '\0'};
constexpr std::uint32_t kVersion = 1;

static_assert(std::endian::native == std::endian::little,
              "checkpoint io assumes a little-endian host");

struct Writer {
  std::FILE* f;

  void bytes(const void* p, std::size_t n) {
    if (std::fwrite(p, 1, n, f) != n) throw IoError("checkpoint write failed");
  }
  void u32(std::uint32_t v) { bytes(&v, sizeof v); }
  void u64(std::uint64_t v) { bytes(&v, sizeof v); }
  void i64(long long v) { u64(static_cast<std::uint64_t>(v)); }
  void f64(double v) { bytes(&v, sizeof v); }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }
  void f32v(const std::vector<float>& v) { bytes(v.data(), v.size() * sizeof(float)); }
};

struct Reader {
  std::FILE* f;

  void bytes(void* p, std::size_t n) {
    if (std::fread(p, 1, n, f) != n) throw CheckpointError("checkpoint truncated");
  }
  std::uint32_t u32() {
    std::uint32_t v;
    bytes(&v, sizeof v);
    return v;
  }
  std::uint64_t u64() {
    std::uint64_t v;
    bytes(&v, sizeof v);
    return v;
  }
  long long i64() { return static_cast<long long>(u64()); }
  double f64() {
    double v;
    bytes(&v, sizeof v);
    return v;
  }
  std::string str() {
    const std::uint32_t n = u32();
    if (n > (1u << 20)) throw CheckpointError("checkpoint string length implausible");
    std::string s(n, '\0');
    bytes(s.data(), n);
    return s;
  }
  void f32v(std::vector<float>& v) { bytes(v.data(), v.size() * sizeof(float)); }
};

void write_model_config(Writer& w, const model::ModelConfig& c) {
  w.i64(c.d);
  w.i64(c.n_layers);
  w.i64(c.heads);
  w.i64(c.ffn);
  w.i64(c.item_seq_len);
  w.i64(c.history_len);
  w.i64(c.n_classes);
  w.i64(c.vocab_size);
  w.i64(c.n_attr_names);
  w.i64(c.n_positions);
  w.i64(c.n_temporal_ids);
  w.u32(static_cast<std::uint32_t>(c.maskable_attributes.size()));
  for (const auto& name : c.maskable_attributes) w.str(name);
}

model::ModelConfig read_model_config(Reader& r) {
  model::ModelConfig c;
  c.d = static_cast<int>(r.i64());
  c.n_layers = static_cast<int>(r.i64());
  c.heads = static_cast<int>(r.i64());
  c.ffn = static_cast<int>(r.i64());
  c.item_seq_len = static_cast<int>(r.i64());
  c.history_len = static_cast<int>(r.i64());
  c.n_classes = static_cast<int>(r.i64());
  c.vocab_size = static_cast<int>(r.i64());
  c.n_attr_names = static_cast<int>(r.i64());
  c.n_positions = static_cast<int>(r.i64());
  c.n_temporal_ids = static_cast<int>(r.i64());
  const std::uint32_t n = r.u32();
  c.maskable_attributes.clear();
  for (std::uint32_t i = 0; i < n; ++i) c.maskable_attributes.insert(r.str());
  return c;
}

void write_train_config(Writer& w, const TrainConfig& c) {
  w.i64(c.batch_size);
  w.f64(c.lr0);
  w.f64(c.lr_floor);
  w.i64(c.eval_every);
  w.i64(c.val_sample);
  w.i64(c.patience);
  w.u64(c.seed);
  w.i64(c.max_iters);
  w.u32(c.freeze_temporal ? 1u : 0u);
}

TrainConfig read_train_config(Reader& r) {
  TrainConfig c;
  c.batch_size = static_cast<int>(r.i64());
  c.lr0 = r.f64();
  c.lr_floor = r.f64();
  c.eval_every = r.i64();
  c.val_sample = static_cast<int>(r.i64());
  c.patience = static_cast<int>(r.i64());
  c.seed = r.u64();
  c.max_iters = r.i64();
  c.freeze_temporal = r.u32() != 0;
  return c;
}

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& ck) {
  const std::string tmp = path + ".tmp";
  std::FILE* f = std::fopen(tmp.c_str(), "wb");
  if (!f) throw IoError("cannot open checkpoint for write: " + tmp);
  try {
    Writer w{f};
    w.bytes(kMagic, sizeof kMagic);
    w.u32(kVersion);
    write_model_config(w, ck.model_cfg);
    write_train_config(w, ck.train_cfg);

    std::uint64_t n_tensors = 0;
    ck.params.visit([&](const std::string&, const nn::Tensor&) { ++n_tensors; });
    w.u64(n_tensors);
    ck.params.visit([&](const std::string& name, const nn::Tensor& t) {
      w.str(name);
      w.u32(static_cast<std::uint32_t>(t.ndim()));
      for (int i = 0; i < t.ndim(); ++i) w.i64(t.dim(i));
      w.f32v(t.data);
    });

    if (ck.adam.m.size() != n_tensors || ck.adam.v.size() != n_tensors)
      throw CheckpointError("optimizer state does not cover every parameter tensor");
    w.i64(ck.adam.step);
    for (std::size_t i = 0; i < ck.adam.m.size(); ++i) {
      w.f32v(ck.adam.m[i].data);
      w.f32v(ck.adam.v[i].data);
    }

    w.f64(ck.schedule.lr);
    w.f64(ck.schedule.best);
    w.i64(ck.schedule.bad_evals);
    w.i64(ck.cursor.iter);
    w.i64(ck.cursor.epoch);
    w.i64(ck.cursor.pos);
    w.bytes(kFooter, sizeof kFooter);
  } catch (...) {
    std::fclose(f);
    std::filesystem::remove(tmp);
    throw;
  }
  if (std::fclose(f) != 0) {
    std::filesystem::remove(tmp);
    throw IoError("checkpoint close failed: " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "rb");
  if (!f) throw IoError("cannot open checkpoint: " + path);
  Checkpoint ck;
  try {
    Reader r{f};
    char magic[8];
    r.bytes(magic, sizeof magic);
    if (std::memcmp(magic, kMagic, sizeof magic) != 0)
      throw CheckpointError("not a checkpoint file (bad magic): " + path);
    const std::uint32_t version = r.u32();
    if (version != kVersion)
      throw CheckpointError("unsupported checkpoint version " + std::to_string(version));

    ck.model_cfg = read_model_config(r);
    ck.train_cfg = read_train_config(r);
    try {
      ck.model_cfg.validate();
      ck.train_cfg.validate();
    } catch (const ConfigError& e) {
      throw CheckpointError(std::string("checkpoint config invalid: ") + e.what());
    }

    ck.params = model::ModelParams::zeros(ck.model_cfg);
    std::uint64_t n_tensors = 0;
    ck.params.visit([&](const std::string&, nn::Tensor&) { ++n_tensors; });
    if (r.u64() != n_tensors)
      throw CheckpointError("checkpoint tensor count does not match its config");
    ck.params.visit([&](const std::string& name, nn::Tensor& t) {
      if (r.str() != name) throw CheckpointError("checkpoint tensor order mismatch at " + name);
      if (r.u32() != static_cast<std::uint32_t>(t.ndim()))
        throw CheckpointError("checkpoint shape mismatch at " + name);
      for (int i = 0; i < t.ndim(); ++i)
        if (r.i64() != t.dim(i)) throw CheckpointError("checkpoint shape mismatch at " + name);
      r.f32v(t.data);
    });

    ck.adam.step = r.i64();
    if (ck.adam.step < 0) throw CheckpointError("checkpoint optimizer step negative");
    ck.adam.m.clear();
    ck.adam.v.clear();
    ck.params.visit([&](const std::string&, const nn::Tensor& t) {
      ck.adam.m.push_back(nn::Tensor::zeros(t.shape));
      ck.adam.v.push_back(nn::Tensor::zeros(t.shape));
      r.f32v(ck.adam.m.back().data);
      r.f32v(ck.adam.v.back().data);
    });

    ck.schedule.lr = r.f64();
    ck.schedule.best = r.f64();
    ck.schedule.bad_evals = static_cast<int>(r.i64());
    ck.cursor.iter = r.i64();
    ck.cursor.epoch = r.i64();
    ck.cursor.pos = r.i64();

    char footer[8];
    r.bytes(footer, sizeof footer);
    if (std::memcmp(footer, kFooter, sizeof footer) != 0)
      throw CheckpointError("checkpoint footer missing (file damaged): " + path);
  } catch (...) {
    std::fclose(f);
    throw;
  }
  std::fclose(f);
  return ck;
}

Checkpoint load_checkpoint(const std::string& path, const model::ModelConfig& expect) {
  Checkpoint ck = load_checkpoint(path);
  if (!(ck.model_cfg == expect))
    throw CheckpointError("checkpoint model config does not match the requested config");
  return ck;
}

}  // namespace presize::train
