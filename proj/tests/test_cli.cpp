// SPDX-License-Identifier: Apache-2.0
//
// End-to-end checks of the presize binary: every subcommand runs against a
// small synthetic dataset in a scratch directory, outputs are byte-stable
// across reruns, and bad invocations exit nonzero with a message.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

namespace {

namespace fs = std::filesystem;

std::string read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

// Per-process scratch directory; files persist until the next run reuses it.
const std::string& scratch() {
  static const std::string dir = [] {
    const auto d = fs::temp_directory_path() / ("presize_cli_" + std::to_string(::getpid()));
    fs::remove_all(d);
    fs::create_directories(d);
    return d.string();
  }();
  return dir;
}

std::string at(const std::string& name) { return scratch() + "/" + name; }

struct RunResult {
  int rc = -1;
  std::string out, err;
};

RunResult run(const std::string& args) {
  static int n = 0;
  const std::string so = at("stdout_" + std::to_string(n) + ".txt");
  const std::string se = at("stderr_" + std::to_string(n) + ".txt");
  ++n;
  const std::string cmd = std::string(PRESIZE_BIN) + " " + args + " > " + so + " 2> " + se;
  const int st = std::system(cmd.c_str());
  RunResult r;
  r.rc = (st >= 0 && WIFEXITED(st)) ? WEXITSTATUS(st) : -1;
  r.out = read_file(so);
  r.err = read_file(se);
  fs::remove(so);
  fs::remove(se);
  return r;
}

// Shared tiny-model flag block; every training-flavoured command uses it.
const std::string kTinyModel =
    " --dim 8 --layers 1 --heads 2 --seq-len 20 --history-len 4 --vocab-size 300"
    " --batch 16 --eval-every 20 --max-iters 20 --seed 3";

// Dataset generated once, reused by every case below.
const std::string& dataset() {
  static const std::string path = [] {
    const auto r = run("gen-data --out " + at("base") +
                       " --seed 7 --buyers 40 --purchases 8 --epsilon 0.05");
    REQUIRE(r.rc == 0);
    return at("base.jsonl");
  }();
  return path;
}

const std::string& trained_checkpoint() {
  static const std::string path = [] {
    const auto r = run("train --data " + dataset() + " --out " + at("m.ckpt") + kTinyModel);
    REQUIRE(r.rc == 0);
    REQUIRE(r.out.find("trained 20 iterations") != std::string::npos);
    return at("m.ckpt");
  }();
  return path;
}

}  // namespace

TEST_CASE("gen-data is deterministic per seed") {
  REQUIRE(fs::exists(dataset()));
  auto r = run("gen-data --out " + at("again") +
               " --seed 7 --buyers 40 --purchases 8 --epsilon 0.05");
  REQUIRE(r.rc == 0);
  CHECK(read_file(at("again.jsonl")) == read_file(at("base.jsonl")));
  CHECK(read_file(at("again.world.json")) == read_file(at("base.world.json")));

  r = run("gen-data --out " + at("other") +
          " --seed 8 --buyers 40 --purchases 8 --epsilon 0.05");
  REQUIRE(r.rc == 0);
  CHECK(read_file(at("other.jsonl")) != read_file(at("base.jsonl")));

  CHECK(read_file(at("base.config.ini")).find("gen-data.seed=7") != std::string::npos);
}

TEST_CASE("train writes checkpoint, vocab, log, and config sidecar") {
  const auto& ckpt = trained_checkpoint();
  CHECK(fs::exists(ckpt));
  CHECK(fs::exists(ckpt + ".vocab"));
  CHECK(fs::exists(ckpt + ".log.csv"));
  CHECK(fs::exists(ckpt + ".config.ini"));

  const auto log = read_file(ckpt + ".log.csv");
  CHECK(log.find("iter") != std::string::npos);

  // same flags, fresh output path: the checkpoint bytes are reproducible
  const auto first = read_file(ckpt);
  auto r = run("train --data " + dataset() + " --out " + at("m2.ckpt") + kTinyModel);
  REQUIRE(r.rc == 0);
  CHECK(read_file(at("m2.ckpt")) == first);
}

TEST_CASE("tokenizer-train writes a loadable vocabulary") {
  const auto r = run("tokenizer-train --data " + dataset() + " --out " + at("tok.vocab") +
                     " --vocab-size 300");
  REQUIRE(r.rc == 0);
  CHECK(fs::exists(at("tok.vocab")));
  CHECK(r.out.find("vocab size") != std::string::npos);

  // an explicitly passed tokenizer is honoured by train
  const auto t = run("train --data " + dataset() + " --out " + at("m3.ckpt") + kTinyModel +
                     " --tokenizer " + at("tok.vocab"));
  REQUIRE(t.rc == 0);
  CHECK(read_file(at("m3.ckpt.vocab")) == read_file(at("tok.vocab")));
}

TEST_CASE("evaluate reports baselines, oracle, and the trained model") {
  auto r = run("evaluate --data " + dataset() + " --baseline pmcv --out " + at("rep_pmcv"));
  REQUIRE(r.rc == 0);
  CHECK(r.out.find("overall") != std::string::npos);
  CHECK(r.out.find("[department]") != std::string::npos);

  const auto rep = nlohmann::json::parse(read_file(at("rep_pmcv.json")));
  CHECK(rep.at("overall").at("n").get<int>() > 0);
  CHECK(rep.at("overall").at("micro_precision").is_number());
  CHECK(rep.at("groups").size() == 6);

  r = run("evaluate --data " + dataset() + " --baseline oracle --world " +
          at("base.world.json"));
  REQUIRE(r.rc == 0);
  CHECK(r.out.find("overall") != std::string::npos);

  r = run("evaluate --data " + dataset() + " --checkpoint " + trained_checkpoint() +
          " --out " + at("rep_model"));
  REQUIRE(r.rc == 0);
  CHECK(nlohmann::json::parse(read_file(at("rep_model.json"))).contains("overall"));
}

TEST_CASE("cached predictions equal direct predictions byte for byte") {
  const auto& ckpt = trained_checkpoint();
  auto r = run("embed-items --data " + dataset() + " --checkpoint " + ckpt + " --out " +
               at("items.cache"));
  REQUIRE(r.rc == 0);

  r = run("predict --data " + dataset() + " --checkpoint " + ckpt + " --out " +
          at("direct.jsonl"));
  REQUIRE(r.rc == 0);
  r = run("predict --data " + dataset() + " --checkpoint " + ckpt + " --cache " +
          at("items.cache") + " --out " + at("cached.jsonl"));
  REQUIRE(r.rc == 0);
  const auto direct = read_file(at("direct.jsonl"));
  CHECK(direct == read_file(at("cached.jsonl")));
  CHECK(!direct.empty());

  std::istringstream lines(direct);
  std::string line;
  REQUIRE(std::getline(lines, line));
  const auto row = nlohmann::json::parse(line);
  CHECK(row.contains("buyer_id"));
  CHECK(row.contains("probs"));
  CHECK(row.at("probs").is_array());
}

TEST_CASE("features emits one json line per test example") {
  const auto r = run("features --data " + dataset() + " --checkpoint " + trained_checkpoint());
  REQUIRE(r.rc == 0);
  std::istringstream lines(r.out);
  std::string line;
  int rows = 0;
  while (std::getline(lines, line)) {
    const auto j = nlohmann::json::parse(line);
    CHECK(j.contains("buyer_id"));
    CHECK(j.contains("item_id"));
    CHECK(j.at("total_score").get<double>() >= j.at("best_score").get<double>());
    CHECK(j.at("best_rank").get<int>() >= 1);
    ++rows;
  }
  CHECK(rows > 0);
}

TEST_CASE("ablate trains a variant and writes the report beside it") {
  const auto r = run("ablate --data " + dataset() + " --out " + at("ab.ckpt") + kTinyModel +
                     " --remove brand");
  REQUIRE(r.rc == 0);
  CHECK(fs::exists(at("ab.ckpt")));
  CHECK(nlohmann::json::parse(read_file(at("ab.ckpt.eval.json"))).contains("overall"));

  const auto bad = run("ablate --data " + dataset() + " --out " + at("ab2.ckpt") + kTinyModel);
  CHECK(bad.rc != 0);
  CHECK(bad.err.find("--remove or --keep-only") != std::string::npos);
}

TEST_CASE("sweep writes a summary across dims") {
  const auto r = run("sweep --data " + dataset() + " --out " + at("sw") + kTinyModel +
                     " --dims 8,16");
  REQUIRE(r.rc == 0);
  const auto summary = nlohmann::json::parse(read_file(at("sw.sweep.json")));
  REQUIRE(summary.size() == 2);
  CHECK(summary[0].at("dim").get<int>() == 8);
  CHECK(summary[1].at("dim").get<int>() == 16);
  CHECK(summary[0].at("micro_precision").is_number());
}

TEST_CASE("bad invocations exit nonzero with a message") {
  auto r = run("train --data " + at("missing.jsonl") + " --out " + at("x.ckpt") + kTinyModel);
  CHECK(r.rc != 0);
  CHECK(r.err.find("missing.jsonl") != std::string::npos);

  r = run("train --data " + dataset() + " --out " + at("x.ckpt") + kTinyModel +
          " --remove bogus");
  CHECK(r.rc != 0);
  CHECK(r.err.find("bogus") != std::string::npos);

  r = run("evaluate --data " + dataset());
  CHECK(r.rc != 0);
  CHECK(r.err.find("--checkpoint or --baseline") != std::string::npos);

  r = run("evaluate --data " + dataset() + " --baseline pmcv --keep-only brand --remove title");
  CHECK(r.rc != 0);

  r = run("--definitely-not-a-flag");
  CHECK(r.rc != 0);

  r = run("evaluate --data " + dataset() + " --baseline oracle");
  CHECK(r.rc != 0);
  CHECK(r.err.find("--world") != std::string::npos);
}
