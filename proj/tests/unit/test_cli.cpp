#include <gtest/gtest.h>

#include <cstdlib>
#include <sstream>

#include "test_util.hpp"
#include "xling/cli.hpp"
#include "xling/manifest.hpp"

namespace xling {
namespace {

using testing::read_file;
using testing::TempDir;
using testing::write_file;

struct Result {
  int code;
  std::string out, err;
};

Result run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

/// Small, fast settings for end-to-end command tests.
const char* kSmallConfig =
    "synth.vocab_per_language = 40\n"
    "synth.signal_per_class = 5\n"
    "synth.shared_tokens = 4\n"
    "synth.n_labeled_source = 60\n"
    "synth.n_unlabeled_target = 80\n"
    "synth.n_test_target = 40\n"
    "synth.n_btf_source = 80\n"
    "model.dim = 6\n"
    "model.base_hidden = 6\n"
    "model.hidden_step = 2\n"
    "btf.epochs = 2\n"
    "finetune.epochs = 2\n"
    "soft.epochs = 2\n"
    "hard.epochs = 2\n";

TEST(Cli, UsageErrors) {
  auto r = run({"frobnicate"});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("synth"), std::string::npos);
  EXPECT_EQ(run({}).code, 1);
  EXPECT_EQ(run({"selftrain", "--bogus"}).code, 1);
}

TEST(Cli, ConfigErrors) {
  TempDir dir;
  const auto rd = (dir / "run").string();
  EXPECT_EQ(run({"selftrain", "--run-dir", rd, "--set", "rounds=1.3"}).code, 2);
  EXPECT_EQ(run({"selftrain", "--run-dir", rd, "--set", "no.such.key=1"}).code, 2);
  EXPECT_EQ(run({"selftrain", "--run-dir", rd, "--config", (dir / "missing.conf").string()}).code, 2);
  EXPECT_EQ(run({"selftrain", "--run-dir", rd}).code, 2);  // no data paths configured
}

TEST(Cli, DataErrors) {
  TempDir dir;
  const auto rd = (dir / "run").string();
  EXPECT_EQ(run({"eval", "--run-dir", rd}).code, 3);
  EXPECT_EQ(run({"selftrain", "--run-dir", rd, "--set",
                 "data.source_train=" + (dir / "nope.jsonl").string(), "--set",
                 "data.target_unlabeled=" + (dir / "nope.jsonl").string(), "--set",
                 "btf.enabled=false"})
                .code,
            3);
}

TEST(Cli, EndToEndSelftrainEvalAndDeterminism) {
  TempDir dir;
  write_file(dir / "small.conf", kSmallConfig);
  const auto conf = (dir / "small.conf").string();
  const auto rd = dir / "run";
  ASSERT_EQ(run({"synth", "--config", conf, "--run-dir", rd.string(), "--seed", "3"}).code, 0);
  ASSERT_TRUE(std::filesystem::exists(rd / "data.conf"));
  write_file(dir / "full.conf", std::string(kSmallConfig) + read_file(rd / "data.conf"));
  const auto full = (dir / "full.conf").string();

  // Dry run checks everything and writes nothing.
  const auto dry = dir / "dry";
  auto r = run({"selftrain", "--config", full, "--run-dir", dry.string(), "--dry-run"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_FALSE(std::filesystem::exists(dry / "checkpoints"));
  EXPECT_FALSE(std::filesystem::exists(dry / "manifest.json"));

  for (const char* name : {"a", "b"}) {
    r = run({"selftrain", "--config", full, "--run-dir", (dir / name).string()});
    ASSERT_EQ(r.code, 0) << r.err;
  }
  for (const char* ckpt : {"base", "finetuned", "round1-soft", "round1-hard", "round2-soft"}) {
    EXPECT_TRUE(std::filesystem::exists(dir / "a" / "checkpoints" / (std::string(ckpt) + ".ckpt")))
        << ckpt;
  }
  const auto ma = read_manifest(dir / "a" / "manifest.json");
  const auto mb = read_manifest(dir / "b" / "manifest.json");
  EXPECT_EQ(ma.phases.size(), 5u);
  EXPECT_EQ(ma.rounds.size(), 1u);
  EXPECT_TRUE(ma.timestamps.count("run.end"));
  EXPECT_EQ(to_json(ma, false).dump(), to_json(mb, false).dump());
  EXPECT_EQ(read_file(dir / "a" / "checkpoints" / "round2-soft.ckpt"),
            read_file(dir / "b" / "checkpoints" / "round2-soft.ckpt"));

  std::filesystem::remove(dir / "a" / "report.csv");
  r = run({"eval", "--config", full, "--run-dir", (dir / "a").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto csv = read_file(dir / "a" / "report.csv");
  EXPECT_EQ(csv.rfind("phase,round,dataset,metric,value\n", 0), 0u);
  EXPECT_NE(csv.find("round2-soft,2,target_test,accuracy,"), std::string::npos);

  r = run({"eval", "--config", full, "--run-dir", (dir / "a").string(), "--set",
           "eval.checkpoint=" + (dir / "a" / "checkpoints" / "finetuned.ckpt").string(), "--set",
           "eval.data=" + (rd / "data" / "target_test.jsonl").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("accuracy"), std::string::npos);

  r = run({"threshold-curve", "--config", full, "--run-dir", (dir / "a").string(), "--set",
           "eval.checkpoint=" + (dir / "a" / "checkpoints" / "round1-soft.ckpt").string(),
           "--set", "eval.data=" + (rd / "data" / "source_train.jsonl").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("selected alpha"), std::string::npos);
  EXPECT_EQ(read_file(dir / "a" / "threshold_curve.csv").rfind("threshold,accuracy,recall,n_recalled\n", 0),
            0u);
}

TEST(Cli, SeparateBtfAndFinetuneStages) {
  TempDir dir;
  write_file(dir / "small.conf", kSmallConfig);
  const auto rd = dir / "run";
  ASSERT_EQ(run({"synth", "--config", (dir / "small.conf").string(), "--run-dir", rd.string()}).code, 0);
  write_file(dir / "full.conf", std::string(kSmallConfig) + read_file(rd / "data.conf"));
  const auto full = (dir / "full.conf").string();
  auto r = run({"btf", "--config", full, "--run-dir", rd.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  ASSERT_TRUE(std::filesystem::exists(rd / "checkpoints" / "base.ckpt"));
  r = run({"finetune", "--config", full, "--run-dir", rd.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(std::filesystem::exists(rd / "checkpoints" / "finetuned.ckpt"));
}

TEST(Cli, EntityF1Evaluation) {
  TempDir dir;
  write_file(dir / "gold.jsonl",
             "{\"id\":\"d1\",\"lang\":\"en\",\"tokens\":[\"Ann\",\"Lee\",\"in\",\"Rome\"],"
             "\"tags\":[\"B-PER\",\"I-PER\",\"O\",\"B-LOC\"]}\n");
  write_file(dir / "pred.jsonl",
             "{\"id\":\"d1\",\"lang\":\"en\",\"tokens\":[\"Ann\",\"Lee\",\"in\",\"Rome\"],"
             "\"tags\":[\"B-PER\",\"I-PER\",\"O\",\"O\"]}\n");
  const auto r = run({"eval", "--run-dir", (dir / "run").string(), "--set",
                      "eval.data=" + (dir / "gold.jsonl").string(), "--set",
                      "eval.predictions=" + (dir / "pred.jsonl").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("entity P 100.00 R 50.00 F1 66.67"), std::string::npos) << r.out;
}

TEST(Cli, BinaryExitCodes) {
  const std::string bin = XLING_CLI_PATH;
  EXPECT_EQ(WEXITSTATUS(std::system((bin + " frobnicate > /dev/null 2>&1").c_str())), 1);
  EXPECT_EQ(WEXITSTATUS(std::system((bin + " --help > /dev/null 2>&1").c_str())), 0);
}

}  // namespace
}  // namespace xling
