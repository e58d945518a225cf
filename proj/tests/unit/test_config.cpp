#include <gtest/gtest.h>

#include "test_util.hpp"
#include "xling/config.hpp"
#include "xling/error.hpp"

namespace xling {
namespace {

using testing::TempDir;
using testing::write_file;

std::string message_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

TEST(Config, EmptyFileGivesDefaults) {
  TempDir dir;
  write_file(dir / "c.conf", "# nothing\n\n");
  const auto c = parse_config(dir / "c.conf");
  EXPECT_EQ(to_text(c), to_text(PipelineConfig{}));
  EXPECT_EQ(c.rounds, 1.5);
  EXPECT_EQ(c.threshold_mode, ThresholdMode::automatic);
}

TEST(Config, FileThenOverrides) {
  TempDir dir;
  write_file(dir / "c.conf", "rounds = 2  # two rounds\nthreshold.grid = [0.1, 0.5]\nseed=4\n");
  const auto c = parse_config(dir / "c.conf", {"seed=9", "threshold.mode = fixed"});
  EXPECT_EQ(c.rounds, 2.0);
  EXPECT_EQ(c.seed, 9u);
  EXPECT_EQ(c.grid, (std::vector<double>{0.1, 0.5}));
  EXPECT_EQ(c.threshold_mode, ThresholdMode::fixed);
}

TEST(Config, RoundsMustBeHalfMultiples) {
  EXPECT_NO_THROW(parse_config({}, {"rounds=0.5"}));
  EXPECT_NO_THROW(parse_config({}, {"rounds=1.5"}));
  EXPECT_NE(message_of([] { parse_config({}, {"rounds=1.3"}); }).find("rounds"), std::string::npos);
  EXPECT_THROW(parse_config({}, {"rounds=0"}), ConfigError);
}

TEST(Config, UnknownKeyAndTypeErrorsNameTheKey) {
  EXPECT_NE(message_of([] { parse_config({}, {"model.depth=3"}); }).find("model.depth"),
            std::string::npos);
  EXPECT_NE(message_of([] { parse_config({}, {"soft.epochs=many"}); }).find("soft.epochs"),
            std::string::npos);
  EXPECT_NE(message_of([] { parse_config({}, {"btf.enabled=maybe"}); }).find("btf.enabled"),
            std::string::npos);
  EXPECT_THROW(parse_config({}, {"seed"}), ConfigError);
}

TEST(Config, Validation) {
  EXPECT_THROW(parse_config({}, {"threshold.grid=[0.5, 0.2]"}), ConfigError);
  EXPECT_THROW(parse_config({}, {"btf.mask_rate=1"}), ConfigError);
  EXPECT_THROW(parse_config({}, {"hard.lr=0"}), ConfigError);
  EXPECT_THROW(parse_config({}, {"target_lang=src"}), ConfigError);
  EXPECT_THROW(parse_config({}, {"num_classes=1"}), ConfigError);
  EXPECT_THROW(parse_config("/nonexistent/c.conf"), ConfigError);
}

TEST(Config, TextRoundTripAndHash) {
  TempDir dir;
  const auto c = parse_config({}, {"seed=123", "soft.lr=0.003", "threshold.grid=[0, 0.25, 0.75]",
                                   "data.source_train=/tmp/x y.jsonl"});
  write_file(dir / "c.conf", to_text(c));
  const auto back = parse_config(dir / "c.conf");
  EXPECT_EQ(to_text(back), to_text(c));
  EXPECT_EQ(config_hash(back), config_hash(c));
  EXPECT_NE(config_hash(c), config_hash(PipelineConfig{}));
  EXPECT_EQ(config_hash(c).size(), 64u);
}

}  // namespace
}  // namespace xling
