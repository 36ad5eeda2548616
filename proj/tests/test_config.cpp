#include <gtest/gtest.h>

#include <filesystem>

#include "aseg/config.hpp"

using namespace aseg;

TEST(Config, DefaultsValidate) { EXPECT_NO_THROW(RunConfig{}.validate()); }

TEST(Config, SnapshotRoundTrips) {
  RunConfig c;
  c.lr = 0.0017;
  c.horizon_band = 1.0 / 3.0;
  c.seed = 123456789012345ULL;
  c.agent = "hybrid";
  c.overview_size = 32;
  c.out_dir = "runs/x y";
  EXPECT_EQ(parse_config_text(c.to_text()), c);
}

TEST(Config, ParsesCommentsAndWhitespace) {
  const RunConfig c = parse_config_text("# header\n  epochs = 3  # trailing\n\npolicy=random\n");
  EXPECT_EQ(c.epochs, 3);
  EXPECT_EQ(c.policy, "random");
}

TEST(Config, RejectsUnknownKeysAndBadValues) {
  EXPECT_THROW(parse_config_text("epoch = 3\n"), ConfigError);
  EXPECT_THROW(parse_config_text("epochs = three\n"), ConfigError);
  EXPECT_THROW(parse_config_text("epochs 3\n"), ConfigError);
  EXPECT_THROW(parse_config_text("lr = 1e-3x\n"), ConfigError);
}

TEST(Config, ValidationNamesTheProblem) {
  RunConfig c;
  c.agent = "hybrid";
  EXPECT_THROW(c.validate(), ConfigError);
  c.overview_size = 32;
  EXPECT_NO_THROW(c.validate());
  c.policy = "greedy";
  EXPECT_THROW(c.validate(), ConfigError);
  c = RunConfig{};
  c.dataset = "folder";
  EXPECT_THROW(c.validate(), ConfigError);
  c = RunConfig{};
  c.retina_scales = 3;
  c.glimpse_size = 40;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Config, ScaleOnlyTakesNoGlimpses) {
  RunConfig c;
  c.agent = "scale_only";
  c.overview_size = 32;
  EXPECT_EQ(c.agent_config().steps, 0);
}

TEST(Config, ShippedExamplesValidate) {
  int seen = 0;
  for (const auto& entry : std::filesystem::directory_iterator(ASEG_CONFIG_DIR)) {
    if (entry.path().extension() != ".cfg") continue;
    ++seen;
    EXPECT_NO_THROW(load_config(entry.path().string()).validate()) << entry.path();
  }
  EXPECT_GE(seen, 3);
}
