#include <gtest/gtest.h>

#include <string>

#include "ulab/config.hpp"

using namespace ulab;

TEST(ParseConfig, EmptyFileGivesBoundsDefaults) {
  ExperimentConfig cfg = parse_config_text("", "empty");
  EXPECT_EQ(cfg.mode, Mode::Bounds);
  EXPECT_EQ(cfg.seed, 1u);
  EXPECT_EQ(cfg.epochs, 10);
  EXPECT_EQ(cfg.batch_size, 128u);
  EXPECT_EQ(cfg.layers.size(), 5u);
  EXPECT_EQ(cfg.layers.back().units, 8u);
  EXPECT_NO_THROW(validate_config(cfg));  // bounds mode needs no paths
}

TEST(ParseConfig, TypeErrorCarriesLineNumber) {
  try {
    parse_config_text("seed = 3\nepochs = ten\n", "conf");
    FAIL() << "expected format_error";
  } catch (const format_error& e) {
    EXPECT_NE(std::string(e.what()).find("conf:2"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("integer"), std::string::npos);
  }
}

TEST(ParseConfig, UnknownKeyRejectedWithLine) {
  try {
    parse_config_text("# comment\n\nbogus_key = 1\n", "conf");
    FAIL() << "expected format_error";
  } catch (const format_error& e) {
    EXPECT_NE(std::string(e.what()).find("conf:3"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("bogus_key"), std::string::npos);
  }
}

TEST(ParseConfig, CommentsAndBlanksIgnored) {
  ExperimentConfig cfg = parse_config_text(
      "# full line comment\n"
      "\n"
      "epochs = 7   # trailing comment\n"
      "  lr = 0.01\n",
      "conf");
  EXPECT_EQ(cfg.epochs, 7);
  EXPECT_DOUBLE_EQ(cfg.lr, 0.01);
}

TEST(ParseConfig, LayersWithPerLayerNorms) {
  ExperimentConfig cfg = parse_config_text(
      "norm = unitization\n"
      "layers = 64, 32:bn, 8:none\n",
      "conf");
  ASSERT_EQ(cfg.layers.size(), 3u);
  EXPECT_EQ(cfg.layers[0].units, 64u);
  EXPECT_EQ(cfg.layers[0].norm, NormKind::Unitization);  // from the default
  EXPECT_EQ(cfg.layers[1].norm, NormKind::BatchNorm);
  EXPECT_EQ(cfg.layers[2].norm, NormKind::None);
}

TEST(ParseConfig, NormKeyRestylesDefaultLayers) {
  ExperimentConfig cfg = parse_config_text("norm = unitization\n", "conf");
  for (const auto& l : cfg.layers) EXPECT_EQ(l.norm, NormKind::Unitization);
}

TEST(ParseConfig, ListsAndBooleans) {
  ExperimentConfig cfg = parse_config_text(
      "milestones = 9, 18, 24\n"
      "critic_hidden = 64,64\n"
      "nesterov = false\n"
      "zero_timings = true\n",
      "conf");
  EXPECT_EQ(cfg.milestones, (std::vector<int>{9, 18, 24}));
  EXPECT_EQ(cfg.critic_hidden, (std::vector<std::size_t>{64, 64}));
  EXPECT_FALSE(cfg.nesterov);
  EXPECT_TRUE(cfg.zero_timings);
}

TEST(ParseConfig, BadModeAndBadBoolRejected) {
  EXPECT_THROW(parse_config_text("mode = training\n", "conf"), format_error);
  EXPECT_THROW(parse_config_text("nesterov = maybe\n", "conf"), format_error);
}

TEST(SerializeConfig, RoundTripsToEqualConfig) {
  ExperimentConfig cfg = parse_config_text(
      "mode = moments\n"
      "seed = 99\n"
      "layers = 16:bn, 8:unitization\n"
      "lr = 0.025\n"
      "milestones = 5, 11\n"
      "train_images = a.idx\n"
      "train_labels = b.idx\n"
      "test_images = c.idx\n"
      "test_labels = d.idx\n"
      "critic_sigmoid_head = true\n"
      "zero_timings = true\n",
      "conf");
  const std::string text = serialize_config(cfg);
  ExperimentConfig reparsed = parse_config_text(text, "serialized");
  EXPECT_EQ(cfg, reparsed);
  // and serialization itself is a fixed point
  EXPECT_EQ(text, serialize_config(reparsed));
}

TEST(ConfigHash, SensitiveToContent) {
  ExperimentConfig a;
  ExperimentConfig b;
  b.seed = 2;
  EXPECT_NE(config_hash(a), config_hash(b));
  EXPECT_EQ(config_hash(a), config_hash(ExperimentConfig{}));
}

TEST(ValidateConfig, TrainModeRequiresDatasets) {
  ExperimentConfig cfg;
  cfg.mode = Mode::Train;
  EXPECT_THROW(validate_config(cfg), missing_data_error);
  cfg.train_images = "/nonexistent/images";
  cfg.train_labels = "/nonexistent/labels";
  cfg.test_images = "/nonexistent/ti";
  cfg.test_labels = "/nonexistent/tl";
  EXPECT_THROW(validate_config(cfg), missing_data_error);
}

TEST(ValidateConfig, RangeChecks) {
  ExperimentConfig cfg;
  cfg.milestones = {10, 10};
  EXPECT_THROW(validate_config(cfg), contract_error);
  cfg = ExperimentConfig{};
  cfg.probe_p = 1;
  EXPECT_THROW(validate_config(cfg), contract_error);
  cfg = ExperimentConfig{};
  cfg.emdist_layers = {7};
  EXPECT_THROW(validate_config(cfg), contract_error);
}

TEST(ParseConfig, MissingEqualsRejected) {
  EXPECT_THROW(parse_config_text("epochs 5\n", "conf"), format_error);
}
