#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <string>

#include "ulab/experiments.hpp"

using namespace ulab;

namespace {

const std::string kDataDir = ULAB_DATA_DIR;

std::string file_bytes(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(f)),
                     std::istreambuf_iterator<char>());
}

std::size_t line_count(const std::string& path) {
  std::ifstream f(path);
  std::string line;
  std::size_t n = 0;
  while (std::getline(f, line)) ++n;
  return n;
}

std::string temp_dir(const std::string& tag) {
  auto dir = std::filesystem::temp_directory_path() / ("ulab_harness_" + tag);
  std::filesystem::remove_all(dir);
  return dir.string();
}

ExperimentConfig digits_config() {
  ExperimentConfig cfg;
  cfg.train_images = kDataDir + "/digits-train-images.idx3-ubyte";
  cfg.train_labels = kDataDir + "/digits-train-labels.idx1-ubyte";
  cfg.test_images = kDataDir + "/digits-test-images.idx3-ubyte";
  cfg.test_labels = kDataDir + "/digits-test-labels.idx1-ubyte";
  cfg.layers = {{16, NormKind::Unitization}, {8, NormKind::Unitization}};
  cfg.epochs = 2;
  cfg.batch_size = 256;
  cfg.zero_timings = true;
  return cfg;
}

}  // namespace

TEST(RunTrain, ZeroEpochsLeavesOnlyInitCheckpoint) {
  ExperimentConfig cfg = digits_config();
  cfg.mode = Mode::Train;
  cfg.epochs = 0;
  cfg.out_dir = temp_dir("zero_epochs");
  EXPECT_EQ(run_train(cfg), 0);
  EXPECT_TRUE(std::filesystem::exists(cfg.out_dir + "/checkpoints/epoch_0000.ulab"));
  EXPECT_FALSE(std::filesystem::exists(cfg.out_dir + "/checkpoints/epoch_0001.ulab"));
  EXPECT_EQ(line_count(cfg.out_dir + "/run.csv"), 1u);  // header only
  std::filesystem::remove_all(cfg.out_dir);
}

TEST(RunTrain, RowCountsMatchEpochs) {
  ExperimentConfig cfg = digits_config();
  cfg.mode = Mode::Train;
  cfg.out_dir = temp_dir("rows");
  EXPECT_EQ(run_train(cfg), 0);
  EXPECT_EQ(line_count(cfg.out_dir + "/run.csv"), 1u + 2u);
  // one alpha row per unitization layer per epoch
  EXPECT_EQ(line_count(cfg.out_dir + "/alpha.csv"), 1u + 2u * 2u);
  EXPECT_TRUE(std::filesystem::exists(cfg.out_dir + "/manifest.txt"));
  std::filesystem::remove_all(cfg.out_dir);
}

TEST(RunTrain, AlphaStartsAtZeroInInitCheckpoint) {
  ExperimentConfig cfg = digits_config();
  cfg.mode = Mode::Train;
  cfg.epochs = 0;
  cfg.out_dir = temp_dir("alpha_init");
  EXPECT_EQ(run_train(cfg), 0);
  auto tensors = load_checkpoint(cfg.out_dir + "/checkpoints/epoch_0000.ulab");
  bool saw_alpha = false;
  for (const auto& t : tensors) {
    if (t.name.find(".alpha") == std::string::npos) continue;
    saw_alpha = true;
    for (double v : t.data) EXPECT_DOUBLE_EQ(v, 0.0);
  }
  EXPECT_TRUE(saw_alpha);
  std::filesystem::remove_all(cfg.out_dir);
}

TEST(RunTrain, DeterministicByteIdenticalCsv) {
  ExperimentConfig cfg = digits_config();
  cfg.mode = Mode::Train;
  cfg.out_dir = temp_dir("det_a");
  EXPECT_EQ(run_train(cfg), 0);
  const std::string first = file_bytes(cfg.out_dir + "/run.csv");
  const std::string dir_b = temp_dir("det_b");
  ExperimentConfig cfg2 = cfg;
  cfg2.out_dir = dir_b;
  EXPECT_EQ(run_train(cfg2), 0);
  EXPECT_EQ(first, file_bytes(dir_b + "/run.csv"));
  std::filesystem::remove_all(cfg.out_dir);
  std::filesystem::remove_all(dir_b);
}

TEST(RunMoments, RowCountsAndPairedInit) {
  ExperimentConfig cfg = digits_config();
  cfg.mode = Mode::Moments;
  cfg.out_dir = temp_dir("moments");
  EXPECT_EQ(run_moments(cfg), 0);
  // last hidden layer has 8 units: 8 rows per epoch per variant
  EXPECT_EQ(line_count(cfg.out_dir + "/bn/moments.csv"), 1u + 8u * 2u);
  EXPECT_EQ(line_count(cfg.out_dir + "/unitization/moments.csv"), 1u + 8u * 2u);
  EXPECT_EQ(line_count(cfg.out_dir + "/stability.csv"), 1u + 2u * 8u);

  // the two variants share their dense initialization
  auto bn_init = load_checkpoint(cfg.out_dir + "/bn/checkpoints/epoch_0000.ulab");
  auto unit_init =
      load_checkpoint(cfg.out_dir + "/unitization/checkpoints/epoch_0000.ulab");
  auto find = [](const std::vector<NamedTensor>& ts, const std::string& name) {
    for (const auto& t : ts)
      if (t.name == name) return t.data;
    return std::vector<double>{};
  };
  EXPECT_EQ(find(bn_init, "hidden0.W"), find(unit_init, "hidden0.W"));
  EXPECT_EQ(find(bn_init, "head.W"), find(unit_init, "head.W"));
  std::filesystem::remove_all(cfg.out_dir);
}

TEST(RunEmdist, IdenticalConsecutiveCheckpointsGiveZero) {
  ExperimentConfig cfg = digits_config();
  cfg.mode = Mode::Train;
  cfg.epochs = 1;
  cfg.out_dir = temp_dir("emdist_train");
  EXPECT_EQ(run_train(cfg), 0);
  // duplicate the trained checkpoint so epochs 0 and 1 are identical
  const std::string ckpts = cfg.out_dir + "/checkpoints";
  std::filesystem::copy_file(ckpts + "/epoch_0001.ulab", ckpts + "/epoch_0000.ulab",
                             std::filesystem::copy_options::overwrite_existing);

  ExperimentConfig ecfg = cfg;
  ecfg.mode = Mode::Emdist;
  ecfg.out_dir = temp_dir("emdist_out");
  ecfg.ckpt_dir = ckpts;
  ecfg.epochs = 1;
  ecfg.emdist_layers = {1};
  ecfg.critic_iters = 40;
  ecfg.critic_hidden = {16};
  EXPECT_EQ(run_emdist(ecfg), 0);

  std::ifstream f(ecfg.out_dir + "/emdist.csv");
  std::string header, row;
  std::getline(f, header);
  std::getline(f, row);
  // epoch,layer,estimate,runtime: identical snapshots give exactly zero
  const auto first_comma = row.find(',');
  const auto second_comma = row.find(',', first_comma + 1);
  const auto third_comma = row.find(',', second_comma + 1);
  const std::string estimate =
      row.substr(second_comma + 1, third_comma - second_comma - 1);
  EXPECT_EQ(estimate, "0");
  std::filesystem::remove_all(cfg.out_dir);
  std::filesystem::remove_all(ecfg.out_dir);
}

TEST(RunEmdist, MissingCheckpointsRejected) {
  ExperimentConfig cfg = digits_config();
  cfg.mode = Mode::Emdist;
  cfg.out_dir = temp_dir("emdist_missing");
  cfg.ckpt_dir = temp_dir("emdist_nockpts");
  EXPECT_THROW(run_emdist(cfg), missing_data_error);
  std::filesystem::remove_all(cfg.out_dir);
}

TEST(RunEmdist, RowCountMatchesFormula) {
  ExperimentConfig cfg = digits_config();
  cfg.mode = Mode::Train;
  cfg.epochs = 2;
  cfg.out_dir = temp_dir("emdist_train2");
  EXPECT_EQ(run_train(cfg), 0);

  ExperimentConfig ecfg = cfg;
  ecfg.mode = Mode::Emdist;
  ecfg.out_dir = temp_dir("emdist_rows");
  ecfg.ckpt_dir = cfg.out_dir + "/checkpoints";
  ecfg.emdist_layers = {0, 1};
  ecfg.critic_iters = 10;
  ecfg.critic_hidden = {8};
  EXPECT_EQ(run_emdist(ecfg), 0);
  // epochs * (layers + 1 average row) + header
  EXPECT_EQ(line_count(ecfg.out_dir + "/emdist.csv"), 1u + 2u * (2u + 1u));
  std::filesystem::remove_all(cfg.out_dir);
  std::filesystem::remove_all(ecfg.out_dir);
}

TEST(RunBounds, DefaultSeedsAllPass) {
  ExperimentConfig cfg;
  cfg.mode = Mode::Bounds;
  cfg.bounds_trials = 20;
  cfg.out_dir = temp_dir("bounds");
  EXPECT_EQ(run_bounds(cfg), 0);
  std::ifstream f(cfg.out_dir + "/bounds.csv");
  std::string line;
  std::getline(f, line);  // header
  while (std::getline(f, line))
    EXPECT_EQ(line.substr(line.rfind(',') + 1), "1") << line;
  std::filesystem::remove_all(cfg.out_dir);
}

TEST(RunBounds, ByteIdenticalAcrossReruns) {
  ExperimentConfig cfg;
  cfg.mode = Mode::Bounds;
  cfg.bounds_trials = 10;
  cfg.out_dir = temp_dir("bounds_a");
  EXPECT_EQ(run_bounds(cfg), 0);
  ExperimentConfig cfg2 = cfg;
  cfg2.out_dir = temp_dir("bounds_b");
  EXPECT_EQ(run_bounds(cfg2), 0);
  EXPECT_EQ(file_bytes(cfg.out_dir + "/bounds.csv"),
            file_bytes(cfg2.out_dir + "/bounds.csv"));
  std::filesystem::remove_all(cfg.out_dir);
  std::filesystem::remove_all(cfg2.out_dir);
}

TEST(RunOracleCheck, Passes) {
  ExperimentConfig cfg;
  cfg.mode = Mode::OracleCheck;
  cfg.out_dir = temp_dir("oracle");
  EXPECT_EQ(run_oracle_check(cfg), 0);
  std::filesystem::remove_all(cfg.out_dir);
}

TEST(Manifest, RecordsHashAndVersion) {
  ExperimentConfig cfg;
  cfg.mode = Mode::Bounds;
  cfg.bounds_trials = 1;
  cfg.out_dir = temp_dir("manifest");
  EXPECT_EQ(run_bounds(cfg), 0);
  const std::string manifest = file_bytes(cfg.out_dir + "/manifest.txt");
  EXPECT_NE(manifest.find("ulab_version = "), std::string::npos);
  EXPECT_NE(manifest.find("config_hash = " + config_hash(cfg)), std::string::npos);
  std::filesystem::remove_all(cfg.out_dir);
}
