#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "ulab/moments.hpp"
#include "ulab/rng.hpp"

using namespace ulab;

TEST(Moments4, TwoPointHandValues) {
  // {-1, 1} repeated: mean 0, var 1, skew 0, kurt 1
  std::vector<double> v{-1, 1, -1, 1, -1, 1};
  Moments4 m = moments4(v);
  EXPECT_DOUBLE_EQ(m.mean, 0.0);
  EXPECT_DOUBLE_EQ(m.var, 1.0);
  EXPECT_DOUBLE_EQ(m.skewness, 0.0);
  EXPECT_DOUBLE_EQ(m.kurtosis, 1.0);
}

TEST(Moments4, SymmetricDataHasZeroSkewness) {
  std::vector<double> v{-3, -2, -1, 1, 2, 3};
  EXPECT_NEAR(moments4(v).skewness, 0.0, 1e-12);
}

TEST(Moments4, StandardNormalKurtosisNearThree) {
  Rng rng(1);
  std::vector<double> v(1000000);
  for (double& x : v) x = rng.normal();
  EXPECT_NEAR(moments4(v).kurtosis, 3.0, 0.05);
}

TEST(Moments4, TooFewValuesRejected) {
  EXPECT_THROW(moments4(std::vector<double>{1, 2, 3}), degenerate_input_error);
}

TEST(Moments4, NearConstantSampleRejected) {
  std::vector<double> v(16, 2.0);
  EXPECT_THROW(moments4(v), undefined_moment_error);
}

TEST(Moments4, AffineEquivariance) {
  Rng rng(3);
  std::vector<double> v(256);
  for (double& x : v) x = rng.normal() * 1.7 + 0.4;
  const double a = 2.5, b = -1.2;
  std::vector<double> w(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) w[i] = a * v[i] + b;
  Moments4 mv = moments4(v);
  Moments4 mw = moments4(w);
  EXPECT_NEAR(mw.mean, a * mv.mean + b, 1e-10);
  EXPECT_NEAR(mw.var, a * a * mv.var, 1e-10);
  EXPECT_NEAR(mw.skewness, mv.skewness, 1e-10);
  EXPECT_NEAR(mw.kurtosis, mv.kurtosis, 1e-10);
}

TEST(Moments4, PearsonInequalityHolds) {
  Rng rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> v(32);
    for (double& x : v) x = std::exp(rng.normal() * rng.uniform(0.1, 2.0));
    Moments4 m = moments4(v);
    EXPECT_GE(m.kurtosis + 1e-9, m.skewness * m.skewness + 1.0);
  }
}

TEST(Moments4, DuplicationInvariance) {
  Rng rng(7);
  std::vector<double> v(64);
  for (double& x : v) x = rng.normal();
  std::vector<double> doubled = v;
  doubled.insert(doubled.end(), v.begin(), v.end());
  Moments4 a = moments4(v);
  Moments4 b = moments4(doubled);
  EXPECT_NEAR(a.mean, b.mean, 1e-12);
  EXPECT_NEAR(a.var, b.var, 1e-12);
  EXPECT_NEAR(a.skewness, b.skewness, 1e-12);
  EXPECT_NEAR(a.kurtosis, b.kurtosis, 1e-12);
}

TEST(TrajectoryStability, ConstantSeriesGivesZero) {
  std::vector<MomentRecord> records;
  for (int e = 0; e < 5; ++e) records.push_back({e, 0, 1.0, 2.0, 0.5, 3.0});
  auto s = trajectory_stability(records);
  ASSERT_EQ(s.size(), 1u);
  EXPECT_DOUBLE_EQ(s[0].mean_std, 0.0);
  EXPECT_DOUBLE_EQ(s[0].kurt_std, 0.0);
}

TEST(TrajectoryStability, TwoPointSeriesPopulationStd) {
  std::vector<MomentRecord> records{{0, 0, 0.0, 0.0, 0.0, 0.0},
                                    {1, 0, 2.0, 2.0, 2.0, 2.0}};
  auto s = trajectory_stability(records);
  ASSERT_EQ(s.size(), 1u);
  EXPECT_DOUBLE_EQ(s[0].mean_std, 1.0);
  EXPECT_DOUBLE_EQ(s[0].var_std, 1.0);
  EXPECT_DOUBLE_EQ(s[0].skew_std, 1.0);
  EXPECT_DOUBLE_EQ(s[0].kurt_std, 1.0);
}

TEST(TrajectoryStability, EpochOrderIrrelevant) {
  Rng rng(9);
  std::vector<MomentRecord> records;
  for (int e = 0; e < 6; ++e)
    records.push_back({e, 0, rng.normal(), rng.uniform(0.1, 2.0), rng.normal(),
                       rng.uniform(1.0, 5.0)});
  auto base = trajectory_stability(records);
  std::reverse(records.begin(), records.end());
  auto flipped = trajectory_stability(records);
  EXPECT_DOUBLE_EQ(base[0].kurt_std, flipped[0].kurt_std);
  EXPECT_DOUBLE_EQ(base[0].skew_std, flipped[0].skew_std);
}

TEST(TrajectoryStability, SingleEpochRejected) {
  std::vector<MomentRecord> records{{0, 0, 1.0, 1.0, 0.0, 3.0}};
  EXPECT_THROW(trajectory_stability(records), degenerate_input_error);
}

TEST(LayerMomentSweep, EightUnitLayerYieldsEightRecords) {
  Rng rng(11);
  Mlp net = Mlp::build(4, {{6, NormKind::BatchNorm}, {8, NormKind::Unitization}},
                       3, rng);
  Dataset ds;
  ds.n = 64;
  ds.rows = 2;
  ds.cols = 2;
  ds.pixels.resize(64 * 4);
  for (double& p : ds.pixels) p = rng.uniform();
  ds.labels.assign(64, 0);
  ds.class_count = 3;
  auto records = layer_moment_sweep(net, 1, ds, 5);
  ASSERT_EQ(records.size(), 8u);
  for (const auto& r : records) {
    EXPECT_EQ(r.epoch, 5);
    EXPECT_GE(r.var, 0.0);
  }
}

TEST(LayerMomentSweep, ConstantOutputSurfacesSentinel) {
  Rng rng(13);
  Mlp net = Mlp::build(4, {{5, NormKind::None}}, 3, rng);
  // zero weights make the layer output constant
  for (Param* p : net.params())
    std::fill(p->value.begin(), p->value.end(), 0.0);
  Dataset ds;
  ds.n = 16;
  ds.rows = 2;
  ds.cols = 2;
  ds.pixels.assign(16 * 4, 0.25);
  ds.labels.assign(16, 0);
  ds.class_count = 3;
  auto records = layer_moment_sweep(net, 0, ds, 0);
  ASSERT_EQ(records.size(), 5u);
  for (const auto& r : records) {
    EXPECT_TRUE(std::isnan(r.skewness));
    EXPECT_TRUE(std::isnan(r.kurtosis));
    EXPECT_DOUBLE_EQ(r.var, 0.0);
  }
}

TEST(LayerMomentSweep, BatchNormPreAffineMomentsNearTarget) {
  // with gamma=1, beta=0 the captured output equals the running-stat
  // normalized batch; after feeding the same data repeatedly the running
  // stats converge toward the batch stats, so mean -> 0 and var -> 1
  Rng rng(17);
  Mlp net = Mlp::build(4, {{6, NormKind::BatchNorm}}, 3, rng);
  Dataset ds;
  ds.n = 128;
  ds.rows = 2;
  ds.cols = 2;
  ds.pixels.resize(128 * 4);
  for (double& p : ds.pixels) p = rng.normal();
  ds.labels.assign(128, 0);
  ds.class_count = 3;
  // drive the running stats toward this dataset's statistics
  for (int step = 0; step < 200; ++step) {
    Tape tape;
    Binder bind(&tape);
    std::vector<std::size_t> idx(ds.n);
    for (std::size_t i = 0; i < ds.n; ++i) idx[i] = i;
    net.forward(bind, ds.batch_matrix(idx));
  }
  auto records = layer_moment_sweep(net, 0, ds, 0);
  for (const auto& r : records) {
    EXPECT_NEAR(r.mean, 0.0, 0.05);
    EXPECT_NEAR(r.var, 1.0, 0.05);
  }
}
