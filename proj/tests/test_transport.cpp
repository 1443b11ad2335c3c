#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <vector>

#include "ulab/data.hpp"
#include "ulab/rng.hpp"
#include "ulab/transport.hpp"
#include "ulab/unitization.hpp"

using namespace ulab;

namespace {

SampleSet from_rows(const std::vector<std::vector<double>>& rows, int tag = 0) {
  std::vector<double> flat;
  for (const auto& r : rows) flat.insert(flat.end(), r.begin(), r.end());
  return SampleSet::make(rows.size(), rows[0].size(), std::move(flat), tag);
}

SampleSet random_set(std::size_t n, std::size_t d, Rng& rng, double scale = 1.0,
                     double shift = 0.0) {
  std::vector<double> v(n * d);
  for (double& x : v) x = shift + scale * rng.normal();
  return SampleSet::make(n, d, std::move(v));
}

}  // namespace

TEST(EmExact1d, IdenticalSetsGiveZero) {
  auto a = from_rows({{1}, {2}, {3}});
  EXPECT_DOUBLE_EQ(em_exact_1d(a, a), 0.0);
}

TEST(EmExact1d, SortedPairing) {
  auto a = from_rows({{1}, {2}, {3}});
  auto b = from_rows({{4}, {2}, {3}});  // sorted: {2,3,4}
  EXPECT_DOUBLE_EQ(em_exact_1d(a, b), 1.0);
}

TEST(EmExact1d, SinglePair) {
  EXPECT_DOUBLE_EQ(em_exact_1d(from_rows({{0}}), from_rows({{5}})), 5.0);
}

TEST(EmExact1d, UnequalCountsRejected) {
  EXPECT_THROW(em_exact_1d(from_rows({{1}, {2}}), from_rows({{1}})), contract_error);
}

TEST(EmAssignment, IdenticalSetsGiveZero) {
  Rng rng(1);
  auto a = random_set(16, 3, rng);
  EXPECT_NEAR(em_exact_assignment(a, a), 0.0, 1e-12);
}

TEST(EmAssignment, AgreesWithSorted1d) {
  Rng rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    auto a = random_set(24, 1, rng, 2.0);
    auto b = random_set(24, 1, rng, 1.5, 0.7);
    EXPECT_NEAR(em_exact_assignment(a, b), em_exact_1d(a, b), 1e-12);
  }
}

TEST(EmAssignment, PermutationInvariance) {
  auto a = from_rows({{0, 0}, {1, 1}});
  auto b = from_rows({{1, 1}, {0, 0}});
  EXPECT_NEAR(em_exact_assignment(a, b), 0.0, 1e-15);
}

TEST(EmAssignment, CapacityGuard) {
  Rng rng(3);
  auto a = random_set(257, 1, rng);
  auto b = random_set(257, 1, rng);
  EXPECT_THROW(em_exact_assignment(a, b), capacity_error);
}

TEST(EmAssignment, MetricAxioms) {
  Rng rng(4);
  for (int trial = 0; trial < 30; ++trial) {
    auto a = random_set(12, 2, rng);
    auto b = random_set(12, 2, rng, 1.3, 0.5);
    auto c = random_set(12, 2, rng, 0.7, -0.4);
    const double ab = em_exact_assignment(a, b);
    const double ba = em_exact_assignment(b, a);
    EXPECT_DOUBLE_EQ(ab, ba);
    const double ac = em_exact_assignment(a, c);
    const double cb = em_exact_assignment(c, b);
    EXPECT_LE(ab, ac + cb + 1e-9);
  }
}

TEST(UpperBoundThm1, HandValues) {
  MomentVector m01{{0.0}, {1.0}};
  EXPECT_DOUBLE_EQ(upper_bound_thm1(m01, m01), 4.0);
  MomentVector degenerate{{0.5}, {0.0}};
  EXPECT_DOUBLE_EQ(upper_bound_thm1(degenerate, degenerate), 2.0);
  // d = 3 normalized noise-free: 2d + 2 = 8
  MomentVector m3{{0, 0, 0}, {1, 1, 1}};
  EXPECT_DOUBLE_EQ(upper_bound_thm1(m3, m3), 8.0);
}

TEST(UpperBoundThm1, BreakdownSumsToTotal) {
  MomentVector ma{{0.5, -0.5}, {1.2, 0.8}};
  MomentVector mb{{0.0, 0.1}, {0.9, 1.1}};
  std::vector<BoundTerm> terms;
  const double total = upper_bound_thm1(ma, mb, &terms);
  double acc = 0.0;
  for (const auto& t : terms) acc += t.value;
  EXPECT_NEAR(acc, total, 1e-12);
  ASSERT_EQ(terms.size(), 4u);
}

TEST(UpperBoundThm1, NonFiniteMomentsRejected) {
  MomentVector bad{{std::numeric_limits<double>::infinity()}, {1.0}};
  MomentVector ok{{0.0}, {1.0}};
  EXPECT_THROW(upper_bound_thm1(bad, ok), contract_error);
}

TEST(UpperBoundNoisy, HandValues) {
  NoiseVector zero5{std::vector<double>(5, 0.0), std::vector<double>(5, 0.0)};
  EXPECT_DOUBLE_EQ(upper_bound_noisy(zero5, zero5, 5), 12.0);
  NoiseVector na{{0.3}, {0.0}};
  NoiseVector nb{{-0.1}, {0.0}};
  EXPECT_NEAR(upper_bound_noisy(na, nb, 1), 4.4, 1e-12);
}

TEST(UpperBoundNoisy, ConsistentWithThm1) {
  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t d = 1 + rng.below(6);
    NoiseVector na, nb;
    for (std::size_t i = 0; i < d; ++i) {
      na.eps_mu.push_back(rng.normal() * 0.2);
      na.eps_var.push_back(rng.uniform(-0.5, 0.5));
      nb.eps_mu.push_back(rng.normal() * 0.2);
      nb.eps_var.push_back(rng.uniform(-0.5, 0.5));
    }
    MomentVector ma, mb;
    for (std::size_t i = 0; i < d; ++i) {
      ma.mean.push_back(na.eps_mu[i]);
      ma.var.push_back(1.0 + na.eps_var[i]);
      mb.mean.push_back(nb.eps_mu[i]);
      mb.var.push_back(1.0 + nb.eps_var[i]);
    }
    EXPECT_NEAR(upper_bound_noisy(na, nb, d), upper_bound_thm1(ma, mb), 1e-12);
  }
}

TEST(FpcEval, HandValues) {
  LipschitzProbe probe{2, 1.0, 1};
  EXPECT_DOUBLE_EQ(f_pc_eval(std::vector<double>{0.0}, probe), 0.0);
  EXPECT_DOUBLE_EQ(f_pc_eval(std::vector<double>{0.5}, probe), 0.125);
  EXPECT_DOUBLE_EQ(f_pc_eval(std::vector<double>{5.0}, probe), 0.5);
  // odd power keeps the sign of the clipped tail
  LipschitzProbe p3{3, 1.0, 1};
  EXPECT_DOUBLE_EQ(f_pc_eval(std::vector<double>{-5.0}, p3),
                   -1.0 / (3.0 * 1.0 * 1.0));
}

TEST(FpcEval, EmpiricallyOneLipschitz) {
  Rng rng(7);
  for (int p : {2, 3, 4}) {
    for (double c : {0.5, 1.0, 2.0}) {
      for (std::size_t d : {1u, 3u}) {
        LipschitzProbe probe{p, c, d};
        for (int trial = 0; trial < 500; ++trial) {
          std::vector<double> v(d), w(d);
          for (auto& x : v) x = rng.normal() * 2.0;
          for (auto& x : w) x = rng.normal() * 2.0;
          double dist = 0.0;
          for (std::size_t i = 0; i < d; ++i)
            dist += (v[i] - w[i]) * (v[i] - w[i]);
          dist = std::sqrt(dist);
          EXPECT_LE(std::abs(f_pc_eval(v, probe) - f_pc_eval(w, probe)),
                    dist + 1e-12);
        }
      }
    }
  }
}

TEST(LowerBoundThm2, HandValues) {
  LipschitzProbe probe{2, 1.0, 1};
  auto a = from_rows({{0.5}});
  auto b = from_rows({{-0.5}});
  // even p is blind to the sign
  EXPECT_DOUBLE_EQ(lower_bound_thm2(a, b, probe), 0.0);
  auto zero = from_rows({{0.0}});
  EXPECT_DOUBLE_EQ(lower_bound_thm2(a, zero, probe), 0.125);
  EXPECT_LE(lower_bound_thm2(a, zero, probe), em_exact_1d(a, zero));
  // identical sets
  EXPECT_DOUBLE_EQ(lower_bound_thm2(a, a, probe), 0.0);
}

TEST(LowerBoundThm2, SymmetricExactly) {
  Rng rng(8);
  auto a = random_set(32, 2, rng);
  auto b = random_set(32, 2, rng, 1.5, 0.3);
  LipschitzProbe probe = default_probe(a, b);
  EXPECT_EQ(lower_bound_thm2(a, b, probe), lower_bound_thm2(b, a, probe));
}

TEST(LowerBoundP2Noise, HandValues) {
  NoiseVector zero{{0.0}, {0.0}};
  EXPECT_DOUBLE_EQ(lower_bound_p2_noise(zero, zero, 1.0, 1), 0.0);
  NoiseVector na{{0.0}, {0.2}};
  EXPECT_DOUBLE_EQ(lower_bound_p2_noise(na, zero, 1.0, 1), 0.1);
  EXPECT_DOUBLE_EQ(lower_bound_p2_noise(zero, na, 1.0, 1), 0.1);
  EXPECT_THROW(lower_bound_p2_noise(na, zero, 0.0, 1), contract_error);
}

TEST(UnitizedBounds, TheoremFamily) {
  EXPECT_DOUBLE_EQ(unitized_upper_bound_vanilla(), 2.0);
  EXPECT_DOUBLE_EQ(unitized_upper_bound_scalar(0.5), 4.0);
  std::vector<double> alpha{0.25, 0.8, 1.0};
  EXPECT_DOUBLE_EQ(unitized_upper_bound_vector(alpha), 8.0);
  // alpha = 0 needs the mean norms
  EXPECT_THROW(unitized_upper_bound_scalar(0.0), missing_data_error);
  EXPECT_DOUBLE_EQ(unitized_upper_bound_scalar(0.0, NormMeans{1.5, 2.0}), 3.5);
  std::vector<double> with_zero{0.0, 0.5};
  EXPECT_THROW(unitized_upper_bound_vector(with_zero), missing_data_error);
  EXPECT_DOUBLE_EQ(unitized_upper_bound_vector(with_zero, NormMeans{1.0, 1.0}), 4.0);
}

TEST(UnitizedBounds, EmpiricalSphereDiameter) {
  Rng rng(9);
  const std::vector<double> c{1.0, 0.0, 0.0};
  for (int trial = 0; trial < 10; ++trial) {
    auto raw_a = random_set(24, 3, rng, std::pow(10.0, rng.uniform(-1.0, 2.0)));
    auto raw_b = random_set(24, 3, rng, std::pow(10.0, rng.uniform(-1.0, 2.0)), 1.0);
    std::vector<double> ua, ub;
    for (std::size_t i = 0; i < raw_a.n; ++i) {
      auto va = vanilla_unitize(raw_a.row(i), c);
      ua.insert(ua.end(), va.begin(), va.end());
      auto vb = vanilla_unitize(raw_b.row(i), c);
      ub.insert(ub.end(), vb.begin(), vb.end());
    }
    auto sa = SampleSet::make(raw_a.n, 3, std::move(ua));
    auto sb = SampleSet::make(raw_b.n, 3, std::move(ub));
    EXPECT_LE(em_exact_assignment(sa, sb), unitized_upper_bound_vanilla() + 1e-12);
  }
}

TEST(UnboundedExample, HandValues) {
  LipschitzProbe p21{2, 4.0, 1};
  EXPECT_DOUBLE_EQ(unbounded_example_lower(4.0, p21), 0.375);
  EXPECT_DOUBLE_EQ(unbounded_example_lower(8.0, p21), 0.75);
  LipschitzProbe p24{2, 4.0, 4};
  EXPECT_DOUBLE_EQ(unbounded_example_lower(4.0, p24), 0.75);
  EXPECT_THROW(unbounded_example_lower(-1.0, p21), contract_error);
}

TEST(UnboundedExample, EmpiricalDistanceExceedsBound) {
  // n >= 128 draws from the two uniform boxes beat the strict lower bound
  for (double c_prime : {4.0, 8.0}) {
    auto [a, b] = synth_appendix_uniform_pair(c_prime, 1, 128, 321);
    LipschitzProbe probe{2, c_prime, 1};
    const double exact = em_exact_assignment(a, b);
    EXPECT_GT(exact, unbounded_example_lower(c_prime, probe));
  }
}

TEST(Sandwich, IdenticalSetsReport) {
  Rng rng(10);
  auto a = random_set(16, 2, rng);
  LipschitzProbe probe = default_probe(a, a);
  BoundReport r = bound_sandwich(a, a, probe);
  EXPECT_DOUBLE_EQ(r.lower, 0.0);
  EXPECT_NEAR(*r.exact_or_estimate, 0.0, 1e-12);
  auto m = empirical_moments(a);
  double var_sum = 0.0;
  for (double v : m.var) var_sum += v;
  EXPECT_NEAR(r.upper, 2.0 * var_sum + 2.0, 1e-12);
}

TEST(Sandwich, HundredRandomInstances) {
  Rng rng(11);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t d = 1 + rng.below(3);
    auto a = random_set(24, d, rng, rng.uniform(0.5, 2.0));
    auto b = random_set(24, d, rng, rng.uniform(0.5, 2.0), rng.uniform(-1.0, 1.0));
    LipschitzProbe probe = default_probe(a, b);
    BoundReport r;
    EXPECT_NO_THROW(r = bound_sandwich(a, b, probe));
    EXPECT_LE(r.lower, *r.exact_or_estimate + kSandwichSlack);
    EXPECT_LE(*r.exact_or_estimate, r.upper + kSandwichSlack);
  }
}

TEST(Probe, DefaultUsesLargestCoordinate) {
  auto a = from_rows({{0.5, -3.0}});
  auto b = from_rows({{1.0, 2.0}});
  LipschitzProbe probe = default_probe(a, b);
  EXPECT_DOUBLE_EQ(probe.C, 3.0);
  EXPECT_DOUBLE_EQ(*probe.C0, 3.0);
  EXPECT_EQ(probe.d, 2u);
}

TEST(Probe, ValidationRules) {
  LipschitzProbe bad_p{1, 1.0, 1};
  EXPECT_THROW(bad_p.validate(), contract_error);
  LipschitzProbe bad_c{2, 0.0, 1};
  EXPECT_THROW(bad_c.validate(), contract_error);
  LipschitzProbe c_above_c0{2, 2.0, 1, 1.0};
  EXPECT_THROW(c_above_c0.validate(), contract_error);
}

TEST(SampleSetCsv, RoundTrip) {
  Rng rng(12);
  auto s = random_set(10, 3, rng);
  SampleSet tagged = SampleSet::make(s.n, s.d, s.data, 17);
  const std::string path =
      (std::filesystem::temp_directory_path() / "ulab_samples.csv").string();
  save_sampleset_csv(path, tagged);
  SampleSet loaded = load_sampleset_csv(path);
  EXPECT_EQ(loaded.n, tagged.n);
  EXPECT_EQ(loaded.d, tagged.d);
  EXPECT_EQ(loaded.tag, 17);
  for (std::size_t i = 0; i < tagged.data.size(); ++i)
    EXPECT_NEAR(loaded.data[i], tagged.data[i], 1e-10);
  std::filesystem::remove(path);
}

TEST(SampleSetCsv, MalformedInputsRejected) {
  const auto dir = std::filesystem::temp_directory_path();
  const std::string no_header = (dir / "ulab_bad1.csv").string();
  {
    std::ofstream f(no_header);
    f << "1.0,2.0\n";
  }
  EXPECT_THROW(load_sampleset_csv(no_header), format_error);
  const std::string bad_cell = (dir / "ulab_bad2.csv").string();
  {
    std::ofstream f(bad_cell);
    f << "dim0\nbogus\n";
  }
  EXPECT_THROW(load_sampleset_csv(bad_cell), format_error);
  std::filesystem::remove(no_header);
  std::filesystem::remove(bad_cell);
}
