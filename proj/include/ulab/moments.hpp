#pragma once

#include <cmath>
#include <limits>
#include <map>
#include <span>
#include <vector>

#include "ulab/data.hpp"
#include "ulab/errors.hpp"
#include "ulab/network.hpp"

namespace ulab {

constexpr double kMomentVarTolerance = 1e-12;

struct Moments4 {
  double mean = 0.0;
  double var = 0.0;
  double skewness = 0.0;
  double kurtosis = 0.0;  // non-excess: the normal distribution gives 3
};

/// Biased central moments m_k = (1/n) sum (x - mu)^k with
/// skewness = m3 / m2^{3/2} and kurtosis = m4 / m2^2.
/// Throws undefined_moment_error when the variance is too small to
/// standardize.
inline Moments4 moments4(std::span<const double> values) {
  if (values.size() < 4)
    throw degenerate_input_error("moments4: needs at least 4 values");
  const double n = static_cast<double>(values.size());
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= n;
  double m2 = 0.0, m3 = 0.0, m4 = 0.0;
  for (double v : values) {
    const double c = v - mean;
    const double c2 = c * c;
    m2 += c2;
    m3 += c2 * c;
    m4 += c2 * c2;
  }
  m2 /= n;
  m3 /= n;
  m4 /= n;
  if (m2 <= kMomentVarTolerance)
    throw undefined_moment_error("moments4: variance below tolerance");
  Moments4 out;
  out.mean = mean;
  out.var = m2;
  out.skewness = m3 / std::pow(m2, 1.5);
  out.kurtosis = m4 / (m2 * m2);
  // Pearson: m4 m2 >= m3^2 + m2^3 for every sample.
  if (out.kurtosis + 1e-9 < out.skewness * out.skewness + 1.0)
    throw numeric_error("moments4: Pearson inequality violated");
  return out;
}

/// One unit's moments at one epoch. Standardized moments are NaN when the
/// unit's output variance was below tolerance.
struct MomentRecord {
  int epoch = 0;
  int unit = 0;
  double mean = 0.0;
  double var = 0.0;
  double skewness = std::numeric_limits<double>::quiet_NaN();
  double kurtosis = std::numeric_limits<double>::quiet_NaN();
};

/// Full-dataset inference pass; per-unit moments of the chosen hidden
/// layer's norm output.
inline std::vector<MomentRecord> layer_moment_sweep(const Mlp& net, int layer,
                                                    const Dataset& data,
                                                    int epoch,
                                                    std::size_t chunk = 512) {
  if (layer < 0 || static_cast<std::size_t>(layer) >= net.depth())
    throw contract_error("layer_moment_sweep: layer out of range");
  const std::size_t units = net.hidden()[static_cast<std::size_t>(layer)].dense.out_features();
  std::vector<std::vector<double>> per_unit(units);
  for (auto& u : per_unit) u.reserve(data.n);

  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < data.n; start += chunk) {
    const std::size_t end = std::min(data.n, start + chunk);
    idx.resize(end - start);
    for (std::size_t i = start; i < end; ++i) idx[i - start] = i;
    Tensor captured;
    (void)net.eval(data.batch_matrix(idx), layer, &captured);
    auto cv = captured.data();
    for (std::size_t i = 0; i < idx.size(); ++i)
      for (std::size_t j = 0; j < units; ++j)
        per_unit[j].push_back(cv[i * units + j]);
  }

  std::vector<MomentRecord> records;
  records.reserve(units);
  for (std::size_t j = 0; j < units; ++j) {
    MomentRecord rec;
    rec.epoch = epoch;
    rec.unit = static_cast<int>(j);
    try {
      const Moments4 m = moments4(per_unit[j]);
      rec.mean = m.mean;
      rec.var = m.var;
      rec.skewness = m.skewness;
      rec.kurtosis = m.kurtosis;
    } catch (const undefined_moment_error&) {
      double mean = 0.0;
      for (double v : per_unit[j]) mean += v;
      rec.mean = mean / static_cast<double>(per_unit[j].size());
      rec.var = 0.0;
      // skewness/kurtosis stay NaN: the explicit undefined sentinel
    }
    records.push_back(rec);
  }
  return records;
}

/// Per-unit standard deviation (population convention) of each moment
/// trajectory across epochs.
struct TrajectorySummary {
  int unit = 0;
  double mean_std = 0.0;
  double var_std = 0.0;
  double skew_std = 0.0;
  double kurt_std = 0.0;
};

namespace detail {

inline double population_std(std::span<const double> xs) {
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= static_cast<double>(xs.size());
  double acc = 0.0;
  for (double x : xs) acc += (x - mean) * (x - mean);
  return std::sqrt(acc / static_cast<double>(xs.size()));
}

}  // namespace detail

inline std::vector<TrajectorySummary> trajectory_stability(
    std::span<const MomentRecord> records) {
  std::map<int, std::vector<const MomentRecord*>> by_unit;
  for (const auto& r : records) by_unit[r.unit].push_back(&r);
  std::vector<TrajectorySummary> out;
  for (auto& [unit, recs] : by_unit) {
    if (recs.size() < 2)
      throw degenerate_input_error("trajectory_stability: needs at least 2 epochs");
    std::vector<double> means, vars, skews, kurts;
    for (const auto* r : recs) {
      means.push_back(r->mean);
      vars.push_back(r->var);
      skews.push_back(r->skewness);
      kurts.push_back(r->kurtosis);
    }
    TrajectorySummary s;
    s.unit = unit;
    s.mean_std = detail::population_std(means);
    s.var_std = detail::population_std(vars);
    s.skew_std = detail::population_std(skews);
    s.kurt_std = detail::population_std(kurts);
    out.push_back(s);
  }
  return out;
}

}  // namespace ulab
