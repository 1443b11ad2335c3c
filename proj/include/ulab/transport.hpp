#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "ulab/csv.hpp"
#include "ulab/errors.hpp"

namespace ulab {

namespace detail {

inline void check_alpha01_free(double a) {
  if (!(a >= 0.0 && a <= 1.0))
    throw contract_error("unitized bound: alpha must lie in [0, 1]");
}

}  // namespace detail

/// Equal-weight empirical distribution: n samples of dimension d, tagged
/// with the training iteration it was drawn at.
struct SampleSet {
  std::size_t n = 0;
  std::size_t d = 0;
  std::vector<double> data;  // row-major n x d
  int tag = 0;

  static SampleSet make(std::size_t n, std::size_t d, std::vector<double> data,
                        int tag = 0) {
    if (n == 0 || d == 0) throw degenerate_input_error("sample set must be non-empty");
    if (data.size() != n * d) throw shape_error("sample set data length mismatch");
    for (double v : data)
      if (!std::isfinite(v)) throw numeric_error("sample set contains non-finite value");
    SampleSet s;
    s.n = n;
    s.d = d;
    s.data = std::move(data);
    s.tag = tag;
    return s;
  }

  std::span<const double> row(std::size_t i) const {
    return {data.data() + i * d, d};
  }
};

/// First two moments per coordinate.
struct MomentVector {
  std::vector<double> mean;
  std::vector<double> var;

  void validate() const {
    if (mean.size() != var.size()) throw shape_error("moment vector length mismatch");
    for (double m : mean)
      if (!std::isfinite(m)) throw contract_error("moment vector: non-finite mean");
    for (double v : var) {
      if (!std::isfinite(v)) throw contract_error("moment vector: non-finite variance");
      if (v < 0.0) throw contract_error("moment vector: negative variance");
    }
  }
};

/// Biased (1/n) empirical moments.
inline MomentVector empirical_moments(const SampleSet& s) {
  MomentVector m;
  m.mean.assign(s.d, 0.0);
  m.var.assign(s.d, 0.0);
  for (std::size_t i = 0; i < s.n; ++i)
    for (std::size_t j = 0; j < s.d; ++j) m.mean[j] += s.data[i * s.d + j];
  for (double& v : m.mean) v /= static_cast<double>(s.n);
  for (std::size_t i = 0; i < s.n; ++i)
    for (std::size_t j = 0; j < s.d; ++j) {
      const double c = s.data[i * s.d + j] - m.mean[j];
      m.var[j] += c * c;
    }
  for (double& v : m.var) v /= static_cast<double>(s.n);
  return m;
}

/// Deviations of normalized-output moments from (0, 1).
struct NoiseVector {
  std::vector<double> eps_mu;
  std::vector<double> eps_var;

  void validate() const {
    if (eps_mu.size() != eps_var.size()) throw shape_error("noise vector length mismatch");
    for (double e : eps_var)
      if (1.0 + e <= 0.0)
        throw contract_error("noise vector: 1 + eps_var must stay positive");
  }
};

/// Clipped-power 1-Lipschitz test function parameters.
struct LipschitzProbe {
  int p = 2;        // integer power >= 2
  double C = 1.0;   // clipping threshold > 0
  std::size_t d = 1;
  std::optional<double> C0;  // support half-width, when known

  void validate() const {
    if (p < 2) throw contract_error("probe: p must be an integer >= 2");
    if (C <= 0.0) throw contract_error("probe: C must be positive");
    if (d == 0) throw contract_error("probe: dimension must be positive");
    if (C0 && C > *C0 + 1e-12)
      throw contract_error("probe: C must not exceed the support half-width C0");
  }
};

struct BoundTerm {
  std::string label;
  double value;
};

/// Lower bound, optional exact/estimated value, and upper bound for one
/// pair of distributions.
struct BoundReport {
  double lower = 0.0;
  std::optional<double> exact_or_estimate;
  double upper = 0.0;
  std::vector<BoundTerm> term_breakdown;
};

// ---------------------------------------------------------------------------
// Exact oracles
// ---------------------------------------------------------------------------

/// Exact W1 between two equal-size empirical measures on the line: sort both
/// and average the coordinate gaps.
inline double em_exact_1d(const SampleSet& a, const SampleSet& b) {
  if (a.d != 1 || b.d != 1) throw contract_error("em_exact_1d: inputs must be 1-d");
  if (a.n != b.n) throw contract_error("em_exact_1d: sample counts differ");
  std::vector<double> xa = a.data, xb = b.data;
  std::sort(xa.begin(), xa.end());
  std::sort(xb.begin(), xb.end());
  double total = 0.0;
  for (std::size_t i = 0; i < xa.size(); ++i) total += std::abs(xa[i] - xb[i]);
  return total / static_cast<double>(a.n);
}

namespace detail {

/// Minimum-cost perfect matching on a dense n x n cost matrix
/// (Hungarian algorithm with potentials, O(n^3)). Returns for each column
/// the matched row.
inline std::vector<std::size_t> hungarian(const std::vector<double>& cost,
                                          std::size_t n) {
  const double inf = std::numeric_limits<double>::infinity();
  // 1-based with a virtual column 0.
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1, 0.0);
  std::vector<std::size_t> p(n + 1, 0), way(n + 1, 0);
  std::vector<char> used(n + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::fill(minv.begin(), minv.end(), inf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[j0] = 1;
      const std::size_t i0 = p[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost[(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<std::size_t> match(n);
  for (std::size_t j = 1; j <= n; ++j) match[j - 1] = p[j] - 1;
  return match;
}

inline double euclid(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    const double diff = a[k] - b[k];
    s += diff * diff;
  }
  return std::sqrt(s);
}

}  // namespace detail

constexpr std::size_t kAssignmentCapacity = 256;

/// Exact W1 between equal-size empirical measures: minimum over pairings of
/// the mean Euclidean cost, solved as an assignment problem. The arguments
/// are ordered canonically first, so swapping them reruns the identical
/// computation and symmetry holds bit-exactly.
inline double em_exact_assignment(const SampleSet& a, const SampleSet& b) {
  if (a.d != b.d) throw contract_error("em_exact_assignment: dimension mismatch");
  if (a.n != b.n) throw contract_error("em_exact_assignment: sample counts differ");
  if (a.n > kAssignmentCapacity)
    throw capacity_error("em_exact_assignment: n exceeds " +
                         std::to_string(kAssignmentCapacity));
  const bool swap = std::lexicographical_compare(b.data.begin(), b.data.end(),
                                                 a.data.begin(), a.data.end());
  const SampleSet& lhs = swap ? b : a;
  const SampleSet& rhs = swap ? a : b;
  const std::size_t n = lhs.n;
  std::vector<double> cost(n * n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      cost[i * n + j] = detail::euclid(lhs.row(i), rhs.row(j));
  const auto match = detail::hungarian(cost, n);
  double total = 0.0;
  for (std::size_t j = 0; j < n; ++j) total += cost[match[j] * n + j];
  return total / static_cast<double>(n);
}

// ---------------------------------------------------------------------------
// Upper bounds
// ---------------------------------------------------------------------------

/// Moment upper bound:
///   sum var_a + sum var_b + sqrt(sum (mu_a - mu_b)^2) + 2.
inline double upper_bound_thm1(const MomentVector& ma, const MomentVector& mb,
                               std::vector<BoundTerm>* breakdown = nullptr) {
  ma.validate();
  mb.validate();
  if (ma.mean.size() != mb.mean.size())
    throw shape_error("upper_bound_thm1: dimension mismatch");
  double var_a = 0.0, var_b = 0.0, shift2 = 0.0;
  for (std::size_t i = 0; i < ma.mean.size(); ++i) {
    var_a += ma.var[i];
    var_b += mb.var[i];
    const double dm = ma.mean[i] - mb.mean[i];
    shift2 += dm * dm;
  }
  const double shift = std::sqrt(shift2);
  if (breakdown) {
    breakdown->push_back({"var_sum_a", var_a});
    breakdown->push_back({"var_sum_b", var_b});
    breakdown->push_back({"mean_shift", shift});
    breakdown->push_back({"constant", 2.0});
  }
  return var_a + var_b + shift + 2.0;
}

/// Noise form of the moment bound for normalized outputs:
///   sum eps_var_a + sum eps_var_b + 2d + sqrt(sum (eps_mu_a - eps_mu_b)^2) + 2.
inline double upper_bound_noisy(const NoiseVector& na, const NoiseVector& nb,
                                std::size_t d) {
  na.validate();
  nb.validate();
  if (na.eps_mu.size() != d || nb.eps_mu.size() != d)
    throw shape_error("upper_bound_noisy: dimension mismatch");
  double var_a = 0.0, var_b = 0.0, shift2 = 0.0;
  for (std::size_t i = 0; i < d; ++i) {
    var_a += na.eps_var[i];
    var_b += nb.eps_var[i];
    const double dm = na.eps_mu[i] - nb.eps_mu[i];
    shift2 += dm * dm;
  }
  return var_a + var_b + 2.0 * static_cast<double>(d) + std::sqrt(shift2) + 2.0;
}

// ---------------------------------------------------------------------------
// Lower bounds
// ---------------------------------------------------------------------------

/// The clipped-power probe
///   f(x) = (1 / (p C^{p-1} sqrt(d))) *
///          (sum_{|x_i|<=C} x_i^p + sum_{x_i<-C} (-C)^p + sum_{x_i>C} C^p),
/// which is 1-Lipschitz for every integer p >= 2 and C > 0.
inline double f_pc_eval(std::span<const double> x, const LipschitzProbe& probe) {
  probe.validate();
  if (x.size() != probe.d) throw shape_error("f_pc_eval: dimension mismatch");
  const double cp = std::pow(probe.C, probe.p);
  const double neg_cp = std::pow(-probe.C, probe.p);
  double acc = 0.0;
  for (double xi : x) {
    if (std::abs(xi) <= probe.C)
      acc += std::pow(xi, probe.p);
    else if (xi < -probe.C)
      acc += neg_cp;
    else
      acc += cp;
  }
  const double scale = static_cast<double>(probe.p) *
                       std::pow(probe.C, probe.p - 1) *
                       std::sqrt(static_cast<double>(probe.d));
  return acc / scale;
}

/// |E_a f - E_b f| for the probe above: a certified lower bound on W1.
inline double lower_bound_thm2(const SampleSet& a, const SampleSet& b,
                               const LipschitzProbe& probe) {
  if (a.d != b.d) throw shape_error("lower_bound_thm2: dimension mismatch");
  if (a.d != probe.d) throw shape_error("lower_bound_thm2: probe dimension mismatch");
  double mean_a = 0.0, mean_b = 0.0;
  for (std::size_t i = 0; i < a.n; ++i) mean_a += f_pc_eval(a.row(i), probe);
  for (std::size_t i = 0; i < b.n; ++i) mean_b += f_pc_eval(b.row(i), probe);
  mean_a /= static_cast<double>(a.n);
  mean_b /= static_cast<double>(b.n);
  return std::abs(mean_a - mean_b);
}

/// Noise form of the p = 2 lower bound for normalized outputs:
///   (1 / (2 C0 sqrt(d))) |sum (eps_mu_a^2 + eps_var_a - eps_mu_b^2 - eps_var_b)|.
inline double lower_bound_p2_noise(const NoiseVector& na, const NoiseVector& nb,
                                   double c0, std::size_t d) {
  na.validate();
  nb.validate();
  if (c0 <= 0.0) throw contract_error("lower_bound_p2_noise: C0 must be positive");
  if (na.eps_mu.size() != d || nb.eps_mu.size() != d)
    throw shape_error("lower_bound_p2_noise: dimension mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < d; ++i) {
    acc += na.eps_mu[i] * na.eps_mu[i] + na.eps_var[i];
    acc -= nb.eps_mu[i] * nb.eps_mu[i] + nb.eps_var[i];
  }
  return std::abs(acc) / (2.0 * c0 * std::sqrt(static_cast<double>(d)));
}

// ---------------------------------------------------------------------------
// Unitized upper bounds
// ---------------------------------------------------------------------------

/// Mean norms E||x|| and E||y|| of the two (pre-unitization) distributions,
/// needed only when the bound degenerates at alpha = 0.
struct NormMeans {
  double a = 0.0;
  double b = 0.0;
};

/// Vanilla unitization: W <= 2, independent of everything.
inline double unitized_upper_bound_vanilla() { return 2.0; }

/// Scalar-alpha unitization: 2/alpha for alpha > 0; at alpha = 0 the map is
/// the identity and the bound falls back to E||x|| + E||y||.
inline double unitized_upper_bound_scalar(double alpha,
                                          std::optional<NormMeans> norm_means = {}) {
  detail::check_alpha01_free(alpha);
  if (alpha > 0.0) return 2.0 / alpha;
  if (!norm_means)
    throw missing_data_error("unitized bound at alpha = 0 needs the mean norms");
  return norm_means->a + norm_means->b;
}

/// Vector-alpha unitization: 2/min_j alpha_j when the minimum is positive,
/// otherwise E||x|| + E||y|| + 2.
inline double unitized_upper_bound_vector(std::span<const double> alpha,
                                          std::optional<NormMeans> norm_means = {}) {
  if (alpha.empty()) throw contract_error("unitized bound: empty alpha");
  double lo = 1.0;
  for (double a : alpha) {
    detail::check_alpha01_free(a);
    lo = std::min(lo, a);
  }
  if (lo > 0.0) return 2.0 / lo;
  if (!norm_means)
    throw missing_data_error("unitized bound at min alpha = 0 needs the mean norms");
  return norm_means->a + norm_means->b + 2.0;
}

/// Strict lower bound for the two-uniform-boxes construction:
///   (2^{-p} - 4^{-p}) sqrt(d) C' / p.
inline double unbounded_example_lower(double c_prime, const LipschitzProbe& probe) {
  probe.validate();
  if (c_prime <= 0.0) throw contract_error("unbounded_example_lower: C' must be positive");
  const double p = static_cast<double>(probe.p);
  return (std::pow(2.0, -p) - std::pow(4.0, -p)) *
         std::sqrt(static_cast<double>(probe.d)) * c_prime / p;
}

// ---------------------------------------------------------------------------
// Sandwich packaging
// ---------------------------------------------------------------------------

/// Tightest valid probe for a pair of sample sets: C = C0 = the largest
/// absolute coordinate seen in either set.
inline LipschitzProbe default_probe(const SampleSet& a, const SampleSet& b, int p = 2) {
  if (a.d != b.d) throw shape_error("default_probe: dimension mismatch");
  double c = 0.0;
  for (double v : a.data) c = std::max(c, std::abs(v));
  for (double v : b.data) c = std::max(c, std::abs(v));
  if (c == 0.0) c = 1.0;
  LipschitzProbe probe;
  probe.p = p;
  probe.C = c;
  probe.C0 = c;
  probe.d = a.d;
  return probe;
}

constexpr double kSandwichSlack = 1e-9;

/// Lower bound, exact distance, and moment upper bound for one pair of
/// empirical distributions; throws if the ordering is violated beyond the
/// fixed slack.
inline BoundReport bound_sandwich(const SampleSet& a, const SampleSet& b,
                                  const LipschitzProbe& probe) {
  BoundReport report;
  report.lower = lower_bound_thm2(a, b, probe);
  report.exact_or_estimate = em_exact_assignment(a, b);
  report.upper = upper_bound_thm1(empirical_moments(a), empirical_moments(b),
                                  &report.term_breakdown);
  const double exact = *report.exact_or_estimate;
  if (report.lower > exact + kSandwichSlack)
    throw numeric_error("bound sandwich violated: lower " +
                        std::to_string(report.lower) + " > exact " +
                        std::to_string(exact));
  if (exact > report.upper + kSandwichSlack)
    throw numeric_error("bound sandwich violated: exact " + std::to_string(exact) +
                        " > upper " + std::to_string(report.upper));
  return report;
}

// ---------------------------------------------------------------------------
// SampleSet CSV format
// ---------------------------------------------------------------------------

/// Writes "# t=<tag>", a "dim0,dim1,..." header, then one sample per row.
inline void save_sampleset_csv(const std::string& path, const SampleSet& s) {
  std::ofstream f(path);
  if (!f) throw format_error("cannot open sample CSV for writing: " + path);
  f << "# t=" << s.tag << "\n";
  for (std::size_t j = 0; j < s.d; ++j) f << (j ? "," : "") << "dim" << j;
  f << "\n";
  for (std::size_t i = 0; i < s.n; ++i) {
    for (std::size_t j = 0; j < s.d; ++j)
      f << (j ? "," : "") << csv_double(s.data[i * s.d + j]);
    f << "\n";
  }
  if (!f) throw format_error("short write to sample CSV: " + path);
}

inline SampleSet load_sampleset_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw format_error("cannot open sample CSV: " + path);
  std::string line;
  int tag = 0;
  bool have_header = false;
  std::size_t d = 0;
  std::vector<double> data;
  std::size_t lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty()) continue;
    if (line[0] == '#') {
      const auto pos = line.find("t=");
      if (pos != std::string::npos) {
        try {
          tag = std::stoi(line.substr(pos + 2));
        } catch (const std::exception&) {
          throw format_error(path + ":" + std::to_string(lineno) + ": bad tag line");
        }
      }
      continue;
    }
    std::stringstream ss(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!have_header) {
      if (cells.empty() || cells[0].rfind("dim", 0) != 0)
        throw format_error(path + ":" + std::to_string(lineno) +
                           ": expected dim0,dim1,... header");
      d = cells.size();
      have_header = true;
      continue;
    }
    if (cells.size() != d)
      throw format_error(path + ":" + std::to_string(lineno) + ": expected " +
                         std::to_string(d) + " cells");
    for (const auto& c : cells) {
      try {
        data.push_back(std::stod(c));
      } catch (const std::exception&) {
        throw format_error(path + ":" + std::to_string(lineno) + ": bad number '" +
                           c + "'");
      }
    }
  }
  if (!have_header || data.empty())
    throw format_error(path + ": no samples found");
  const std::size_t n = data.size() / d;
  return SampleSet::make(n, d, std::move(data), tag);
}

}  // namespace ulab
