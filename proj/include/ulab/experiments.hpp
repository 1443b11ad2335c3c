#pragma once

#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <limits>
#include <string>
#include <vector>

#include "ulab/config.hpp"
#include "ulab/critic.hpp"
#include "ulab/csv.hpp"
#include "ulab/data.hpp"
#include "ulab/moments.hpp"
#include "ulab/network.hpp"
#include "ulab/optim.hpp"
#include "ulab/transport.hpp"
#include "ulab/unitization.hpp"
#include "ulab/version.hpp"

namespace ulab {

namespace detail {

inline std::string join_path(const std::string& dir, const std::string& name) {
  return (std::filesystem::path(dir) / name).string();
}

inline void ensure_dir(const std::string& dir) {
  std::filesystem::create_directories(dir);
}

class Stopwatch {
 public:
  explicit Stopwatch(bool zeroed) : zeroed_(zeroed) { reset(); }
  void reset() { start_ = std::chrono::steady_clock::now(); }
  double seconds() const {
    if (zeroed_) return 0.0;
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_)
        .count();
  }

 private:
  bool zeroed_;
  std::chrono::steady_clock::time_point start_;
};

inline std::uint64_t fnv_bytes(std::uint64_t h, const void* data, std::size_t n) {
  const unsigned char* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

}  // namespace detail

inline void write_manifest(const ExperimentConfig& cfg, const std::string& dir) {
  detail::ensure_dir(dir);
  std::ofstream f(detail::join_path(dir, "manifest.txt"));
  f << "ulab_version = " << kVersion << "\n";
  f << "mode = " << to_string(cfg.mode) << "\n";
  f << "seed = " << cfg.seed << "\n";
  f << "config_hash = " << config_hash(cfg) << "\n";
  std::ofstream c(detail::join_path(dir, "config.txt"));
  c << serialize_config(cfg);
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double test_accuracy = 0.0;
  double wall_seconds = 0.0;
};

/// Checksum over the non-normalization weights; used to verify that paired
/// variants really share their initialization.
inline std::uint64_t dense_weight_checksum(const Mlp& net) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  auto& hidden = net.hidden();
  for (const auto& layer : hidden) {
    h = detail::fnv_bytes(h, layer.dense.weight.value.data(),
                          layer.dense.weight.value.size() * sizeof(double));
    h = detail::fnv_bytes(h, layer.dense.bias.value.data(),
                          layer.dense.bias.value.size() * sizeof(double));
  }
  return h;
}

inline double test_accuracy(const Mlp& net, const Dataset& test,
                            std::size_t chunk = 512) {
  std::size_t correct = 0;
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < test.n; start += chunk) {
    const std::size_t end = std::min(test.n, start + chunk);
    idx.resize(end - start);
    for (std::size_t i = start; i < end; ++i) idx[i - start] = i;
    Tensor logits = net.eval(test.batch_matrix(idx));
    auto lv = logits.data();
    const std::size_t k = net.classes();
    for (std::size_t i = 0; i < idx.size(); ++i) {
      std::size_t best = 0;
      for (std::size_t j = 1; j < k; ++j)
        if (lv[i * k + j] > lv[i * k + best]) best = j;
      if (static_cast<int>(best) == test.labels[idx[i]]) ++correct;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(test.n);
}

/// Trains one network variant; writes run.csv, alpha.csv and per-epoch
/// checkpoints under `dir`. The hook runs after every epoch (moment sweeps).
inline std::vector<EpochRecord> train_variant(
    const ExperimentConfig& cfg, const std::vector<LayerSpec>& layers,
    const Dataset& train, const Dataset& test, const std::string& dir,
    std::ostream* log, Mlp* keep_net = nullptr,
    const std::function<void(int, Mlp&)>& epoch_hook = {}) {
  detail::ensure_dir(dir);
  const std::string ckpt_dir = detail::join_path(dir, "checkpoints");
  detail::ensure_dir(ckpt_dir);

  Rng init_rng(cfg.seed);
  Mlp net = Mlp::build(train.dim(), layers, static_cast<std::size_t>(train.class_count),
                       init_rng, cfg.bn_eps, cfg.bn_momentum);
  SgdConfig sgd = cfg.sgd();
  sgd.validate();

  char name[64];
  std::snprintf(name, sizeof(name), "epoch_%04d.ulab", 0);
  net.save(detail::join_path(ckpt_dir, name));

  CsvWriter run_csv(detail::join_path(dir, "run.csv"),
                    {"epoch", "train_loss", "test_accuracy", "wall_time_s",
                     "alpha_min", "alpha_mean", "alpha_max"});
  CsvWriter alpha_csv(detail::join_path(dir, "alpha.csv"),
                      {"epoch", "layer", "alpha_min", "alpha_mean", "alpha_max"});

  auto alpha_row = [&](int epoch) {
    double lo = std::numeric_limits<double>::quiet_NaN();
    double hi = lo, mean = lo;
    double sum = 0.0;
    std::size_t count = 0;
    for (const auto& [layer, values] : net.alphas()) {
      double llo = values[0], lhi = values[0], lsum = 0.0;
      for (double a : values) {
        llo = std::min(llo, a);
        lhi = std::max(lhi, a);
        lsum += a;
      }
      alpha_csv.row({std::to_string(epoch), std::to_string(layer),
                     csv_double(llo),
                     csv_double(lsum / static_cast<double>(values.size())),
                     csv_double(lhi)});
      if (count == 0) {
        lo = llo;
        hi = lhi;
      } else {
        lo = std::min(lo, llo);
        hi = std::max(hi, lhi);
      }
      sum += lsum;
      count += values.size();
    }
    if (count) mean = sum / static_cast<double>(count);
    return std::array<double, 3>{lo, mean, hi};
  };

  std::vector<EpochRecord> records;
  BatchPlan plan{cfg.seed, cfg.batch_size, false};
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    detail::Stopwatch watch(cfg.zero_timings);
    const double lr = lr_at_epoch(sgd, epoch);
    double loss_sum = 0.0;
    std::size_t batch_count = 0;
    for (const auto& batch : batches(train.n, plan, epoch)) {
      Tape tape;
      Binder bind(&tape);
      Tensor x = train.batch_matrix(batch);
      Tensor logits = net.forward(bind, x);
      Tensor loss = cross_entropy_mean(logits, train.batch_labels(batch));
      const double loss_value = loss.value();
      if (!std::isfinite(loss_value))
        throw diverged_error("training diverged at epoch " + std::to_string(epoch));
      loss_sum += loss_value;
      ++batch_count;
      tape.backward(loss);
      bind.for_each_grad([&sgd, lr](Param& p, std::span<const double> grad) {
        sgd_step(p, grad, sgd, lr);
      });
      net.clamp_alphas();
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(batch_count);
    rec.test_accuracy = test_accuracy(net, test);
    rec.wall_seconds = watch.seconds();
    records.push_back(rec);

    const auto alpha = alpha_row(epoch);
    run_csv.row({std::to_string(epoch), csv_double(rec.train_loss),
                 csv_double(rec.test_accuracy), csv_double(rec.wall_seconds),
                 csv_double(alpha[0]), csv_double(alpha[1]), csv_double(alpha[2])});

    std::snprintf(name, sizeof(name), "epoch_%04d.ulab", epoch);
    net.save(detail::join_path(ckpt_dir, name));
    if (epoch_hook) epoch_hook(epoch, net);
    if (log)
      *log << "epoch " << epoch << " loss " << csv_double(rec.train_loss)
           << " acc " << csv_double(rec.test_accuracy) << "\n";
  }
  run_csv.close();
  alpha_csv.close();
  if (keep_net) *keep_net = std::move(net);
  return records;
}

inline int run_train(const ExperimentConfig& cfg, std::ostream* log = nullptr) {
  validate_config(cfg);
  Dataset train = load_idx(cfg.train_images, cfg.train_labels);
  Dataset test = load_idx(cfg.test_images, cfg.test_labels);
  write_manifest(cfg, cfg.out_dir);
  try {
    train_variant(cfg, cfg.layers, train, test, cfg.out_dir, log);
  } catch (const diverged_error& e) {
    if (log) *log << e.what() << "\n";
    return 3;
  }
  return 0;
}

// ---------------------------------------------------------------------------
// Moment tracking
// ---------------------------------------------------------------------------

struct MomentsResult {
  std::vector<TrajectorySummary> bn;
  std::vector<TrajectorySummary> unitization;
};

/// Trains BN and unitization variants from shared initial weights and sweeps
/// the chosen layer's per-unit moments after every epoch.
inline int run_moments(const ExperimentConfig& cfg, std::ostream* log = nullptr,
                       MomentsResult* result = nullptr) {
  validate_config(cfg);
  Dataset train = load_idx(cfg.train_images, cfg.train_labels);
  Dataset test = load_idx(cfg.test_images, cfg.test_labels);
  write_manifest(cfg, cfg.out_dir);

  const int layer = cfg.moment_layer >= 0 ? cfg.moment_layer
                                          : static_cast<int>(cfg.layers.size()) - 1;

  struct Variant {
    NormKind norm;
    std::string name;
    std::vector<MomentRecord> records;
    std::uint64_t checksum = 0;
  };
  std::vector<Variant> variants{{NormKind::BatchNorm, "bn", {}, 0},
                                {NormKind::Unitization, "unitization", {}, 0}};

  for (auto& variant : variants) {
    std::vector<LayerSpec> layers = cfg.layers;
    for (auto& l : layers) l.norm = variant.norm;
    const std::string dir = detail::join_path(cfg.out_dir, variant.name);
    detail::ensure_dir(dir);
    CsvWriter moments_csv(detail::join_path(dir, "moments.csv"),
                          {"epoch", "unit", "mean", "var", "skew", "kurt"});
    Mlp net;
    {
      // capture the shared-initialization checksum before training
      Rng probe_rng(cfg.seed);
      Mlp fresh = Mlp::build(train.dim(), layers,
                             static_cast<std::size_t>(train.class_count), probe_rng,
                             cfg.bn_eps, cfg.bn_momentum);
      variant.checksum = dense_weight_checksum(fresh);
    }
    train_variant(cfg, layers, train, test, dir, log, &net,
                  [&](int epoch, Mlp& current) {
                    for (const MomentRecord& r :
                         layer_moment_sweep(current, layer, train, epoch)) {
                      moments_csv.row({std::to_string(r.epoch),
                                       std::to_string(r.unit), csv_double(r.mean),
                                       csv_double(r.var), csv_double(r.skewness),
                                       csv_double(r.kurtosis)});
                      variant.records.push_back(r);
                    }
                  });
    moments_csv.close();
  }

  if (variants[0].checksum != variants[1].checksum)
    throw numeric_error("paired initialization differs between variants");

  if (cfg.epochs >= 2) {
    CsvWriter stability_csv(
        detail::join_path(cfg.out_dir, "stability.csv"),
        {"variant", "unit", "mean_std", "var_std", "skew_std", "kurt_std"});
    for (auto& variant : variants) {
      auto summaries = trajectory_stability(variant.records);
      for (const TrajectorySummary& s : summaries) {
        stability_csv.row({variant.name, std::to_string(s.unit),
                           csv_double(s.mean_std), csv_double(s.var_std),
                           csv_double(s.skew_std), csv_double(s.kurt_std)});
      }
      if (result) {
        if (variant.norm == NormKind::BatchNorm)
          result->bn = summaries;
        else
          result->unitization = summaries;
      }
    }
    stability_csv.close();
    if (log) {
      auto median_of = [](std::vector<double> v) {
        std::sort(v.begin(), v.end());
        const std::size_t n = v.size();
        return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
      };
      for (auto& variant : variants) {
        std::vector<double> skews, kurts;
        for (const TrajectorySummary& s : trajectory_stability(variant.records)) {
          skews.push_back(s.skew_std);
          kurts.push_back(s.kurt_std);
        }
        *log << variant.name << " median skew-trajectory std "
             << csv_double(median_of(skews)) << ", kurtosis-trajectory std "
             << csv_double(median_of(kurts)) << "\n";
      }
    }
  }
  return 0;
}

// ---------------------------------------------------------------------------
// EM-distance tracking
// ---------------------------------------------------------------------------

/// Estimates the per-layer EM distance between consecutive epoch snapshots
/// using the critic, then the average over the configured layers.
inline int run_emdist(const ExperimentConfig& cfg, std::ostream* log = nullptr) {
  validate_config(cfg);
  Dataset train = load_idx(cfg.train_images, cfg.train_labels);
  Dataset test = load_idx(cfg.test_images, cfg.test_labels);
  write_manifest(cfg, cfg.out_dir);
  detail::ensure_dir(cfg.out_dir);

  const std::string ckpt_dir = cfg.ckpt_dir.empty()
                                   ? detail::join_path(cfg.out_dir, "checkpoints")
                                   : cfg.ckpt_dir;
  std::vector<int> layers = cfg.emdist_layers;
  if (layers.empty())
    for (std::size_t i = 0; i < cfg.layers.size(); ++i)
      layers.push_back(static_cast<int>(i));

  CsvWriter csv(detail::join_path(cfg.out_dir, "emdist.csv"),
                {"epoch", "layer", "estimate", "runtime_seconds"});

  const Tensor test_inputs = test.all_matrix();
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    char prev_name[64], cur_name[64];
    std::snprintf(prev_name, sizeof(prev_name), "epoch_%04d.ulab", epoch - 1);
    std::snprintf(cur_name, sizeof(cur_name), "epoch_%04d.ulab", epoch);
    const std::string prev_path = detail::join_path(ckpt_dir, prev_name);
    const std::string cur_path = detail::join_path(ckpt_dir, cur_name);
    if (!std::ifstream(prev_path) || !std::ifstream(cur_path))
      throw missing_data_error("emdist: missing checkpoint for epoch " +
                               std::to_string(epoch) + " under " + ckpt_dir);

    Rng build_rng(cfg.seed);
    Mlp net_old = Mlp::build(train.dim(), cfg.layers,
                             static_cast<std::size_t>(train.class_count), build_rng,
                             cfg.bn_eps, cfg.bn_momentum);
    Mlp net_new = net_old;
    net_old.load(prev_path);
    net_new.load(cur_path);

    std::vector<double> estimates;
    double epoch_runtime = 0.0;
    for (int layer : layers) {
      detail::Stopwatch watch(cfg.zero_timings);
      EmEstimate record;
      record.layer = layer;
      record.t = epoch - 1;
      record.t_next = epoch;
      const std::size_t l = static_cast<std::size_t>(layer);
      FrozenNet f_old = [&net_old, l](const Tensor& x) {
        return net_old.prefix_eval(x, l);
      };
      FrozenNet f_new = [&net_new, l](const Tensor& x) {
        return net_new.prefix_eval(x, l);
      };
      SampleSource source = [&train](std::size_t batch, Rng& rng) {
        std::vector<std::size_t> idx(batch);
        for (auto& i : idx) i = static_cast<std::size_t>(rng.below(train.n));
        return train.batch_matrix(idx);
      };
      CriticConfig critic_cfg = cfg.critic();
      // the critic restarts from the same seeded init for every epoch pair
      critic_cfg.seed = cfg.seed * 1000003ull + static_cast<std::uint64_t>(layer);
      Rng critic_rng(critic_cfg.seed);
      CriticNet critic = CriticNet::init(cfg.layers[l].units, critic_cfg.hidden,
                                         critic_rng, critic_cfg.sigmoid_head);
      critic = train_critic(critic, f_old, f_new, source, critic_cfg);
      record.value = estimate_em(critic, f_old, f_new, test_inputs);
      estimates.push_back(record.value);
      const double rt = watch.seconds();
      epoch_runtime += rt;
      csv.row({std::to_string(record.t_next), std::to_string(record.layer),
               csv_double(record.value), csv_double(rt)});
      if (log)
        *log << "epoch " << epoch << " layer " << layer << " estimate "
             << csv_double(record.value) << "\n";
    }
    // layer -1 carries the average over the configured deep layers
    csv.row({std::to_string(epoch), "-1",
             csv_double(average_deep_layer_distance(estimates)),
             csv_double(epoch_runtime)});
  }
  csv.close();
  return 0;
}

// ---------------------------------------------------------------------------
// Bound verification battery
// ---------------------------------------------------------------------------

/// Seeded property battery over the transport bounds; every row carries a
/// pass flag and any hard failure makes the exit status nonzero.
inline int run_bounds(const ExperimentConfig& cfg, std::ostream* log = nullptr) {
  validate_config(cfg);
  write_manifest(cfg, cfg.out_dir);
  detail::ensure_dir(cfg.out_dir);
  CsvWriter csv(detail::join_path(cfg.out_dir, "bounds.csv"),
                {"check", "instance", "value1", "value2", "value3", "pass"});
  bool all_ok = true;
  const std::vector<std::size_t> dims{1, 2, 8};

  // moment sandwich on random pairs
  for (int trial = 0; trial < cfg.bounds_trials; ++trial) {
    const std::size_t d = dims[static_cast<std::size_t>(trial) % dims.size()];
    const bool gaussian = trial % 2 == 0;
    SampleSet a, b;
    if (gaussian) {
      Rng rng(cfg.seed + static_cast<std::uint64_t>(trial) * 7919ull);
      auto pair = synth_gaussian_pair(64, d, rng.uniform(0.0, 2.0),
                                      rng.uniform(0.5, 2.0),
                                      cfg.seed + static_cast<std::uint64_t>(trial));
      a = pair.first;
      b = pair.second;
    } else {
      Rng rng(cfg.seed + static_cast<std::uint64_t>(trial) * 104729ull);
      auto pair = synth_appendix_uniform_pair(
          rng.uniform(0.5, 4.0), d, 64, cfg.seed + static_cast<std::uint64_t>(trial));
      a = pair.first;
      b = pair.second;
    }
    LipschitzProbe probe = default_probe(a, b, cfg.probe_p);
    bool ok = true;
    BoundReport report;
    try {
      report = bound_sandwich(a, b, probe);
    } catch (const numeric_error&) {
      ok = false;
      all_ok = false;
    }
    const std::string instance = std::string(gaussian ? "gauss" : "uniform") +
                                 ":d" + std::to_string(d) + ":t" +
                                 std::to_string(trial);
    csv.row({"sandwich", instance, csv_double(report.lower),
             csv_double(report.exact_or_estimate.value_or(
                 std::numeric_limits<double>::quiet_NaN())),
             csv_double(report.upper), ok ? "1" : "0"});
  }

  // probe Lipschitz continuity
  for (int p : {2, 3, 4}) {
    for (double c : {0.5, 1.0, 2.0}) {
      Rng rng(cfg.seed ^ (static_cast<std::uint64_t>(p) << 8) ^
              static_cast<std::uint64_t>(c * 16));
      double worst = 0.0;
      const int pairs = 10000;
      for (int i = 0; i < pairs; ++i) {
        const std::size_t d = dims[static_cast<std::size_t>(i) % dims.size()];
        LipschitzProbe probe{p, c, d};
        std::vector<double> v(d), w(d);
        for (auto& x : v) x = rng.normal() * 2.0;
        for (auto& x : w) x = rng.normal() * 2.0;
        double dist = 0.0;
        for (std::size_t k = 0; k < d; ++k)
          dist += (v[k] - w[k]) * (v[k] - w[k]);
        dist = std::sqrt(dist);
        worst = std::max(worst,
                         std::abs(f_pc_eval(v, probe) - f_pc_eval(w, probe)) - dist);
      }
      const bool ok = worst <= 1e-12;
      all_ok = all_ok && ok;
      csv.row({"lipschitz", "p" + std::to_string(p) + ":C" + csv_double(c),
               csv_double(worst), std::to_string(pairs), "", ok ? "1" : "0"});
    }
  }

  // unitized diameter bounds
  {
    Rng rng(cfg.seed + 555);
    const std::vector<double> c_unit{1.0, 0.0, 0.0};
    for (int trial = 0; trial < 50; ++trial) {
      auto make_set = [&rng](std::size_t n, std::size_t d) {
        std::vector<double> v(n * d);
        for (double& x : v)
          x = rng.normal() * std::pow(10.0, rng.uniform(-1.0, 2.0));
        return SampleSet::make(n, d, std::move(v));
      };
      SampleSet raw_a = make_set(32, 3), raw_b = make_set(32, 3);
      // vanilla
      {
        std::vector<double> ua, ub;
        for (std::size_t i = 0; i < raw_a.n; ++i) {
          auto va = vanilla_unitize(raw_a.row(i), c_unit);
          ua.insert(ua.end(), va.begin(), va.end());
          auto vb = vanilla_unitize(raw_b.row(i), c_unit);
          ub.insert(ub.end(), vb.begin(), vb.end());
        }
        const double exact = em_exact_assignment(SampleSet::make(32, 3, ua),
                                                 SampleSet::make(32, 3, ub));
        const bool ok = exact <= unitized_upper_bound_vanilla() + 1e-12;
        all_ok = all_ok && ok;
        csv.row({"thm3_vanilla", "t" + std::to_string(trial), csv_double(exact),
                 csv_double(2.0), "", ok ? "1" : "0"});
      }
      // scalar alpha
      for (double alpha : {0.25, 0.5, 1.0}) {
        std::vector<double> ua, ub;
        for (std::size_t i = 0; i < raw_a.n; ++i) {
          auto va = partial_unitize(raw_a.row(i), alpha, c_unit);
          ua.insert(ua.end(), va.begin(), va.end());
          auto vb = partial_unitize(raw_b.row(i), alpha, c_unit);
          ub.insert(ub.end(), vb.begin(), vb.end());
        }
        const double exact = em_exact_assignment(SampleSet::make(32, 3, ua),
                                                 SampleSet::make(32, 3, ub));
        const double bound = unitized_upper_bound_scalar(alpha);
        const bool ok = exact <= bound + 1e-12;
        all_ok = all_ok && ok;
        csv.row({"thm3_scalar",
                 "t" + std::to_string(trial) + ":a" + csv_double(alpha),
                 csv_double(exact), csv_double(bound), "", ok ? "1" : "0"});
      }
      // vector alpha
      {
        std::vector<double> alpha(3);
        for (auto& a : alpha) a = rng.uniform(0.1, 1.0);
        std::vector<double> ua, ub;
        for (std::size_t i = 0; i < raw_a.n; ++i) {
          auto va = general_unitize(raw_a.row(i), alpha);
          ua.insert(ua.end(), va.begin(), va.end());
          auto vb = general_unitize(raw_b.row(i), alpha);
          ub.insert(ub.end(), vb.begin(), vb.end());
        }
        const double exact = em_exact_assignment(SampleSet::make(32, 3, ua),
                                                 SampleSet::make(32, 3, ub));
        const double bound = unitized_upper_bound_vector(alpha);
        const bool ok = exact <= bound + 1e-12;
        all_ok = all_ok && ok;
        csv.row({"thm3_vector", "t" + std::to_string(trial), csv_double(exact),
                 csv_double(bound), "", ok ? "1" : "0"});
      }
    }
  }

  // the unbounded-distance construction: bound holds and grows linearly
  {
    std::vector<double> exacts;
    std::uint64_t draw = 0;
    for (double c_prime : {1.0, 10.0, 100.0}) {
      auto [a, b] = synth_appendix_uniform_pair(c_prime, 1, 256,
                                                cfg.seed + 777 + ++draw);
      LipschitzProbe probe{cfg.probe_p, c_prime, 1};
      const double lower = unbounded_example_lower(c_prime, probe);
      const double exact = em_exact_assignment(a, b);
      exacts.push_back(exact);
      const bool ok = exact > lower;
      all_ok = all_ok && ok;
      csv.row({"appendix", "Cprime" + csv_double(c_prime), csv_double(lower),
               csv_double(exact), "", ok ? "1" : "0"});
    }
    for (std::size_t i = 1; i < exacts.size(); ++i) {
      const double ratio = exacts[i] / exacts[i - 1];
      const bool ok = ratio >= 8.0 && ratio <= 12.0;  // within 20% of linear
      all_ok = all_ok && ok;
      csv.row({"appendix_linearity", "step" + std::to_string(i), csv_double(ratio),
               "10", "", ok ? "1" : "0"});
    }
  }

  csv.close();
  if (log) *log << "bounds battery " << (all_ok ? "passed" : "FAILED") << "\n";
  return all_ok ? 0 : 1;
}

// ---------------------------------------------------------------------------
// Oracle self-consistency
// ---------------------------------------------------------------------------

inline int run_oracle_check(const ExperimentConfig& cfg,
                            std::ostream* log = nullptr) {
  validate_config(cfg);
  write_manifest(cfg, cfg.out_dir);
  detail::ensure_dir(cfg.out_dir);
  CsvWriter csv(detail::join_path(cfg.out_dir, "oracle.csv"),
                {"check", "instance", "value1", "value2", "value3", "pass"});
  bool all_ok = true;
  Rng rng(cfg.seed + 424243);

  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 16 + rng.below(48);
    auto fill = [&rng](std::size_t count, double scale, double shift) {
      std::vector<double> v(count);
      for (double& x : v) x = shift + scale * rng.normal();
      return v;
    };
    // 1-d agreement between the assignment solver and the sorting oracle
    {
      SampleSet a = SampleSet::make(n, 1, fill(n, rng.uniform(0.5, 3.0), 0.0));
      SampleSet b =
          SampleSet::make(n, 1, fill(n, rng.uniform(0.5, 3.0), rng.uniform(-2.0, 2.0)));
      const double assignment = em_exact_assignment(a, b);
      const double sorted = em_exact_1d(a, b);
      const bool ok = std::abs(assignment - sorted) <= 1e-12;
      all_ok = all_ok && ok;
      csv.row({"oracle_1d", "t" + std::to_string(trial), csv_double(assignment),
               csv_double(sorted), csv_double(std::abs(assignment - sorted)),
               ok ? "1" : "0"});
    }
    // metric axioms in dimension 2
    {
      SampleSet a = SampleSet::make(n, 2, fill(2 * n, 1.0, 0.0));
      SampleSet b = SampleSet::make(n, 2, fill(2 * n, 1.3, 0.4));
      SampleSet c = SampleSet::make(n, 2, fill(2 * n, 0.8, -0.6));
      const double ab = em_exact_assignment(a, b);
      const double ba = em_exact_assignment(b, a);
      const double ac = em_exact_assignment(a, c);
      const double cb = em_exact_assignment(c, b);
      const bool sym = ab == ba;
      const bool tri = ab <= ac + cb + 1e-9;
      all_ok = all_ok && sym && tri;
      csv.row({"oracle_symmetry", "t" + std::to_string(trial), csv_double(ab),
               csv_double(ba), "", sym ? "1" : "0"});
      csv.row({"oracle_triangle", "t" + std::to_string(trial), csv_double(ab),
               csv_double(ac + cb), "", tri ? "1" : "0"});
    }
  }
  csv.close();
  if (log) *log << "oracle check " << (all_ok ? "passed" : "FAILED") << "\n";
  return all_ok ? 0 : 1;
}

inline int run_experiment(const ExperimentConfig& cfg, std::ostream* log = nullptr) {
  switch (cfg.mode) {
    case Mode::Train: return run_train(cfg, log);
    case Mode::Moments: return run_moments(cfg, log);
    case Mode::Emdist: return run_emdist(cfg, log);
    case Mode::Bounds: return run_bounds(cfg, log);
    case Mode::OracleCheck: return run_oracle_check(cfg, log);
  }
  return 2;
}

}  // namespace ulab
