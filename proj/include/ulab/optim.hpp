#pragma once

#include <span>
#include <vector>

#include "ulab/errors.hpp"
#include "ulab/param.hpp"

namespace ulab {

/// Mini-batch gradient descent with (optionally Nesterov) momentum and a
/// step learning-rate schedule.
struct SgdConfig {
  double lr = 0.05;
  double momentum = 0.9;
  bool nesterov = true;
  double weight_decay = 0.0;
  std::vector<int> milestones;  // strictly increasing epoch numbers
  double decay_factor = 0.2;

  void validate() const {
    if (lr <= 0.0) throw contract_error("sgd: lr must be positive");
    if (momentum < 0.0 || momentum >= 1.0)
      throw contract_error("sgd: momentum must lie in [0, 1)");
    if (weight_decay < 0.0)
      throw contract_error("sgd: weight_decay must be non-negative");
    if (decay_factor <= 0.0 || decay_factor >= 1.0)
      throw contract_error("sgd: decay_factor must lie in (0, 1)");
    for (std::size_t i = 1; i < milestones.size(); ++i)
      if (milestones[i] <= milestones[i - 1])
        throw contract_error("sgd: milestones must be strictly increasing");
  }
};

/// Base rate decayed once per milestone that has been reached.
inline double lr_at_epoch(const SgdConfig& cfg, int epoch) {
  double rate = cfg.lr;
  for (int m : cfg.milestones)
    if (m <= epoch) rate *= cfg.decay_factor;
  return rate;
}

/// One momentum step:
///   g  <- grad + wd * theta
///   v  <- momentum * v + g
///   theta -= lr * (nesterov ? g + momentum * v : v)
inline void sgd_step(Param& p, std::span<const double> grad, const SgdConfig& cfg,
                     double lr) {
  if (grad.size() != p.size())
    throw shape_error("sgd_step: gradient length mismatch for " + p.name);
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double g = grad[i] + cfg.weight_decay * p.value[i];
    p.velocity[i] = cfg.momentum * p.velocity[i] + g;
    const double update = cfg.nesterov ? g + cfg.momentum * p.velocity[i]
                                       : p.velocity[i];
    p.value[i] -= lr * update;
  }
}

}  // namespace ulab
