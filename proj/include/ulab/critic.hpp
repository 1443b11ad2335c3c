#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "ulab/errors.hpp"
#include "ulab/layers.hpp"
#include "ulab/rng.hpp"
#include "ulab/tensor.hpp"

namespace ulab {

/// Knobs of the EM-distance estimation loop.
struct CriticConfig {
  int iterations = 1500;
  std::size_t batch_size = 128;
  double clip = 0.01;         // parameter clipping bound c
  double lr = 5e-5;           // plain gradient-ascent rate
  std::vector<std::size_t> hidden = {128, 128, 128};
  bool sigmoid_head = false;  // bounded head; off by default (caps the scale)
  std::uint64_t seed = 0;

  void validate() const {
    if (iterations <= 0) throw contract_error("critic: iterations must be positive");
    if (batch_size == 0) throw contract_error("critic: batch size must be positive");
    if (clip <= 0.0) throw contract_error("critic: clip bound must be positive");
    if (lr <= 0.0) throw contract_error("critic: lr must be positive");
  }
};

/// Frozen feature map: batch [n x d_in] -> [n x d_out], evaluated without a
/// tape. Safe to share across threads.
using FrozenNet = std::function<Tensor(const Tensor&)>;

/// Seeded batch supplier for critic training.
using SampleSource = std::function<Tensor(std::size_t batch, Rng& rng)>;

inline FrozenNet identity_net() {
  return [](const Tensor& x) { return x; };
}

inline SampleSource gaussian_source(std::size_t d) {
  return [d](std::size_t batch, Rng& rng) {
    std::vector<double> v(batch * d);
    for (double& x : v) x = rng.normal();
    return Tensor::constant({batch, d}, std::move(v));
  };
}

/// Scalar-output MLP whose parameters are clipped into [-c, c] after every
/// update, which caps its (unknown) Lipschitz constant.
struct CriticNet {
  std::vector<DenseLayer> layers;  // hidden stack + scalar head
  bool sigmoid_head = false;

  static CriticNet init(std::size_t input_dim, std::span<const std::size_t> hidden,
                        Rng& rng, bool sigmoid_head = false) {
    CriticNet net;
    net.sigmoid_head = sigmoid_head;
    std::size_t in = input_dim;
    for (std::size_t i = 0; i < hidden.size(); ++i) {
      net.layers.push_back(
          DenseLayer::init(in, hidden[i], rng, "critic" + std::to_string(i)));
      in = hidden[i];
    }
    net.layers.push_back(DenseLayer::init(in, 1, rng, "critic_head"));
    return net;
  }

  /// [n x d] -> [n x 1] critic scores, tape-recorded.
  Tensor forward(Binder& bind, const Tensor& x) {
    Tensor h = x;
    for (std::size_t i = 0; i + 1 < layers.size(); ++i)
      h = relu(layers[i].forward(bind, h));
    h = layers.back().forward(bind, h);
    return sigmoid_head ? sigmoid(h) : h;
  }

  Tensor eval(const Tensor& x) const {
    Tensor h = x;
    for (std::size_t i = 0; i + 1 < layers.size(); ++i)
      h = relu(layers[i].eval(h));
    h = layers.back().eval(h);
    return sigmoid_head ? sigmoid(h) : h;
  }

  std::vector<Param*> params() {
    std::vector<Param*> out;
    for (auto& l : layers) {
      out.push_back(&l.weight);
      out.push_back(&l.bias);
    }
    return out;
  }

  void clip_weights(double c) {
    for (auto* p : params())
      for (double& v : p->value) v = std::clamp(v, -c, c);
  }

  bool weights_within(double c) const {
    for (const auto& l : layers) {
      for (double v : l.weight.value)
        if (std::abs(v) > c) return false;
      for (double v : l.bias.value)
        if (std::abs(v) > c) return false;
    }
    return true;
  }

  /// Upper bound on the Lipschitz constant: product of the layers' Frobenius
  /// norms (relu and the bias are 1-Lipschitz / constant shifts).
  double lipschitz_upper() const {
    double k = 1.0;
    for (const auto& l : layers) {
      double fro = 0.0;
      for (double v : l.weight.value) fro += v * v;
      k *= std::sqrt(fro);
    }
    if (sigmoid_head) k *= 0.25;
    return k;
  }
};

/// Called after each clipped update; used by tests to check the invariant at
/// every step.
using CriticStepHook = std::function<void(int step, const CriticNet&, double objective)>;

/// Trains the critic by gradient ascent on
///   mean f_w(f_new(x)) - mean f_w(f_old(x)),
/// clipping every parameter into [-c, c] after each of the T updates.
/// Both feature maps stay frozen. Deterministic under cfg.seed.
inline CriticNet train_critic(CriticNet critic, const FrozenNet& f_old,
                              const FrozenNet& f_new, const SampleSource& data,
                              const CriticConfig& cfg,
                              const CriticStepHook& hook = {}) {
  cfg.validate();
  Rng rng(cfg.seed);
  for (int step = 1; step <= cfg.iterations; ++step) {
    const Tensor x = data(cfg.batch_size, rng);
    const Tensor a = f_new(x);
    const Tensor b = f_old(x);
    if (a.shape() != b.shape())
      throw shape_error("train_critic: snapshot output shapes differ");

    Tape tape;
    Binder bind(&tape);
    Tensor objective = sub(mean_all(critic.forward(bind, a)),
                           mean_all(critic.forward(bind, b)));
    const double obj = objective.value();
    if (!std::isfinite(obj))
      throw diverged_error("train_critic: non-finite objective at step " +
                           std::to_string(step));
    tape.backward(objective);
    bind.for_each_grad([&cfg](Param& p, std::span<const double> grad) {
      for (std::size_t i = 0; i < p.size(); ++i) p.value[i] += cfg.lr * grad[i];
    });
    critic.clip_weights(cfg.clip);
    if (hook) hook(step, critic, obj);
  }
  return critic;
}

/// Scaled EM-distance estimate for one layer and iteration pair.
struct EmEstimate {
  double value = 0.0;  // K * W with the critic's (unknown) constant K
  int layer = -1;
  int t = 0;
  int t_next = 0;
};

/// Mean critic-output difference over held-out data (Algorithm line:
/// d <- mean f_w(f_new(x)) - mean f_w(f_old(x))).
inline double estimate_em(const CriticNet& critic, const FrozenNet& f_old,
                          const FrozenNet& f_new, const Tensor& test_data) {
  if (test_data.size() == 0 || test_data.extent(0) == 0)
    throw degenerate_input_error("estimate_em: empty test set");
  const Tensor da = critic.eval(f_new(test_data));
  const Tensor db = critic.eval(f_old(test_data));
  double acc = 0.0;
  auto av = da.data();
  auto bv = db.data();
  for (std::size_t i = 0; i < av.size(); ++i) acc += av[i] - bv[i];
  return acc / static_cast<double>(av.size());
}

inline double average_deep_layer_distance(std::span<const double> estimates) {
  if (estimates.empty())
    throw degenerate_input_error("average_deep_layer_distance: empty list");
  double acc = 0.0;
  for (double e : estimates) acc += e;
  return acc / static_cast<double>(estimates.size());
}

}  // namespace ulab
