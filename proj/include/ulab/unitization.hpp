#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "ulab/layers.hpp"
#include "ulab/param.hpp"
#include "ulab/tensor.hpp"

namespace ulab {

// ---------------------------------------------------------------------------
// Plain-vector unitization transforms
// ---------------------------------------------------------------------------

namespace detail {

inline double norm2(std::span<const double> x) {
  double s = 0.0;
  for (double v : x) s += v * v;
  return std::sqrt(s);
}

inline void check_unit(std::span<const double> c) {
  if (std::abs(norm2(c) - 1.0) > 1e-9)
    throw contract_error("unitize: c must be a unit vector");
}

inline void check_alpha01(double a, const char* what) {
  if (!(a >= 0.0 && a <= 1.0))
    throw contract_error(std::string(what) + ": alpha must lie in [0, 1]");
}

}  // namespace detail

/// x / ||x||; a zero vector maps to the constant unit vector c.
/// Output always lies on the unit sphere.
inline std::vector<double> vanilla_unitize(std::span<const double> x,
                                           std::span<const double> c) {
  detail::check_unit(c);
  if (x.size() != c.size()) throw shape_error("vanilla_unitize: dimension mismatch");
  const double n = detail::norm2(x);
  std::vector<double> out(x.size());
  if (n == 0.0) {
    std::copy(c.begin(), c.end(), out.begin());
  } else {
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] / n;
  }
  return out;
}

/// x / (alpha*||x|| + (1 - alpha)); the zero vector maps to c only when
/// alpha = 1 (otherwise the denominator is 1 - alpha > 0 and the output is 0).
inline std::vector<double> partial_unitize(std::span<const double> x, double alpha,
                                           std::span<const double> c) {
  detail::check_alpha01(alpha, "partial_unitize");
  detail::check_unit(c);
  if (x.size() != c.size()) throw shape_error("partial_unitize: dimension mismatch");
  const double n = detail::norm2(x);
  std::vector<double> out(x.size());
  if (n == 0.0 && alpha == 1.0) {
    std::copy(c.begin(), c.end(), out.begin());
    return out;
  }
  const double denom = alpha * n + (1.0 - alpha);
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] / denom;
  return out;
}

/// Componentwise x_i / (alpha_i*(||x|| - 1) + 1); the zero vector maps to 0.
/// Each denominator is >= 1 - alpha_i > 0 for alpha_i < 1 and equals ||x||
/// when alpha_i = 1, so no component ever flips sign.
inline std::vector<double> general_unitize(std::span<const double> x,
                                           std::span<const double> alpha) {
  if (x.size() != alpha.size()) throw shape_error("general_unitize: dimension mismatch");
  for (double a : alpha) detail::check_alpha01(a, "general_unitize");
  const double n = detail::norm2(x);
  std::vector<double> out(x.size(), 0.0);
  if (n == 0.0) return out;
  for (std::size_t i = 0; i < x.size(); ++i)
    out[i] = x[i] / (alpha[i] * (n - 1.0) + 1.0);
  return out;
}

// ---------------------------------------------------------------------------
// Trainable unitization layers
// ---------------------------------------------------------------------------

/// Per-feature interpolation weights plus the affine recovery pair.
/// alpha is stored unconstrained and projected back into [0, 1] after each
/// optimizer step (clamp_alpha).
struct UnitizationParams {
  Param alpha;
  Param gamma;
  Param beta;
  double eps = 1e-5;

  static UnitizationParams init(std::size_t d, const std::string& prefix,
                                double eps = 1e-5) {
    if (eps <= 0.0) throw contract_error("unitization: eps must be positive");
    UnitizationParams p;
    p.alpha = Param::full(prefix + ".alpha", {d}, 0.0);
    p.gamma = Param::full(prefix + ".gamma", {d}, 1.0);
    p.beta = Param::full(prefix + ".beta", {d}, 0.0);
    p.eps = eps;
    return p;
  }
};

/// Projects alpha back into [0, 1] componentwise.
inline void clamp_alpha(Param& alpha) {
  for (double& a : alpha.value) a = std::clamp(a, 0.0, 1.0);
}

inline void clamp_alpha(UnitizationParams& params) { clamp_alpha(params.alpha); }

namespace detail {

/// Core interpolation: out = (p alpha + (1 - alpha)) .* xhat with p given
/// per sample (axis 0) and alpha per feature/channel (axis 1).
inline Tensor unitize_mix(const Tensor& xhat, const Tensor& p, const Tensor& alpha_t) {
  Tensor ones = Tensor::ones(alpha_t.shape());
  Tensor keep = bcast_mul(xhat, sub(ones, alpha_t), 1);
  Tensor unit = bcast_mul(bcast_mul(xhat, p, 0), alpha_t, 1);
  return add(unit, keep);
}

}  // namespace detail

/// The practical per-sample transform on normalized activations:
///   p = 1 / sqrt(||xhat_i||^2 + eps)
///   xbar_i = (p * alpha + (1 - alpha)) .* xhat_i
///   y_i = gamma .* xbar_i + beta
/// Fully recorded so alpha, gamma and beta all receive gradients.
inline Tensor unitization_forward(Binder& bind, UnitizationParams& params,
                                  const Tensor& xhat) {
  if (xhat.rank() != 2) throw shape_error("unitization_forward: input must be [n x d]");
  Tensor alpha_t = bind(params.alpha);
  Tensor gamma_t = bind(params.gamma);
  Tensor beta_t = bind(params.beta);
  Tensor sq = reduce_sum(square(xhat), {1});
  Tensor p = div(Tensor::scalar(1.0), sqrt(add(sq, Tensor::scalar(params.eps))));
  Tensor xbar = detail::unitize_mix(xhat, p, alpha_t);
  return bcast_add(bcast_mul(xbar, gamma_t, 1), beta_t, 1);
}

/// Inference-mode evaluation (constants only).
inline Tensor unitization_eval(const UnitizationParams& params, const Tensor& xhat) {
  if (xhat.rank() != 2) throw shape_error("unitization_eval: input must be [n x d]");
  Tensor alpha_t = Tensor::constant(params.alpha.shape, params.alpha.value);
  Tensor gamma_t = Tensor::constant(params.gamma.shape, params.gamma.value);
  Tensor beta_t = Tensor::constant(params.beta.shape, params.beta.value);
  Tensor sq = reduce_sum(square(xhat), {1});
  Tensor p = div(Tensor::scalar(1.0), sqrt(add(sq, Tensor::scalar(params.eps))));
  Tensor xbar = detail::unitize_mix(xhat, p, alpha_t);
  return bcast_add(bcast_mul(xbar, gamma_t, 1), beta_t, 1);
}

/// Fully-connected unitization layer: batch-statistics normalize (no affine),
/// per-sample unitization, then the affine recovery.
struct UnitizationLayer {
  NormStats stats;
  UnitizationParams params;

  static UnitizationLayer init(std::size_t d, const std::string& prefix,
                               double eps = 1e-5, double momentum = 0.1) {
    UnitizationLayer l;
    l.stats.eps = eps;
    l.stats.momentum = momentum;
    l.stats.init(d);
    l.params = UnitizationParams::init(d, prefix, eps);
    return l;
  }

  Tensor forward(Binder& bind, const Tensor& x, bool train) {
    Tensor xhat = train ? stats.normalize_train(x) : stats.normalize_eval(x);
    return unitization_forward(bind, params, xhat);
  }

  Tensor eval(const Tensor& x) const {
    return unitization_eval(params, stats.normalize_eval(x));
  }
};

// ---------------------------------------------------------------------------
// Convolutional unitization
// ---------------------------------------------------------------------------

/// The norm constant for convolutional unitization. n_hyper <= 0 selects the
/// default H*W; whichever value is used must stay fixed between training and
/// evaluation.
struct ConvUnitizationConfig {
  double n_hyper = 0.0;
  double eps = 1e-5;

  double effective_n(std::size_t h, std::size_t w) const {
    return n_hyper > 0.0 ? n_hyper : static_cast<double>(h * w);
  }
};

/// Per-image unitization over feature maps. Each image's normalized tensor
/// is scaled by p = 1/sqrt(s + eps) with
///   s = (sum over C,H,W of xhat^2) / (n_hyper * H * W),
/// interpolated per channel by alpha, then recovered by gamma/beta.
struct ConvUnitizationLayer {
  NormStats stats;
  UnitizationParams params;
  ConvUnitizationConfig config;

  static ConvUnitizationLayer init(std::size_t channels, const std::string& prefix,
                                   ConvUnitizationConfig config = {},
                                   double momentum = 0.1) {
    if (config.eps <= 0.0) throw contract_error("conv unitization: eps must be positive");
    ConvUnitizationLayer l;
    l.stats.eps = config.eps;
    l.stats.momentum = momentum;
    l.stats.init(channels);
    l.params = UnitizationParams::init(channels, prefix, config.eps);
    l.config = config;
    return l;
  }

  Tensor forward(Binder& bind, const Tensor& x, bool train) {
    Tensor xhat = train ? stats.normalize_train_nchw(x) : stats.normalize_eval_nchw(x);
    return apply(bind(params.alpha), bind(params.gamma), bind(params.beta), xhat);
  }

  Tensor eval(const Tensor& x) const {
    return apply(Tensor::constant(params.alpha.shape, params.alpha.value),
                 Tensor::constant(params.gamma.shape, params.gamma.value),
                 Tensor::constant(params.beta.shape, params.beta.value),
                 stats.normalize_eval_nchw(x));
  }

 private:
  Tensor apply(const Tensor& alpha_t, const Tensor& gamma_t, const Tensor& beta_t,
               const Tensor& xhat) const {
    if (xhat.rank() != 4) throw shape_error("conv unitization: input must be NCHW");
    if (xhat.extent(1) != alpha_t.size())
      throw shape_error("conv unitization: params sized for " +
                        std::to_string(alpha_t.size()) + " channels, input has " +
                        std::to_string(xhat.extent(1)));
    const std::size_t h = xhat.extent(2), w = xhat.extent(3);
    const double denom = config.effective_n(h, w) * static_cast<double>(h * w);
    Tensor s = reduce_sum(square(xhat), {1, 2, 3});
    s = div(s, Tensor::scalar(denom));
    Tensor p = div(Tensor::scalar(1.0), sqrt(add(s, Tensor::scalar(config.eps))));
    Tensor xbar = detail::unitize_mix(xhat, p, alpha_t);
    return bcast_add(bcast_mul(xbar, gamma_t, 1), beta_t, 1);
  }
};

}  // namespace ulab
