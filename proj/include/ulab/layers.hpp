#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ulab/optim.hpp"
#include "ulab/param.hpp"
#include "ulab/rng.hpp"
#include "ulab/tensor.hpp"

namespace ulab {

/// Zero-mean Gaussian init with variance 2/fan_in.
inline std::vector<double> he_init(std::size_t count, std::size_t fan_in, Rng& rng) {
  if (fan_in == 0) throw degenerate_input_error("he_init: fan_in must be positive");
  const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
  std::vector<double> v(count);
  for (double& x : v) x = rng.normal(0.0, stddev);
  return v;
}

inline Param he_init_param(std::string name, Shape shape, std::size_t fan_in,
                           Rng& rng) {
  return Param::make(std::move(name), shape, he_init(numel(shape), fan_in, rng));
}

// ---------------------------------------------------------------------------
// Dense
// ---------------------------------------------------------------------------

struct DenseLayer {
  Param weight;  // [out x in]
  Param bias;    // [out]

  static DenseLayer init(std::size_t in, std::size_t out, Rng& rng,
                         const std::string& prefix) {
    DenseLayer l;
    l.weight = he_init_param(prefix + ".W", {out, in}, in, rng);
    l.bias = Param::full(prefix + ".b", {out}, 0.0);
    return l;
  }

  std::size_t in_features() const { return weight.shape[1]; }
  std::size_t out_features() const { return weight.shape[0]; }

  /// x [n x in] -> x W^T + b, tape-recorded through the binder.
  Tensor forward(Binder& bind, const Tensor& x) {
    Tensor w = bind(weight);
    Tensor b = bind(bias);
    return bcast_add(matmul(x, transpose(w)), b, 1);
  }

  /// Inference evaluation without binding.
  Tensor eval(const Tensor& x) const {
    Tensor w = Tensor::constant(weight.shape, weight.value);
    Tensor b = Tensor::constant(bias.shape, bias.value);
    return bcast_add(matmul(x, transpose(w)), b, 1);
  }
};

// ---------------------------------------------------------------------------
// Convolution (direct, via patch gathering)
// ---------------------------------------------------------------------------

struct Conv2dLayer {
  Param kernels;  // [C_out x C_in x kH x kW]
  Param bias;     // [C_out]
  std::size_t stride = 1;
  std::size_t padding = 0;

  static Conv2dLayer init(std::size_t c_in, std::size_t c_out, std::size_t k,
                          std::size_t stride, std::size_t padding, Rng& rng,
                          const std::string& prefix) {
    Conv2dLayer l;
    l.kernels = he_init_param(prefix + ".K", {c_out, c_in, k, k}, c_in * k * k, rng);
    l.bias = Param::full(prefix + ".b", {c_out}, 0.0);
    l.stride = stride;
    l.padding = padding;
    return l;
  }

  Tensor forward(Binder& bind, const Tensor& x) {
    return apply(bind(kernels), bind(bias), x);
  }

  Tensor eval(const Tensor& x) const {
    return apply(Tensor::constant(kernels.shape, kernels.value),
                 Tensor::constant(bias.shape, bias.value), x);
  }

 private:
  Tensor apply(const Tensor& k, const Tensor& b, const Tensor& x) const {
    if (x.rank() != 4) throw shape_error("conv2d: input must be NCHW");
    const std::size_t c_out = k.extent(0), c_in = k.extent(1);
    const std::size_t kh = k.extent(2), kw = k.extent(3);
    if (x.extent(1) != c_in) throw shape_error("conv2d: channel mismatch");
    const std::size_t n = x.extent(0), h = x.extent(2), w = x.extent(3);
    const std::size_t oh = (h + 2 * padding - kh) / stride + 1;
    const std::size_t ow = (w + 2 * padding - kw) / stride + 1;
    Tensor cols = gather_patches(x, kh, kw, stride, padding);   // [n*oh*ow, c_in*kh*kw]
    Tensor kmat = reshape(k, {c_out, c_in * kh * kw});
    Tensor out = matmul(cols, transpose(kmat));                 // [n*oh*ow, c_out]
    out = bcast_add(out, b, 1);
    return permute_hw_c(out, n, oh, ow, c_out);
  }

  // [n*h*w, c] with rows in (img, y, x) order -> NCHW.
  static Tensor permute_hw_c(const Tensor& x, std::size_t n, std::size_t h,
                             std::size_t w, std::size_t c) {
    // x is [n*h*w, c] with row index (img*h*w + y*w + x). Produce NCHW.
    const std::size_t hw = h * w;
    std::vector<double> out(n * c * hw);
    auto xv = x.data();
    for (std::size_t img = 0; img < n; ++img)
      for (std::size_t p = 0; p < hw; ++p)
        for (std::size_t ch = 0; ch < c; ++ch)
          out[(img * c + ch) * hw + p] = xv[(img * hw + p) * c + ch];
    std::vector<int> parents;
    if (x.node() >= 0) parents.push_back(x.node());
    return detail::make(x.tape(), {n, c, h, w}, std::move(out), std::move(parents),
                        [x, n, hw, c](std::span<const double> up, Tape& t) {
                          if (x.node() < 0) return;
                          std::vector<double> g(n * hw * c);
                          for (std::size_t img = 0; img < n; ++img)
                            for (std::size_t p = 0; p < hw; ++p)
                              for (std::size_t ch = 0; ch < c; ++ch)
                                g[(img * hw + p) * c + ch] =
                                    up[(img * c + ch) * hw + p];
                          t.accumulate(x.node(), g);
                        });
  }
};

// ---------------------------------------------------------------------------
// Batch statistics (shared by BN and unitization layers)
// ---------------------------------------------------------------------------

/// Running first/second moments with the standard normalize step.
/// Feature mode works on [n x d] (statistics over the batch axis); channel
/// mode works on NCHW (statistics over batch and spatial axes).
struct NormStats {
  std::vector<double> running_mean;
  std::vector<double> running_var;
  double momentum = 0.1;
  double eps = 1e-5;

  void init(std::size_t d) {
    running_mean.assign(d, 0.0);
    running_var.assign(d, 1.0);
  }

  /// Train-mode normalize of [n x d]; updates running statistics.
  Tensor normalize_train(const Tensor& x) {
    if (x.rank() != 2) throw shape_error("batchnorm: input must be [n x d]");
    if (x.extent(0) < 2)
      throw degenerate_input_error("batchnorm: train mode needs n >= 2");
    Tensor mu = reduce_mean(x, {0});
    Tensor centered = bcast_sub(x, mu, 1);
    Tensor var = reduce_mean(square(centered), {0});
    update_running(mu.data(), var.data());
    Tensor denom = sqrt(add(var, Tensor::scalar(eps)));
    return bcast_mul(centered, div(Tensor::scalar(1.0), denom), 1);
  }

  /// Inference normalize using running statistics ([n x d]).
  Tensor normalize_eval(const Tensor& x) const {
    if (x.rank() != 2) throw shape_error("batchnorm: input must be [n x d]");
    const std::size_t d = x.extent(1);
    if (d != running_mean.size()) throw shape_error("batchnorm: width mismatch");
    std::vector<double> inv(d);
    for (std::size_t j = 0; j < d; ++j) inv[j] = 1.0 / std::sqrt(running_var[j] + eps);
    Tensor centered = bcast_sub(x, Tensor::constant({d}, running_mean), 1);
    return bcast_mul(centered, Tensor::constant({d}, inv), 1);
  }

  /// Train-mode per-channel normalize of NCHW; moments over N, H, W.
  Tensor normalize_train_nchw(const Tensor& x) {
    if (x.rank() != 4) throw shape_error("conv batchnorm: input must be NCHW");
    if (x.extent(0) * x.extent(2) * x.extent(3) < 2)
      throw degenerate_input_error("conv batchnorm: needs N*H*W >= 2 per channel");
    Tensor mu = reduce_mean(x, {0, 2, 3});
    Tensor centered = bcast_sub(x, mu, 1);
    Tensor var = reduce_mean(square(centered), {0, 2, 3});
    update_running(mu.data(), var.data());
    Tensor denom = sqrt(add(var, Tensor::scalar(eps)));
    return bcast_mul(centered, div(Tensor::scalar(1.0), denom), 1);
  }

  Tensor normalize_eval_nchw(const Tensor& x) const {
    if (x.rank() != 4) throw shape_error("conv batchnorm: input must be NCHW");
    const std::size_t c = x.extent(1);
    if (c != running_mean.size()) throw shape_error("conv batchnorm: channel mismatch");
    std::vector<double> inv(c);
    for (std::size_t j = 0; j < c; ++j) inv[j] = 1.0 / std::sqrt(running_var[j] + eps);
    Tensor centered = bcast_sub(x, Tensor::constant({c}, running_mean), 1);
    return bcast_mul(centered, Tensor::constant({c}, inv), 1);
  }

 private:
  void update_running(std::span<const double> mu, std::span<const double> var) {
    if (running_mean.size() != mu.size()) init(mu.size());
    for (std::size_t j = 0; j < mu.size(); ++j) {
      running_mean[j] = (1.0 - momentum) * running_mean[j] + momentum * mu[j];
      running_var[j] = (1.0 - momentum) * running_var[j] + momentum * var[j];
    }
  }
};

// ---------------------------------------------------------------------------
// BatchNorm layers
// ---------------------------------------------------------------------------

struct BatchNorm {
  NormStats stats;
  Param gamma;
  Param beta;

  static BatchNorm init(std::size_t d, const std::string& prefix,
                        double eps = 1e-5, double momentum = 0.1) {
    if (eps <= 0.0) throw contract_error("batchnorm: eps must be positive");
    BatchNorm bn;
    bn.stats.eps = eps;
    bn.stats.momentum = momentum;
    bn.stats.init(d);
    bn.gamma = Param::full(prefix + ".gamma", {d}, 1.0);
    bn.beta = Param::full(prefix + ".beta", {d}, 0.0);
    return bn;
  }

  /// Returns (xhat, y): the pre-affine normalized batch and gamma*xhat+beta.
  std::pair<Tensor, Tensor> forward(Binder& bind, const Tensor& x, bool train) {
    Tensor xhat = train ? stats.normalize_train(x) : stats.normalize_eval(x);
    Tensor y = bcast_add(bcast_mul(xhat, bind(gamma), 1), bind(beta), 1);
    return {xhat, y};
  }

  std::pair<Tensor, Tensor> eval(const Tensor& x) const {
    Tensor xhat = stats.normalize_eval(x);
    Tensor y = bcast_add(bcast_mul(xhat, Tensor::constant(gamma.shape, gamma.value), 1),
                         Tensor::constant(beta.shape, beta.value), 1);
    return {xhat, y};
  }
};

struct ConvBatchNorm {
  NormStats stats;
  Param gamma;
  Param beta;

  static ConvBatchNorm init(std::size_t channels, const std::string& prefix,
                            double eps = 1e-5, double momentum = 0.1) {
    if (eps <= 0.0) throw contract_error("conv batchnorm: eps must be positive");
    ConvBatchNorm bn;
    bn.stats.eps = eps;
    bn.stats.momentum = momentum;
    bn.stats.init(channels);
    bn.gamma = Param::full(prefix + ".gamma", {channels}, 1.0);
    bn.beta = Param::full(prefix + ".beta", {channels}, 0.0);
    return bn;
  }

  std::pair<Tensor, Tensor> forward(Binder& bind, const Tensor& x, bool train) {
    Tensor xhat = train ? stats.normalize_train_nchw(x) : stats.normalize_eval_nchw(x);
    Tensor y = bcast_add(bcast_mul(xhat, bind(gamma), 1), bind(beta), 1);
    return {xhat, y};
  }

  std::pair<Tensor, Tensor> eval(const Tensor& x) const {
    Tensor xhat = stats.normalize_eval_nchw(x);
    Tensor y = bcast_add(bcast_mul(xhat, Tensor::constant(gamma.shape, gamma.value), 1),
                         Tensor::constant(beta.shape, beta.value), 1);
    return {xhat, y};
  }
};

}  // namespace ulab
