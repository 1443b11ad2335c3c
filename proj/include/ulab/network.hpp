#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ulab/checkpoint.hpp"
#include "ulab/layers.hpp"
#include "ulab/unitization.hpp"

namespace ulab {

enum class NormKind { None, BatchNorm, Unitization };

inline std::string to_string(NormKind k) {
  switch (k) {
    case NormKind::None: return "none";
    case NormKind::BatchNorm: return "bn";
    case NormKind::Unitization: return "unitization";
  }
  return "none";
}

inline NormKind norm_kind_from(const std::string& s) {
  if (s == "none") return NormKind::None;
  if (s == "bn") return NormKind::BatchNorm;
  if (s == "unitization") return NormKind::Unitization;
  throw format_error("unknown norm kind: " + s);
}

struct LayerSpec {
  std::size_t units = 0;
  NormKind norm = NormKind::BatchNorm;

  bool operator==(const LayerSpec&) const = default;
};

/// Fully-connected classifier: dense -> norm -> relu per hidden layer, then
/// a dense head. The norm output (post-affine, pre-relu) of any hidden layer
/// can be captured for the moment and EM-distance experiments.
class Mlp {
 public:
  struct Hidden {
    DenseLayer dense;
    NormKind norm = NormKind::None;
    std::optional<BatchNorm> bn;
    std::optional<UnitizationLayer> unit;
  };

  Mlp() = default;

  static Mlp build(std::size_t input_dim, const std::vector<LayerSpec>& specs,
                   std::size_t classes, Rng& rng, double eps = 1e-5,
                   double bn_momentum = 0.1) {
    Mlp net;
    net.input_dim_ = input_dim;
    net.classes_ = classes;
    std::size_t in = input_dim;
    for (std::size_t i = 0; i < specs.size(); ++i) {
      const auto& spec = specs[i];
      Hidden h;
      const std::string prefix = "hidden" + std::to_string(i);
      h.dense = DenseLayer::init(in, spec.units, rng, prefix);
      h.norm = spec.norm;
      if (spec.norm == NormKind::BatchNorm)
        h.bn = BatchNorm::init(spec.units, prefix + ".norm", eps, bn_momentum);
      else if (spec.norm == NormKind::Unitization)
        h.unit = UnitizationLayer::init(spec.units, prefix + ".norm", eps, bn_momentum);
      net.hidden_.push_back(std::move(h));
      in = spec.units;
    }
    net.head_ = DenseLayer::init(in, classes, rng, "head");
    return net;
  }

  std::size_t input_dim() const { return input_dim_; }
  std::size_t classes() const { return classes_; }
  std::size_t depth() const { return hidden_.size(); }
  const std::vector<Hidden>& hidden() const { return hidden_; }

  /// Training forward; `capture` (when >= 0) stores the norm output of that
  /// hidden layer.
  Tensor forward(Binder& bind, const Tensor& x, int capture = -1,
                 Tensor* captured = nullptr) {
    Tensor h = x;
    for (std::size_t i = 0; i < hidden_.size(); ++i) {
      h = hidden_layer_out(bind, hidden_[i], h, true);
      if (capture == static_cast<int>(i) && captured) *captured = h;
      h = relu(h);
    }
    return head_.forward(bind, h);
  }

  /// Inference forward (frozen statistics, no tape).
  Tensor eval(const Tensor& x, int capture = -1, Tensor* captured = nullptr) const {
    Tensor h = x;
    for (std::size_t i = 0; i < hidden_.size(); ++i) {
      h = hidden_layer_eval(hidden_[i], h);
      if (capture == static_cast<int>(i) && captured) *captured = h;
      h = relu(h);
    }
    return head_.eval(h);
  }

  /// Inference output of the prefix through hidden layer `l` (after relu).
  Tensor prefix_eval(const Tensor& x, std::size_t l) const {
    if (l >= hidden_.size()) throw contract_error("prefix_eval: layer out of range");
    Tensor h = x;
    for (std::size_t i = 0; i <= l; ++i) h = relu(hidden_layer_eval(hidden_[i], h));
    return h;
  }

  std::vector<Param*> params() {
    std::vector<Param*> out;
    for (auto& h : hidden_) {
      out.push_back(&h.dense.weight);
      out.push_back(&h.dense.bias);
      if (h.bn) {
        out.push_back(&h.bn->gamma);
        out.push_back(&h.bn->beta);
      }
      if (h.unit) {
        out.push_back(&h.unit->params.alpha);
        out.push_back(&h.unit->params.gamma);
        out.push_back(&h.unit->params.beta);
      }
    }
    out.push_back(&head_.weight);
    out.push_back(&head_.bias);
    return out;
  }

  void clamp_alphas() {
    for (auto& h : hidden_)
      if (h.unit) clamp_alpha(h.unit->params);
  }

  /// Alpha values per unitization layer (empty for other norms).
  std::vector<std::pair<std::size_t, std::vector<double>>> alphas() const {
    std::vector<std::pair<std::size_t, std::vector<double>>> out;
    for (std::size_t i = 0; i < hidden_.size(); ++i)
      if (hidden_[i].unit)
        out.emplace_back(i, hidden_[i].unit->params.alpha.value);
    return out;
  }

  std::vector<NamedTensor> state() const {
    std::vector<NamedTensor> out;
    auto push = [&out](const Param& p) { out.push_back({p.name, p.shape, p.value}); };
    auto push_stats = [&out](const std::string& prefix, const NormStats& s) {
      out.push_back({prefix + ".running_mean", {s.running_mean.size()}, s.running_mean});
      out.push_back({prefix + ".running_var", {s.running_var.size()}, s.running_var});
    };
    for (std::size_t i = 0; i < hidden_.size(); ++i) {
      const auto& h = hidden_[i];
      const std::string prefix = "hidden" + std::to_string(i) + ".norm";
      push(h.dense.weight);
      push(h.dense.bias);
      if (h.bn) {
        push(h.bn->gamma);
        push(h.bn->beta);
        push_stats(prefix, h.bn->stats);
      }
      if (h.unit) {
        push(h.unit->params.alpha);
        push(h.unit->params.gamma);
        push(h.unit->params.beta);
        push_stats(prefix, h.unit->stats);
      }
    }
    push(head_.weight);
    push(head_.bias);
    return out;
  }

  void load_state(const std::vector<NamedTensor>& tensors) {
    std::map<std::string, const NamedTensor*> by_name;
    for (const auto& t : tensors) by_name[t.name] = &t;
    auto fetch = [&by_name](const std::string& name, const Shape& shape) {
      auto it = by_name.find(name);
      if (it == by_name.end())
        throw format_error("checkpoint is missing tensor " + name);
      if (it->second->shape != shape)
        throw format_error("checkpoint tensor " + name + " has shape " +
                           shape_str(it->second->shape) + ", expected " +
                           shape_str(shape));
      return it->second->data;
    };
    auto load_param = [&fetch](Param& p) { p.value = fetch(p.name, p.shape); };
    auto load_stats = [&fetch](const std::string& prefix, NormStats& s) {
      s.running_mean = fetch(prefix + ".running_mean", {s.running_mean.size()});
      s.running_var = fetch(prefix + ".running_var", {s.running_var.size()});
    };
    for (std::size_t i = 0; i < hidden_.size(); ++i) {
      auto& h = hidden_[i];
      const std::string prefix = "hidden" + std::to_string(i) + ".norm";
      load_param(h.dense.weight);
      load_param(h.dense.bias);
      if (h.bn) {
        load_param(h.bn->gamma);
        load_param(h.bn->beta);
        load_stats(prefix, h.bn->stats);
      }
      if (h.unit) {
        load_param(h.unit->params.alpha);
        load_param(h.unit->params.gamma);
        load_param(h.unit->params.beta);
        load_stats(prefix, h.unit->stats);
      }
    }
    load_param(head_.weight);
    load_param(head_.bias);
  }

  void save(const std::string& path) const { save_checkpoint(path, state()); }
  void load(const std::string& path) { load_state(load_checkpoint(path)); }

 private:
  Tensor hidden_layer_out(Binder& bind, Hidden& h, const Tensor& x, bool train) {
    Tensor pre = h.dense.forward(bind, x);
    switch (h.norm) {
      case NormKind::None: return pre;
      case NormKind::BatchNorm: return h.bn->forward(bind, pre, train).second;
      case NormKind::Unitization: return h.unit->forward(bind, pre, train);
    }
    return pre;
  }

  Tensor hidden_layer_eval(const Hidden& h, const Tensor& x) const {
    Tensor pre = h.dense.eval(x);
    switch (h.norm) {
      case NormKind::None: return pre;
      case NormKind::BatchNorm: return h.bn->eval(pre).second;
      case NormKind::Unitization: return h.unit->eval(pre);
    }
    return pre;
  }

  std::size_t input_dim_ = 0;
  std::size_t classes_ = 0;
  std::vector<Hidden> hidden_;
  DenseLayer head_;
};

}  // namespace ulab
