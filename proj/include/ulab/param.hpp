#pragma once

#include <string>
#include <utility>
#include <vector>

#include "ulab/tensor.hpp"

namespace ulab {

/// A trainable parameter: named storage plus optimizer velocity.
/// Parameter values live outside any tape; each forward pass binds them as
/// fresh tape variables.
struct Param {
  std::string name;
  Shape shape;
  std::vector<double> value;
  std::vector<double> velocity;

  static Param make(std::string name, Shape shape, std::vector<double> value) {
    Param p;
    p.name = std::move(name);
    p.shape = std::move(shape);
    if (numel(p.shape) != value.size())
      throw shape_error("param " + p.name + ": value length mismatch");
    p.value = std::move(value);
    p.velocity.assign(p.value.size(), 0.0);
    return p;
  }

  static Param full(std::string name, Shape shape, double v) {
    std::vector<double> data(numel(shape), v);
    return make(std::move(name), std::move(shape), std::move(data));
  }

  std::size_t size() const { return value.size(); }
};

/// Binds parameters onto one tape for a single forward/backward pass and
/// remembers the association so gradients can be routed back.
class Binder {
 public:
  explicit Binder(Tape* tape) : tape_(tape) {}

  Tensor operator()(Param& p) {
    if (!tape_) return Tensor::constant(p.shape, p.value);
    Tensor t = tape_->variable(p.shape, p.value);
    bound_.emplace_back(&p, t);
    return t;
  }

  Tape* tape() const { return tape_; }
  const std::vector<std::pair<Param*, Tensor>>& bound() const { return bound_; }

  /// Applies `step(param, grad)` to every bound parameter.
  template <typename StepFn>
  void for_each_grad(StepFn&& step) {
    for (auto& [param, tensor] : bound_) step(*param, tape_->grad(tensor));
  }

 private:
  Tape* tape_;
  std::vector<std::pair<Param*, Tensor>> bound_;
};

}  // namespace ulab
