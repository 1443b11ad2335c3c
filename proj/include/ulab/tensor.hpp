#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ulab/errors.hpp"

namespace ulab {

using Shape = std::vector<std::size_t>;

inline std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t e : shape) n *= e;
  return n;
}

inline std::string shape_str(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

class Tape;

/// Dense tensor of doubles in row-major order.
///
/// A Tensor is a cheap handle: the payload is shared and immutable once
/// created. Tensors made through Tape::variable (or derived from one by an
/// operation) carry a node id on that tape; everything else is a constant
/// and may be shared freely across threads.
class Tensor {
 public:
  Tensor() = default;

  static Tensor constant(Shape shape, std::vector<double> data) {
    check_shape(shape, data.size());
    Tensor t;
    t.shape_ = std::move(shape);
    t.data_ = std::make_shared<const std::vector<double>>(std::move(data));
    return t;
  }

  static Tensor scalar(double value) { return constant({}, {value}); }

  static Tensor zeros(Shape shape) {
    std::vector<double> d(numel(shape), 0.0);
    return constant(std::move(shape), std::move(d));
  }

  static Tensor ones(Shape shape) { return full(std::move(shape), 1.0); }

  static Tensor full(Shape shape, double value) {
    std::vector<double> d(numel(shape), value);
    return constant(std::move(shape), std::move(d));
  }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_ ? data_->size() : 0; }
  std::size_t extent(std::size_t axis) const { return shape_.at(axis); }

  std::span<const double> data() const {
    return data_ ? std::span<const double>(*data_) : std::span<const double>();
  }

  double operator[](std::size_t i) const { return (*data_)[i]; }

  /// The single element of a size-1 tensor.
  double value() const {
    if (size() != 1) throw contract_error("value(): tensor is not a scalar");
    return (*data_)[0];
  }

  bool requires_grad() const { return requires_grad_; }
  bool on_tape() const { return tape_ != nullptr; }
  Tape* tape() const { return tape_; }
  int node() const { return node_; }

  std::vector<double> to_vector() const {
    return data_ ? *data_ : std::vector<double>{};
  }

 private:
  friend class Tape;

  static void check_shape(const Shape& shape, std::size_t data_size) {
    for (std::size_t e : shape) {
      if (e == 0) throw degenerate_input_error("tensor extent must be positive");
    }
    if (numel(shape) != data_size) {
      throw shape_error("tensor data length " + std::to_string(data_size) +
                        " does not match shape " + shape_str(shape));
    }
  }

  std::shared_ptr<const std::vector<double>> data_;
  Shape shape_;
  Tape* tape_ = nullptr;
  int node_ = -1;
  bool requires_grad_ = false;
};

/// Reverse-mode tape. Rebuilt per forward pass (define-by-run).
///
/// Nodes are recorded in topological order: every operation's parents have
/// smaller ids, so the backward sweep is a single reverse walk that visits
/// each reachable node exactly once. A tape and its tensors belong to one
/// thread; distinct tapes may run in parallel.
class Tape {
 public:
  using BackwardFn = std::function<void(std::span<const double> upstream, Tape&)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Register a differentiable leaf.
  Tensor variable(Shape shape, std::vector<double> value) {
    Tensor t = Tensor::constant(std::move(shape), std::move(value));
    t.tape_ = this;
    t.node_ = record({}, nullptr);
    t.requires_grad_ = true;
    return t;
  }

  /// Record an operation result. `parents` are the on-tape inputs; the
  /// backward closure receives the upstream gradient of the result.
  Tensor emit(Shape shape, std::vector<double> data, std::vector<int> parents,
              BackwardFn backward) {
    Tensor t = Tensor::constant(std::move(shape), std::move(data));
    t.tape_ = this;
    t.node_ = record(std::move(parents), std::move(backward));
    return t;
  }

  /// Run the reverse sweep from a scalar root. Clears previous gradients.
  void backward(const Tensor& root) {
    if (root.tape() != this || root.node() < 0)
      throw contract_error("backward: root is not on this tape");
    if (root.size() != 1)
      throw contract_error("backward: root must be a scalar");
    grads_.assign(nodes_.size(), {});
    grads_[static_cast<std::size_t>(root.node())] = {1.0};
    for (int id = root.node(); id >= 0; --id) {
      auto& g = grads_[static_cast<std::size_t>(id)];
      if (g.empty()) continue;
      const auto& node = nodes_[static_cast<std::size_t>(id)];
      if (node.backward) node.backward(g, *this);
    }
  }

  /// Gradient of the last backward() root with respect to `t`.
  std::span<const double> grad(const Tensor& t) {
    if (t.tape() != this || t.node() < 0)
      throw contract_error("grad: tensor is not on this tape");
    auto& g = grads_.at(static_cast<std::size_t>(t.node()));
    if (g.empty()) g.assign(t.size(), 0.0);
    return g;
  }

  /// Accumulate a contribution into a node's gradient slot.
  void accumulate(int node, std::span<const double> contribution) {
    if (node < 0) return;
    auto& g = grads_[static_cast<std::size_t>(node)];
    if (g.empty()) g.assign(contribution.size(), 0.0);
    for (std::size_t i = 0; i < contribution.size(); ++i) g[i] += contribution[i];
  }

  void accumulate_at(int node, std::size_t length, std::size_t index, double v) {
    if (node < 0) return;
    auto& g = grads_[static_cast<std::size_t>(node)];
    if (g.empty()) g.assign(length, 0.0);
    g[index] += v;
  }

  std::size_t node_count() const { return nodes_.size(); }

 private:
  struct Node {
    std::vector<int> parents;
    BackwardFn backward;
  };

  int record(std::vector<int> parents, BackwardFn backward) {
    for (int p : parents) {
      if (p < 0 || static_cast<std::size_t>(p) >= nodes_.size())
        throw contract_error("tape: parent does not precede child");
    }
    nodes_.push_back({std::move(parents), std::move(backward)});
    return static_cast<int>(nodes_.size()) - 1;
  }

  std::vector<Node> nodes_;
  std::vector<std::vector<double>> grads_;
};

namespace detail {

inline Tape* common_tape(const Tensor& a, const Tensor& b) {
  if (a.on_tape() && b.on_tape() && a.tape() != b.tape())
    throw contract_error("operands live on different tapes");
  return a.on_tape() ? a.tape() : b.tape();
}

inline Tensor make(Tape* tape, Shape shape, std::vector<double> data,
                   std::vector<int> parents, Tape::BackwardFn backward) {
  if (!tape) return Tensor::constant(std::move(shape), std::move(data));
  return tape->emit(std::move(shape), std::move(data), std::move(parents),
                    std::move(backward));
}

inline void require_finite(std::span<const double> v, const char* what) {
  for (double x : v) {
    if (!std::isfinite(x)) throw numeric_error(std::string(what) + ": non-finite value");
  }
}

// Binary elementwise with scalar broadcast. fx/fy give the local partials
// as functions of (a_i, b_i).
template <typename Op, typename Dx, typename Dy>
Tensor binary_ew(const Tensor& a, const Tensor& b, Op op, Dx dx, Dy dy,
                 const char* name) {
  bool a_scalar = false, b_scalar = false;
  const Tensor* bigp = &a;
  if (a.shape() != b.shape()) {
    if (b.size() == 1 && a.size() > 1) {
      b_scalar = true;
    } else if (a.size() == 1 && b.size() > 1) {
      a_scalar = true;
      bigp = &b;
    } else if (a.size() == 1 && b.size() == 1) {
      // both single-element: elementwise on the higher-rank shape
      if (b.rank() > a.rank()) bigp = &b;
    } else {
      throw shape_error(std::string(name) + ": shapes " + shape_str(a.shape()) +
                        " vs " + shape_str(b.shape()));
    }
  }
  const Tensor& big = *bigp;
  const std::size_t n = big.size();
  std::vector<double> out(n);
  auto av = a.data();
  auto bv = b.data();
  for (std::size_t i = 0; i < n; ++i)
    out[i] = op(av[a_scalar ? 0 : i], bv[b_scalar ? 0 : i]);

  Tape* tape = common_tape(a, b);
  std::vector<int> parents;
  if (a.node() >= 0) parents.push_back(a.node());
  if (b.node() >= 0) parents.push_back(b.node());
  return make(
      tape, big.shape(), std::move(out), std::move(parents),
      [a, b, a_scalar, b_scalar, dx, dy, n](std::span<const double> up, Tape& t) {
        auto av = a.data();
        auto bv = b.data();
        if (a.node() >= 0) {
          if (a_scalar) {
            double s = 0.0;
            for (std::size_t i = 0; i < n; ++i) s += up[i] * dx(av[0], bv[b_scalar ? 0 : i]);
            t.accumulate_at(a.node(), 1, 0, s);
          } else {
            std::vector<double> g(n);
            for (std::size_t i = 0; i < n; ++i) g[i] = up[i] * dx(av[i], bv[b_scalar ? 0 : i]);
            t.accumulate(a.node(), g);
          }
        }
        if (b.node() >= 0) {
          if (b_scalar) {
            double s = 0.0;
            for (std::size_t i = 0; i < n; ++i) s += up[i] * dy(av[a_scalar ? 0 : i], bv[0]);
            t.accumulate_at(b.node(), 1, 0, s);
          } else {
            std::vector<double> g(n);
            for (std::size_t i = 0; i < n; ++i) g[i] = up[i] * dy(av[a_scalar ? 0 : i], bv[i]);
            t.accumulate(b.node(), g);
          }
        }
      });
}

template <typename Op, typename Dx>
Tensor unary_ew(const Tensor& x, Op op, Dx dx) {
  const std::size_t n = x.size();
  std::vector<double> out(n);
  auto xv = x.data();
  for (std::size_t i = 0; i < n; ++i) out[i] = op(xv[i]);
  Tape* tape = x.tape();
  std::vector<int> parents;
  if (x.node() >= 0) parents.push_back(x.node());
  return make(tape, x.shape(), std::move(out), std::move(parents),
              [x, dx, n](std::span<const double> up, Tape& t) {
                if (x.node() < 0) return;
                auto xv = x.data();
                std::vector<double> g(n);
                for (std::size_t i = 0; i < n; ++i) g[i] = up[i] * dx(xv[i]);
                t.accumulate(x.node(), g);
              });
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise operations
// ---------------------------------------------------------------------------

inline Tensor add(const Tensor& a, const Tensor& b) {
  return detail::binary_ew(
      a, b, [](double x, double y) { return x + y; },
      [](double, double) { return 1.0; }, [](double, double) { return 1.0; },
      "add");
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  return detail::binary_ew(
      a, b, [](double x, double y) { return x - y; },
      [](double, double) { return 1.0; }, [](double, double) { return -1.0; },
      "sub");
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
  return detail::binary_ew(
      a, b, [](double x, double y) { return x * y; },
      [](double, double y) { return y; }, [](double x, double) { return x; },
      "mul");
}

inline Tensor div(const Tensor& a, const Tensor& b) {
  for (double y : b.data())
    if (y == 0.0) throw numeric_error("div: division by exact zero");
  return detail::binary_ew(
      a, b, [](double x, double y) { return x / y; },
      [](double, double y) { return 1.0 / y; },
      [](double x, double y) { return -x / (y * y); }, "div");
}

inline Tensor sqrt(const Tensor& x) {
  for (double v : x.data())
    if (v < 0.0) throw numeric_error("sqrt: negative argument");
  return detail::unary_ew(
      x, [](double v) { return std::sqrt(v); },
      [](double v) { return 0.5 / std::sqrt(v); });
}

inline Tensor square(const Tensor& x) {
  return detail::unary_ew(
      x, [](double v) { return v * v; }, [](double v) { return 2.0 * v; });
}

// relu'(0) := 0.
inline Tensor relu(const Tensor& x) {
  return detail::unary_ew(
      x, [](double v) { return v > 0.0 ? v : 0.0; },
      [](double v) { return v > 0.0 ? 1.0 : 0.0; });
}

inline Tensor sigmoid(const Tensor& x) {
  auto s = [](double v) {
    return v >= 0.0 ? 1.0 / (1.0 + std::exp(-v))
                    : std::exp(v) / (1.0 + std::exp(v));
  };
  return detail::unary_ew(x, s, [s](double v) {
    const double y = s(v);
    return y * (1.0 - y);
  });
}

inline Tensor neg(const Tensor& x) {
  return detail::unary_ew(
      x, [](double v) { return -v; }, [](double) { return -1.0; });
}

// ---------------------------------------------------------------------------
// Matrix operations
// ---------------------------------------------------------------------------

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2)
    throw shape_error("matmul: operands must be rank-2");
  const std::size_t m = a.extent(0), k = a.extent(1);
  const std::size_t k2 = b.extent(0), n = b.extent(1);
  if (k != k2)
    throw shape_error("matmul: inner dimensions " + std::to_string(k) + " vs " +
                      std::to_string(k2));
  std::vector<double> out(m * n, 0.0);
  {
    auto av = a.data();
    auto bv = b.data();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t p = 0; p < k; ++p) {
        const double aip = av[i * k + p];
        if (aip == 0.0) continue;
        const double* brow = bv.data() + p * n;
        double* orow = out.data() + i * n;
        for (std::size_t j = 0; j < n; ++j) orow[j] += aip * brow[j];
      }
  }
  Tape* tape = detail::common_tape(a, b);
  std::vector<int> parents;
  if (a.node() >= 0) parents.push_back(a.node());
  if (b.node() >= 0) parents.push_back(b.node());
  return detail::make(
      tape, {m, n}, std::move(out), std::move(parents),
      [a, b, m, k, n](std::span<const double> up, Tape& t) {
        auto av = a.data();
        auto bv = b.data();
        if (a.node() >= 0) {  // dA = G * B^T
          std::vector<double> ga(m * k, 0.0);
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) {
              const double g = up[i * n + j];
              if (g == 0.0) continue;
              const double* brow = bv.data() + 0;
              for (std::size_t p = 0; p < k; ++p) ga[i * k + p] += g * brow[p * n + j];
            }
          t.accumulate(a.node(), ga);
        }
        if (b.node() >= 0) {  // dB = A^T * G
          std::vector<double> gb(k * n, 0.0);
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t p = 0; p < k; ++p) {
              const double apv = av[i * k + p];
              if (apv == 0.0) continue;
              const double* grow = up.data() + i * n;
              double* gbrow = gb.data() + p * n;
              for (std::size_t j = 0; j < n; ++j) gbrow[j] += apv * grow[j];
            }
          t.accumulate(b.node(), gb);
        }
      });
}

inline Tensor transpose(const Tensor& x) {
  if (x.rank() != 2) throw shape_error("transpose: operand must be rank-2");
  const std::size_t m = x.extent(0), n = x.extent(1);
  std::vector<double> out(m * n);
  auto xv = x.data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = xv[i * n + j];
  std::vector<int> parents;
  if (x.node() >= 0) parents.push_back(x.node());
  return detail::make(x.tape(), {n, m}, std::move(out), std::move(parents),
                      [x, m, n](std::span<const double> up, Tape& t) {
                        if (x.node() < 0) return;
                        std::vector<double> g(m * n);
                        for (std::size_t i = 0; i < m; ++i)
                          for (std::size_t j = 0; j < n; ++j)
                            g[i * n + j] = up[j * m + i];
                        t.accumulate(x.node(), g);
                      });
}

inline Tensor reshape(const Tensor& x, Shape shape) {
  if (numel(shape) != x.size())
    throw shape_error("reshape: element count mismatch");
  std::vector<int> parents;
  if (x.node() >= 0) parents.push_back(x.node());
  return detail::make(x.tape(), std::move(shape), x.to_vector(),
                      std::move(parents),
                      [x](std::span<const double> up, Tape& t) {
                        t.accumulate(x.node(), up);
                      });
}

// ---------------------------------------------------------------------------
// Reductions
// ---------------------------------------------------------------------------

namespace detail {

struct ReducePlan {
  Shape out_shape;
  std::vector<std::size_t> out_index;  // flat input index -> flat output index
  std::size_t group = 1;               // elements reduced per output slot
};

inline ReducePlan reduce_plan(const Shape& shape, std::vector<std::size_t> axes) {
  std::sort(axes.begin(), axes.end());
  axes.erase(std::unique(axes.begin(), axes.end()), axes.end());
  for (std::size_t a : axes) {
    if (a >= shape.size()) throw shape_error("reduce: axis out of range");
    if (shape[a] == 0) throw degenerate_input_error("reduce: empty axis extent");
  }
  std::vector<bool> reduced(shape.size(), false);
  for (std::size_t a : axes) reduced[a] = true;

  ReducePlan plan;
  for (std::size_t d = 0; d < shape.size(); ++d) {
    if (reduced[d])
      plan.group *= shape[d];
    else
      plan.out_shape.push_back(shape[d]);
  }
  const std::size_t total = numel(shape);
  plan.out_index.resize(total);
  std::vector<std::size_t> coord(shape.size(), 0);
  for (std::size_t flat = 0; flat < total; ++flat) {
    std::size_t out = 0;
    for (std::size_t d = 0; d < shape.size(); ++d)
      if (!reduced[d]) out = out * shape[d] + coord[d];
    plan.out_index[flat] = out;
    for (std::size_t d = shape.size(); d-- > 0;) {
      if (++coord[d] < shape[d]) break;
      coord[d] = 0;
    }
  }
  return plan;
}

inline Tensor reduce_impl(const Tensor& x, std::vector<std::size_t> axes, bool mean) {
  if (axes.empty()) return x;  // reduction over no axes is the identity
  auto plan = reduce_plan(x.shape(), std::move(axes));
  const double scale = mean ? 1.0 / static_cast<double>(plan.group) : 1.0;
  std::vector<double> out(numel(plan.out_shape), 0.0);
  auto xv = x.data();
  for (std::size_t i = 0; i < xv.size(); ++i) out[plan.out_index[i]] += xv[i];
  if (mean)
    for (double& v : out) v *= scale;
  std::vector<int> parents;
  if (x.node() >= 0) parents.push_back(x.node());
  const std::size_t in_size = x.size();
  Shape out_shape = plan.out_shape;  // keep: the capture below moves the plan
  return make(x.tape(), std::move(out_shape), std::move(out), std::move(parents),
              [x, plan = std::move(plan), scale,
               in_size](std::span<const double> up, Tape& t) {
                if (x.node() < 0) return;
                std::vector<double> g(in_size);
                for (std::size_t i = 0; i < in_size; ++i)
                  g[i] = up[plan.out_index[i]] * scale;
                t.accumulate(x.node(), g);
              });
}

}  // namespace detail

inline Tensor reduce_sum(const Tensor& x, std::vector<std::size_t> axes) {
  return detail::reduce_impl(x, std::move(axes), false);
}

inline Tensor reduce_mean(const Tensor& x, std::vector<std::size_t> axes) {
  return detail::reduce_impl(x, std::move(axes), true);
}

inline Tensor sum_all(const Tensor& x) {
  std::vector<std::size_t> axes(x.rank());
  std::iota(axes.begin(), axes.end(), 0);
  if (axes.empty()) return x;
  return reduce_sum(x, axes);
}

inline Tensor mean_all(const Tensor& x) {
  std::vector<std::size_t> axes(x.rank());
  std::iota(axes.begin(), axes.end(), 0);
  if (axes.empty()) return x;
  return reduce_mean(x, axes);
}

// ---------------------------------------------------------------------------
// Broadcast along one axis (vector vs. n-d tensor)
// ---------------------------------------------------------------------------

namespace detail {

// Applies out_i = op(x_i, v[c(i)]) where c(i) is i's coordinate along `axis`.
template <typename Op, typename Dx, typename Dv>
Tensor bcast_ew(const Tensor& x, const Tensor& v, std::size_t axis, Op op, Dx dx,
                Dv dv, const char* name) {
  if (axis >= x.rank()) throw shape_error(std::string(name) + ": axis out of range");
  if (v.rank() != 1 || v.extent(0) != x.extent(axis))
    throw shape_error(std::string(name) + ": vector length " +
                      std::to_string(v.size()) + " vs axis extent " +
                      std::to_string(x.extent(axis)));
  std::size_t inner = 1;
  for (std::size_t d = axis + 1; d < x.rank(); ++d) inner *= x.extent(d);
  const std::size_t extent = x.extent(axis);
  const std::size_t n = x.size();

  std::vector<double> out(n);
  auto xv = x.data();
  auto vv = v.data();
  for (std::size_t i = 0; i < n; ++i)
    out[i] = op(xv[i], vv[(i / inner) % extent]);

  Tape* tape = common_tape(x, v);
  std::vector<int> parents;
  if (x.node() >= 0) parents.push_back(x.node());
  if (v.node() >= 0) parents.push_back(v.node());
  return make(tape, x.shape(), std::move(out), std::move(parents),
              [x, v, inner, extent, n, dx, dv](std::span<const double> up, Tape& t) {
                auto xv = x.data();
                auto vv = v.data();
                if (x.node() >= 0) {
                  std::vector<double> g(n);
                  for (std::size_t i = 0; i < n; ++i)
                    g[i] = up[i] * dx(xv[i], vv[(i / inner) % extent]);
                  t.accumulate(x.node(), g);
                }
                if (v.node() >= 0) {
                  std::vector<double> g(extent, 0.0);
                  for (std::size_t i = 0; i < n; ++i)
                    g[(i / inner) % extent] += up[i] * dv(xv[i], vv[(i / inner) % extent]);
                  t.accumulate(v.node(), g);
                }
              });
}

}  // namespace detail

inline Tensor bcast_add(const Tensor& x, const Tensor& v, std::size_t axis) {
  return detail::bcast_ew(
      x, v, axis, [](double a, double b) { return a + b; },
      [](double, double) { return 1.0; }, [](double, double) { return 1.0; },
      "bcast_add");
}

inline Tensor bcast_sub(const Tensor& x, const Tensor& v, std::size_t axis) {
  return detail::bcast_ew(
      x, v, axis, [](double a, double b) { return a - b; },
      [](double, double) { return 1.0; }, [](double, double) { return -1.0; },
      "bcast_sub");
}

inline Tensor bcast_mul(const Tensor& x, const Tensor& v, std::size_t axis) {
  return detail::bcast_ew(
      x, v, axis, [](double a, double b) { return a * b; },
      [](double, double b) { return b; }, [](double a, double) { return a; },
      "bcast_mul");
}

// ---------------------------------------------------------------------------
// Norms
// ---------------------------------------------------------------------------

/// Euclidean norm of each slice along `axis` of a rank-2 tensor.
/// axis = 1 gives per-row (per-sample) norms. Subgradient 0 at the origin;
/// callers that need a smooth graph add eps under the sqrt themselves.
inline Tensor l2_norm(const Tensor& x, std::size_t axis) {
  if (x.rank() != 2) throw shape_error("l2_norm: operand must be rank-2");
  if (axis > 1) throw shape_error("l2_norm: axis out of range");
  const std::size_t rows = x.extent(0), cols = x.extent(1);
  const std::size_t out_n = axis == 1 ? rows : cols;
  std::vector<double> out(out_n, 0.0);
  auto xv = x.data();
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) {
      const double v = xv[i * cols + j];
      out[axis == 1 ? i : j] += v * v;
    }
  for (double& v : out) v = std::sqrt(v);
  std::vector<int> parents;
  if (x.node() >= 0) parents.push_back(x.node());
  return detail::make(
      x.tape(), {out_n}, std::move(out), std::move(parents),
      [x, rows, cols, axis](std::span<const double> up, Tape& t) {
        if (x.node() < 0) return;
        auto xv = x.data();
        // recompute norms; saves keeping a second buffer alive
        std::vector<double> norms(axis == 1 ? rows : cols, 0.0);
        for (std::size_t i = 0; i < rows; ++i)
          for (std::size_t j = 0; j < cols; ++j) {
            const double v = xv[i * cols + j];
            norms[axis == 1 ? i : j] += v * v;
          }
        for (double& v : norms) v = std::sqrt(v);
        std::vector<double> g(rows * cols, 0.0);
        for (std::size_t i = 0; i < rows; ++i)
          for (std::size_t j = 0; j < cols; ++j) {
            const std::size_t k = axis == 1 ? i : j;
            if (norms[k] > 0.0)
              g[i * cols + j] = up[k] * xv[i * cols + j] / norms[k];
          }
        t.accumulate(x.node(), g);
      });
}

// ---------------------------------------------------------------------------
// Patch extraction (im2col) for convolution
// ---------------------------------------------------------------------------

/// Gathers kH x kW patches of an NCHW tensor into a
/// [N*H'*W', C*kH*kW] matrix (zero padding). Backward is scatter-add.
inline Tensor gather_patches(const Tensor& x, std::size_t kh, std::size_t kw,
                             std::size_t stride, std::size_t pad) {
  if (x.rank() != 4) throw shape_error("gather_patches: operand must be rank-4");
  if (stride == 0) throw contract_error("gather_patches: stride must be positive");
  const std::size_t n = x.extent(0), c = x.extent(1), h = x.extent(2),
                    w = x.extent(3);
  if (h + 2 * pad < kh || w + 2 * pad < kw)
    throw shape_error("gather_patches: kernel larger than padded input");
  const std::size_t oh = (h + 2 * pad - kh) / stride + 1;
  const std::size_t ow = (w + 2 * pad - kw) / stride + 1;
  const std::size_t patch = c * kh * kw;
  const std::size_t out_rows = n * oh * ow;

  // -1 marks a padded location.
  auto index = std::make_shared<std::vector<std::ptrdiff_t>>(out_rows * patch);
  std::vector<double> out(out_rows * patch, 0.0);
  auto xv = x.data();
  std::size_t row = 0;
  for (std::size_t img = 0; img < n; ++img)
    for (std::size_t oy = 0; oy < oh; ++oy)
      for (std::size_t ox = 0; ox < ow; ++ox, ++row) {
        std::size_t col = 0;
        for (std::size_t ch = 0; ch < c; ++ch)
          for (std::size_t ky = 0; ky < kh; ++ky)
            for (std::size_t kx = 0; kx < kw; ++kx, ++col) {
              const std::ptrdiff_t iy =
                  static_cast<std::ptrdiff_t>(oy * stride + ky) -
                  static_cast<std::ptrdiff_t>(pad);
              const std::ptrdiff_t ix =
                  static_cast<std::ptrdiff_t>(ox * stride + kx) -
                  static_cast<std::ptrdiff_t>(pad);
              std::ptrdiff_t src = -1;
              if (iy >= 0 && iy < static_cast<std::ptrdiff_t>(h) && ix >= 0 &&
                  ix < static_cast<std::ptrdiff_t>(w)) {
                src = static_cast<std::ptrdiff_t>(
                    ((img * c + ch) * h + static_cast<std::size_t>(iy)) * w +
                    static_cast<std::size_t>(ix));
                out[row * patch + col] = xv[static_cast<std::size_t>(src)];
              }
              (*index)[row * patch + col] = src;
            }
      }

  std::vector<int> parents;
  if (x.node() >= 0) parents.push_back(x.node());
  const std::size_t in_size = x.size();
  return detail::make(x.tape(), {out_rows, patch}, std::move(out),
                      std::move(parents),
                      [x, index, in_size](std::span<const double> up, Tape& t) {
                        if (x.node() < 0) return;
                        std::vector<double> g(in_size, 0.0);
                        for (std::size_t i = 0; i < index->size(); ++i) {
                          const std::ptrdiff_t src = (*index)[i];
                          if (src >= 0) g[static_cast<std::size_t>(src)] += up[i];
                        }
                        t.accumulate(x.node(), g);
                      });
}

// ---------------------------------------------------------------------------
// Fused softmax cross-entropy
// ---------------------------------------------------------------------------

/// Mean cross-entropy of row-wise softmax(logits) against integer labels.
/// Gradient is (softmax - onehot) / n, computed with the usual max shift.
inline Tensor cross_entropy_mean(const Tensor& logits,
                                 const std::vector<int>& labels) {
  if (logits.rank() != 2) throw shape_error("cross_entropy_mean: logits must be rank-2");
  const std::size_t n = logits.extent(0), k = logits.extent(1);
  if (labels.size() != n)
    throw shape_error("cross_entropy_mean: label count mismatch");
  for (int y : labels)
    if (y < 0 || static_cast<std::size_t>(y) >= k)
      throw contract_error("cross_entropy_mean: label out of range");

  auto zv = logits.data();
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = zv.data() + i * k;
    double m = row[0];
    for (std::size_t j = 1; j < k; ++j) m = std::max(m, row[j]);
    double lse = 0.0;
    for (std::size_t j = 0; j < k; ++j) lse += std::exp(row[j] - m);
    lse = m + std::log(lse);
    total += lse - row[static_cast<std::size_t>(labels[i])];
  }
  total /= static_cast<double>(n);

  std::vector<int> parents;
  if (logits.node() >= 0) parents.push_back(logits.node());
  return detail::make(
      logits.tape(), {}, {total}, std::move(parents),
      [logits, labels, n, k](std::span<const double> up, Tape& t) {
        if (logits.node() < 0) return;
        auto zv = logits.data();
        std::vector<double> g(n * k);
        const double scale = up[0] / static_cast<double>(n);
        for (std::size_t i = 0; i < n; ++i) {
          const double* row = zv.data() + i * k;
          double m = row[0];
          for (std::size_t j = 1; j < k; ++j) m = std::max(m, row[j]);
          double denom = 0.0;
          for (std::size_t j = 0; j < k; ++j) denom += std::exp(row[j] - m);
          for (std::size_t j = 0; j < k; ++j) {
            double p = std::exp(row[j] - m) / denom;
            if (static_cast<std::size_t>(labels[i]) == j) p -= 1.0;
            g[i * k + j] = p * scale;
          }
        }
        t.accumulate(logits.node(), g);
      });
}

// ---------------------------------------------------------------------------
// Gradient checking
// ---------------------------------------------------------------------------

/// Compares tape gradients of a scalar-valued tensor function against central
/// finite differences. Returns the worst relative error, with denominator
/// max(|analytic|, |numeric|, 1e-8).
template <typename F>
double grad_check(F&& f, const Tensor& x, double h = 1e-5) {
  std::vector<double> analytic;
  {
    Tape tape;
    Tensor var = tape.variable(x.shape(), x.to_vector());
    Tensor y = f(tape, var);
    if (y.size() != 1) throw contract_error("grad_check: f must return a scalar");
    tape.backward(y);
    auto g = tape.grad(var);
    analytic.assign(g.begin(), g.end());
  }
  auto eval = [&](const std::vector<double>& point) {
    Tape tape;
    Tensor var = tape.variable(x.shape(), point);
    Tensor y = f(tape, var);
    if (y.size() != 1) throw contract_error("grad_check: f must return a scalar");
    return y.value();
  };
  std::vector<double> point = x.to_vector();
  double worst = 0.0;
  for (std::size_t i = 0; i < point.size(); ++i) {
    const double orig = point[i];
    point[i] = orig + h;
    const double fp = eval(point);
    point[i] = orig - h;
    const double fm = eval(point);
    point[i] = orig;
    const double numeric = (fp - fm) / (2.0 * h);
    const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), 1e-8});
    worst = std::max(worst, std::abs(analytic[i] - numeric) / denom);
  }
  return worst;
}

}  // namespace ulab
