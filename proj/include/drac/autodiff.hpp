#pragma once

// Minimal reverse-mode automatic differentiation over dense row-major arrays.
//
// Arrays are rank 0 (scalar), rank 1 (a feature vector) or rank 2 (a batch of
// feature rows). Every array is stored as an Eigen row-major matrix; rank-1
// arrays occupy a single row. Operations record their operands so that
// gradients() can walk the history backwards. Gradients are accumulated in a
// map local to each gradients() call, so a parameter leaf may be shared by any
// number of graphs (and threads) without mutation.

#include <Eigen/Core>

#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

namespace drac::ad {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Shape = std::vector<std::size_t>;

/// Smallest input accepted by log() before flooring.
inline constexpr double kLogFloor = 1e-12;

inline std::string to_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << 'x';
    out << shape[i];
  }
  out << ']';
  return out.str();
}

class ShapeError : public std::invalid_argument {
 public:
  ShapeError(const std::string& primitive, const Shape& lhs, const Shape& rhs)
      : std::invalid_argument(primitive + ": incompatible shapes " + to_string(lhs) + " and " +
                              to_string(rhs)),
        primitive_(primitive),
        lhs_(lhs),
        rhs_(rhs) {}

  const std::string& primitive() const noexcept { return primitive_; }
  const Shape& lhs() const noexcept { return lhs_; }
  const Shape& rhs() const noexcept { return rhs_; }

 private:
  std::string primitive_;
  Shape lhs_;
  Shape rhs_;
};

class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

class GradientError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

struct Node;
using NodePtr = std::shared_ptr<Node>;

// Receives the gradient of the node output and the node itself (for its value
// and operand values), and returns one gradient per operand (an empty matrix
// means "no contribution").
using BackwardFn = std::function<std::vector<Matrix>(const Matrix& grad_out, const Node& self)>;

struct Node {
  Matrix value;
  Shape shape;
  std::vector<NodePtr> parents;
  BackwardFn backward;
  std::uint64_t id = 0;
  bool requires_grad = false;
};

inline std::uint64_t next_id() {
  static std::atomic<std::uint64_t> counter{1};
  return counter.fetch_add(1, std::memory_order_relaxed);
}

inline thread_local int no_grad_depth = 0;

inline std::size_t element_count(const Shape& shape) {
  std::size_t n = 1;
  for (auto e : shape) n *= e;
  return n;
}

inline std::pair<Eigen::Index, Eigen::Index> storage_dims(const Shape& shape) {
  switch (shape.size()) {
    case 0:
      return {1, 1};
    case 1:
      return {1, static_cast<Eigen::Index>(shape[0])};
    case 2:
      return {static_cast<Eigen::Index>(shape[0]), static_cast<Eigen::Index>(shape[1])};
    default:
      throw std::invalid_argument("array rank above 2 is not supported: " + to_string(shape));
  }
}

inline Shape shape_of(const Matrix& m, std::size_t rank) {
  switch (rank) {
    case 0:
      return {};
    case 1:
      return {static_cast<std::size_t>(m.cols())};
    default:
      return {static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())};
  }
}

}  // namespace detail

/// Disables history recording on the current thread while alive.
class NoGradGuard {
 public:
  NoGradGuard() { ++detail::no_grad_depth; }
  ~NoGradGuard() { --detail::no_grad_depth; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;
};

inline bool recording() { return detail::no_grad_depth == 0; }

class Array {
 public:
  Array() = default;

  /// A leaf holding data with no gradient.
  static Array constant(Matrix value, Shape shape) { return leaf(std::move(value), std::move(shape), false); }
  static Array constant(const Matrix& value) { return constant(value, detail::shape_of(value, 2)); }
  static Array constant(std::initializer_list<double> values) { return from_vector(values, false); }
  static Array scalar(double v) { return constant(Matrix::Constant(1, 1, v), Shape{}); }

  /// A differentiable leaf: parameters and anything else gradients are taken for.
  static Array variable(Matrix value, Shape shape) { return leaf(std::move(value), std::move(shape), true); }
  static Array variable(const Matrix& value) { return variable(value, detail::shape_of(value, 2)); }
  static Array variable(std::initializer_list<double> values) { return from_vector(values, true); }

  static Array vector(std::span<const double> values, bool differentiable = false) {
    Matrix m(1, static_cast<Eigen::Index>(values.size()));
    for (std::size_t i = 0; i < values.size(); ++i) m(0, static_cast<Eigen::Index>(i)) = values[i];
    return leaf(std::move(m), Shape{values.size()}, differentiable);
  }

  bool valid() const noexcept { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t size() const { return static_cast<std::size_t>(node_->value.size()); }
  Eigen::Index rows() const { return node_->value.rows(); }
  Eigen::Index cols() const { return node_->value.cols(); }
  const Matrix& value() const { return node_->value; }
  double item() const {
    if (size() != 1) throw ShapeError("item", shape(), Shape{});
    return node_->value(0, 0);
  }
  std::vector<double> to_vector() const {
    return std::vector<double>(node_->value.data(), node_->value.data() + node_->value.size());
  }
  bool requires_grad() const { return node_->requires_grad; }
  std::uint64_t id() const { return node_->id; }

  /// Builds a node for a primitive. Used by the operations below.
  template <typename F>
  static Array make(Matrix value, Shape shape, std::vector<Array> operands, F&& backward) {
    bool needs = false;
    for (const auto& op : operands) needs = needs || op.requires_grad();
    if (!needs || !recording()) return leaf(std::move(value), std::move(shape), false);
    auto node = std::make_shared<detail::Node>();
    node->value = std::move(value);
    node->shape = std::move(shape);
    node->id = detail::next_id();
    node->requires_grad = true;
    if constexpr (std::is_invocable_v<F&, const Matrix&, const detail::Node&>) {
      node->backward = std::forward<F>(backward);
    } else {
      node->backward = [fn = std::forward<F>(backward)](const Matrix& g, const detail::Node&) { return fn(g); };
    }
    node->parents.reserve(operands.size());
    for (auto& op : operands) node->parents.push_back(op.node_);
    Array out;
    out.node_ = std::move(node);
    return out;
  }

  const detail::NodePtr& node() const { return node_; }

 private:
  static Array leaf(Matrix value, Shape shape, bool differentiable) {
    auto [r, c] = detail::storage_dims(shape);
    if (value.rows() != r || value.cols() != c) {
      throw ShapeError("leaf", shape, Shape{static_cast<std::size_t>(value.rows()),
                                            static_cast<std::size_t>(value.cols())});
    }
    auto node = std::make_shared<detail::Node>();
    node->value = std::move(value);
    node->shape = std::move(shape);
    node->id = detail::next_id();
    node->requires_grad = differentiable;
    Array out;
    out.node_ = std::move(node);
    return out;
  }

  static Array from_vector(std::initializer_list<double> values, bool differentiable) {
    std::vector<double> v(values);
    return vector(v, differentiable);
  }

  detail::NodePtr node_;
};

// ---------------------------------------------------------------------------
// Primitives

namespace detail {

inline void require_same(const char* primitive, const Array& a, const Array& b) {
  if (a.shape() != b.shape()) throw ShapeError(primitive, a.shape(), b.shape());
}

template <typename... A>
bool tracked(const A&... operands) {
  return recording() && (operands.requires_grad() || ...);
}

enum class Keep { input, output };

// Elementwise primitive whose derivative needs either its input or its output.
template <Keep keep, typename Fwd, typename Bwd>
Array unary(const Array& x, Fwd&& forward, Bwd&& derivative) {
  Matrix y = forward(x.value());
  if (!tracked(x)) return Array::constant(std::move(y), x.shape());
  return Array::make(std::move(y), x.shape(), {x}, [derivative](const Matrix& g, const Node& self) {
    const Matrix& saved = keep == Keep::input ? self.parents[0]->value : self.value;
    return std::vector<Matrix>{derivative(saved, g)};
  });
}

}  // namespace detail

inline Array stop_gradient(const Array& x) { return Array::constant(x.value(), x.shape()); }

inline Array relu(const Array& x) {
  return detail::unary<detail::Keep::output>(
      x, [](const Matrix& v) -> Matrix { return v.cwiseMax(0.0); },
      [](const Matrix& yv, const Matrix& g) -> Matrix {
        // y > 0 exactly when x > 0, so the subgradient at 0 is 0
        return (yv.array() > 0.0).select(g, 0.0);
      });
}

inline Array tanh(const Array& x) {
  return detail::unary<detail::Keep::output>(
      x, [](const Matrix& v) -> Matrix { return v.array().tanh().matrix(); },
      [](const Matrix& yv, const Matrix& g) -> Matrix {
        return (g.array() * (1.0 - yv.array().square())).matrix();
      });
}

inline Array exp(const Array& x) {
  return detail::unary<detail::Keep::output>(
      x, [](const Matrix& v) -> Matrix { return v.array().exp().matrix(); },
      [](const Matrix& yv, const Matrix& g) -> Matrix { return g.cwiseProduct(yv); });
}

/// Natural log, floored at kLogFloor. Negative input is a domain error; inputs
/// under the floor get the floor value and zero gradient.
inline Array log(const Array& x) {
  if ((x.value().array() < 0.0).any()) throw DomainError("log: negative input");
  return detail::unary<detail::Keep::input>(
      x, [](const Matrix& v) -> Matrix { return v.cwiseMax(kLogFloor).array().log().matrix(); },
      [](const Matrix& xv, const Matrix& g) -> Matrix {
        return (xv.array() > kLogFloor).select(g.array() / xv.array(), 0.0).matrix();
      });
}

inline Array sqrt(const Array& x) {
  if ((x.value().array() < 0.0).any()) throw DomainError("sqrt: negative input");
  return detail::unary<detail::Keep::output>(
      x, [](const Matrix& v) -> Matrix { return v.array().sqrt().matrix(); },
      [](const Matrix& yv, const Matrix& g) -> Matrix {
        return (yv.array() > 0.0).select(g.array() / (2.0 * yv.array()), 0.0).matrix();
      });
}

inline Array square(const Array& x) {
  return detail::unary<detail::Keep::input>(
      x, [](const Matrix& v) -> Matrix { return v.array().square().matrix(); },
      [](const Matrix& xv, const Matrix& g) -> Matrix {
        return (2.0 * xv.array() * g.array()).matrix();
      });
}

inline Array scale(const Array& x, double c) {
  return Array::make(x.value() * c, x.shape(), {x},
                     [c](const Matrix& g) { return std::vector<Matrix>{g * c}; });
}

inline Array add_scalar(const Array& x, double c) {
  return Array::make((x.value().array() + c).matrix(), x.shape(), {x},
                     [](const Matrix& g) { return std::vector<Matrix>{g}; });
}

/// Clamp into [lo, hi]; the gradient passes inside the interval and is zero outside.
inline Array clip(const Array& x, double lo, double hi) {
  return detail::unary<detail::Keep::input>(
      x, [lo, hi](const Matrix& v) -> Matrix { return v.cwiseMax(lo).cwiseMin(hi); },
      [lo, hi](const Matrix& xv, const Matrix& g) -> Matrix {
        return (xv.array() >= lo && xv.array() <= hi).select(g, 0.0);
      });
}

inline Array clamp_min(const Array& x, double lo) {
  return detail::unary<detail::Keep::input>(
      x, [lo](const Matrix& v) -> Matrix { return v.cwiseMax(lo); },
      [lo](const Matrix& xv, const Matrix& g) -> Matrix {
        return (xv.array() >= lo).select(g, 0.0);
      });
}

inline Array add(const Array& a, const Array& b) {
  detail::require_same("add", a, b);
  return Array::make(a.value() + b.value(), a.shape(), {a, b},
                     [](const Matrix& g) { return std::vector<Matrix>{g, g}; });
}

inline Array sub(const Array& a, const Array& b) {
  detail::require_same("sub", a, b);
  return Array::make(a.value() - b.value(), a.shape(), {a, b},
                     [](const Matrix& g) { return std::vector<Matrix>{g, -g}; });
}

inline Array mul(const Array& a, const Array& b) {
  detail::require_same("mul", a, b);
  Matrix out = a.value().cwiseProduct(b.value());
  if (!detail::tracked(a, b)) return Array::constant(std::move(out), a.shape());
  return Array::make(std::move(out), a.shape(), {a, b}, [](const Matrix& g, const detail::Node& self) {
    return std::vector<Matrix>{g.cwiseProduct(self.parents[1]->value), g.cwiseProduct(self.parents[0]->value)};
  });
}

/// Elementwise minimum; ties route the gradient to the first operand.
inline Array minimum(const Array& a, const Array& b) {
  detail::require_same("minimum", a, b);
  Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> pick_a =
      a.value().array() <= b.value().array();
  Matrix out = pick_a.select(a.value(), b.value());
  if (!detail::tracked(a, b)) return Array::constant(std::move(out), a.shape());
  return Array::make(std::move(out), a.shape(), {a, b}, [pick_a = std::move(pick_a)](const Matrix& g) {
    return std::vector<Matrix>{pick_a.select(g, 0.0), pick_a.select(Matrix::Zero(g.rows(), g.cols()), g)};
  });
}

inline Array operator+(const Array& a, const Array& b) { return add(a, b); }
inline Array operator-(const Array& a, const Array& b) { return sub(a, b); }
inline Array operator*(const Array& a, const Array& b) { return mul(a, b); }
inline Array operator*(double c, const Array& a) { return scale(a, c); }

/// x·Wᵀ + b for x of shape [in] or [batch×in], W of shape [out×in], b of shape [out].
inline Array affine(const Array& weight, const Array& bias, const Array& x) {
  if (weight.rank() != 2) throw ShapeError("affine", weight.shape(), x.shape());
  const auto out = weight.shape()[0];
  const auto in = weight.shape()[1];
  if (bias.shape() != Shape{out}) throw ShapeError("affine", weight.shape(), bias.shape());
  if (x.rank() == 0 || x.shape().back() != in) throw ShapeError("affine", weight.shape(), x.shape());
  Matrix y(x.rows(), static_cast<Eigen::Index>(out));
  y.noalias() = x.value() * weight.value().transpose();
  y.rowwise() += bias.value().row(0);
  Shape shape = x.rank() == 1 ? Shape{out} : Shape{x.shape()[0], out};
  if (!detail::tracked(weight, bias, x)) return Array::constant(std::move(y), std::move(shape));
  return Array::make(std::move(y), std::move(shape), {weight, bias, x},
                     [](const Matrix& g, const detail::Node& self) {
                       const auto& w = *self.parents[0];
                       const auto& in = *self.parents[2];
                       std::vector<Matrix> grads(3);
                       if (w.requires_grad) grads[0].noalias() = g.transpose() * in.value;
                       if (self.parents[1]->requires_grad) grads[1] = g.colwise().sum();
                       if (in.requires_grad) grads[2].noalias() = g * w.value;
                       return grads;
                     });
}

/// Concatenate along the feature (last) axis. Operands must have equal rank and batch size.
inline Array concat(const std::vector<Array>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat: no operands");
  const auto& first = parts.front();
  if (first.rank() == 0) throw ShapeError("concat", first.shape(), first.shape());
  Eigen::Index cols = 0;
  for (const auto& p : parts) {
    if (p.rank() != first.rank() || p.rows() != first.rows()) throw ShapeError("concat", first.shape(), p.shape());
    cols += p.cols();
  }
  Matrix out(first.rows(), cols);
  std::vector<Eigen::Index> widths;
  Eigen::Index offset = 0;
  for (const auto& p : parts) {
    out.middleCols(offset, p.cols()) = p.value();
    widths.push_back(p.cols());
    offset += p.cols();
  }
  Shape shape = first.shape();
  shape.back() = static_cast<std::size_t>(cols);
  return Array::make(std::move(out), std::move(shape), parts, [widths = std::move(widths)](const Matrix& g) {
    std::vector<Matrix> grads;
    Eigen::Index at = 0;
    for (auto w : widths) {
      grads.emplace_back(g.middleCols(at, w));
      at += w;
    }
    return grads;
  });
}

inline Array concat(const Array& a, const Array& b) { return concat(std::vector<Array>{a, b}); }

/// Feature columns [begin, begin+count).
inline Array slice_features(const Array& x, std::size_t begin, std::size_t count) {
  if (x.rank() == 0 || begin + count > x.shape().back() || count == 0) {
    throw ShapeError("slice_features", x.shape(), Shape{begin, count});
  }
  Shape shape = x.shape();
  shape.back() = count;
  const auto rows = x.rows();
  const auto cols = x.cols();
  Matrix out = x.value().middleCols(static_cast<Eigen::Index>(begin), static_cast<Eigen::Index>(count));
  return Array::make(std::move(out), std::move(shape), {x}, [rows, cols, begin, count](const Matrix& g) {
    Matrix full = Matrix::Zero(rows, cols);
    full.middleCols(static_cast<Eigen::Index>(begin), static_cast<Eigen::Index>(count)) = g;
    return std::vector<Matrix>{std::move(full)};
  });
}

/// Batch rows [begin, begin+count) of a rank-2 array.
inline Array slice_rows(const Array& x, std::size_t begin, std::size_t count) {
  if (x.rank() != 2 || begin + count > x.shape()[0] || count == 0) {
    throw ShapeError("slice_rows", x.shape(), Shape{begin, count});
  }
  const auto rows = x.rows();
  const auto cols = x.cols();
  Matrix out = x.value().middleRows(static_cast<Eigen::Index>(begin), static_cast<Eigen::Index>(count));
  return Array::make(std::move(out), Shape{count, x.shape()[1]}, {x}, [rows, cols, begin, count](const Matrix& g) {
    Matrix full = Matrix::Zero(rows, cols);
    full.middleRows(static_cast<Eigen::Index>(begin), static_cast<Eigen::Index>(count)) = g;
    return std::vector<Matrix>{std::move(full)};
  });
}

/// Stacks `times` copies of a rank-2 array along the batch axis.
inline Array repeat_rows(const Array& x, std::size_t times) {
  if (x.rank() != 2 || times == 0) throw ShapeError("repeat_rows", x.shape(), Shape{times});
  const auto rows = x.rows();
  Matrix out = x.value().replicate(static_cast<Eigen::Index>(times), 1);
  return Array::make(std::move(out), Shape{x.shape()[0] * times, x.shape()[1]}, {x}, [rows, times](const Matrix& g) {
    Matrix acc = g.topRows(rows);
    for (std::size_t k = 1; k < times; ++k) acc += g.middleRows(static_cast<Eigen::Index>(k) * rows, rows);
    return std::vector<Matrix>{std::move(acc)};
  });
}

inline Array sum(const Array& x) {
  const auto rows = x.rows();
  const auto cols = x.cols();
  return Array::make(Matrix::Constant(1, 1, x.value().sum()), Shape{}, {x}, [rows, cols](const Matrix& g) {
    return std::vector<Matrix>{Matrix::Constant(rows, cols, g(0, 0))};
  });
}

inline Array mean(const Array& x) { return scale(sum(x), 1.0 / static_cast<double>(x.size())); }

/// L2 norm along the feature axis: [n] → scalar, [batch×n] → [batch×1]. Zero
/// vectors get zero gradient.
inline Array l2_norm(const Array& x) {
  if (x.rank() == 0) throw ShapeError("l2_norm", x.shape(), x.shape());
  Matrix norms = x.value().rowwise().norm();
  Shape shape = x.rank() == 1 ? Shape{} : Shape{x.shape()[0], 1};
  if (!detail::tracked(x)) return Array::constant(std::move(norms), std::move(shape));
  return Array::make(std::move(norms), std::move(shape), {x}, [](const Matrix& g, const detail::Node& self) {
    const Matrix& xv = self.parents[0]->value;
    const Matrix& nv = self.value;
    Matrix out(xv.rows(), xv.cols());
    for (Eigen::Index r = 0; r < xv.rows(); ++r) {
      if (nv(r, 0) > 0.0) {
        out.row(r) = xv.row(r) * (g(r, 0) / nv(r, 0));
      } else {
        out.row(r).setZero();
      }
    }
    return std::vector<Matrix>{std::move(out)};
  });
}

// ---------------------------------------------------------------------------
// Reverse pass

/// Gradients keyed by leaf identity. Lookup of a parameter that was not
/// requested is an error rather than an implicit zero.
class GradientMap {
 public:
  void set(const Array& param, Matrix grad) { entries_[param.id()] = std::move(grad); }
  bool contains(const Array& param) const { return entries_.count(param.id()) != 0; }
  const Matrix& at(const Array& param) const {
    auto it = entries_.find(param.id());
    if (it == entries_.end()) throw GradientError("no gradient recorded for parameter " + std::to_string(param.id()));
    return it->second;
  }
  std::size_t size() const { return entries_.size(); }

 private:
  std::unordered_map<std::uint64_t, Matrix> entries_;
};

enum class Unused { error, zero };

/// Reverse-mode gradients of a scalar target with respect to `params`.
///
/// A parameter that does not appear in the target's history is an error
/// unless `unused == Unused::zero`, in which case it receives an explicit zero.
inline GradientMap gradients(const Array& target, std::span<const Array> params, Unused unused = Unused::error) {
  if (target.size() != 1) throw GradientError("gradient target must be scalar, got shape " + to_string(target.shape()));

  // Topological order over the differentiable part of the history.
  std::vector<detail::Node*> order;
  std::unordered_set<const detail::Node*> seen;
  if (target.requires_grad()) {
    std::vector<std::pair<detail::Node*, std::size_t>> stack{{target.node().get(), 0}};
    seen.insert(target.node().get());
    while (!stack.empty()) {
      auto& [node, next] = stack.back();
      if (next < node->parents.size()) {
        detail::Node* parent = node->parents[next++].get();
        if (parent->requires_grad && seen.insert(parent).second) stack.emplace_back(parent, 0);
      } else {
        order.push_back(node);
        stack.pop_back();
      }
    }
  }

  for (const auto& p : params) {
    if (!seen.count(p.node().get()) && unused == Unused::error) {
      throw GradientError("parameter " + std::to_string(p.id()) + " with shape " + to_string(p.shape()) +
                          " does not participate in the target's history");
    }
  }

  std::unordered_map<const detail::Node*, Matrix> grads;
  grads[target.node().get()] = Matrix::Ones(1, 1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node* node = *it;
    auto found = grads.find(node);
    if (found == grads.end() || !node->backward) continue;
    std::vector<Matrix> parent_grads = node->backward(found->second, *node);
    for (std::size_t i = 0; i < node->parents.size(); ++i) {
      const detail::Node* parent = node->parents[i].get();
      if (!parent->requires_grad || parent_grads[i].size() == 0) continue;
      auto slot = grads.find(parent);
      if (slot == grads.end()) {
        grads.emplace(parent, std::move(parent_grads[i]));
      } else {
        slot->second += parent_grads[i];
      }
    }
    // Interior gradients are no longer needed once propagated.
    if (node != target.node().get()) grads.erase(node);
  }

  GradientMap out;
  for (const auto& p : params) {
    auto it = grads.find(p.node().get());
    if (it != grads.end()) {
      out.set(p, it->second);
    } else {
      out.set(p, Matrix::Zero(p.rows(), p.cols()));
    }
  }
  return out;
}

inline GradientMap gradients(const Array& target, std::initializer_list<Array> params, Unused unused = Unused::error) {
  std::vector<Array> list(params);
  return gradients(target, std::span<const Array>(list), unused);
}

/// Compares gradients() against central differences for every element of every
/// binding. Returns max |analytic − numeric| / (|numeric| + 1e-8). Bindings keep
/// their shapes; their differentiability flag is ignored.
inline double finite_difference_check(const std::function<Array(const std::vector<Array>&)>& expression,
                                       const std::vector<Array>& bindings, double step = 1e-5) {
  std::vector<Array> vars;
  vars.reserve(bindings.size());
  for (const auto& b : bindings) vars.push_back(Array::variable(b.value(), b.shape()));
  const Array target = expression(vars);
  const GradientMap analytic = gradients(target, std::span<const Array>(vars), Unused::zero);

  auto evaluate_at = [&](std::size_t which, Eigen::Index r, Eigen::Index c, double delta) {
    std::vector<Array> probe;
    probe.reserve(bindings.size());
    for (std::size_t i = 0; i < bindings.size(); ++i) {
      Matrix m = bindings[i].value();
      if (i == which) m(r, c) += delta;
      probe.push_back(Array::constant(std::move(m), bindings[i].shape()));
    }
    return expression(probe).item();
  };

  double worst = 0.0;
  for (std::size_t i = 0; i < bindings.size(); ++i) {
    const Matrix& g = analytic.at(vars[i]);
    for (Eigen::Index r = 0; r < g.rows(); ++r) {
      for (Eigen::Index c = 0; c < g.cols(); ++c) {
        const double numeric = (evaluate_at(i, r, c, step) - evaluate_at(i, r, c, -step)) / (2.0 * step);
        const double err = std::abs(g(r, c) - numeric) / (std::abs(numeric) + 1e-8);
        worst = std::max(worst, err);
      }
    }
  }
  return worst;
}

/// Matrix bindings are treated as rank-2 arrays.
inline double finite_difference_check(const std::function<Array(const std::vector<Array>&)>& expression,
                                       const std::vector<Matrix>& bindings, double step = 1e-5) {
  std::vector<Array> arrays;
  arrays.reserve(bindings.size());
  for (const auto& b : bindings) arrays.push_back(Array::constant(b));
  return finite_difference_check(expression, arrays, step);
}

}  // namespace drac::ad
