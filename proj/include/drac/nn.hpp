#pragma once

// MLPs, Adam and Polyak averaging. Parameter records are values: every update
// returns fresh leaves and leaves the inputs untouched.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "drac/autodiff.hpp"
#include "drac/random.hpp"

namespace drac::nn {

enum class OutputActivation { identity, tanh };

struct Layer {
  ad::Array weight;  // [out x in]
  ad::Array bias;    // [out]
};

struct MlpParams {
  std::vector<Layer> layers;
  OutputActivation output = OutputActivation::identity;

  std::size_t input_size() const { return layers.front().weight.shape()[1]; }
  std::size_t output_size() const { return layers.back().weight.shape()[0]; }

  /// Flat parameter list: w0, b0, w1, b1, ...
  std::vector<ad::Array> parameters() const {
    std::vector<ad::Array> out;
    out.reserve(layers.size() * 2);
    for (const auto& l : layers) {
      out.push_back(l.weight);
      out.push_back(l.bias);
    }
    return out;
  }

  /// Same architecture with new parameter values, in parameters() order.
  MlpParams with_values(std::span<const ad::Matrix> values) const {
    if (values.size() != layers.size() * 2) {
      throw std::invalid_argument("with_values: expected " + std::to_string(layers.size() * 2) + " arrays, got " +
                                  std::to_string(values.size()));
    }
    MlpParams next;
    next.output = output;
    next.layers.reserve(layers.size());
    for (std::size_t i = 0; i < layers.size(); ++i) {
      const auto& l = layers[i];
      if (values[2 * i].rows() != l.weight.rows() || values[2 * i].cols() != l.weight.cols() ||
          values[2 * i + 1].cols() != l.bias.cols()) {
        throw ad::ShapeError("with_values", l.weight.shape(),
                             ad::Shape{static_cast<std::size_t>(values[2 * i].rows()),
                                       static_cast<std::size_t>(values[2 * i].cols())});
      }
      next.layers.push_back({ad::Array::variable(values[2 * i], l.weight.shape()),
                             ad::Array::variable(values[2 * i + 1], l.bias.shape())});
    }
    return next;
  }

  std::vector<ad::Matrix> values() const {
    std::vector<ad::Matrix> out;
    for (const auto& p : parameters()) out.push_back(p.value());
    return out;
  }
};

/// Uniform ±1/√fan_in weights, zero biases. `sizes` lists input, hidden and output widths.
inline MlpParams mlp_init(std::span<const std::size_t> sizes, OutputActivation output, std::uint64_t seed) {
  if (sizes.size() < 2) throw std::invalid_argument("mlp_init: need at least input and output sizes");
  for (auto s : sizes) {
    if (s == 0) throw std::invalid_argument("mlp_init: layer sizes must be positive");
  }
  Rng rng(seed);
  MlpParams params;
  params.output = output;
  for (std::size_t i = 0; i + 1 < sizes.size(); ++i) {
    const auto in = sizes[i];
    const auto out = sizes[i + 1];
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    ad::Matrix w = rng.uniform_matrix(static_cast<Eigen::Index>(out), static_cast<Eigen::Index>(in), -bound, bound);
    params.layers.push_back({ad::Array::variable(std::move(w), ad::Shape{out, in}),
                             ad::Array::variable(ad::Matrix::Zero(1, static_cast<Eigen::Index>(out)), ad::Shape{out})});
  }
  return params;
}

inline MlpParams mlp_init(std::initializer_list<std::size_t> sizes, OutputActivation output, std::uint64_t seed) {
  std::vector<std::size_t> v(sizes);
  return mlp_init(std::span<const std::size_t>(v), output, seed);
}

inline ad::Array mlp_apply(const MlpParams& params, const ad::Array& input) {
  if (params.layers.empty()) throw std::invalid_argument("mlp_apply: empty network");
  if (input.rank() == 0 || input.shape().back() != params.input_size()) {
    throw ad::ShapeError("mlp_apply", params.layers.front().weight.shape(), input.shape());
  }
  ad::Array h = input;
  for (std::size_t i = 0; i < params.layers.size(); ++i) {
    h = ad::affine(params.layers[i].weight, params.layers[i].bias, h);
    if (i + 1 < params.layers.size()) {
      h = ad::relu(h);
    } else if (params.output == OutputActivation::tanh) {
      h = ad::tanh(h);
    }
  }
  return h;
}

struct AdamState {
  std::uint64_t step = 0;
  std::vector<ad::Matrix> m;
  std::vector<ad::Matrix> v;
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

inline AdamState adam_init(std::span<const ad::Array> params, double lr) {
  AdamState s;
  s.lr = lr;
  for (const auto& p : params) {
    s.m.push_back(ad::Matrix::Zero(p.rows(), p.cols()));
    s.v.push_back(ad::Matrix::Zero(p.rows(), p.cols()));
  }
  return s;
}

/// One bias-corrected Adam update. Returns the new parameter values (in
/// `params` order) and advances `state`.
inline std::vector<ad::Matrix> adam_step(std::span<const ad::Array> params, const ad::GradientMap& grads,
                                         AdamState& state) {
  if (state.m.size() != params.size()) throw std::invalid_argument("adam_step: optimizer state does not match parameters");
  std::vector<const ad::Matrix*> g;
  g.reserve(params.size());
  for (const auto& p : params) g.push_back(&grads.at(p));  // throws on a missing entry

  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  std::vector<ad::Matrix> next;
  next.reserve(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * *g[i];
    state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g[i]->cwiseProduct(*g[i]);
    auto m_hat = state.m[i].array() / c1;
    auto v_hat = state.v[i].array() / c2;
    next.emplace_back((params[i].value().array() - state.lr * m_hat / (v_hat.sqrt() + state.eps)).matrix());
  }
  return next;
}

inline MlpParams adam_step(const MlpParams& params, const ad::GradientMap& grads, AdamState& state) {
  const auto list = params.parameters();
  const auto next = adam_step(std::span<const ad::Array>(list), grads, state);
  return params.with_values(next);
}

/// target ← rho·online + (1 − rho)·target, elementwise.
inline MlpParams polyak_update(const MlpParams& target, const MlpParams& online, double rho) {
  if (rho < 0.0 || rho > 1.0) throw std::invalid_argument("polyak_update: rho must lie in [0, 1]");
  const auto t = target.parameters();
  const auto o = online.parameters();
  if (t.size() != o.size()) throw std::invalid_argument("polyak_update: parameter count mismatch");
  std::vector<ad::Matrix> next;
  next.reserve(t.size());
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (t[i].shape() != o[i].shape()) throw ad::ShapeError("polyak_update", t[i].shape(), o[i].shape());
    if (rho == 1.0) {
      next.push_back(o[i].value());
    } else if (rho == 0.0) {
      next.push_back(t[i].value());
    } else {
      next.emplace_back(rho * o[i].value() + (1.0 - rho) * t[i].value());
    }
  }
  return target.with_values(next);
}

}  // namespace drac::nn
