#pragma once

// Log-distance diversity: D(s) = E[log ‖f(s, zx) − f(s, zy)‖₂] and its n-pair
// Monte-Carlo estimate, plus the arithmetic / geometric mean pairwise-distance
// diagnostics.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <utility>

#include "drac/actors.hpp"
#include "drac/autodiff.hpp"
#include "drac/random.hpp"

namespace drac::diversity {

/// Distances are floored here before taking the log.
inline constexpr double kDistanceFloor = 1e-6;

inline double log_distance(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw ad::ShapeError("log_distance", ad::Shape{x.size()}, ad::Shape{y.size()});
  double sq = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) sq += (x[i] - y[i]) * (x[i] - y[i]);
  return std::log(std::max(std::sqrt(sq), kDistanceFloor));
}

/// Row-wise floored log-distance between two [batch×dim] arrays → [batch×1].
inline ad::Array log_distance(const ad::Array& x, const ad::Array& y) {
  return ad::log(ad::clamp_min(ad::l2_norm(ad::sub(x, y)), kDistanceFloor));
}

struct DiversityEstimate {
  ad::Array value;  // scalar for a single state, [batch×1] for a batch of states
  std::size_t n_pairs = 0;
  std::size_t floored_count = 0;  // pairs (over the whole batch) whose distance hit the floor
};

/// Generic n-pair estimator. `policy(stacked_states, latent)` maps a [rows×S]
/// state block and a latent for `rows` rows to a [rows×A] action block;
/// `sampler(rows)` draws that latent. All 2n latents per state are drawn in one
/// block: rows [2i·B, (2i+1)·B) are the x-members of pair i, the next B rows the y-members.
template <typename Policy, typename Sampler>
DiversityEstimate estimate_diversity_with(Policy&& policy, Sampler&& sampler, const ad::Array& states, std::size_t n) {
  if (n == 0) throw std::invalid_argument("estimate_diversity: need at least one pair");
  const bool single = states.rank() == 1;
  const ad::Array batch =
      single ? ad::Array::constant(states.value(), ad::Shape{1, states.shape()[0]}) : states;
  const auto rows = static_cast<std::size_t>(batch.rows());
  const ad::Array stacked = ad::repeat_rows(batch, 2 * n);
  const auto latent = sampler(static_cast<Eigen::Index>(2 * n * rows));
  const ad::Array actions = policy(stacked, latent);

  DiversityEstimate est;
  est.n_pairs = n;
  ad::Array total;
  for (std::size_t i = 0; i < n; ++i) {
    const ad::Array x = ad::slice_rows(actions, 2 * i * rows, rows);
    const ad::Array y = ad::slice_rows(actions, (2 * i + 1) * rows, rows);
    const ad::Array dist = ad::l2_norm(ad::sub(x, y));
    est.floored_count += static_cast<std::size_t>((dist.value().array() < kDistanceFloor).count());
    const ad::Array term = ad::log(ad::clamp_min(dist, kDistanceFloor));
    total = i == 0 ? term : ad::add(total, term);
  }
  est.value = ad::scale(total, 1.0 / static_cast<double>(n));
  if (single) est.value = ad::sum(est.value);
  return est;
}

/// D̃_θ(s) with 2n fresh latents per state, differentiable in the actor parameters.
inline DiversityEstimate estimate_diversity(const actors::Actor& actor, const ad::Array& states, std::size_t n,
                                            Rng& rng) {
  return estimate_diversity_with(
      [&](const ad::Array& s, const actors::Latent& z) { return actors::act(actor, s, z); },
      [&](Eigen::Index rows) { return actors::sample_latent(actor, rng, rows); }, states, n);
}

namespace detail {

template <typename F>
void for_each_pair_distance(const ad::Matrix& points, F&& f) {
  if (points.rows() < 2) throw std::invalid_argument("pairwise distance needs at least 2 points");
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    for (Eigen::Index j = i + 1; j < points.rows(); ++j) f((points.row(i) - points.row(j)).norm());
  }
}

}  // namespace detail

/// Average L2 distance over all unordered pairs of rows.
inline double mean_pairwise_distance(const ad::Matrix& points) {
  double total = 0.0;
  std::size_t pairs = 0;
  detail::for_each_pair_distance(points, [&](double d) {
    total += d;
    ++pairs;
  });
  return total / static_cast<double>(pairs);
}

/// Geometric mean of floored pairwise distances, (∏ max(d, ε))^(1/m).
inline double geometric_mean_distance(const ad::Matrix& points) {
  double log_total = 0.0;
  std::size_t pairs = 0;
  detail::for_each_pair_distance(points, [&](double d) {
    log_total += std::log(std::max(d, kDistanceFloor));
    ++pairs;
  });
  return std::exp(log_total / static_cast<double>(pairs));
}

}  // namespace drac::diversity
