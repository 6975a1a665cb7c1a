#pragma once

// Stochastic-mapping actors: a deterministic network f(s, z) driven by a fixed
// standard-normal latent. All three kinds produce actions in [-1, 1]^|A| and
// are differentiable in their parameters through the sampled latent.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "drac/autodiff.hpp"
#include "drac/nn.hpp"
#include "drac/random.hpp"

namespace drac::actors {

enum class ActorKind { gaussian, amortized, diffusion };

inline std::string_view to_string(ActorKind kind) {
  switch (kind) {
    case ActorKind::gaussian:
      return "gaussian";
    case ActorKind::amortized:
      return "amortized";
    case ActorKind::diffusion:
      return "diffusion";
  }
  return "unknown";
}

inline ActorKind parse_kind(std::string_view name) {
  if (name == "gaussian") return ActorKind::gaussian;
  if (name == "amortized") return ActorKind::amortized;
  if (name == "diffusion") return ActorKind::diffusion;
  throw std::invalid_argument("unknown actor kind '" + std::string(name) + "'");
}

inline constexpr double kLogStdMin = -5.0;
inline constexpr double kLogStdMax = 2.0;
inline constexpr double kBetaStart = 1e-4;
inline constexpr double kBetaEnd = 0.2;

struct DiffusionSchedule {
  int steps = 0;
  std::vector<double> beta;       // beta[t-1] = β_t
  std::vector<double> alpha;      // 1 − β_t
  std::vector<double> alpha_bar;  // running product of alpha
};

/// Linear β_t from 1e-4 to 0.2 inclusive over t = 1..T (β_1 = 1e-4 when T = 1).
inline DiffusionSchedule make_schedule(int steps) {
  if (steps < 1) throw std::invalid_argument("make_schedule: diffusion steps must be >= 1");
  DiffusionSchedule s;
  s.steps = steps;
  double running = 1.0;
  for (int t = 1; t <= steps; ++t) {
    const double beta =
        steps == 1 ? kBetaStart : kBetaStart + (kBetaEnd - kBetaStart) * static_cast<double>(t - 1) / (steps - 1);
    s.beta.push_back(beta);
    s.alpha.push_back(1.0 - beta);
    running *= 1.0 - beta;
    s.alpha_bar.push_back(running);
  }
  return s;
}

/// Scalar diffusion-time feature 2t/T − 1 fed to the noise network.
inline double t_embedding(int t, int steps) {
  if (t < 1 || t > steps) {
    throw std::out_of_range("t_embedding: t=" + std::to_string(t) + " outside [1, " + std::to_string(steps) + "]");
  }
  return 2.0 * static_cast<double>(t) / static_cast<double>(steps) - 1.0;
}

/// Latent draw for a batch of states. Gaussian/amortized use one part of width
/// latent_dim; diffusion uses T+1 parts of width |A|, parts[t] = z_t.
struct Latent {
  std::vector<ad::Matrix> parts;
  Eigen::Index batch() const { return parts.empty() ? 0 : parts.front().rows(); }
};

struct Actor {
  ActorKind kind = ActorKind::amortized;
  nn::MlpParams net;
  std::size_t state_dim = 0;
  std::size_t action_dim = 0;
  std::size_t latent_dim = 0;
  std::optional<DiffusionSchedule> schedule;

  Actor with_net(nn::MlpParams next) const {
    Actor a = *this;
    a.net = std::move(next);
    return a;
  }

  std::size_t latent_parts() const { return kind == ActorKind::diffusion ? schedule->beta.size() + 1 : 1; }
};

struct ActorOptions {
  ActorKind kind = ActorKind::amortized;
  std::size_t state_dim = 0;
  std::size_t action_dim = 0;
  std::vector<std::size_t> hidden{256, 256};
  std::size_t latent_dim = 0;  // amortized only; 0 means |A|
  int diffusion_steps = 20;
  std::uint64_t seed = 0;
};

inline Actor make_actor(const ActorOptions& opt) {
  if (opt.state_dim == 0 || opt.action_dim == 0) throw std::invalid_argument("make_actor: dimensions must be positive");
  Actor actor;
  actor.kind = opt.kind;
  actor.state_dim = opt.state_dim;
  actor.action_dim = opt.action_dim;
  std::vector<std::size_t> sizes;
  switch (opt.kind) {
    case ActorKind::gaussian:
      actor.latent_dim = opt.action_dim;
      sizes.push_back(opt.state_dim);
      sizes.insert(sizes.end(), opt.hidden.begin(), opt.hidden.end());
      sizes.push_back(2 * opt.action_dim);
      actor.net = nn::mlp_init(sizes, nn::OutputActivation::identity, opt.seed);
      break;
    case ActorKind::amortized:
      actor.latent_dim = opt.latent_dim == 0 ? opt.action_dim : opt.latent_dim;
      sizes.push_back(opt.state_dim + actor.latent_dim);
      sizes.insert(sizes.end(), opt.hidden.begin(), opt.hidden.end());
      sizes.push_back(opt.action_dim);
      actor.net = nn::mlp_init(sizes, nn::OutputActivation::tanh, opt.seed);
      break;
    case ActorKind::diffusion:
      actor.latent_dim = opt.action_dim;
      actor.schedule = make_schedule(opt.diffusion_steps);
      sizes.push_back(opt.state_dim + opt.action_dim + 1);
      sizes.insert(sizes.end(), opt.hidden.begin(), opt.hidden.end());
      sizes.push_back(opt.action_dim);
      actor.net = nn::mlp_init(sizes, nn::OutputActivation::identity, opt.seed);
      break;
  }
  return actor;
}

inline Latent sample_latent(const Actor& actor, Rng& rng, Eigen::Index batch = 1) {
  Latent z;
  const auto width = static_cast<Eigen::Index>(actor.latent_dim);
  for (std::size_t p = 0; p < actor.latent_parts(); ++p) z.parts.push_back(rng.normal_matrix(batch, width));
  return z;
}

namespace detail {

// Shapes a latent part like the state: rank-1 for a single state, rank-2 for a batch.
inline ad::Array latent_array(const ad::Matrix& part, const ad::Array& state) {
  if (state.rank() == 1) return ad::Array::constant(part, ad::Shape{static_cast<std::size_t>(part.cols())});
  return ad::Array::constant(part);
}

inline ad::Array time_column(double value, const ad::Array& state) {
  if (state.rank() == 1) return ad::Array::constant(ad::Matrix::Constant(1, 1, value), ad::Shape{1});
  return ad::Array::constant(ad::Matrix::Constant(state.rows(), 1, value));
}

}  // namespace detail

/// a = f_θ(s, z). `state` is [S] or [batch×S]; the latent batch must match.
inline ad::Array act(const Actor& actor, const ad::Array& state, const Latent& z) {
  if (state.rank() == 0 || state.shape().back() != actor.state_dim) {
    throw ad::ShapeError("act", ad::Shape{actor.state_dim}, state.shape());
  }
  if (z.parts.size() != actor.latent_parts()) {
    throw std::invalid_argument("act: latent has " + std::to_string(z.parts.size()) + " parts, " +
                                std::string(to_string(actor.kind)) + " actor expects " +
                                std::to_string(actor.latent_parts()));
  }
  for (const auto& part : z.parts) {
    if (part.rows() != state.rows() || part.cols() != static_cast<Eigen::Index>(actor.latent_dim)) {
      throw ad::ShapeError("act", state.shape(),
                           ad::Shape{static_cast<std::size_t>(part.rows()), static_cast<std::size_t>(part.cols())});
    }
  }

  const auto dim = actor.action_dim;
  switch (actor.kind) {
    case ActorKind::gaussian: {
      const ad::Array out = nn::mlp_apply(actor.net, state);
      const ad::Array mu = ad::slice_features(out, 0, dim);
      const ad::Array log_std = ad::clip(ad::slice_features(out, dim, dim), kLogStdMin, kLogStdMax);
      const ad::Array noise = ad::mul(ad::exp(log_std), detail::latent_array(z.parts[0], state));
      return ad::tanh(ad::add(mu, noise));
    }
    case ActorKind::amortized:
      return nn::mlp_apply(actor.net, ad::concat(state, detail::latent_array(z.parts[0], state)));
    case ActorKind::diffusion: {
      const auto& sched = *actor.schedule;
      const int steps = sched.steps;
      ad::Array x = detail::latent_array(z.parts[static_cast<std::size_t>(steps)], state);
      for (int t = steps; t >= 1; --t) {
        const auto i = static_cast<std::size_t>(t - 1);
        const ad::Array input = ad::concat({state, x, detail::time_column(t_embedding(t, steps), state)});
        const ad::Array eps = nn::mlp_apply(actor.net, input);
        const double eps_scale = sched.beta[i] / std::sqrt(1.0 - sched.alpha_bar[i]);
        x = ad::scale(ad::sub(x, ad::scale(eps, eps_scale)), 1.0 / std::sqrt(sched.alpha[i]));
        x = ad::add(x, ad::scale(detail::latent_array(z.parts[i], state), std::sqrt(sched.beta[i])));
      }
      return ad::clip(x, -1.0, 1.0);
    }
  }
  throw std::logic_error("act: unhandled actor kind");
}

}  // namespace drac::actors
