#pragma once

// Diversity-regularized actor-critic.
//
// One gradient step:
//   y   = r + γ(1−d)(min_i Q̂_i(s', f(s', z)) + α D̃(s'))        (no gradient)
//   φ_i ← Adam(φ_i, ∇ mean (Q_i(s, a) − y)²)
//   θ   ← Adam(θ,   ∇ −mean(min_i Q_i(s, f(s, z)) + α D̃(s)))
//   w   ← w − lr_α (mean D̃(s) − D̂) dα/dw
//   φ̂_i ← ρ φ_i + (1−ρ) φ̂_i
//
// Randomness is drawn from one stream in a fixed order per environment step:
// reset jitter (when an episode starts), action latent, batch indices, target
// latents (a' latent, then 2n diversity latents), actor latents (a latent, then
// 2n diversity latents).

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "drac/actors.hpp"
#include "drac/autodiff.hpp"
#include "drac/diversity.hpp"
#include "drac/eval.hpp"
#include "drac/maze.hpp"
#include "drac/nn.hpp"
#include "drac/random.hpp"

namespace drac {

// ---------------------------------------------------------------------------
// Replay

struct Transition {
  std::vector<double> s;
  std::vector<double> a;
  double r = 0.0;
  std::vector<double> s_next;
  double done = 0.0;  // 1 only when a goal ended the episode
};

struct Batch {
  ad::Matrix s;       // [B x S]
  ad::Matrix a;       // [B x A]
  ad::Matrix r;       // [B x 1]
  ad::Matrix s_next;  // [B x S]
  ad::Matrix done;    // [B x 1]

  Eigen::Index size() const { return s.rows(); }
};

/// Bounded FIFO store with uniform sampling (with replacement).
class ReplayBuffer {
 public:
  ReplayBuffer(std::size_t capacity, std::size_t state_dim, std::size_t action_dim)
      : capacity_(capacity), state_dim_(state_dim), action_dim_(action_dim) {
    if (capacity == 0) throw std::invalid_argument("ReplayBuffer: capacity must be positive");
  }

  void push(const Transition& t) {
    if (t.s.size() != state_dim_ || t.s_next.size() != state_dim_ || t.a.size() != action_dim_) {
      throw std::invalid_argument("ReplayBuffer::push: transition dimensions do not match the buffer");
    }
    if (t.done != 0.0 && t.done != 1.0) throw std::invalid_argument("ReplayBuffer::push: done must be 0 or 1");
    if (size_ < capacity_) {
      states_.insert(states_.end(), t.s.begin(), t.s.end());
      actions_.insert(actions_.end(), t.a.begin(), t.a.end());
      rewards_.push_back(t.r);
      next_states_.insert(next_states_.end(), t.s_next.begin(), t.s_next.end());
      dones_.push_back(t.done);
      ++size_;
    } else {
      std::copy(t.s.begin(), t.s.end(), states_.begin() + static_cast<std::ptrdiff_t>(cursor_ * state_dim_));
      std::copy(t.a.begin(), t.a.end(), actions_.begin() + static_cast<std::ptrdiff_t>(cursor_ * action_dim_));
      rewards_[cursor_] = t.r;
      std::copy(t.s_next.begin(), t.s_next.end(),
                next_states_.begin() + static_cast<std::ptrdiff_t>(cursor_ * state_dim_));
      dones_[cursor_] = t.done;
    }
    cursor_ = (cursor_ + 1) % capacity_;
  }

  std::size_t size() const { return size_; }
  std::size_t capacity() const { return capacity_; }

  /// i-th oldest stored transition.
  Transition at(std::size_t i) const {
    if (i >= size_) throw std::out_of_range("ReplayBuffer::at");
    const std::size_t slot = size_ < capacity_ ? i : (cursor_ + i) % capacity_;
    return get(slot);
  }

  Batch sample(std::size_t batch, Rng& rng) const {
    if (size_ < batch || batch == 0) {
      throw std::runtime_error("ReplayBuffer::sample: buffer holds " + std::to_string(size_) +
                               " transitions, batch needs " + std::to_string(batch));
    }
    std::vector<std::size_t> idx(batch);
    for (auto& i : idx) i = rng.index(size_);
    return gather(idx);
  }

  Batch gather(std::span<const std::size_t> slots) const {
    const auto b = static_cast<Eigen::Index>(slots.size());
    const auto sd = static_cast<Eigen::Index>(state_dim_);
    const auto adim = static_cast<Eigen::Index>(action_dim_);
    Batch out{ad::Matrix(b, sd), ad::Matrix(b, adim), ad::Matrix(b, 1), ad::Matrix(b, sd), ad::Matrix(b, 1)};
    for (Eigen::Index k = 0; k < b; ++k) {
      const std::size_t i = slots[static_cast<std::size_t>(k)];
      for (Eigen::Index j = 0; j < sd; ++j) {
        out.s(k, j) = states_[i * state_dim_ + static_cast<std::size_t>(j)];
        out.s_next(k, j) = next_states_[i * state_dim_ + static_cast<std::size_t>(j)];
      }
      for (Eigen::Index j = 0; j < adim; ++j) out.a(k, j) = actions_[i * action_dim_ + static_cast<std::size_t>(j)];
      out.r(k, 0) = rewards_[i];
      out.done(k, 0) = dones_[i];
    }
    return out;
  }

 private:
  Transition get(std::size_t slot) const {
    Transition t;
    t.s.assign(states_.begin() + static_cast<std::ptrdiff_t>(slot * state_dim_),
               states_.begin() + static_cast<std::ptrdiff_t>((slot + 1) * state_dim_));
    t.a.assign(actions_.begin() + static_cast<std::ptrdiff_t>(slot * action_dim_),
               actions_.begin() + static_cast<std::ptrdiff_t>((slot + 1) * action_dim_));
    t.r = rewards_[slot];
    t.s_next.assign(next_states_.begin() + static_cast<std::ptrdiff_t>(slot * state_dim_),
                    next_states_.begin() + static_cast<std::ptrdiff_t>((slot + 1) * state_dim_));
    t.done = dones_[slot];
    return t;
  }

  std::size_t capacity_;
  std::size_t state_dim_;
  std::size_t action_dim_;
  std::size_t size_ = 0;
  std::size_t cursor_ = 0;
  std::vector<double> states_;
  std::vector<double> actions_;
  std::vector<double> rewards_;
  std::vector<double> next_states_;
  std::vector<double> dones_;
};

// ---------------------------------------------------------------------------
// Critics

struct CriticEnsemble {
  nn::MlpParams q1;
  nn::MlpParams q2;
  nn::MlpParams q1_target;
  nn::MlpParams q2_target;
};

/// Online critics from independent seeds; targets start as exact copies.
inline CriticEnsemble make_critics(std::size_t state_dim, std::size_t action_dim, const std::vector<std::size_t>& hidden,
                                   std::uint64_t seed1, std::uint64_t seed2) {
  std::vector<std::size_t> sizes{state_dim + action_dim};
  sizes.insert(sizes.end(), hidden.begin(), hidden.end());
  sizes.push_back(1);
  CriticEnsemble c;
  c.q1 = nn::mlp_init(sizes, nn::OutputActivation::identity, seed1);
  c.q2 = nn::mlp_init(sizes, nn::OutputActivation::identity, seed2);
  c.q1_target = c.q1.with_values(c.q1.values());
  c.q2_target = c.q2.with_values(c.q2.values());
  return c;
}

/// Copy whose parameters are constants, so no gradient is computed for them.
inline nn::MlpParams frozen(const nn::MlpParams& p) {
  nn::MlpParams out;
  out.output = p.output;
  for (const auto& l : p.layers) {
    out.layers.push_back({ad::Array::constant(l.weight.value(), l.weight.shape()),
                          ad::Array::constant(l.bias.value(), l.bias.shape())});
  }
  return out;
}

inline ad::Array critic_value(const nn::MlpParams& q, const ad::Array& s, const ad::Array& a) {
  return nn::mlp_apply(q, ad::concat(s, a));
}

// ---------------------------------------------------------------------------
// Temperature

inline double alpha_of(double w) { return w < 0.0 ? std::exp(w) : w + 1.0; }
inline double alpha_slope(double w) { return w < 0.0 ? std::exp(w) : 1.0; }

/// D̂ = log(β √|A|).
inline double target_diversity(double beta, std::size_t action_dim) {
  if (beta <= 0.0) throw std::invalid_argument("target_diversity: beta must be positive");
  if (action_dim == 0) throw std::invalid_argument("target_diversity: action_dim must be >= 1");
  return std::log(beta * std::sqrt(static_cast<double>(action_dim)));
}

struct TemperatureState {
  double w = 0.0;
  double lr = 5e-3;
  double target = 0.0;
  bool learnable = true;
  double fixed_alpha = 0.0;  // used when !learnable

  double alpha() const { return learnable ? alpha_of(w) : fixed_alpha; }
};

/// Gradient descent on L_α = α(w)(D̃ − D̂) with D̃ treated as a constant.
inline TemperatureState alpha_step(TemperatureState t, double diversity_mean) {
  if (!t.learnable) return t;
  t.w -= t.lr * (diversity_mean - t.target) * alpha_slope(t.w);
  return t;
}

// ---------------------------------------------------------------------------
// Gradient steps

namespace detail {

// Sampler that hands out a pre-drawn latent (used by the explicit-latent overloads).
struct FixedSampler {
  const actors::Latent* latent;
  actors::Latent operator()(Eigen::Index rows) const {
    if (latent->batch() != rows) throw std::invalid_argument("pre-drawn diversity latent has the wrong batch size");
    return *latent;
  }
};

inline ad::Array diversity_term(const actors::Actor& actor, const ad::Array& states, std::size_t n_pairs,
                                const actors::Latent& pair_latent) {
  return diversity::estimate_diversity_with(
             [&](const ad::Array& s, const actors::Latent& z) { return actors::act(actor, s, z); },
             FixedSampler{&pair_latent}, states, n_pairs)
      .value;
}

}  // namespace detail

/// Latents consumed by one critic-target or actor-loss evaluation.
struct StepLatents {
  actors::Latent action;  // one row per batch state
  actors::Latent pairs;   // 2n·B rows; empty when n_pairs == 0
};

inline StepLatents draw_step_latents(const actors::Actor& actor, Eigen::Index batch, std::size_t n_pairs, Rng& rng) {
  StepLatents z;
  z.action = actors::sample_latent(actor, rng, batch);
  if (n_pairs > 0) z.pairs = actors::sample_latent(actor, rng, batch * static_cast<Eigen::Index>(2 * n_pairs));
  return z;
}

/// y = r + γ(1−d)(min(Q̂₁, Q̂₂)(s', a') + α D̃(s')), fully detached. With
/// n_pairs == 0 the diversity term is omitted.
inline ad::Matrix compute_critic_target(const Batch& batch, const actors::Actor& actor, const CriticEnsemble& critics,
                                        double alpha, double gamma, std::size_t n_pairs, const StepLatents& z) {
  ad::NoGradGuard no_grad;
  const ad::Array s_next = ad::Array::constant(batch.s_next);
  const ad::Array a_next = actors::act(actor, s_next, z.action);
  ad::Matrix next_value =
      ad::minimum(critic_value(critics.q1_target, s_next, a_next), critic_value(critics.q2_target, s_next, a_next))
          .value();
  if (n_pairs > 0) next_value += alpha * detail::diversity_term(actor, s_next, n_pairs, z.pairs).value();
  return batch.r + (gamma * (1.0 - batch.done.array()) * next_value.array()).matrix();
}

inline ad::Matrix compute_critic_target(const Batch& batch, const actors::Actor& actor, const CriticEnsemble& critics,
                                        double alpha, double gamma, std::size_t n_pairs, Rng& rng) {
  return compute_critic_target(batch, actor, critics, alpha, gamma, n_pairs,
                               draw_step_latents(actor, batch.size(), n_pairs, rng));
}

struct CriticLosses {
  double q1 = 0.0;
  double q2 = 0.0;
};

/// One Adam step on each online critic against the shared targets.
inline CriticLosses critic_step(const Batch& batch, const ad::Matrix& targets, CriticEnsemble& critics,
                                nn::AdamState& opt1, nn::AdamState& opt2) {
  const ad::Array s = ad::Array::constant(batch.s);
  const ad::Array a = ad::Array::constant(batch.a);
  const ad::Array y = ad::Array::constant(targets);
  CriticLosses losses;
  auto update = [&](nn::MlpParams& q, nn::AdamState& opt) {
    const ad::Array loss = ad::mean(ad::square(ad::sub(critic_value(q, s, a), y)));
    const auto params = q.parameters();
    const auto grads = ad::gradients(loss, std::span<const ad::Array>(params));
    q = nn::adam_step(q, grads, opt);
    return loss.item();
  };
  losses.q1 = update(critics.q1, opt1);
  losses.q2 = update(critics.q2, opt2);
  return losses;
}

struct ActorStepResult {
  double loss = 0.0;
  double diversity_mean = std::numeric_limits<double>::quiet_NaN();  // NaN when n_pairs == 0
};

/// L_θ = −mean(min(Q₁, Q₂)(s, f(s, z)) + α D̃(s)); critics and α are constants.
inline ActorStepResult actor_step(const ad::Matrix& states, actors::Actor& actor, nn::AdamState& opt,
                                  const CriticEnsemble& critics, double alpha, std::size_t n_pairs,
                                  const StepLatents& z) {
  const ad::Array s = ad::Array::constant(states);
  const ad::Array a = actors::act(actor, s, z.action);
  const auto q1 = frozen(critics.q1);
  const auto q2 = frozen(critics.q2);
  ad::Array objective = ad::mean(ad::minimum(critic_value(q1, s, a), critic_value(q2, s, a)));
  ActorStepResult result;
  if (n_pairs > 0) {
    const ad::Array d = ad::mean(detail::diversity_term(actor, s, n_pairs, z.pairs));
    result.diversity_mean = d.item();
    objective = ad::add(objective, ad::scale(d, alpha));
  }
  const ad::Array loss = ad::scale(objective, -1.0);
  const auto params = actor.net.parameters();
  const auto grads = ad::gradients(loss, std::span<const ad::Array>(params), ad::Unused::zero);
  actor.net = nn::adam_step(actor.net, grads, opt);
  result.loss = loss.item();
  return result;
}

inline ActorStepResult actor_step(const ad::Matrix& states, actors::Actor& actor, nn::AdamState& opt,
                                  const CriticEnsemble& critics, double alpha, std::size_t n_pairs, Rng& rng) {
  return actor_step(states, actor, opt, critics, alpha, n_pairs,
                    draw_step_latents(actor, states.rows(), n_pairs, rng));
}

// ---------------------------------------------------------------------------
// Configuration and learner state

struct TrainConfig {
  double gamma = 0.99;
  double rho = 0.005;
  std::size_t batch_size = 256;
  double replay_ratio = 1.0;
  std::size_t n_pairs = 8;
  double beta = 0.8;
  std::size_t total_steps = 200000;
  std::size_t warmup_steps = 5000;
  std::size_t eval_period = 5000;
  std::size_t eval_episodes = 100;
  std::uint64_t seed = 0;
  actors::ActorKind actor_kind = actors::ActorKind::amortized;
  int diffusion_steps = 20;
  double lr = 3e-4;
  double lr_alpha = 5e-3;
  std::size_t buffer_capacity = 1000000;
  std::vector<std::size_t> hidden{256, 256};
  std::size_t latent_dim = 0;  // amortized only; 0 means |A|
  bool alpha_learnable = true;
  double fixed_alpha = 0.0;
  double initial_w = 0.0;
};

/// Every problem with a config, one message per offending key.
inline std::vector<std::string> validate(const TrainConfig& c) {
  std::vector<std::string> errors;
  auto need = [&](bool ok, const std::string& msg) {
    if (!ok) errors.push_back(msg);
  };
  need(c.gamma > 0.0 && c.gamma <= 1.0, "gamma: must lie in (0, 1]");
  need(c.rho > 0.0 && c.rho <= 1.0, "rho: must lie in (0, 1]");
  need(c.batch_size > 0, "batch_size: must be positive");
  need(c.replay_ratio > 0.0, "replay_ratio: must be positive");
  need(c.beta > 0.0, "beta: must be positive");
  need(c.eval_period > 0, "eval_period: must be positive");
  need(c.eval_episodes > 0, "eval_episodes: must be positive");
  need(c.diffusion_steps >= 1, "diffusion_steps: must be >= 1");
  need(c.lr > 0.0, "lr: must be positive");
  need(c.lr_alpha > 0.0, "lr_alpha: must be positive");
  need(c.buffer_capacity >= c.batch_size, "buffer_capacity: must be at least batch_size");
  need(!c.hidden.empty(), "hidden: need at least one hidden layer");
  for (auto h : c.hidden) need(h > 0, "hidden: layer widths must be positive");
  need(c.warmup_steps >= c.batch_size, "warmup_steps: must be at least batch_size so the first batch can be drawn");
  need(c.alpha_learnable || c.fixed_alpha >= 0.0, "fixed_alpha: must be non-negative");
  return errors;
}

struct Learner {
  actors::Actor actor;
  nn::AdamState actor_opt;
  CriticEnsemble critics;
  nn::AdamState q1_opt;
  nn::AdamState q2_opt;
  TemperatureState temperature;
  std::uint64_t env_steps = 0;
  std::uint64_t gradient_steps = 0;
};

inline constexpr std::size_t kStateDim = 4;
inline constexpr std::size_t kActionDim = 2;

/// Fresh networks. Each network gets its own seed derived from config.seed.
inline Learner make_learner(const TrainConfig& c, std::size_t state_dim = kStateDim, std::size_t action_dim = kActionDim) {
  Learner l;
  actors::ActorOptions opt;
  opt.kind = c.actor_kind;
  opt.state_dim = state_dim;
  opt.action_dim = action_dim;
  opt.hidden = c.hidden;
  opt.latent_dim = c.latent_dim;
  opt.diffusion_steps = c.diffusion_steps;
  opt.seed = mix_seed(c.seed, 101);
  l.actor = actors::make_actor(opt);
  l.critics = make_critics(state_dim, action_dim, c.hidden, mix_seed(c.seed, 102), mix_seed(c.seed, 103));
  const auto ap = l.actor.net.parameters();
  const auto p1 = l.critics.q1.parameters();
  const auto p2 = l.critics.q2.parameters();
  l.actor_opt = nn::adam_init(std::span<const ad::Array>(ap), c.lr);
  l.q1_opt = nn::adam_init(std::span<const ad::Array>(p1), c.lr);
  l.q2_opt = nn::adam_init(std::span<const ad::Array>(p2), c.lr);
  l.temperature.w = c.initial_w;
  l.temperature.lr = c.lr_alpha;
  l.temperature.target = target_diversity(c.beta, action_dim);
  l.temperature.learnable = c.alpha_learnable;
  l.temperature.fixed_alpha = c.fixed_alpha;
  return l;
}

/// Diversity pairs actually evaluated per step. A temperature frozen at exactly
/// zero multiplies the diversity term away, so it is not computed.
inline std::size_t active_pairs(const TrainConfig& c) {
  return (!c.alpha_learnable && c.fixed_alpha == 0.0) ? 0 : c.n_pairs;
}

struct GradientStepResult {
  CriticLosses critic;
  ActorStepResult actor;
};

/// Critic step, actor step, temperature step, then target smoothing.
inline GradientStepResult gradient_step(Learner& l, const Batch& batch, const TrainConfig& c, Rng& rng) {
  const std::size_t pairs = active_pairs(c);
  GradientStepResult out;
  const ad::Matrix y =
      compute_critic_target(batch, l.actor, l.critics, l.temperature.alpha(), c.gamma, pairs, rng);
  out.critic = critic_step(batch, y, l.critics, l.q1_opt, l.q2_opt);
  out.actor = actor_step(batch.s, l.actor, l.actor_opt, l.critics, l.temperature.alpha(), pairs, rng);
  if (pairs > 0) l.temperature = alpha_step(l.temperature, out.actor.diversity_mean);
  l.critics.q1_target = nn::polyak_update(l.critics.q1_target, l.critics.q1, c.rho);
  l.critics.q2_target = nn::polyak_update(l.critics.q2_target, l.critics.q2, c.rho);
  ++l.gradient_steps;
  return out;
}

// ---------------------------------------------------------------------------
// Training loop

struct MetricsRow {
  std::uint64_t env_step = 0;
  std::uint64_t gradient_step = 0;
  double success_rate = 0.0;
  std::size_t reachable_goals = 0;
  double alpha = 0.0;
  double diversity_mean = 0.0;
  double critic_loss = 0.0;
  double actor_loss = 0.0;
};

struct TrainResult {
  Learner learner;
  std::vector<MetricsRow> metrics;
};

inline constexpr std::size_t kDiversityProbeStates = 256;

/// Diversity of the current actor on replay states; drawn from its own stream
/// so logging never perturbs training.
inline double probe_diversity(const Learner& l, const ReplayBuffer& buffer, const TrainConfig& c, std::uint64_t salt) {
  if (buffer.size() == 0 || c.n_pairs == 0) return std::numeric_limits<double>::quiet_NaN();
  Rng rng(mix_seed(c.seed, salt));
  const auto batch = buffer.sample(std::min(kDiversityProbeStates, buffer.size()), rng);
  ad::NoGradGuard no_grad;
  return ad::mean(diversity::estimate_diversity(l.actor, ad::Array::constant(batch.s), c.n_pairs, rng).value).item();
}

using EvalCallback = std::function<void(const Learner&, const MetricsRow&)>;

/// Runs the full loop on `spec`. `on_eval` fires after each metrics row.
inline TrainResult train(const TrainConfig& config, const maze::MazeSpec& spec, const EvalCallback& on_eval = {}) {
  if (const auto errors = validate(config); !errors.empty()) {
    std::string msg = "invalid training config:";
    for (const auto& e : errors) msg += "\n  " + e;
    throw std::invalid_argument(msg);
  }
  TrainResult result{make_learner(config), {}};
  Learner& l = result.learner;
  if (config.total_steps == 0) return result;

  Rng rng(config.seed);
  ReplayBuffer buffer(config.buffer_capacity, kStateDim, kActionDim);
  auto [state, obs] = maze::reset(spec, rng);

  double critic_loss_sum = 0.0;
  double actor_loss_sum = 0.0;
  std::size_t loss_count = 0;
  std::size_t eval_index = 0;

  for (std::size_t t = 1; t <= config.total_steps; ++t) {
    maze::Action action;
    if (t <= config.warmup_steps) {
      action = {rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)};
    } else {
      ad::NoGradGuard no_grad;
      const auto a = actors::act(l.actor, ad::Array::vector(obs), actors::sample_latent(l.actor, rng)).to_vector();
      action = {a[0], a[1]};
    }
    const auto out = maze::step(spec, state, action);
    buffer.push({std::vector<double>(obs.begin(), obs.end()), {action[0], action[1]}, out.reward,
                 std::vector<double>(out.observation.begin(), out.observation.end()),
                 out.info.goal_id >= 0 ? 1.0 : 0.0});
    l.env_steps = t;
    if (out.done) {
      const auto fresh = maze::reset(spec, rng);
      state = fresh.state;
      obs = fresh.observation;
    } else {
      state = out.state;
      obs = out.observation;
    }

    if (t > config.warmup_steps) {
      const double due = static_cast<double>(t - config.warmup_steps) * config.replay_ratio;
      while (static_cast<double>(l.gradient_steps) < due) {
        const Batch batch = buffer.sample(config.batch_size, rng);
        const auto step = gradient_step(l, batch, config, rng);
        critic_loss_sum += 0.5 * (step.critic.q1 + step.critic.q2);
        actor_loss_sum += step.actor.loss;
        ++loss_count;
      }
    }

    if (t % config.eval_period == 0) {
      Rng eval_rng(mix_seed(config.seed, 1000 + eval_index));
      const auto report = eval::evaluate(l.actor, spec, config.eval_episodes, eval_rng);
      MetricsRow row;
      row.env_step = t;
      row.gradient_step = l.gradient_steps;
      row.success_rate = report.success_rate;
      row.reachable_goals = report.reachable_goals;
      row.alpha = l.temperature.alpha();
      row.diversity_mean = probe_diversity(l, buffer, config, 500000 + eval_index);
      const double n = loss_count ? static_cast<double>(loss_count) : std::numeric_limits<double>::quiet_NaN();
      row.critic_loss = critic_loss_sum / n;
      row.actor_loss = actor_loss_sum / n;
      critic_loss_sum = actor_loss_sum = 0.0;
      loss_count = 0;
      ++eval_index;
      result.metrics.push_back(row);
      if (on_eval) on_eval(l, row);
    }
  }
  return result;
}

}  // namespace drac
