#pragma once

// Evaluation protocols on the point maze: success rate, reachable goals,
// five-episode success under perturbations, and trajectory export.
//
// A policy is any callable `Action(const Observation&, int step, Rng&)`. Each
// episode owns an Rng derived from a root seed and the episode index, so
// reports do not depend on the order episodes run in. Step 0 marks the start
// of an episode, which lets scripted policies reset per-episode state.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "drac/actors.hpp"
#include "drac/autodiff.hpp"
#include "drac/maze.hpp"
#include "drac/random.hpp"

namespace drac::eval {

using maze::Action;
using maze::Observation;
using Policy = std::function<Action(const Observation&, int, Rng&)>;

inline constexpr double kReachableFraction = 0.05;
inline constexpr std::size_t kRobustnessRepeats = 400;
inline constexpr std::size_t kEpisodesPerBlock = 5;

/// Stochastic actor policy: a fresh latent every step.
inline Policy actor_policy(const actors::Actor& actor) {
  return [actor](const Observation& obs, int, Rng& rng) {
    ad::NoGradGuard no_grad;
    const ad::Array state = ad::Array::vector(obs);
    const auto a = actors::act(actor, state, actors::sample_latent(actor, rng)).to_vector();
    return Action{a[0], a[1]};
  };
}

struct TrajectoryPoint {
  int step = 0;
  double x = 0.0;
  double y = 0.0;
  double reward = 0.0;
  int goal_id = -1;
};

struct EpisodeResult {
  bool success = false;
  int goal_id = -1;
  int length = 0;
  std::vector<TrajectoryPoint> trajectory;
};

inline EpisodeResult run_episode(const Policy& policy, const maze::MazeSpec& spec, Rng& rng, bool record = false) {
  auto [state, obs] = maze::reset(spec, rng);
  EpisodeResult result;
  for (int t = 0;; ++t) {
    const auto out = maze::step(spec, state, policy(obs, t, rng));
    state = out.state;
    obs = out.observation;
    if (record) result.trajectory.push_back({state.steps, state.position.x, state.position.y, out.reward, out.info.goal_id});
    if (out.done) {
      result.success = out.info.goal_id >= 0;
      result.goal_id = out.info.goal_id;
      result.length = state.steps;
      return result;
    }
  }
}

inline Rng episode_rng(std::uint64_t root, std::size_t episode) { return Rng(mix_seed(root, episode)); }

struct EvalReport {
  std::size_t episodes = 0;
  double success_rate = 0.0;
  std::map<int, std::size_t> per_goal_counts;
  std::size_t reachable_goals = 0;
  std::size_t total_goals = 0;
  double mean_episode_length = 0.0;
};

/// A goal is reachable when hit in at least max(1, ⌈5% of episodes⌉) episodes.
inline std::size_t reachable_threshold(std::size_t episodes) {
  const auto t = static_cast<std::size_t>(std::ceil(kReachableFraction * static_cast<double>(episodes) - 1e-12));
  return std::max<std::size_t>(1, t);
}

inline std::size_t count_reachable(const std::map<int, std::size_t>& per_goal_counts, std::size_t episodes) {
  const auto threshold = reachable_threshold(episodes);
  std::size_t n = 0;
  for (const auto& [goal, count] : per_goal_counts) {
    if (count >= threshold) ++n;
  }
  return n;
}

inline EvalReport evaluate(const Policy& policy, const maze::MazeSpec& spec, std::size_t episodes, Rng& rng) {
  if (episodes == 0) throw std::invalid_argument("evaluate: episodes must be >= 1");
  const std::uint64_t root = rng.next_u64();
  EvalReport report;
  report.episodes = episodes;
  report.total_goals = spec.total_goals;
  std::size_t successes = 0;
  double total_length = 0.0;
  for (std::size_t e = 0; e < episodes; ++e) {
    Rng erng = episode_rng(root, e);
    const auto res = run_episode(policy, spec, erng);
    total_length += res.length;
    if (res.success) {
      ++successes;
      ++report.per_goal_counts[res.goal_id];
    }
  }
  report.success_rate = static_cast<double>(successes) / static_cast<double>(episodes);
  report.mean_episode_length = total_length / static_cast<double>(episodes);
  report.reachable_goals = count_reachable(report.per_goal_counts, episodes);
  return report;
}

inline EvalReport evaluate(const actors::Actor& actor, const maze::MazeSpec& spec, std::size_t episodes, Rng& rng) {
  return evaluate(actor_policy(actor), spec, episodes, rng);
}

/// Fraction of `repeats` blocks of five independent episodes with at least one success.
inline double five_episode_success(const Policy& policy, const maze::MazeSpec& spec, std::size_t repeats, Rng& rng) {
  if (repeats == 0) throw std::invalid_argument("five_episode_success: repeats must be >= 1");
  const std::uint64_t root = rng.next_u64();
  std::size_t hits = 0;
  for (std::size_t b = 0; b < repeats; ++b) {
    for (std::size_t k = 0; k < kEpisodesPerBlock; ++k) {
      Rng erng = episode_rng(root, b * kEpisodesPerBlock + k);
      if (run_episode(policy, spec, erng).success) {
        ++hits;
        break;
      }
    }
  }
  return static_cast<double>(hits) / static_cast<double>(repeats);
}

struct RobustnessReport {
  double removal = 0.0;
  double obstacle = 0.0;
};

/// Removal is drawn first, then both scenarios are evaluated on separate streams.
inline RobustnessReport robustness_suite(const Policy& policy, const maze::MazeSpec& spec, Rng& rng,
                                         std::size_t repeats = kRobustnessRepeats) {
  const auto removed = maze::perturb(spec, maze::Perturbation::removal, rng);
  const auto blocked = maze::perturb(spec, maze::Perturbation::obstacle, rng);
  RobustnessReport r;
  r.removal = five_episode_success(policy, removed, repeats, rng);
  r.obstacle = five_episode_success(policy, blocked, repeats, rng);
  return r;
}

inline constexpr const char* kTrajectoryHeader = "episode,step,x,y,reward,goal_id";

/// CSV of post-step positions: one row per environment step, one header row.
inline void export_trajectories(const Policy& policy, const maze::MazeSpec& spec, std::size_t episodes, Rng& rng,
                                const std::filesystem::path& path) {
  const std::uint64_t root = rng.next_u64();
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write trajectory file '" + path.string() + "'");
    out.precision(17);
    out << kTrajectoryHeader << '\n';
    for (std::size_t e = 0; e < episodes; ++e) {
      Rng erng = episode_rng(root, e);
      const auto res = run_episode(policy, spec, erng, true);
      for (const auto& p : res.trajectory) {
        out << e << ',' << p.step << ',' << p.x << ',' << p.y << ',' << p.reward << ',' << p.goal_id << '\n';
      }
    }
    if (!out) throw std::runtime_error("failed writing trajectory file '" + path.string() + "'");
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace drac::eval
