#include <gtest/gtest.h>

#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "drac/eval.hpp"
#include "support/oracles.hpp"

namespace eval = drac::eval;
namespace maze = drac::maze;
namespace fs = std::filesystem;
using drac::testing::map_path;

namespace {

maze::MazeSpec simple_map() { return maze::load_map(map_path("simple")); }

maze::MazeSpec simple_without_obstacles() {
  auto text = std::string{};
  std::ifstream in(map_path("simple"));
  for (std::string line; std::getline(in, line);) {
    std::replace(line.begin(), line.end(), 'O', '.');
    text += line + "\n";
  }
  return maze::parse_map(text);
}

double binomial_se(double p, std::size_t n) { return std::sqrt(p * (1.0 - p) / static_cast<double>(n)); }

std::vector<std::vector<std::string>> read_csv(const fs::path& path) {
  std::vector<std::vector<std::string>> rows;
  std::ifstream in(path);
  for (std::string line; std::getline(in, line);) {
    std::vector<std::string> cells;
    std::size_t start = 0;
    for (std::size_t i = 0; i <= line.size(); ++i) {
      if (i == line.size() || line[i] == ',') {
        cells.push_back(line.substr(start, i - start));
        start = i + 1;
      }
    }
    rows.push_back(cells);
  }
  return rows;
}

fs::path scratch_file(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("drac_eval_tests_" + std::to_string(getpid()));
  fs::create_directories(dir);
  return dir / name;
}

}  // namespace

TEST(Evaluate, StationaryAgentNeverSucceeds) {
  for (const std::string name : {"simple", "medium", "hard"}) {
    drac::Rng rng(1);
    const auto report = eval::evaluate(drac::testing::stationary_policy(), maze::load_map(map_path(name)), 10, rng);
    EXPECT_EQ(report.success_rate, 0.0);
    EXPECT_EQ(report.reachable_goals, 0u);
    EXPECT_EQ(report.mean_episode_length, 300.0);
  }
}

TEST(Evaluate, ScriptedGoalPolicy) {
  const auto spec = simple_map();
  drac::Rng rng(2);
  const auto report = eval::evaluate(drac::testing::goal_policy(spec, 0), spec, 20, rng);
  EXPECT_EQ(report.success_rate, 1.0);
  EXPECT_EQ(report.reachable_goals, 1u);
  EXPECT_EQ(report.per_goal_counts.at(0), 20u);
  EXPECT_EQ(report.total_goals, 4u);
  EXPECT_LT(report.mean_episode_length, 300.0);
}

TEST(Evaluate, CoveringPolicyReachesAllGoals) {
  const auto spec = simple_map();
  drac::Rng rng(3);
  const auto report = eval::evaluate(drac::testing::covering_policy(spec), spec, 100, rng);
  EXPECT_EQ(report.success_rate, 1.0);
  EXPECT_EQ(report.reachable_goals, 4u);
  std::size_t total = 0;
  for (const auto& [goal, count] : report.per_goal_counts) total += count;
  EXPECT_EQ(total, 100u);
}

TEST(Evaluate, ReproducibleGivenSeed) {
  const auto spec = maze::load_map(map_path("medium"));
  drac::Rng a(9), b(9);
  const auto ra = eval::evaluate(drac::testing::covering_policy(spec), spec, 30, a);
  const auto rb = eval::evaluate(drac::testing::covering_policy(spec), spec, 30, b);
  EXPECT_EQ(ra.per_goal_counts, rb.per_goal_counts);
  EXPECT_EQ(ra.mean_episode_length, rb.mean_episode_length);
}

TEST(Evaluate, ZeroEpisodesIsAnError) {
  drac::Rng rng(1);
  EXPECT_THROW(eval::evaluate(drac::testing::stationary_policy(), simple_map(), 0, rng), std::invalid_argument);
  EXPECT_THROW(eval::five_episode_success(drac::testing::stationary_policy(), simple_map(), 0, rng),
               std::invalid_argument);
}

TEST(Reachable, ThresholdRule) {
  EXPECT_EQ(eval::reachable_threshold(100), 5u);
  EXPECT_EQ(eval::reachable_threshold(1), 1u);
  EXPECT_EQ(eval::reachable_threshold(10), 1u);
  EXPECT_EQ(eval::reachable_threshold(101), 6u);
  EXPECT_EQ(eval::count_reachable({{0, 30}, {1, 30}, {2, 30}, {3, 10}}, 100), 4u);
  EXPECT_EQ(eval::count_reachable({{0, 90}, {1, 5}, {2, 4}, {3, 1}}, 100), 2u);
  EXPECT_EQ(eval::count_reachable({}, 100), 0u);
}

TEST(Reachable, NonincreasingUnderRemoval) {
  const auto spec = maze::load_map(map_path("medium"));
  const auto policy = drac::testing::covering_policy(spec);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    drac::Rng rng(seed);
    const auto removed = maze::perturb(spec, maze::Perturbation::removal, rng);
    const auto full = eval::evaluate(policy, spec, 60, rng);
    const auto cut = eval::evaluate(policy, removed, 60, rng);
    EXPECT_LE(cut.reachable_goals, full.reachable_goals);
    EXPECT_LE(cut.reachable_goals, removed.goals.size());
  }
}

TEST(FiveEpisode, AlwaysAndNever) {
  const auto spec = simple_map();
  drac::Rng rng(4);
  EXPECT_EQ(eval::five_episode_success(drac::testing::goal_policy(spec, 1), spec, 20, rng), 1.0);
  EXPECT_EQ(eval::five_episode_success(drac::testing::stationary_policy(), spec, 5, rng), 0.0);
}

TEST(FiveEpisode, CoinPolicyMatchesBinomialIdentity) {
  const auto spec = simple_map();
  drac::Rng rng(5);
  const std::size_t repeats = 2000;
  const double expected = 1.0 - std::pow(0.5, 5);
  EXPECT_DOUBLE_EQ(expected, 0.96875);
  const double got = eval::five_episode_success(drac::testing::coin_policy(spec, 0.5), spec, repeats, rng);
  EXPECT_NEAR(got, expected, 3.0 * binomial_se(expected, repeats));
}

TEST(FiveEpisode, AtLeastSingleEpisodeSuccess) {
  const auto spec = simple_map();
  for (double p : {0.05, 0.2, 0.6}) {
    drac::Rng rng(6);
    const std::size_t n = 600;
    const auto policy = drac::testing::coin_policy(spec, p);
    const double single = eval::evaluate(policy, spec, n, rng).success_rate;
    const double five = eval::five_episode_success(policy, spec, n, rng);
    EXPECT_GE(five + 3.0 * (binomial_se(single, n) + binomial_se(five, n)), single) << "p = " << p;
    EXPECT_NEAR(five, 1.0 - std::pow(1.0 - p, 5), 3.0 * binomial_se(1.0 - std::pow(1.0 - p, 5), n) + 1e-9);
  }
}

TEST(Robustness, ObstacleWithoutMarkedCellsIsPlainFiveEpisode) {
  const auto spec = simple_without_obstacles();
  const auto policy = drac::testing::coin_policy(spec, 0.3);
  drac::Rng rng(7);
  drac::Rng replay = rng;
  const auto report = eval::robustness_suite(policy, spec, rng, 200);
  const auto removed = maze::perturb(spec, maze::Perturbation::removal, replay);
  eval::five_episode_success(policy, removed, 200, replay);
  EXPECT_EQ(report.obstacle, eval::five_episode_success(policy, spec, 200, replay));
}

TEST(Robustness, RemovedTargetGivesZero) {
  const auto spec = simple_map();
  const auto policy = drac::testing::goal_policy(spec, 0);
  int checked = 0;
  for (std::uint64_t seed = 0; checked < 2 && seed < 50; ++seed) {
    drac::Rng probe(seed);
    const auto removed = maze::perturb(spec, maze::Perturbation::removal, probe);
    const bool gone = std::none_of(removed.goals.begin(), removed.goals.end(), [](const auto& g) { return g.id == 0; });
    if (!gone) continue;
    drac::Rng rng(seed);
    EXPECT_EQ(eval::robustness_suite(policy, spec, rng, 40).removal, 0.0);
    ++checked;
  }
  EXPECT_EQ(checked, 2);
}

TEST(Robustness, CoveringOracleUnderRemoval) {
  const auto spec = simple_map();
  drac::Rng rng(8);
  const auto report = eval::robustness_suite(drac::testing::covering_policy(spec), spec, rng);
  const double expected = 1.0 - std::pow(0.5, 5);
  EXPECT_NEAR(report.removal, expected, 3.0 * binomial_se(expected, eval::kRobustnessRepeats));
}

TEST(Robustness, SingleGoalMapPropagatesError) {
  const auto spec = maze::parse_map("#####\n#G..#\n#.S.#\n#...#\n#####\n");
  drac::Rng rng(1);
  EXPECT_THROW(eval::robustness_suite(drac::testing::stationary_policy(), spec, rng, 5), std::invalid_argument);
}

TEST(Export, ZeroEpisodesIsHeaderOnly) {
  const auto path = scratch_file("empty.csv");
  drac::Rng rng(1);
  eval::export_trajectories(drac::testing::stationary_policy(), simple_map(), 0, rng, path);
  const auto rows = read_csv(path);
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_EQ(rows[0], (std::vector<std::string>{"episode", "step", "x", "y", "reward", "goal_id"}));
}

TEST(Export, StationaryEpisodeFillsHorizon) {
  const auto path = scratch_file("stationary.csv");
  drac::Rng rng(1);
  eval::export_trajectories(drac::testing::stationary_policy(), simple_map(), 1, rng, path);
  const auto rows = read_csv(path);
  ASSERT_EQ(rows.size(), 301u);
  for (std::size_t i = 1; i < rows.size(); ++i) {
    EXPECT_EQ(rows[i][0], "0");
    EXPECT_EQ(std::stoi(rows[i][1]), static_cast<int>(i));
    EXPECT_EQ(rows[i][2], rows[1][2]);
    EXPECT_EQ(rows[i][3], rows[1][3]);
    EXPECT_EQ(rows[i][5], "-1");
  }
}

TEST(Export, ScriptedEpisodeEndsOnGoal) {
  const auto path = scratch_file("scripted.csv");
  const auto spec = simple_map();
  drac::Rng rng(1);
  eval::export_trajectories(drac::testing::goal_policy(spec, 2), spec, 3, rng, path);
  const auto rows = read_csv(path);
  ASSERT_GT(rows.size(), 3u);
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const bool last = i + 1 == rows.size() || rows[i + 1][0] != rows[i][0];
    if (last) {
      EXPECT_EQ(std::stod(rows[i][4]), 100.0);
      EXPECT_EQ(rows[i][5], "2");
    } else {
      EXPECT_EQ(std::stod(rows[i][4]), 0.0);
    }
  }
  EXPECT_EQ(rows.back()[0], "2");
}

TEST(Export, UnwritablePathIsAnError) {
  drac::Rng rng(1);
  EXPECT_THROW(eval::export_trajectories(drac::testing::stationary_policy(), simple_map(), 1, rng,
                                         "/nonexistent-dir/out.csv"),
               std::runtime_error);
}
