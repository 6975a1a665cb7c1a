// drac: train, evaluate and plot diversity-regularized actor-critic agents on
// the multi-goal point maze.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "drac/checkpoint.hpp"
#include "drac/config.hpp"
#include "drac/drac.hpp"
#include "drac/eval.hpp"
#include "drac/maze.hpp"
#include "drac/plot.hpp"
#include "drac/run_files.hpp"

namespace fs = std::filesystem;

namespace {

struct TrainArgs {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
};

struct EvalArgs {
  std::string checkpoint;
  std::string map;
  std::string perturb = "none";
  long episodes = 100;
  std::uint64_t seed = 0;
  std::string out;
  long repeats = 0;
  std::string trajectories;
  long trajectory_episodes = 20;
};

struct PlotArgs {
  std::string trajectories;
  std::string map;
  std::string out;
};

int run_train(const TrainArgs& args) {
  const fs::path config_path(args.config);
  const auto seed = args.seed ? *args.seed : drac::config::parse_config(drac::config::read_file(args.config)).train.seed;
  const fs::path dir = args.out.empty() ? drac::run::default_run_dir(config_path, seed) : fs::path(args.out);
  drac::run::train_run(config_path, args.seed, dir, [](const drac::Learner&, const drac::MetricsRow& row) {
    std::printf("step %llu  success %.3f  goals %zu  alpha %.4f  D %.4f  critic %.4g  actor %.4g\n",
                static_cast<unsigned long long>(row.env_step), row.success_rate, row.reachable_goals, row.alpha,
                row.diversity_mean, row.critic_loss, row.actor_loss);
    std::fflush(stdout);
  });
  std::cout << "run directory: " << dir.string() << "\n";
  return 0;
}

int run_eval(const EvalArgs& args) {
  if (args.episodes < 1) throw std::invalid_argument("--episodes: episodes must be >= 1");
  if (args.repeats < 0) throw std::invalid_argument("--repeats: must be >= 0");
  const auto learner = drac::checkpoint::load(args.checkpoint);
  if (learner.actor.state_dim != drac::kStateDim || learner.actor.action_dim != drac::kActionDim) {
    throw std::runtime_error("checkpoint dimensions do not match the maze (state 4, action 2)");
  }
  const auto base = drac::maze::load_map(args.map);
  const auto kind = drac::maze::parse_perturbation(args.perturb);

  drac::Rng rng(args.seed);
  const auto spec = drac::maze::perturb(base, kind, rng);
  const auto policy = drac::eval::actor_policy(learner.actor);
  const auto report = drac::eval::evaluate(policy, spec, static_cast<std::size_t>(args.episodes), rng);
  std::optional<double> five;
  if (args.repeats > 0) five = drac::eval::five_episode_success(policy, spec, static_cast<std::size_t>(args.repeats), rng);

  std::printf("%-22s %s\n", "actor", std::string(drac::actors::to_string(learner.actor.kind)).c_str());
  std::printf("%-22s %s\n", "perturbation", args.perturb.c_str());
  std::printf("%-22s %zu / %zu\n", "goals present", spec.goals.size(), spec.total_goals);
  std::printf("%-22s %zu\n", "episodes", report.episodes);
  std::printf("%-22s %.4f\n", "success rate", report.success_rate);
  std::printf("%-22s %zu\n", "reachable goals", report.reachable_goals);
  std::printf("%-22s %.2f\n", "mean episode length", report.mean_episode_length);
  if (five) std::printf("%-22s %.4f (%ld blocks)\n", "five-episode success", *five, args.repeats);
  std::printf("%-22s", "per-goal counts");
  for (const auto& g : spec.goals) {
    const auto it = report.per_goal_counts.find(g.id);
    std::printf(" %d:%zu", g.id, it == report.per_goal_counts.end() ? std::size_t{0} : it->second);
  }
  std::printf("\n");

  nlohmann::json j;
  j["checkpoint"] = args.checkpoint;
  j["map"] = args.map;
  j["perturb"] = args.perturb;
  j["seed"] = args.seed;
  j["episodes"] = report.episodes;
  j["success_rate"] = report.success_rate;
  j["reachable_goals"] = report.reachable_goals;
  j["total_goals"] = report.total_goals;
  j["mean_episode_length"] = report.mean_episode_length;
  nlohmann::json counts = nlohmann::json::object();
  for (const auto& [goal, count] : report.per_goal_counts) counts[std::to_string(goal)] = count;
  j["per_goal_counts"] = counts;
  nlohmann::json present = nlohmann::json::array();
  for (const auto& g : spec.goals) present.push_back(g.id);
  j["goals_present"] = present;
  j["five_episode_success"] = five ? nlohmann::json(*five) : nlohmann::json(nullptr);

  const fs::path out = args.out.empty() ? fs::path(args.checkpoint).replace_extension(".eval.json") : fs::path(args.out);
  drac::run::write_text_atomic(out, j.dump(2) + "\n");
  std::cout << "report: " << out.string() << "\n";

  if (!args.trajectories.empty()) {
    drac::eval::export_trajectories(policy, spec, static_cast<std::size_t>(args.trajectory_episodes), rng,
                                    args.trajectories);
    std::cout << "trajectories: " << args.trajectories << "\n";
  }
  return 0;
}

int run_plot(const PlotArgs& args) {
  const auto spec = drac::maze::load_map(args.map);
  std::ifstream in(args.trajectories, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open trajectory file '" + args.trajectories + "'");
  const auto episodes = drac::plot::read_trajectories(in);
  drac::run::write_text_atomic(args.out, drac::plot::render_svg(spec, episodes));
  std::cout << "wrote " << args.out << " (" << episodes.size() << " episodes)\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Diversity-regularized actor-critic on the multi-goal point maze"};
  app.require_subcommand(1);

  TrainArgs train_args;
  auto* train = app.add_subcommand("train", "Train an agent from a config file");
  train->add_option("--config", train_args.config, "Config file (key = value lines)")->required()->check(CLI::ExistingFile);
  train->add_option("--out", train_args.out, "Run directory (default runs/<config>-seed<seed>)");
  train->add_option("--seed", train_args.seed, "Override the config's seed");

  EvalArgs eval_args;
  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint");
  ev->add_option("--checkpoint", eval_args.checkpoint, "Checkpoint file")->required()->check(CLI::ExistingFile);
  ev->add_option("--map", eval_args.map, "Map file")->required()->check(CLI::ExistingFile);
  ev->add_option("--perturb", eval_args.perturb, "none | removal | obstacle")
      ->check(CLI::IsMember({"none", "removal", "obstacle"}));
  ev->add_option("--episodes", eval_args.episodes, "Evaluation episodes (>= 1)");
  ev->add_option("--seed", eval_args.seed, "Evaluation seed");
  ev->add_option("--out", eval_args.out, "Report file (JSON)");
  ev->add_option("--repeats", eval_args.repeats, "Also estimate five-episode success over this many blocks");
  ev->add_option("--trajectories", eval_args.trajectories, "Also export trajectories to this CSV");
  ev->add_option("--trajectory-episodes", eval_args.trajectory_episodes, "Episodes to export");

  PlotArgs plot_args;
  auto* pl = app.add_subcommand("plot", "Render trajectories over a maze as SVG");
  pl->add_option("trajectories", plot_args.trajectories, "Trajectory CSV")->required()->check(CLI::ExistingFile);
  pl->add_option("--map", plot_args.map, "Map file")->required()->check(CLI::ExistingFile);
  pl->add_option("--out", plot_args.out, "Output SVG")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train) return run_train(train_args);
    if (*ev) return run_eval(eval_args);
    if (*pl) return run_plot(plot_args);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
