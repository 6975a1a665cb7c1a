#pragma once

// Multi-goal point maze. A point mass with damped velocity control moves through
// a grid of cells; reaching any goal pays +100 and ends the episode.
//
// Continuous coordinates: x grows with the column index, y grows upwards, one
// unit per cell. Text row r (0 = top line of the map file) covers
// y ∈ [rows−1−r, rows−r).

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "drac/random.hpp"

namespace drac::maze {

inline constexpr double kVelocityDecay = 0.9;
inline constexpr double kActionGain = 0.1;
inline constexpr double kTimeStep = 0.25;
inline constexpr double kGoalReward = 100.0;
inline constexpr double kWallGap = 1e-9;

class MapError : public std::invalid_argument {
 public:
  enum class Kind { ragged_rows, unknown_character, missing_start, multiple_starts, no_goals, open_boundary, empty };

  MapError(Kind kind, const std::string& message) : std::invalid_argument(message), kind_(kind) {}
  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

struct Vec2 {
  double x = 0.0;
  double y = 0.0;
};

struct Goal {
  int id = 0;  // row-major index in the original map; survives perturbation
  int row = 0;
  int col = 0;
};

struct MazeSpec {
  std::vector<std::string> grid;
  int rows = 0;
  int cols = 0;
  int start_row = 0;
  int start_col = 0;
  std::vector<Goal> goals;
  std::size_t total_goals = 0;  // goal count before any removal
  double goal_radius = 0.45;
  int horizon = 300;
  double start_jitter = 0.1;

  char at(int row, int col) const { return grid[static_cast<std::size_t>(row)][static_cast<std::size_t>(col)]; }

  /// 'O' cells are free until perturb(obstacle) turns them into '#'.
  bool is_wall(int row, int col) const {
    if (row < 0 || col < 0 || row >= rows || col >= cols) return true;
    return at(row, col) == '#';
  }

  Vec2 cell_center(int row, int col) const { return {col + 0.5, rows - row - 0.5}; }

  int row_of(double y) const { return rows - 1 - static_cast<int>(std::floor(y)); }
  static int col_of(double x) { return static_cast<int>(std::floor(x)); }

  bool is_wall_at(double x, double y) const { return is_wall(row_of(y), col_of(x)); }
};

inline MazeSpec parse_map(std::string_view text) {
  std::vector<std::string> lines;
  std::string current;
  for (char ch : text) {
    if (ch == '\n') {
      lines.push_back(current);
      current.clear();
    } else {
      current.push_back(ch);
    }
  }
  if (!current.empty()) lines.push_back(current);
  while (!lines.empty() && lines.back().empty()) lines.pop_back();
  if (lines.empty()) throw MapError(MapError::Kind::empty, "map is empty");

  MazeSpec spec;
  spec.rows = static_cast<int>(lines.size());
  spec.cols = static_cast<int>(lines.front().size());
  int starts = 0;
  for (int r = 0; r < spec.rows; ++r) {
    const auto& line = lines[static_cast<std::size_t>(r)];
    if (static_cast<int>(line.size()) != spec.cols) {
      throw MapError(MapError::Kind::ragged_rows, "row " + std::to_string(r) + " has " + std::to_string(line.size()) +
                                                      " cells, expected " + std::to_string(spec.cols));
    }
    for (int c = 0; c < spec.cols; ++c) {
      const char ch = line[static_cast<std::size_t>(c)];
      switch (ch) {
        case '#':
        case '.':
        case 'O':
          break;
        case 'S':
          ++starts;
          spec.start_row = r;
          spec.start_col = c;
          break;
        case 'G':
          spec.goals.push_back({static_cast<int>(spec.goals.size()), r, c});
          break;
        default:
          throw MapError(MapError::Kind::unknown_character, "unknown character '" + std::string(1, ch) + "' at row " +
                                                                std::to_string(r) + ", column " + std::to_string(c));
      }
      const bool boundary = r == 0 || c == 0 || r == spec.rows - 1 || c == spec.cols - 1;
      if (boundary && ch != '#') {
        throw MapError(MapError::Kind::open_boundary,
                       "boundary cell at row " + std::to_string(r) + ", column " + std::to_string(c) + " is not a wall");
      }
    }
  }
  if (starts == 0) throw MapError(MapError::Kind::missing_start, "map has no start cell 'S'");
  if (starts > 1) throw MapError(MapError::Kind::multiple_starts, "map has " + std::to_string(starts) + " start cells");
  if (spec.goals.empty()) throw MapError(MapError::Kind::no_goals, "map has zero goals");
  spec.grid = std::move(lines);
  spec.total_goals = spec.goals.size();
  return spec;
}

inline MazeSpec load_map(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open map file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_map(buf.str());
}

struct EnvState {
  Vec2 position;
  Vec2 velocity;
  int steps = 0;
};

using Observation = std::array<double, 4>;
using Action = std::array<double, 2>;

/// (x, y) scaled to [−1, 1] by the map extents, followed by the raw velocity.
inline Observation observe(const MazeSpec& spec, const EnvState& state) {
  return {2.0 * state.position.x / spec.cols - 1.0, 2.0 * state.position.y / spec.rows - 1.0, state.velocity.x,
          state.velocity.y};
}

struct Reset {
  EnvState state;
  Observation observation;
};

/// Start-cell center plus uniform jitter in both axes (two draws, x then y).
inline Reset reset(const MazeSpec& spec, Rng& rng) {
  EnvState s;
  s.position = spec.cell_center(spec.start_row, spec.start_col);
  const double jx = rng.uniform(-spec.start_jitter, spec.start_jitter);
  const double jy = rng.uniform(-spec.start_jitter, spec.start_jitter);
  s.position.x += jx;
  s.position.y += jy;
  return {s, observe(spec, s)};
}

struct StepInfo {
  int goal_id = -1;
  bool truncated = false;
  bool action_clipped = false;
};

struct StepResult {
  EnvState state;
  Observation observation;
  double reward = 0.0;
  bool done = false;
  StepInfo info;
};

namespace detail {

// Moves along one axis; a wall in the destination cell stops the motion at the face.
inline void move_axis(const MazeSpec& spec, double& coord, double& vel, double other, bool is_x) {
  const double next = coord + kTimeStep * vel;
  const bool blocked = is_x ? spec.is_wall_at(next, other) : spec.is_wall_at(other, next);
  if (!blocked) {
    coord = next;
    return;
  }
  const double face = vel > 0.0 ? std::floor(next) - kWallGap : std::floor(coord);
  coord = vel > 0.0 ? std::max(coord, face) : face;
  vel = 0.0;
}

}  // namespace detail

inline StepResult step(const MazeSpec& spec, const EnvState& state, Action action) {
  StepResult out;
  for (auto& a : action) {
    if (std::isnan(a)) {
      a = 0.0;
      out.info.action_clipped = true;
    } else if (a < -1.0 || a > 1.0) {
      a = std::clamp(a, -1.0, 1.0);
      out.info.action_clipped = true;
    }
  }
  EnvState s = state;
  s.velocity.x = kVelocityDecay * s.velocity.x + kActionGain * action[0];
  s.velocity.y = kVelocityDecay * s.velocity.y + kActionGain * action[1];
  detail::move_axis(spec, s.position.x, s.velocity.x, s.position.y, true);
  detail::move_axis(spec, s.position.y, s.velocity.y, s.position.x, false);
  s.steps += 1;

  for (const auto& g : spec.goals) {
    const Vec2 c = spec.cell_center(g.row, g.col);
    if (std::hypot(s.position.x - c.x, s.position.y - c.y) <= spec.goal_radius) {
      out.reward = kGoalReward;
      out.done = true;
      out.info.goal_id = g.id;
      break;
    }
  }
  if (!out.done && s.steps >= spec.horizon) {
    out.done = true;
    out.info.truncated = true;
  }
  out.state = s;
  out.observation = observe(spec, s);
  return out;
}

enum class Perturbation { none, removal, obstacle };

inline Perturbation parse_perturbation(std::string_view name) {
  if (name == "none" || name == "plain") return Perturbation::none;
  if (name == "removal") return Perturbation::removal;
  if (name == "obstacle") return Perturbation::obstacle;
  throw std::invalid_argument("unknown perturbation '" + std::string(name) + "'");
}

/// removal: delete ⌈G/2⌉ goals chosen uniformly without replacement.
/// obstacle: every 'O' cell becomes a wall. none: unchanged.
inline MazeSpec perturb(const MazeSpec& spec, Perturbation kind, Rng& rng) {
  MazeSpec out = spec;
  switch (kind) {
    case Perturbation::none:
      break;
    case Perturbation::removal: {
      const std::size_t g = spec.goals.size();
      if (g < 2) throw std::invalid_argument("removal perturbation needs at least 2 goals, map has " + std::to_string(g));
      const std::size_t remove = (g + 1) / 2;
      std::vector<std::size_t> idx(g);
      for (std::size_t i = 0; i < g; ++i) idx[i] = i;
      // partial Fisher-Yates: the first `remove` entries are the deleted goals
      for (std::size_t i = 0; i < remove; ++i) std::swap(idx[i], idx[i + rng.index(g - i)]);
      std::set<std::size_t> gone(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(remove));
      out.goals.clear();
      for (std::size_t i = 0; i < g; ++i) {
        const auto& goal = spec.goals[i];
        if (gone.count(i)) {
          out.grid[static_cast<std::size_t>(goal.row)][static_cast<std::size_t>(goal.col)] = '.';
        } else {
          out.goals.push_back(goal);
        }
      }
      break;
    }
    case Perturbation::obstacle:
      for (auto& line : out.grid) std::replace(line.begin(), line.end(), 'O', '#');
      break;
  }
  return out;
}

}  // namespace drac::maze
