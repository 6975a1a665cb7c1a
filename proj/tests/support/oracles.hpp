#pragma once

// Test-only oracles. Nothing here calls into the code paths it is used to check:
// the scripted policies plan with their own BFS, and PlainTd3Step
// backpropagates by hand with Eigen instead of using the autodiff engine.

#include <Eigen/Core>

#include <array>
#include <cmath>
#include <deque>
#include <limits>
#include <string>
#include <vector>

#include "drac/eval.hpp"
#include "drac/maze.hpp"
#include "drac/nn.hpp"
#include "drac/random.hpp"

#ifndef DRAC_MAPS_DIR
#error "DRAC_MAPS_DIR must point at the shipped maps"
#endif

namespace drac::testing {

inline std::string map_path(const std::string& name) { return std::string(DRAC_MAPS_DIR) + "/" + name + ".txt"; }

// ---------------------------------------------------------------------------
// Maze navigation

/// BFS distances (in cells) to a target cell over non-wall cells.
inline std::vector<std::vector<int>> bfs_distances(const maze::MazeSpec& spec, int row, int col) {
  std::vector<std::vector<int>> dist(static_cast<std::size_t>(spec.rows),
                                     std::vector<int>(static_cast<std::size_t>(spec.cols), -1));
  std::deque<std::pair<int, int>> queue{{row, col}};
  dist[static_cast<std::size_t>(row)][static_cast<std::size_t>(col)] = 0;
  while (!queue.empty()) {
    auto [r, c] = queue.front();
    queue.pop_front();
    const int d = dist[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)];
    for (auto [dr, dc] : std::array<std::pair<int, int>, 4>{{{1, 0}, {-1, 0}, {0, 1}, {0, -1}}}) {
      const int nr = r + dr;
      const int nc = c + dc;
      if (spec.is_wall(nr, nc)) continue;
      auto& slot = dist[static_cast<std::size_t>(nr)][static_cast<std::size_t>(nc)];
      if (slot >= 0) continue;
      slot = d + 1;
      queue.emplace_back(nr, nc);
    }
  }
  return dist;
}

/// Walks to one goal cell: steer towards the next cell on a BFS shortest path.
class WaypointWalker {
 public:
  WaypointWalker(const maze::MazeSpec& spec, int goal_row, int goal_col)
      : spec_(spec), goal_row_(goal_row), goal_col_(goal_col), dist_(bfs_distances(spec, goal_row, goal_col)) {}

  maze::Action operator()(const maze::Observation& obs) const {
    const double x = (obs[0] + 1.0) * spec_.cols / 2.0;
    const double y = (obs[1] + 1.0) * spec_.rows / 2.0;
    const int r = spec_.row_of(y);
    const int c = maze::MazeSpec::col_of(x);
    maze::Vec2 target = spec_.cell_center(goal_row_, goal_col_);
    const int here = dist_[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)];
    if (here > 0) {
      for (auto [dr, dc] : std::array<std::pair<int, int>, 4>{{{1, 0}, {-1, 0}, {0, 1}, {0, -1}}}) {
        const int nr = r + dr;
        const int nc = c + dc;
        if (spec_.is_wall(nr, nc)) continue;
        if (dist_[static_cast<std::size_t>(nr)][static_cast<std::size_t>(nc)] == here - 1) {
          target = spec_.cell_center(nr, nc);
          // Re-center on the current cell first when far off the corridor axis.
          const auto center = spec_.cell_center(r, c);
          if (dr != 0 && std::abs(x - center.x) > 0.15) target = {center.x, y};
          if (dc != 0 && std::abs(y - center.y) > 0.15) target = {x, center.y};
          break;
        }
      }
    }
    const double dx = target.x - x;
    const double dy = target.y - y;
    const double len = std::hypot(dx, dy);
    const double speed = std::min(0.6, 1.5 * len);
    const double vx = len > 0 ? speed * dx / len : 0.0;
    const double vy = len > 0 ? speed * dy / len : 0.0;
    auto control = [](double want, double have) {
      return std::clamp((want - maze::kVelocityDecay * have) / maze::kActionGain, -1.0, 1.0);
    };
    return {control(vx, obs[2]), control(vy, obs[3])};
  }

 private:
  maze::MazeSpec spec_;
  int goal_row_;
  int goal_col_;
  std::vector<std::vector<int>> dist_;
};

inline eval::Policy stationary_policy() {
  return [](const maze::Observation&, int, Rng&) { return maze::Action{0.0, 0.0}; };
}

inline eval::Policy goal_policy(const maze::MazeSpec& spec, int goal_index) {
  const auto& g = spec.goals.at(static_cast<std::size_t>(goal_index));
  WaypointWalker walker(spec, g.row, g.col);
  return [walker](const maze::Observation& obs, int, Rng&) { return walker(obs); };
}

/// Each episode: with probability p walk to goal 0, otherwise stand still.
inline eval::Policy coin_policy(const maze::MazeSpec& spec, double p) {
  const auto& g = spec.goals.at(0);
  auto walker = std::make_shared<WaypointWalker>(spec, g.row, g.col);
  auto go = std::make_shared<bool>(false);
  return [walker, go, p](const maze::Observation& obs, int step, Rng& rng) {
    if (step == 0) *go = rng.uniform() < p;
    return *go ? (*walker)(obs) : maze::Action{0.0, 0.0};
  };
}

/// Each episode: walk to a uniformly chosen goal of `spec` (planned on `spec`'s walls).
inline eval::Policy covering_policy(const maze::MazeSpec& spec) {
  auto walkers = std::make_shared<std::vector<WaypointWalker>>();
  for (const auto& g : spec.goals) walkers->emplace_back(spec, g.row, g.col);
  auto pick = std::make_shared<std::size_t>(0);
  return [walkers, pick](const maze::Observation& obs, int step, Rng& rng) {
    if (step == 0) *pick = rng.index(walkers->size());
    return (*walkers)[*pick](obs);
  };
}

// ---------------------------------------------------------------------------
// Hand-written MLP with manual backprop (identity or tanh output)

using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct PlainMlp {
  std::vector<Mat> w;  // [out x in]
  std::vector<Mat> b;  // [1 x out]
  bool tanh_out = false;

  static PlainMlp from(const nn::MlpParams& p) {
    PlainMlp m;
    m.tanh_out = p.output == nn::OutputActivation::tanh;
    for (const auto& l : p.layers) {
      m.w.push_back(l.weight.value());
      m.b.push_back(l.bias.value());
    }
    return m;
  }

  struct Trace {
    std::vector<Mat> inputs;  // input to each layer
    std::vector<Mat> pre;     // pre-activation of each layer
    Mat out;
  };

  Trace forward(const Mat& x) const {
    Trace t;
    Mat h = x;
    for (std::size_t i = 0; i < w.size(); ++i) {
      t.inputs.push_back(h);
      Mat z = h * w[i].transpose();
      for (Eigen::Index r = 0; r < z.rows(); ++r) z.row(r) += b[i];
      t.pre.push_back(z);
      if (i + 1 < w.size()) {
        h = z.cwiseMax(0.0);
      } else {
        h = tanh_out ? Mat(z.array().tanh().matrix()) : z;
      }
    }
    t.out = h;
    return t;
  }

  /// Returns gradients for (w0, b0, w1, b1, ...) and the gradient w.r.t. the input.
  std::pair<std::vector<Mat>, Mat> backward(const Trace& t, Mat grad_out) const {
    std::vector<Mat> grads(2 * w.size());
    Mat g = grad_out;
    if (tanh_out) g = (g.array() * (1.0 - t.out.array().square())).matrix();
    for (std::size_t k = w.size(); k-- > 0;) {
      if (k + 1 < w.size()) g = (t.pre[k].array() > 0.0).select(g, 0.0);
      grads[2 * k] = g.transpose() * t.inputs[k];
      grads[2 * k + 1] = g.colwise().sum();
      g = g * w[k];
    }
    return {grads, g};
  }
};

struct PlainAdam {
  std::vector<Mat> m;
  std::vector<Mat> v;
  double lr = 3e-4;
  int t = 0;

  void step(std::vector<Mat*> params, const std::vector<Mat>& grads) {
    if (m.empty()) {
      for (auto* p : params) {
        m.push_back(Mat::Zero(p->rows(), p->cols()));
        v.push_back(Mat::Zero(p->rows(), p->cols()));
      }
    }
    ++t;
    for (std::size_t i = 0; i < params.size(); ++i) {
      m[i] = 0.9 * m[i] + 0.1 * grads[i];
      v[i] = 0.999 * v[i] + 0.001 * grads[i].cwiseProduct(grads[i]);
      const Mat mh = m[i] / (1.0 - std::pow(0.9, t));
      const Mat vh = v[i] / (1.0 - std::pow(0.999, t));
      *params[i] = (params[i]->array() - lr * mh.array() / (vh.array().sqrt() + 1e-8)).matrix();
    }
  }
};

inline std::vector<Mat*> param_ptrs(PlainMlp& m) {
  std::vector<Mat*> out;
  for (std::size_t i = 0; i < m.w.size(); ++i) {
    out.push_back(&m.w[i]);
    out.push_back(&m.b[i]);
  }
  return out;
}

inline Mat hcat(const Mat& a, const Mat& b) {
  Mat out(a.rows(), a.cols() + b.cols());
  out << a, b;
  return out;
}

/// Gaussian or amortized stochastic-mapping actor evaluated by hand.
struct PlainActor {
  PlainMlp net;
  bool gaussian = false;
  Eigen::Index action_dim = 0;

  struct Trace {
    PlainMlp::Trace net;
    Mat log_std_raw;
    Mat sigma;
    Mat action;
  };

  Trace forward(const Mat& s, const Mat& z) const {
    Trace t;
    if (!gaussian) {
      t.net = net.forward(hcat(s, z));
      t.action = t.net.out;
      return t;
    }
    t.net = net.forward(s);
    const Mat mu = t.net.out.leftCols(action_dim);
    t.log_std_raw = t.net.out.rightCols(action_dim);
    t.sigma = t.log_std_raw.cwiseMax(-5.0).cwiseMin(2.0).array().exp().matrix();
    t.action = (mu.array() + t.sigma.array() * z.array()).tanh().matrix();
    return t;
  }

  std::vector<Mat> backward(const Trace& t, const Mat& z, const Mat& grad_action) const {
    if (!gaussian) return net.backward(t.net, grad_action).first;
    const Mat g_pre = (grad_action.array() * (1.0 - t.action.array().square())).matrix();
    Mat g_out(g_pre.rows(), 2 * action_dim);
    g_out.leftCols(action_dim) = g_pre;
    const Mat inside = (t.log_std_raw.array() >= -5.0 && t.log_std_raw.array() <= 2.0).cast<double>().matrix();
    g_out.rightCols(action_dim) = (g_pre.array() * z.array() * t.sigma.array() * inside.array()).matrix();
    return net.backward(t.net, g_out).first;
  }
};

/// One clipped-double-Q actor-critic step written from scratch: TD target from
/// the min of the target critics, MSE critic updates, actor ascent on min Q,
/// Polyak averaging. No temperature and no diversity.
struct PlainTd3Step {
  PlainActor actor;
  PlainMlp q1, q2, q1t, q2t;
  PlainAdam actor_opt, q1_opt, q2_opt;

  void run(const Mat& s, const Mat& a, const Mat& r, const Mat& s2, const Mat& d, const Mat& z_next,
           const Mat& z_actor, double gamma, double rho) {
    // targets
    const Mat a2 = actor.forward(s2, z_next).action;
    const Mat qa = q1t.forward(hcat(s2, a2)).out;
    const Mat qb = q2t.forward(hcat(s2, a2)).out;
    const Mat y = (r.array() + gamma * (1.0 - d.array()) * qa.cwiseMin(qb).array()).matrix();
    const double n = static_cast<double>(s.rows());
    // critics
    for (auto [q, opt] : {std::pair{&q1, &q1_opt}, std::pair{&q2, &q2_opt}}) {
      const auto tr = q->forward(hcat(s, a));
      const Mat g = 2.0 * (tr.out - y) / n;
      opt->step(param_ptrs(*q), q->backward(tr, g).first);
    }
    // actor: loss = −mean(min(Q1, Q2)(s, f(s, z)))
    const auto at = actor.forward(s, z_actor);
    const auto t1 = q1.forward(hcat(s, at.action));
    const auto t2 = q2.forward(hcat(s, at.action));
    const Eigen::Index sd = s.cols();
    const Mat pick1 = (t1.out.array() <= t2.out.array()).cast<double>().matrix();
    const Mat g_min = Mat::Constant(s.rows(), 1, -1.0 / n);
    const Mat gin1 = q1.backward(t1, g_min.cwiseProduct(pick1)).second;
    const Mat gin2 = q2.backward(t2, g_min.cwiseProduct((1.0 - pick1.array()).matrix())).second;
    const Mat g_action = (gin1 + gin2).rightCols(gin1.cols() - sd);
    actor_opt.step(param_ptrs(actor.net), actor.backward(at, z_actor, g_action));
    // targets
    for (auto [t, o] : {std::pair{&q1t, &q1}, std::pair{&q2t, &q2}}) {
      for (std::size_t i = 0; i < t->w.size(); ++i) {
        t->w[i] = rho * o->w[i] + (1.0 - rho) * t->w[i];
        t->b[i] = rho * o->b[i] + (1.0 - rho) * t->b[i];
      }
    }
  }
};

inline double max_abs_diff(const PlainMlp& plain, const nn::MlpParams& params) {
  double worst = 0.0;
  for (std::size_t i = 0; i < plain.w.size(); ++i) {
    worst = std::max(worst, (plain.w[i] - params.layers[i].weight.value()).cwiseAbs().maxCoeff());
    worst = std::max(worst, (plain.b[i] - params.layers[i].bias.value()).cwiseAbs().maxCoeff());
  }
  return worst;
}

}  // namespace drac::testing
