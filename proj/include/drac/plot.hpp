#pragma once

// SVG rendering of a maze with evaluation trajectories.

#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "drac/eval.hpp"
#include "drac/maze.hpp"

namespace drac::plot {

class SchemaError : public std::runtime_error {
 public:
  SchemaError(std::size_t line, const std::string& why)
      : std::runtime_error("trajectory csv line " + std::to_string(line) + ": " + why), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

struct Episode {
  long id = 0;
  std::vector<eval::TrajectoryPoint> points;
};

/// Reads the trajectory export; episodes keep file order.
inline std::vector<Episode> read_trajectories(std::istream& in) {
  std::vector<Episode> episodes;
  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(in, line)) throw SchemaError(1, "missing header");
  ++line_no;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != eval::kTrajectoryHeader) throw SchemaError(1, "header must be '" + std::string(eval::kTrajectoryHeader) + "'");
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != 6) throw SchemaError(line_no, "expected 6 columns, found " + std::to_string(cells.size()));
    long episode = 0;
    eval::TrajectoryPoint p;
    try {
      std::size_t used = 0;
      episode = std::stol(cells[0], &used);
      if (used != cells[0].size()) throw std::invalid_argument("episode");
      p.step = std::stoi(cells[1], &used);
      if (used != cells[1].size()) throw std::invalid_argument("step");
      p.x = std::stod(cells[2], &used);
      if (used != cells[2].size()) throw std::invalid_argument("x");
      p.y = std::stod(cells[3], &used);
      if (used != cells[3].size()) throw std::invalid_argument("y");
      p.reward = std::stod(cells[4], &used);
      if (used != cells[4].size()) throw std::invalid_argument("reward");
      p.goal_id = std::stoi(cells[5], &used);
      if (used != cells[5].size()) throw std::invalid_argument("goal_id");
    } catch (const std::exception&) {
      throw SchemaError(line_no, "unparseable value in '" + line + "'");
    }
    if (!std::isfinite(p.x) || !std::isfinite(p.y)) throw SchemaError(line_no, "non-finite coordinate");
    if (episodes.empty() || episodes.back().id != episode) episodes.push_back({episode, {}});
    episodes.back().points.push_back(p);
  }
  return episodes;
}

struct Style {
  double cell = 40.0;
  double stroke = 2.0;
};

inline std::string episode_color(std::size_t index) {
  // golden-angle hue walk
  const double hue = std::fmod(static_cast<double>(index) * 137.508, 360.0);
  char buf[48];
  std::snprintf(buf, sizeof(buf), "hsl(%.1f,70%%,45%%)", hue);
  return buf;
}

/// Maze walls as filled squares, goals as circles, one polyline per episode
/// (a single dot for one-point episodes). Episodes without any point still get
/// no markup. Coordinates: svg_x = x·cell, svg_y = (rows − y)·cell.
inline std::string render_svg(const maze::MazeSpec& spec, const std::vector<Episode>& episodes, Style style = {}) {
  const double c = style.cell;
  auto sx = [&](double x) { return x * c; };
  auto sy = [&](double y) { return (spec.rows - y) * c; };
  std::ostringstream out;
  out.precision(10);
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << spec.cols * c << "\" height=\"" << spec.rows * c
      << "\" viewBox=\"0 0 " << spec.cols * c << ' ' << spec.rows * c << "\">\n";
  out << "<rect class=\"background\" x=\"0\" y=\"0\" width=\"" << spec.cols * c << "\" height=\"" << spec.rows * c
      << "\" fill=\"white\"/>\n";
  for (int r = 0; r < spec.rows; ++r) {
    for (int col = 0; col < spec.cols; ++col) {
      const char ch = spec.at(r, col);
      if (ch != '#' && ch != 'O') continue;
      out << "<rect class=\"" << (ch == '#' ? "wall" : "obstacle") << "\" x=\"" << col * c << "\" y=\"" << r * c
          << "\" width=\"" << c << "\" height=\"" << c << "\" fill=\"" << (ch == '#' ? "#555555" : "#cccccc")
          << "\"/>\n";
    }
  }
  for (const auto& g : spec.goals) {
    const auto center = spec.cell_center(g.row, g.col);
    out << "<circle class=\"goal\" data-goal=\"" << g.id << "\" cx=\"" << sx(center.x) << "\" cy=\"" << sy(center.y)
        << "\" r=\"" << spec.goal_radius * c << "\" fill=\"#7fd17f\" fill-opacity=\"0.6\"/>\n";
  }
  const auto start = spec.cell_center(spec.start_row, spec.start_col);
  out << "<circle class=\"start\" cx=\"" << sx(start.x) << "\" cy=\"" << sy(start.y) << "\" r=\"" << 0.15 * c
      << "\" fill=\"none\" stroke=\"#d62728\" stroke-width=\"" << style.stroke << "\"/>\n";
  for (std::size_t i = 0; i < episodes.size(); ++i) {
    const auto& ep = episodes[i];
    if (ep.points.empty()) continue;
    const auto color = episode_color(i);
    bool stationary = true;
    for (const auto& p : ep.points) stationary = stationary && p.x == ep.points.front().x && p.y == ep.points.front().y;
    if (stationary) {
      out << "<circle class=\"trajectory-dot\" data-episode=\"" << ep.id << "\" cx=\"" << sx(ep.points.front().x)
          << "\" cy=\"" << sy(ep.points.front().y) << "\" r=\"" << style.stroke * 1.5 << "\" fill=\"" << color
          << "\"/>\n";
      continue;
    }
    out << "<polyline class=\"trajectory\" data-episode=\"" << ep.id << "\" fill=\"none\" stroke=\"" << color
        << "\" stroke-width=\"" << style.stroke << "\" points=\"";
    for (std::size_t k = 0; k < ep.points.size(); ++k) {
      if (k) out << ' ';
      out << sx(ep.points[k].x) << ',' << sy(ep.points[k].y);
    }
    out << "\"/>\n";
  }
  out << "</svg>\n";
  return out.str();
}

}  // namespace drac::plot
