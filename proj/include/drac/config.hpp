#pragma once

// Flat `key = value` training configuration with `#` comments.

#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

#include "drac/actors.hpp"
#include "drac/drac.hpp"

namespace drac::config {

struct RunConfig {
  TrainConfig train;
  std::string map_path;  // as written in the file; relative paths resolve against the config's directory
};

class ConfigError : public std::invalid_argument {
 public:
  explicit ConfigError(std::vector<std::string> problems)
      : std::invalid_argument(join(problems)), problems_(std::move(problems)) {}
  const std::vector<std::string>& problems() const noexcept { return problems_; }

 private:
  static std::string join(const std::vector<std::string>& p) {
    std::string out = "invalid config:";
    for (const auto& s : p) out += "\n  " + s;
    return out;
  }
  std::vector<std::string> problems_;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
bool parse_number(std::string_view text, T& out) {
  if (text.empty()) return false;
  const char* first = text.data();
  const char* last = text.data() + text.size();
  if constexpr (std::is_floating_point_v<T>) {
    auto [ptr, ec] = std::from_chars(first, last, out);
    return ec == std::errc() && ptr == last && std::isfinite(out);
  } else {
    if (*first == '-') return false;
    auto [ptr, ec] = std::from_chars(first, last, out);
    return ec == std::errc() && ptr == last;
  }
}

}  // namespace detail

inline const std::set<std::string>& known_keys() {
  static const std::set<std::string> keys{
      "map",        "total_steps", "warmup_steps",    "eval_period", "eval_episodes", "seed",
      "actor",      "diffusion_steps", "gamma",       "rho",         "batch_size",    "replay_ratio",
      "n_pairs",    "beta",        "lr",              "lr_alpha",    "buffer_capacity", "hidden",
      "latent_dim", "alpha",       "initial_w"};
  return keys;
}

/// Parses a whole file. Every problem (unknown key, bad value, duplicate,
/// missing map) is collected before throwing ConfigError.
inline RunConfig parse_config(std::string_view text) {
  RunConfig rc;
  TrainConfig& c = rc.train;
  std::vector<std::string> problems;
  std::set<std::string> seen;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    std::string_view line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      problems.push_back("line " + std::to_string(line_no) + ": expected 'key = value'");
      continue;
    }
    const std::string key(detail::trim(line.substr(0, eq)));
    const std::string_view value = detail::trim(line.substr(eq + 1));
    if (!known_keys().count(key)) {
      problems.push_back(key + ": unknown key (line " + std::to_string(line_no) + ")");
      continue;
    }
    if (!seen.insert(key).second) {
      problems.push_back(key + ": duplicate key (line " + std::to_string(line_no) + ")");
      continue;
    }
    auto bad = [&](const std::string& why) { problems.push_back(key + ": " + why + " (got '" + std::string(value) + "')"); };
    auto size_key = [&](std::size_t& out) {
      if (!detail::parse_number(value, out)) bad("expected a non-negative integer");
    };
    auto real_key = [&](double& out) {
      if (!detail::parse_number(value, out)) bad("expected a real number");
    };

    if (key == "map") {
      if (value.empty()) bad("expected a path");
      rc.map_path = std::string(value);
    } else if (key == "total_steps") {
      size_key(c.total_steps);
    } else if (key == "warmup_steps") {
      size_key(c.warmup_steps);
    } else if (key == "eval_period") {
      size_key(c.eval_period);
    } else if (key == "eval_episodes") {
      size_key(c.eval_episodes);
    } else if (key == "seed") {
      if (!detail::parse_number(value, c.seed)) bad("expected a non-negative integer");
    } else if (key == "actor") {
      try {
        c.actor_kind = actors::parse_kind(value);
      } catch (const std::invalid_argument&) {
        bad("expected one of gaussian, amortized, diffusion");
      }
    } else if (key == "diffusion_steps") {
      if (!detail::parse_number(value, c.diffusion_steps)) bad("expected an integer");
    } else if (key == "gamma") {
      real_key(c.gamma);
    } else if (key == "rho") {
      real_key(c.rho);
    } else if (key == "batch_size") {
      size_key(c.batch_size);
    } else if (key == "replay_ratio") {
      real_key(c.replay_ratio);
    } else if (key == "n_pairs") {
      size_key(c.n_pairs);
    } else if (key == "beta") {
      real_key(c.beta);
    } else if (key == "lr") {
      real_key(c.lr);
    } else if (key == "lr_alpha") {
      real_key(c.lr_alpha);
    } else if (key == "buffer_capacity") {
      size_key(c.buffer_capacity);
    } else if (key == "hidden") {
      c.hidden.clear();
      std::string_view rest = value;
      bool ok = !rest.empty();
      while (ok && !rest.empty()) {
        const auto comma = rest.find(',');
        std::size_t width = 0;
        ok = detail::parse_number(detail::trim(rest.substr(0, comma)), width) && width > 0;
        c.hidden.push_back(width);
        rest = comma == std::string_view::npos ? std::string_view{} : rest.substr(comma + 1);
      }
      if (!ok) bad("expected comma-separated positive widths");
    } else if (key == "latent_dim") {
      size_key(c.latent_dim);
    } else if (key == "alpha") {
      if (value == "auto") {
        c.alpha_learnable = true;
      } else {
        c.alpha_learnable = false;
        if (!detail::parse_number(value, c.fixed_alpha) || c.fixed_alpha < 0.0) bad("expected 'auto' or a non-negative number");
      }
    } else if (key == "initial_w") {
      real_key(c.initial_w);
    }
  }
  if (rc.map_path.empty() && !seen.count("map")) problems.push_back("map: required key is missing");
  for (const auto& e : validate(c)) problems.push_back(e);
  if (!problems.empty()) throw ConfigError(std::move(problems));
  return rc;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

}  // namespace drac::config
