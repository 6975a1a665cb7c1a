#pragma once

// Files written into a training run directory: manifest.json, metrics.csv and
// checkpoints. Everything that must be reproducible (metrics, checkpoints) is
// formatted without timestamps; the manifest carries the wall-clock times.

#include <chrono>
#include <cstdint>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "drac/checkpoint.hpp"
#include "drac/config.hpp"
#include "drac/drac.hpp"
#include "drac/maze.hpp"

namespace drac::run {

#ifndef DRAC_VERSION
#define DRAC_VERSION "0.1.0"
#endif

inline constexpr const char* kMetricsHeader =
    "env_step,gradient_step,success_rate,reachable_goals,alpha,diversity_mean,critic_loss,actor_loss";

/// Round-trip (17 significant digit) formatting.
inline std::string format_real(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline std::string format_row(const MetricsRow& row) {
  std::ostringstream out;
  out << row.env_step << ',' << row.gradient_step << ',' << format_real(row.success_rate) << ','
      << row.reachable_goals << ',' << format_real(row.alpha) << ',' << format_real(row.diversity_mean) << ','
      << format_real(row.critic_loss) << ',' << format_real(row.actor_loss);
  return out.str();
}

/// Append-only metrics CSV; each row is flushed as soon as it is written.
class MetricsWriter {
 public:
  explicit MetricsWriter(const std::filesystem::path& path) : out_(path, std::ios::binary | std::ios::trunc) {
    if (!out_) throw std::runtime_error("cannot write metrics file '" + path.string() + "'");
    out_ << kMetricsHeader << '\n' << std::flush;
  }

  void append(const MetricsRow& row) { out_ << format_row(row) << '\n' << std::flush; }

 private:
  std::ofstream out_;
};

/// 64-bit FNV-1a, hex encoded.
inline std::string fnv1a_hex(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  std::ostringstream out;
  out << std::hex << std::setw(16) << std::setfill('0') << h;
  return out.str();
}

inline std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream out;
  out << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return out.str();
}

struct RunManifest {
  std::string config_text;  // byte-exact copy of the config file
  std::uint64_t seed = 0;
  std::string code_version = DRAC_VERSION;
  std::string map_checksum;
  std::string started;
  std::optional<std::string> finished;

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["config"] = config_text;
    j["seed"] = seed;
    j["code_version"] = code_version;
    j["map_checksum"] = map_checksum;
    j["started"] = started;
    j["finished"] = finished ? nlohmann::json(*finished) : nlohmann::json(nullptr);
    return j;
  }
};

inline void write_text_atomic(const std::filesystem::path& path, const std::string& text) {
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write '" + tmp.string() + "'");
    out << text;
    if (!out) throw std::runtime_error("failed writing '" + tmp.string() + "'");
  }
  std::filesystem::rename(tmp, path);
}

inline void write_manifest(const std::filesystem::path& path, const RunManifest& m) {
  write_text_atomic(path, m.to_json().dump(2) + "\n");
}

/// Relative map paths in a config resolve against the config file's directory.
inline std::filesystem::path resolve_map(const std::filesystem::path& config_path, const std::string& map_path) {
  const std::filesystem::path p(map_path);
  if (p.is_absolute()) return p;
  return config_path.parent_path() / p;
}

inline std::filesystem::path default_run_dir(const std::filesystem::path& config_path, std::uint64_t seed) {
  return std::filesystem::path("runs") / (config_path.stem().string() + "-seed" + std::to_string(seed));
}

/// Trains from a config file into `dir`: manifest.json (written at start and
/// finish), metrics.csv, checkpoints/step_<N>.ckpt per evaluation and
/// checkpoints/final.ckpt.
inline TrainResult train_run(const std::filesystem::path& config_path, std::optional<std::uint64_t> seed,
                             const std::filesystem::path& dir, const EvalCallback& on_eval = {}) {
  const std::string text = config::read_file(config_path.string());
  auto rc = config::parse_config(text);
  if (seed) rc.train.seed = *seed;
  const auto map_path = resolve_map(config_path, rc.map_path);
  if (!std::filesystem::exists(map_path)) {
    throw std::runtime_error("map: file '" + map_path.string() + "' does not exist");
  }
  const std::string map_text = config::read_file(map_path.string());
  const auto spec = maze::parse_map(map_text);

  std::filesystem::create_directories(dir / "checkpoints");
  RunManifest manifest;
  manifest.config_text = text;
  manifest.seed = rc.train.seed;
  manifest.map_checksum = fnv1a_hex(map_text);
  manifest.started = utc_timestamp();
  write_manifest(dir / "manifest.json", manifest);

  MetricsWriter metrics(dir / "metrics.csv");
  auto result = train(rc.train, spec, [&](const Learner& l, const MetricsRow& row) {
    metrics.append(row);
    checkpoint::save(l, dir / "checkpoints" / ("step_" + std::to_string(row.env_step) + ".ckpt"));
    if (on_eval) on_eval(l, row);
  });
  checkpoint::save(result.learner, dir / "checkpoints" / "final.ckpt");

  manifest.finished = utc_timestamp();
  write_manifest(dir / "manifest.json", manifest);
  return result;
}

}  // namespace drac::run
