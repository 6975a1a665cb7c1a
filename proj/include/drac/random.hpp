#pragma once

#include <cstdint>
#include <random>

#include "drac/autodiff.hpp"

namespace drac {

/// Seeded random stream. All stochastic components draw from an explicit Rng
/// so that runs are reproducible from a single seed.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  double uniform(double lo = 0.0, double hi = 1.0) { return std::uniform_real_distribution<double>(lo, hi)(engine_); }
  double normal() { return normal_(engine_); }
  std::size_t index(std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_); }
  std::uint64_t next_u64() { return engine_(); }

  ad::Matrix normal_matrix(Eigen::Index rows, Eigen::Index cols) {
    ad::Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = normal();
    return m;
  }

  ad::Matrix uniform_matrix(Eigen::Index rows, Eigen::Index cols, double lo, double hi) {
    ad::Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = uniform(lo, hi);
    return m;
  }

  /// Independent child stream; consumes one draw from this stream.
  Rng split() { return Rng(next_u64()); }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_;
};

/// Deterministic seed mixing (splitmix64) for derived streams such as per-episode seeds.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (salt + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace drac
