#pragma once

// Versioned binary checkpoint for a Learner.
//
// Layout (all integers unsigned little-endian, reals IEEE-754 binary64 little-endian):
//   magic "DRACCKPT" | u32 version
//   header: u32 actor kind | u64 state dim | u64 action dim | u64 latent dim |
//           u64 diffusion steps (0 unless diffusion) | u64 env steps | u64 gradient steps |
//           f64 w | f64 lr_alpha | f64 target diversity | u8 alpha learnable | f64 fixed alpha
//   networks actor, q1, q2, q1_target, q2_target, each:
//           u32 output activation | u64 layer count | per layer: u64 out | u64 in | f64[out·in] weight | f64[out] bias
//   Adam states actor, q1, q2, each:
//           u64 step | f64 lr | f64 beta1 | f64 beta2 | f64 eps | u64 tensors |
//           per tensor: u64 rows | u64 cols | f64[rows·cols] m | f64[rows·cols] v

#include <array>
#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "drac/actors.hpp"
#include "drac/drac.hpp"
#include "drac/nn.hpp"

namespace drac::checkpoint {

inline constexpr std::array<char, 8> kMagic{'D', 'R', 'A', 'C', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kVersion = 1;

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

class Writer {
 public:
  void u8(std::uint8_t v) { bytes_.push_back(static_cast<char>(v)); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) bytes_.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) bytes_.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void raw(const char* p, std::size_t n) { bytes_.insert(bytes_.end(), p, p + n); }
  const std::vector<char>& bytes() const { return bytes_; }

 private:
  std::vector<char> bytes_;
};

class Reader {
 public:
  explicit Reader(std::vector<char> bytes) : bytes_(std::move(bytes)) {}

  std::uint8_t u8() { return static_cast<std::uint8_t>(take(1)[0]); }
  std::uint32_t u32() {
    const char* p = take(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(p[i])) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    const char* p = take(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(p[i])) << (8 * i);
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  const char* take(std::size_t n) {
    if (pos_ + n > bytes_.size()) throw CheckpointError("checkpoint truncated at byte " + std::to_string(pos_));
    const char* p = bytes_.data() + pos_;
    pos_ += n;
    return p;
  }
  bool at_end() const { return pos_ == bytes_.size(); }

 private:
  std::vector<char> bytes_;
  std::size_t pos_ = 0;
};

inline void write_net(Writer& w, const nn::MlpParams& net) {
  w.u32(net.output == nn::OutputActivation::tanh ? 1u : 0u);
  w.u64(net.layers.size());
  for (const auto& l : net.layers) {
    w.u64(l.weight.shape()[0]);
    w.u64(l.weight.shape()[1]);
    for (Eigen::Index i = 0; i < l.weight.value().size(); ++i) w.f64(l.weight.value().data()[i]);
    for (Eigen::Index i = 0; i < l.bias.value().size(); ++i) w.f64(l.bias.value().data()[i]);
  }
}

inline nn::MlpParams read_net(Reader& r) {
  nn::MlpParams net;
  const auto act = r.u32();
  if (act > 1) throw CheckpointError("unknown output activation code " + std::to_string(act));
  net.output = act == 1 ? nn::OutputActivation::tanh : nn::OutputActivation::identity;
  const auto layers = r.u64();
  if (layers == 0 || layers > 64) throw CheckpointError("implausible layer count " + std::to_string(layers));
  for (std::uint64_t k = 0; k < layers; ++k) {
    const auto out = r.u64();
    const auto in = r.u64();
    if (out == 0 || in == 0 || out > (1u << 20) || in > (1u << 20)) throw CheckpointError("implausible layer shape");
    ad::Matrix weight(static_cast<Eigen::Index>(out), static_cast<Eigen::Index>(in));
    for (Eigen::Index i = 0; i < weight.size(); ++i) weight.data()[i] = r.f64();
    ad::Matrix bias(1, static_cast<Eigen::Index>(out));
    for (Eigen::Index i = 0; i < bias.size(); ++i) bias.data()[i] = r.f64();
    if (!net.layers.empty() && net.layers.back().weight.shape()[0] != in) {
      throw CheckpointError("layer shapes do not chain");
    }
    net.layers.push_back({ad::Array::variable(std::move(weight), ad::Shape{out, in}),
                          ad::Array::variable(std::move(bias), ad::Shape{out})});
  }
  return net;
}

inline void write_adam(Writer& w, const nn::AdamState& s) {
  w.u64(s.step);
  w.f64(s.lr);
  w.f64(s.beta1);
  w.f64(s.beta2);
  w.f64(s.eps);
  w.u64(s.m.size());
  for (std::size_t i = 0; i < s.m.size(); ++i) {
    w.u64(static_cast<std::uint64_t>(s.m[i].rows()));
    w.u64(static_cast<std::uint64_t>(s.m[i].cols()));
    for (Eigen::Index k = 0; k < s.m[i].size(); ++k) w.f64(s.m[i].data()[k]);
    for (Eigen::Index k = 0; k < s.v[i].size(); ++k) w.f64(s.v[i].data()[k]);
  }
}

inline nn::AdamState read_adam(Reader& r) {
  nn::AdamState s;
  s.step = r.u64();
  s.lr = r.f64();
  s.beta1 = r.f64();
  s.beta2 = r.f64();
  s.eps = r.f64();
  const auto n = r.u64();
  if (n > 256) throw CheckpointError("implausible optimizer tensor count");
  for (std::uint64_t i = 0; i < n; ++i) {
    const auto rows = static_cast<Eigen::Index>(r.u64());
    const auto cols = static_cast<Eigen::Index>(r.u64());
    if (rows <= 0 || cols <= 0 || rows > (1 << 20) || cols > (1 << 20)) throw CheckpointError("implausible optimizer shape");
    ad::Matrix m(rows, cols);
    ad::Matrix v(rows, cols);
    for (Eigen::Index k = 0; k < m.size(); ++k) m.data()[k] = r.f64();
    for (Eigen::Index k = 0; k < v.size(); ++k) v.data()[k] = r.f64();
    s.m.push_back(std::move(m));
    s.v.push_back(std::move(v));
  }
  return s;
}

inline void check_adam_matches(const nn::AdamState& s, const nn::MlpParams& net, const char* what) {
  const auto params = net.parameters();
  if (s.m.size() != params.size()) throw CheckpointError(std::string(what) + ": optimizer state does not match network");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (s.m[i].rows() != params[i].rows() || s.m[i].cols() != params[i].cols()) {
      throw CheckpointError(std::string(what) + ": optimizer tensor shape does not match network");
    }
  }
}

}  // namespace detail

inline std::vector<char> serialize(const Learner& l) {
  detail::Writer w;
  w.raw(kMagic.data(), kMagic.size());
  w.u32(kVersion);
  const auto& a = l.actor;
  w.u32(static_cast<std::uint32_t>(a.kind));
  w.u64(a.state_dim);
  w.u64(a.action_dim);
  w.u64(a.latent_dim);
  w.u64(a.schedule ? static_cast<std::uint64_t>(a.schedule->steps) : 0);
  w.u64(l.env_steps);
  w.u64(l.gradient_steps);
  w.f64(l.temperature.w);
  w.f64(l.temperature.lr);
  w.f64(l.temperature.target);
  w.u8(l.temperature.learnable ? 1 : 0);
  w.f64(l.temperature.fixed_alpha);
  for (const auto* net : {&a.net, &l.critics.q1, &l.critics.q2, &l.critics.q1_target, &l.critics.q2_target}) {
    detail::write_net(w, *net);
  }
  for (const auto* s : {&l.actor_opt, &l.q1_opt, &l.q2_opt}) detail::write_adam(w, *s);
  return w.bytes();
}

inline Learner deserialize(std::vector<char> bytes) {
  detail::Reader r(std::move(bytes));
  const char* magic = r.take(kMagic.size());
  if (!std::equal(kMagic.begin(), kMagic.end(), magic)) throw CheckpointError("not a checkpoint (bad magic bytes)");
  if (const auto v = r.u32(); v != kVersion) throw CheckpointError("unsupported checkpoint version " + std::to_string(v));
  Learner l;
  const auto kind = r.u32();
  if (kind > 2) throw CheckpointError("unknown actor kind code " + std::to_string(kind));
  l.actor.kind = static_cast<actors::ActorKind>(kind);
  l.actor.state_dim = r.u64();
  l.actor.action_dim = r.u64();
  l.actor.latent_dim = r.u64();
  const auto steps = r.u64();
  if (l.actor.kind == actors::ActorKind::diffusion) {
    if (steps == 0 || steps > 100000) throw CheckpointError("diffusion checkpoint with invalid step count");
    l.actor.schedule = actors::make_schedule(static_cast<int>(steps));
  } else if (steps != 0) {
    throw CheckpointError("diffusion step count set for a non-diffusion actor");
  }
  l.env_steps = r.u64();
  l.gradient_steps = r.u64();
  l.temperature.w = r.f64();
  l.temperature.lr = r.f64();
  l.temperature.target = r.f64();
  l.temperature.learnable = r.u8() != 0;
  l.temperature.fixed_alpha = r.f64();
  l.actor.net = detail::read_net(r);
  l.critics.q1 = detail::read_net(r);
  l.critics.q2 = detail::read_net(r);
  l.critics.q1_target = detail::read_net(r);
  l.critics.q2_target = detail::read_net(r);
  l.actor_opt = detail::read_adam(r);
  l.q1_opt = detail::read_adam(r);
  l.q2_opt = detail::read_adam(r);
  if (!r.at_end()) throw CheckpointError("trailing bytes after checkpoint payload");

  // Header and payload must agree.
  const auto& a = l.actor;
  std::size_t expected_in = 0;
  std::size_t expected_out = a.action_dim;
  switch (a.kind) {
    case actors::ActorKind::gaussian:
      expected_in = a.state_dim;
      expected_out = 2 * a.action_dim;
      break;
    case actors::ActorKind::amortized:
      expected_in = a.state_dim + a.latent_dim;
      break;
    case actors::ActorKind::diffusion:
      expected_in = a.state_dim + a.action_dim + 1;
      break;
  }
  if (a.net.input_size() != expected_in || a.net.output_size() != expected_out) {
    throw CheckpointError("actor network shape does not match the " + std::string(actors::to_string(a.kind)) +
                          " header dimensions");
  }
  detail::check_adam_matches(l.actor_opt, a.net, "actor");
  detail::check_adam_matches(l.q1_opt, l.critics.q1, "q1");
  detail::check_adam_matches(l.q2_opt, l.critics.q2, "q2");
  return l;
}

inline void write_atomic(const std::filesystem::path& path, const std::vector<char>& bytes) {
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError("cannot write '" + tmp.string() + "'");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw CheckpointError("failed writing '" + tmp.string() + "'");
  }
  std::filesystem::rename(tmp, path);
}

inline void save(const Learner& l, const std::filesystem::path& path) { write_atomic(path, serialize(l)); }

inline Learner load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint '" + path.string() + "'");
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize(std::move(bytes));
}

/// Human-readable dump for debugging; not read back.
inline void write_text(const Learner& l, std::ostream& out) {
  const auto flags = out.flags();
  out.precision(17);
  out << "actor " << actors::to_string(l.actor.kind) << " state_dim " << l.actor.state_dim << " action_dim "
      << l.actor.action_dim << " latent_dim " << l.actor.latent_dim << " diffusion_steps "
      << (l.actor.schedule ? l.actor.schedule->steps : 0) << '\n';
  out << "env_steps " << l.env_steps << " gradient_steps " << l.gradient_steps << " w " << l.temperature.w << '\n';
  auto dump = [&](const char* name, const nn::MlpParams& net) {
    for (std::size_t i = 0; i < net.layers.size(); ++i) {
      out << name << ".layer" << i << ".weight " << ad::to_string(net.layers[i].weight.shape()) << '\n'
          << net.layers[i].weight.value() << '\n';
      out << name << ".layer" << i << ".bias " << ad::to_string(net.layers[i].bias.shape()) << '\n'
          << net.layers[i].bias.value() << '\n';
    }
  };
  dump("actor", l.actor.net);
  dump("q1", l.critics.q1);
  dump("q2", l.critics.q2);
  dump("q1_target", l.critics.q1_target);
  dump("q2_target", l.critics.q2_target);
  out.flags(flags);
}

}  // namespace drac::checkpoint
