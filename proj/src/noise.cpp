#include "spdelab/noise.hpp"

#include "spdelab/error.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <numbers>

namespace spdelab {

namespace {

constexpr std::uint32_t kMul0 = 0xD2511F53u;
constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;

// Sub-streams keep normals and uniforms drawn from the same (seed, stream)
// statistically independent.
constexpr std::uint64_t kNormalDomain = 0;
constexpr std::uint64_t kUniformDomain = 1;

Philox4x32::Counter block(std::uint64_t seed, std::uint64_t stream, std::uint64_t index, std::uint64_t domain) {
  const Philox4x32::Key key{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)};
  const std::uint64_t hi = (stream << 1) | domain;
  const Philox4x32::Counter ctr{static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32),
                                static_cast<std::uint32_t>(hi), static_cast<std::uint32_t>(hi >> 32)};
  return Philox4x32::generate(ctr, key);
}

// Increments live on the lattice 2^-44 Z. Any partial sum below 2^9 in
// magnitude is then exact in binary64, so block sums (coarsening) and path
// values do not depend on summation grouping.
constexpr double kQuantum = 0x1.0p44;

// 53-bit uniform strictly inside (0, 1).
double to_unit(std::uint32_t a, std::uint32_t b) {
  const std::uint64_t bits = (static_cast<std::uint64_t>(a >> 5) << 26) | (b >> 6);
  return (static_cast<double>(bits) + 0.5) * 0x1.0p-53;
}

}  // namespace

Philox4x32::Counter Philox4x32::generate(Counter ctr, Key key) {
  for (int round = 0; round < 10; ++round) {
    const std::uint64_t p0 = static_cast<std::uint64_t>(kMul0) * ctr[0];
    const std::uint64_t p1 = static_cast<std::uint64_t>(kMul1) * ctr[2];
    ctr = {static_cast<std::uint32_t>(p1 >> 32) ^ ctr[1] ^ key[0], static_cast<std::uint32_t>(p1),
           static_cast<std::uint32_t>(p0 >> 32) ^ ctr[3] ^ key[1], static_cast<std::uint32_t>(p0)};
    key[0] += kWeyl0;
    key[1] += kWeyl1;
  }
  return ctr;
}

double counter_normal(std::uint64_t seed, std::uint64_t stream, std::uint64_t index) {
  const auto w = block(seed, stream, index >> 1, kNormalDomain);
  const double u1 = to_unit(w[0], w[1]);
  const double u2 = to_unit(w[2], w[3]);
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * std::numbers::pi * u2;
  return (index & 1u) ? r * std::sin(angle) : r * std::cos(angle);
}

double counter_uniform(std::uint64_t seed, std::uint64_t stream, std::uint64_t index) {
  const auto w = block(seed, stream, index >> 1, kUniformDomain);
  return (index & 1u) ? to_unit(w[2], w[3]) : to_unit(w[0], w[1]);
}

double BrownianPath::value(int step, int l) const {
  double b = 0.0;
  for (int n = 0; n < step; ++n) b += increment(n, l);
  return b;
}

BrownianPath generate_path(std::uint64_t seed, int drivers, int n_steps, double dt) {
  if (drivers <= 0 || n_steps <= 0 || !(dt > 0.0)) {
    throw ArgumentError("Brownian path needs positive driver count, step count and dt");
  }
  constexpr std::size_t kMaxEntries = std::size_t{1} << 31;
  if (static_cast<std::size_t>(n_steps) > kMaxEntries / static_cast<std::size_t>(drivers)) {
    throw ArgumentError("Brownian path size n_steps * L exceeds the 2^31 entry limit");
  }
  BrownianPath p;
  p.drivers = drivers;
  p.n_steps = n_steps;
  p.dt = dt;
  p.seed = seed;
  p.generator_id = kGeneratorId;
  p.increments.resize(static_cast<std::size_t>(n_steps) * drivers);
  const double scale = std::sqrt(dt);
  for (int n = 0; n < n_steps; ++n) {
    for (int l = 0; l < drivers; ++l) {
      const double raw = scale * counter_normal(seed, static_cast<std::uint64_t>(l), static_cast<std::uint64_t>(n));
      p.increments[static_cast<std::size_t>(n) * drivers + l] = std::nearbyint(raw * kQuantum) / kQuantum;
    }
  }
  return p;
}

BrownianPath coarsen(const BrownianPath& path, int factor) {
  if (factor <= 0 || path.n_steps % factor != 0) {
    throw ArgumentError("coarsening factor " + std::to_string(factor) + " does not divide n_steps " +
                        std::to_string(path.n_steps));
  }
  BrownianPath out = path;
  out.n_steps = path.n_steps / factor;
  out.dt = path.dt * factor;
  out.increments.assign(static_cast<std::size_t>(out.n_steps) * path.drivers, 0.0);
  for (int n = 0; n < out.n_steps; ++n) {
    for (int l = 0; l < path.drivers; ++l) {
      double s = 0.0;
      for (int k = 0; k < factor; ++k) s += path.increment(n * factor + k, l);
      out.increments[static_cast<std::size_t>(n) * path.drivers + l] = s;
    }
  }
  return out;
}

namespace {

template <typename T>
void put_le(std::ofstream& out, T v) {
  static_assert(std::endian::native == std::endian::little, "big-endian hosts are not supported");
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.write(buf, sizeof(T));
}

template <typename T>
T get_le(std::ifstream& in) {
  char buf[sizeof(T)];
  in.read(buf, sizeof(T));
  if (!in) throw ConfigError("truncated Brownian path file");
  T v;
  std::memcpy(&v, buf, sizeof(T));
  return v;
}

}  // namespace

void write_path(const BrownianPath& path, const std::filesystem::path& file) {
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot open '" + file.string() + "' for writing");
  out.write("BPTH", 4);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(path.drivers));
  put_le<std::uint64_t>(out, static_cast<std::uint64_t>(path.n_steps));
  put_le<double>(out, path.dt);
  for (double v : path.increments) put_le<double>(out, v);
}

BrownianPath read_path(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw ConfigError("cannot open '" + file.string() + "'");
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, "BPTH", 4) != 0) throw ConfigError("'" + file.string() + "' is not a BPTH file");
  BrownianPath p;
  p.drivers = static_cast<int>(get_le<std::uint32_t>(in));
  p.n_steps = static_cast<int>(get_le<std::uint64_t>(in));
  p.dt = get_le<double>(in);
  p.generator_id = "replay";
  p.increments.resize(static_cast<std::size_t>(p.n_steps) * p.drivers);
  for (double& v : p.increments) v = get_le<double>(in);
  return p;
}

}  // namespace spdelab
