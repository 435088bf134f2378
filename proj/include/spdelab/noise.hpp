#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace spdelab {

// Philox4x32-10 counter-based generator (Salmon et al., SC'11). Any
// (key, counter) pair maps to four independent 32-bit words, so driver l at
// step n is addressable without streaming state.
class Philox4x32 {
 public:
  using Counter = std::array<std::uint32_t, 4>;
  using Key = std::array<std::uint32_t, 2>;

  static Counter generate(Counter counter, Key key);
};

// Standard normal variate addressed by (seed, stream, index). Two indices
// share one Philox block through the Box-Muller pair.
double counter_normal(std::uint64_t seed, std::uint64_t stream, std::uint64_t index);
// Uniform variate in (0, 1) addressed the same way (separate sub-stream).
double counter_uniform(std::uint64_t seed, std::uint64_t stream, std::uint64_t index);

// L independent Brownian drivers sampled on a uniform time lattice.
// increments are stored row-major: increment(n, l) = increments[n * L + l].
struct BrownianPath {
  int drivers = 1;
  int n_steps = 0;
  double dt = 0.0;
  std::vector<double> increments;
  std::uint64_t seed = 0;
  std::string generator_id;

  double increment(int step, int l) const { return increments[static_cast<std::size_t>(step) * drivers + l]; }
  std::span<const double> step_increments(int step) const {
    return {increments.data() + static_cast<std::size_t>(step) * drivers, static_cast<std::size_t>(drivers)};
  }
  // B^l at time index `step` (sum of the first `step` increments, left to right).
  double value(int step, int l) const;
  double endpoint(int l) const { return value(n_steps, l); }
};

inline constexpr const char* kGeneratorId = "philox4x32-10/box-muller";

BrownianPath generate_path(std::uint64_t seed, int drivers, int n_steps, double dt);
// Sums increments in consecutive blocks of `factor` steps, left to right.
BrownianPath coarsen(const BrownianPath& path, int factor);

// Binary dump: 24-byte header ("BPTH", uint32 L, uint64 n_steps, float64 dt)
// followed by n_steps * L little-endian float64 increments, row-major.
void write_path(const BrownianPath& path, const std::filesystem::path& file);
BrownianPath read_path(const std::filesystem::path& file);

}  // namespace spdelab
