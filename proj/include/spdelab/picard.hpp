#pragma once

#include "spdelab/grid.hpp"
#include "spdelab/model.hpp"
#include "spdelab/noise.hpp"
#include "spdelab/solver.hpp"

#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace spdelab {

// Nonlinear sources f(t, x, z) and g^l(t, x, z), Lipschitz in z with
// constant K.
struct NonlinearSources {
  std::function<double(double t, const Point& x, double z)> f;
  std::function<double(double t, const Point& x, double z, int l)> g;  // may be empty (g = 0)
  double K = 0.0;
  double gamma_bound = 0.0;
  std::string description;

  // Families: "zero", "linear lambda=<v>" (lambda z), "sine amp=<v>"
  // (amp sin z), "field <scalar field spec>" (independent of z).
  static NonlinearSources parse(std::string_view f_spec, std::string_view g_spec = "zero", int drivers = 1);
};

// max over a seeded sample of (t, x, z, z') of
//   |f(z) - f(z')| + sum_l |g^l(z) - g^l(z')| - K |z - z'|;
// the sources pass when this is <= 1e-10.
double lipschitz_excess(const NonlinearSources& src, const Grid& grid, double t_end, double z_range, int drivers,
                        int samples = 2000, std::uint64_t seed = 3);

enum class InitialGuess { InitialData, Zero };

struct PicardOptions {
  double tol = 1e-8;
  int max_iter = 50;
  InitialGuess guess = InitialGuess::InitialData;
  std::optional<TestFunction> residual_phi;
  double residual_threshold = 1e-2;
};

struct PicardLogEntry {
  int iter = 0;
  double sup_diff = 0.0;
  double ratio = 0.0;  // sup_diff / previous sup_diff (0 for the first)
};

struct PicardResult {
  Trajectory trajectory;  // every level recorded
  std::vector<PicardLogEntry> log;
  std::vector<double> iterate_sup_l2;  // sup_t ||u^n_t|| per iterate
  int iterations = 0;
  std::optional<double> weak_residual;
  bool residual_passed = true;
};

// u^0 = guess; u^n solves the linear SPDE with sources f(u^{n-1}), g(u^{n-1})
// on the same path, until sup_t ||u^n_t - u^{n-1}_t||_2 < tol. The f source
// is taken at the implicit level, g at the left point.
PicardResult picard_solve(const CoefficientSet& coeffs, const NonlinearSources& sources, std::span<const double> u0,
                          const Grid& grid, const SolverConfig& cfg, const BrownianPath& path, double t_end,
                          const PicardOptions& opt = {});

// sup over levels of the grid L2 distance between two trajectories.
double sup_l2_distance(const Trajectory& a, const Trajectory& b);

}  // namespace spdelab
