#pragma once

#include "spdelab/field.hpp"
#include "spdelab/grid.hpp"
#include "spdelab/model.hpp"
#include "spdelab/noise.hpp"
#include "spdelab/solver.hpp"

#include <span>
#include <string>
#include <vector>

namespace spdelab {

struct CheckReport {
  std::string name;
  bool pass = false;
  double measured = 0.0;
  double threshold = 0.0;
  std::string context;  // manifest hash of the producing run
  std::string note;

  static CheckReport make(std::string name, double measured, double threshold, std::string note = {});
};

// max over (t, x) of (-u)^+ / ||u_t||_inf. Refuses to run (HypothesisError)
// unless u_0 >= 0, f >= 0 on the recorded grid/times and g == 0.
CheckReport check_positivity(const Trajectory& traj, const CoefficientSet& coeffs, double tol = 1e-8);

struct L1Report {
  CheckReport sharp;     // sup_t ||u_t||_1 <= ||u_0||_1 + int ||f||_1 (when applicable)
  CheckReport constant;  // ratio against exp(T (sup c^+ + sup|div sigma| + sup|h|))
  bool sharp_applicable = false;
};

// Needs g == 0 (HypothesisError otherwise).
L1Report l1_report(const Trajectory& traj, const CoefficientSet& coeffs);

// max_t | ||u_t||_1 / ||u_0||_1 - exp(-rate t) | against 2 dt T.
CheckReport l1_decay_check(const Trajectory& traj, double rate);

struct EnergyReport {
  CheckReport report;  // measured = summed |defect|
  double summed_defect = 0.0;
  std::vector<double> step_defect;
  std::vector<double> dissipation;  // dt * sum_faces a_f (D u)^2 per step (>= 0 part of -2<u,Lu>)
  std::vector<double> ito;          // |sum_l (M u + g) dB|^2 per step
  std::vector<double> martingale;   // 2 <u_n, sum_l (M u + g) dB>
};

// Discrete Ito energy balance per step:
//   d|u|^2 - 2 dt <u_{n+1}, G_n> - 2 <u_n, S_n> - |S_n|^2,
// with G_n the generator-plus-source increment rate and S_n the noise
// increment. The quadratic term uses the realized dB^2.
EnergyReport energy_report(const Trajectory& traj, const CoefficientSet& coeffs, const BrownianPath& path,
                           double threshold = 1e-3);

struct ContinuityRow {
  int stride = 1;
  double spacing = 0.0;
  double modulus = 0.0;
};

struct ContinuityReport {
  CheckReport report;  // measured = worst modulus ratio (finer / coarser)
  std::vector<std::vector<ContinuityRow>> per_phi;
};

// Weak modulus max_k |int (u_{t_{k+s}} - u_{t_k}) phi| for strides s = 4, 2, 1
// of the recorded spacing. Passes when each halving shrinks it (ratio < 0.8).
ContinuityReport continuity_modulus(const Trajectory& traj, std::span<const TestFunction> phis);

// Sum over the ensemble of ||u_T||^2, divided by n_paths ||u_0||^2, minus 1.
double ensemble_energy_drift(const CoefficientSet& coeffs, std::span<const double> u0, const Grid& grid,
                             const SolverConfig& cfg, double t_end, int n_paths, std::uint64_t seed);

// max_t int |grad_h u_t|^2 / int |grad_h u_0|^2 (one-sided differences).
double gradient_growth(const Trajectory& traj);

}  // namespace spdelab
