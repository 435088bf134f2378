#pragma once

#include "spdelab/field.hpp"
#include "spdelab/grid.hpp"
#include "spdelab/model.hpp"
#include "spdelab/noise.hpp"

#include <Eigen/SparseCore>

#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace spdelab {

using SparseOp = Eigen::SparseMatrix<double, Eigen::RowMajor>;

struct SolverConfig {
  double dt = 1e-3;
  double theta = 1.0;  // implicitness of the generator, in [1/2, 1]
  bool stability_guard = true;
  // Adds 1/2 sum M_l M_k u (dB_l dB_k - delta_lk dt); needs sigma == 0 in M.
  bool milstein = false;
  // Solve the approximation equation with coefficients mollified at this eps.
  std::optional<double> mollify_eps;
  // Keep every time level (needed by weak_residual, energy_report, picard).
  bool record_all_steps = false;

  void validate() const;
};

// Flux-form discretization of L u = d_i(a^{ij} d_j u) + d_i(b^i u) + c u.
SparseOp assemble_generator(const CoefficientSet& coeffs, const Grid& grid, double t);
// M^l u = sigma^{il} d_i u + h^l u with face-averaged central differences.
SparseOp assemble_noise_op(const CoefficientSet& coeffs, const Grid& grid, double t, int l);

// Throws StabilityError if dt sum_l |sigma_l|^2 / h^2 > 1 or the face margin
// 2 a - |sigma|^2 along an axis drops below -1e-12.
void check_stability(const CoefficientSet& coeffs, const Grid& grid, double t, double dt);

struct Trajectory {
  Grid grid;
  SolverConfig cfg;
  std::vector<double> times;
  std::vector<int> steps;  // time level of each snapshot
  std::vector<std::vector<double>> values;
  std::vector<double> mass;
  std::vector<double> l2;
  std::vector<std::string> warnings;

  std::size_t size() const noexcept { return values.size(); }
  DensityField snapshot(std::size_t k) const;
  // True when snapshots are the consecutive levels 0, 1, ..., n.
  bool has_all_steps() const;
};

// Replacement sources for the Picard iteration: grid values of f and g^l at
// time level k (time k dt).
struct SourceOverride {
  std::function<std::vector<double>(int level)> f;
  std::function<std::vector<double>(int level, int l)> g;
};

// Advances the linear SPDE with
//   (I - theta dt L_{n+1}) u_{n+1} = u_n + (1-theta) dt L_n u_n
//                                    + dt (theta f_{n+1} + (1-theta) f_n)
//                                    + sum_l (M^l_n u_n + g^l_n) dB^l.
// Operators and factorizations are cached when the coefficients are time
// invariant.
class Stepper {
 public:
  Stepper(CoefficientSet coeffs, Grid grid, SolverConfig cfg);
  ~Stepper();
  Stepper(Stepper&&) noexcept;
  Stepper& operator=(Stepper&&) noexcept;

  // One step from level n (time n dt).
  std::vector<double> advance(std::span<const double> u, int n, std::span<const double> dB,
                              const SourceOverride* sources = nullptr);
  // (I - theta dt L_{n+1})^{-1} (w + (1-theta) dt L_n w): the generator part
  // of a step applied to an arbitrary right-hand side.
  std::vector<double> implicit_solve(std::span<const double> w, int n);
  const CoefficientSet& coefficients() const noexcept;
  const Grid& grid() const noexcept;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

DensityField step(const DensityField& u, double t, const SolverConfig& cfg, std::span<const double> dB,
                  const CoefficientSet& coeffs);

// Runs from level 0 to the last output time. Output times must sit on the dt
// lattice; time 0 is always recorded.
Trajectory solve(const CoefficientSet& coeffs, std::span<const double> u0, const Grid& grid, const SolverConfig& cfg,
                 const BrownianPath& path, std::span<const double> output_times,
                 const SourceOverride* sources = nullptr);

// L* phi = a:D^2 phi + (d_j a^{ij}) d_i phi - b . grad phi + c phi
double adjoint_generator(const CoefficientSet& coeffs, const TestFunction& phi, double t, const Point& x);
// M^{l*} phi = -d_i(sigma^{il} phi) + h^l phi
double adjoint_noise(const CoefficientSet& coeffs, const TestFunction& phi, double t, const Point& x, int l);

// Max over recorded times of the defect in the weak identity, divided by
// sup_t |int u_t phi| + 1. Needs a trajectory with every step recorded.
double weak_residual(const Trajectory& traj, const TestFunction& phi, const CoefficientSet& coeffs,
                     const BrownianPath& path, const SourceOverride* sources = nullptr);

}  // namespace spdelab
