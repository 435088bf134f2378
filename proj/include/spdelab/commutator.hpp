#pragma once

#include "spdelab/field.hpp"
#include "spdelab/grid.hpp"

#include <span>
#include <vector>

namespace spdelab {

// Commutators of the mollifier rho_eps with multiplication and transport in
// one dimension, evaluated by composite Gauss-Legendre quadrature over the
// kernel support [x - eps, x + eps], split at the kinks of the inputs.
struct CommutatorOptions {
  int panels = 48;        // per kernel support, before breakpoint splits
  int gauss_points = 16;  // per panel
};

// Values at the grid points farther than eps from the box faces.
struct CommutatorField {
  std::vector<double> x;
  std::vector<double> values;
  double spacing = 0.0;
  double epsilon = 0.0;

  // (h sum_{|x| <= R} |v|^r)^{1/r}
  double norm(double radius, double r = 2.0) const;
};

// rho_eps * (b u') - b (rho_eps * u)'; u must be differentiable.
CommutatorField commutator_direct(const ScalarField& b, const ScalarField& u, double eps, const Grid& grid,
                                  const CommutatorOptions& opt = {});
// int (b(y) - b(x)) u(y) rho_eps'(x - y) dy - int b'(y) u(y) rho_eps(x - y) dy;
// b must be differentiable.
CommutatorField commutator_integral(const ScalarField& b, const ScalarField& u, double eps, const Grid& grid,
                                    const CommutatorOptions& opt = {});
// rho_eps * (c u) - c (rho_eps * u)
CommutatorField commutator_zero_order(const ScalarField& c, const ScalarField& u, double eps, const Grid& grid,
                                      const CommutatorOptions& opt = {});

// Pointwise defect of d[rho, a](u) - [rho, a'](u) - [rho, a d](u).
CommutatorField product_rule_defect(const ScalarField& a, const ScalarField& u, double eps, const Grid& grid,
                                    const CommutatorOptions& opt = {});
// Pointwise defect of [rho, (ab) d](u) - a [rho, b d](u) - [rho, a](b u').
CommutatorField factor_rule_defect(const ScalarField& a, const ScalarField& b, const ScalarField& u, double eps,
                                   const Grid& grid, const CommutatorOptions& opt = {});

struct CommutatorSweep {
  std::vector<double> epsilons;
  std::vector<double> norms;
  std::vector<double> gaps;  // per eps; empty when only one form applies
  double ball_radius = 0.0;
  double exponent = 2.0;
  double consistency_gap = 0.0;  // max of gaps
  bool consistency_checked = false;
};

// ||d - i|| / max(||d||, 1e-6) over the ball.
double relative_gap(const CommutatorField& direct, const CommutatorField& integral, double radius, double r = 2.0);

// Norms of [rho_eps, b d](u) over B_R for a strictly decreasing eps list.
// Requires b or u differentiable (HypothesisError otherwise). Uses the direct
// form when u is differentiable, the integral form otherwise, and records the
// gap between the two when both apply.
CommutatorSweep convergence_sweep(const ScalarField& b, const ScalarField& u, std::span<const double> epsilons,
                                  double radius, const Grid& grid, double r = 2.0, const CommutatorOptions& opt = {});

}  // namespace spdelab
