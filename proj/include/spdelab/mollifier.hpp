#pragma once

#include "spdelab/field.hpp"
#include "spdelab/grid.hpp"
#include "spdelab/model.hpp"

#include <functional>
#include <span>
#include <vector>

namespace spdelab {

// 1 / int exp(-1/(1-|x|^2)) over the unit ball, d = 1 and d = 2.
inline constexpr double kBumpNormalization1 = 2.25228362104;
inline constexpr double kBumpNormalization2 = 2.14356577579;
// sup |psi'| of the cutoff profile, attained at r = 3/2.
inline constexpr double kCutoffSlopeMax = 2.0;

struct MollifierParams {
  double epsilon = 0.1;
  int dim = 1;

  // Throws ArgumentError unless 0 < epsilon < 1 and dim is 1 or 2.
  void validate() const;
};

// rho(x) = Z exp(-1/(1-|x|^2)) on |x| < 1, 0 outside.
double kernel(const Point& x, int dim);
Vec2 kernel_gradient(const Point& x, int dim);
// rho_eps(x) = eps^{-d} rho(x / eps)
double kernel_eps(const Point& x, double eps, int dim);
Vec2 kernel_eps_gradient(const Point& x, double eps, int dim);

// psi(r) = 1 on [0,1], 0 on [2,inf), smooth in between.
double cutoff_profile(double r);
double cutoff_profile_derivative(double r);
// chi_eps(x) = psi(eps |x|)
double cutoff(const Point& x, const MollifierParams& p);
Vec2 cutoff_gradient(const Point& x, const MollifierParams& p);

// Unnormalized lattice quadrature of rho_eps with spacing h (should be ~1).
double kernel_lattice_mass(const MollifierParams& p, double h);
// Throws UnderResolutionError when eps < 2h.
void require_resolved(const MollifierParams& p, double h);

// Discrete kernel on the lattice h Z^d restricted to |y| < eps, with weights
// normalized to sum to 1. Symmetric, so odd moments vanish exactly.
class KernelStencil {
 public:
  KernelStencil(const MollifierParams& p, double h);

  // sum_m w_m v(x - y_m)
  double apply(const std::function<double(const Point&)>& v, const Point& x) const;
  const std::vector<Point>& offsets() const noexcept { return offsets_; }
  const std::vector<double>& weights() const noexcept { return weights_; }
  const MollifierParams& params() const noexcept { return p_; }

 private:
  MollifierParams p_;
  std::vector<Point> offsets_;
  std::vector<double> weights_;
};

// (v * rho_eps) chi_eps^k on the grid. Near the box faces the kernel weights
// are renormalized over the cells that exist.
std::vector<double> mollify_field(const Grid& grid, std::span<const double> values, const MollifierParams& p,
                                  int chi_power = 1);
// Same for a field defined everywhere (no boundary truncation).
std::vector<double> mollify_field(const Grid& grid, const ScalarField& v, double t, const MollifierParams& p,
                                  int chi_power = 1);
// [(b ^ 1/eps) v (-1/eps)] * rho_eps on the grid.
std::vector<double> truncate_drift(const Grid& grid, std::span<const double> b, const MollifierParams& p);
std::vector<double> truncate_drift(const Grid& grid, const ScalarField& b, double t, const MollifierParams& p);

// (v * rho_eps)(x) by a symmetric midpoint rule with `nodes` points per axis.
double mollify_at(const std::function<double(const Point&)>& v, const Point& x, const MollifierParams& p,
                  int nodes = 2000);

// Coefficients of the approximation equation: a -> (a*rho)chi^2; sigma, c, h,
// f, g -> (.*rho)chi; b -> clipped b * rho. Convolutions use a KernelStencil
// with lattice spacing h.
CoefficientSet mollify_coefficients(const CoefficientSet& coeffs, const MollifierParams& p, double h);

// Verifies A_{a_eps, sigma_eps}(xi) >= kappa_eps chi_eps^2 |xi|^2 at every grid
// point, sampled time and direction. The raw coefficients must pass the
// unmollified condition first (HypothesisError otherwise). Slack 1e-10.
ParabolicityReport mollified_parabolicity_check(const CoefficientSet& coeffs, const MollifierParams& p,
                                                const Grid& grid, std::span<const double> times,
                                                const ScalarFn& kappa, int n_dirs = 8,
                                                std::uint64_t direction_seed = 1);

// max over grid points and directions of
//   |(sigma^T xi) * rho|^2 chi^2 - ((|sigma^T xi|^2) * rho) chi^2,
// which must be <= 0 up to round-off.
double jensen_gap(const CoefficientSet& coeffs, const MollifierParams& p, const Grid& grid, double t,
                  int n_dirs = 8, std::uint64_t direction_seed = 1);

// max over grid points of |grad chi_eps| / eps.
double cutoff_derivative_bound(const MollifierParams& p, const Grid& grid);

struct DivBoundRow {
  double epsilon = 0.0;
  double sup_div_mollified = 0.0;  // sup |d((b*rho_eps) chi_eps)|
  double div_norm = 0.0;           // sup |div b|
  double growth_norm = 0.0;        // sup |b| / (1 + |x|)
  double constant = 0.0;           // C(eps)
  double bound = 0.0;              // C (div_norm + growth_norm)
  bool passed = false;
};

struct DivBoundSweep {
  std::vector<DivBoundRow> rows;
  // max over eps of the left side <= 2 x its value at the largest eps.
  bool uniform = false;
};

// One-dimensional drift b on a grid that covers |x| <= 2/eps + eps.
DivBoundRow div_bound_check(const ScalarField& b, const MollifierParams& p, const Grid& grid);
DivBoundSweep div_bound_sweep(const ScalarField& b, std::span<const double> epsilons, const Grid& grid);

}  // namespace spdelab
