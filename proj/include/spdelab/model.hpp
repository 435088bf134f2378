#pragma once

#include "spdelab/field.hpp"
#include "spdelab/grid.hpp"
#include "spdelab/types.hpp"

#include <array>
#include <cstdint>
#include <span>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace spdelab {

using ScalarFn = std::function<double(double t, const Point& x)>;
using VectorFn = std::function<Vec2(double t, const Point& x)>;
using MatrixFn = std::function<Mat2(double t, const Point& x)>;
// Per-driver quantities: column l of sigma, component l of h and g.
using DriverVectorFn = std::function<Vec2(double t, const Point& x, int l)>;
using DriverScalarFn = std::function<double(double t, const Point& x, int l)>;

// Coefficients of
//   L u   = d_i(a^{ij} d_j u) + d_i(b^i u) + c u
//   M^l u = sigma^{il} d_i u + h^l u
// plus the sources f, g^l. Immutable once built; safe to share.
//
// Fields may close over a realized driving/observation path. They must then
// read only path data strictly before step(t) so the coefficients stay
// adapted.
struct CoefficientSet {
  int dim = 1;
  int drivers = 1;
  MatrixFn a;
  VectorFn b;
  ScalarFn c;
  DriverVectorFn sigma;
  DriverScalarFn h;
  ScalarFn f;
  DriverScalarFn g;

  // Optional factorization a = sigma_hat sigma_hat^T with this many columns.
  int sigma_hat_columns = 0;
  DriverVectorFn sigma_hat;

  // Optional analytic derivatives; central differences are used otherwise.
  VectorFn div_a;   // (d_j a^{ij})_i
  ScalarFn div_b;   // d_i b^i

  bool time_invariant = false;
  // Exact-zero declarations (set by builders, never guessed).
  bool c_zero = false;
  bool f_zero = false;
  bool g_zero = false;
  bool h_zero = false;
  bool sigma_zero = false;

  std::string description;

  bool has_factorization() const { return sigma_hat_columns > 0 && static_cast<bool>(sigma_hat); }

  // Fourth-order central differences for the derivative helpers.
  Vec2 divergence_of_a(double t, const Point& x) const;
  double divergence_of_b(double t, const Point& x) const;
  double divergence_of_sigma(double t, const Point& x, int l) const;  // d_i sigma^{il}
};

// Serializable description of a CoefficientSet through parametric families.
// Index conventions: a = {a11, a12, a22}; sigma[l] = column l; sigma_hat[k]
// likewise. Unset entries are identically zero.
struct CoefficientSpec {
  int dim = 1;
  int drivers = 1;
  std::array<ScalarField, 3> a{};
  std::array<ScalarField, 2> b{};
  ScalarField c{};
  ScalarField f{};
  std::vector<std::array<ScalarField, 2>> sigma;  // size drivers
  std::vector<ScalarField> h;                     // size drivers
  std::vector<ScalarField> g;                     // size drivers
  std::vector<std::array<ScalarField, 2>> sigma_hat;

  // Fills missing per-driver entries with zero fields and checks sizes.
  void normalize();
  CoefficientSet build() const;
  std::string describe() const;
};

// Throws ModelInvariantError / EvaluationError if a is not symmetric, a field
// is non-finite, or a factorization disagrees with a (relative 1e-12) at any
// sampled (t, grid point).
void validate_coefficients(const CoefficientSet& coeffs, const Grid& grid, std::span<const double> times);

// 2 xi^T a xi - sum_l (sigma_l . xi)^2
double parabolic_defect(const CoefficientSet& coeffs, double t, const Point& x, const Vec2& xi);

struct ParabolicityWitness {
  double t;
  Point x;
  Vec2 xi;
  double defect;  // A(xi) - kappa |xi|^2
};

struct ParabolicityReport {
  double min_defect = 0.0;  // min of (A(xi) - kappa(x)|xi|^2) / |xi|^2 over samples
  double kappa_floor = 0.0;
  double alpha = 0.0;
  double tolerance = 1e-12;
  bool passed = false;
  std::size_t samples = 0;
  std::vector<ParabolicityWitness> witnesses;  // smallest defects, ascending
};

// d axis directions followed by n_dirs - d seeded uniform unit vectors.
std::vector<Vec2> sample_directions(int dim, int n_dirs, std::uint64_t seed);

ParabolicityReport verify_parabolicity(const CoefficientSet& coeffs, const Grid& grid, std::span<const double> times,
                                       const ScalarFn& kappa, int n_dirs, std::uint64_t direction_seed = 1);

struct FactorizedMargin {
  double margin;      // |sigma_hat^T xi|^2 - alpha |sigma^T xi|^2
  double coercivity;  // (2 alpha - 1) / (1 + alpha)
};

FactorizedMargin factorized_margin(const CoefficientSet& coeffs, double alpha, double t, const Point& x,
                                   const Vec2& xi);

}  // namespace spdelab
