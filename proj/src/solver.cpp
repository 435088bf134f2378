#include "spdelab/solver.hpp"

#include "spdelab/error.hpp"
#include "spdelab/mollifier.hpp"

#include <Eigen/SparseLU>

#include <algorithm>
#include <cmath>
#include <limits>

namespace spdelab {

namespace {

using Triplets = std::vector<Eigen::Triplet<double>>;

// Neighbour of cell (i, j) shifted by `off` along `axis`; -1 when outside.
long neighbor(const Grid& g, std::size_t k, int axis, int off) {
  int i = g.i_of(k);
  int j = g.j_of(k);
  if (axis == 0) {
    i += off;
    if (i < 0 || i >= g.n(0)) return -1;
  } else {
    j += off;
    if (j < 0 || j >= g.n(1)) return -1;
  }
  return static_cast<long>(g.index(i, j));
}

// Cell index used for a transverse difference, with the boundary ghost rule:
// reflection for zero flux, odd reflection for zero value.
std::pair<std::size_t, double> transverse(const Grid& g, std::size_t k, int axis, int off) {
  const long nb = neighbor(g, k, axis, off);
  if (nb >= 0) return {static_cast<std::size_t>(nb), 1.0};
  return {k, g.boundary() == Boundary::ZeroFlux ? 1.0 : -1.0};
}

Point wall_point(const Grid& g, std::size_t k, int axis, int side) {
  Point x = g.point(k);
  x[axis] += 0.5 * side * g.spacing(axis);
  return x;
}

class LinearSolver {
 public:
  LinearSolver(const SparseOp& a, int dim) : tridiagonal_(dim == 1) {
    const auto n = static_cast<std::size_t>(a.rows());
    if (tridiagonal_) {
      lower_.assign(n, 0.0);
      diag_.assign(n, 0.0);
      upper_.assign(n, 0.0);
      for (int r = 0; r < a.outerSize(); ++r) {
        for (SparseOp::InnerIterator it(a, r); it; ++it) {
          const auto c = it.col();
          if (c == r) {
            diag_[r] = it.value();
          } else if (c == r - 1) {
            lower_[r] = it.value();
          } else if (c == r + 1) {
            upper_[r] = it.value();
          } else {
            throw SolverError("one-dimensional operator is not tridiagonal");
          }
        }
      }
      cprime_.assign(n, 0.0);
      denom_.assign(n, 0.0);
      for (std::size_t i = 0; i < n; ++i) {
        const double d = diag_[i] - (i > 0 ? lower_[i] * cprime_[i - 1] : 0.0);
        if (!std::isfinite(d) || std::abs(d) < 1e-300) throw SolverError("singular tridiagonal system");
        denom_[i] = d;
        cprime_[i] = upper_[i] / d;
      }
    } else {
      Eigen::SparseMatrix<double> col = a;
      lu_ = std::make_unique<Eigen::SparseLU<Eigen::SparseMatrix<double>>>();
      lu_->analyzePattern(col);
      lu_->factorize(col);
      if (lu_->info() != Eigen::Success) throw SolverError("sparse LU factorization failed");
    }
  }

  std::vector<double> solve(std::vector<double> rhs) const {
    const std::size_t n = rhs.size();
    if (tridiagonal_) {
      for (std::size_t i = 0; i < n; ++i) {
        rhs[i] = (rhs[i] - (i > 0 ? lower_[i] * rhs[i - 1] : 0.0)) / denom_[i];
      }
      for (std::size_t i = n - 1; i-- > 0;) rhs[i] -= cprime_[i] * rhs[i + 1];
      return rhs;
    }
    const Eigen::Map<const Eigen::VectorXd> b(rhs.data(), static_cast<Eigen::Index>(n));
    const Eigen::VectorXd x = lu_->solve(b);
    if (lu_->info() != Eigen::Success) throw SolverError("sparse LU solve failed");
    return {x.data(), x.data() + n};
  }

 private:
  bool tridiagonal_;
  std::vector<double> lower_, diag_, upper_, cprime_, denom_;
  std::unique_ptr<Eigen::SparseLU<Eigen::SparseMatrix<double>>> lu_;
};

std::vector<double> apply_op(const SparseOp& op, std::span<const double> u) {
  std::vector<double> out(u.size(), 0.0);
  for (int r = 0; r < op.outerSize(); ++r) {
    double s = 0.0;
    for (SparseOp::InnerIterator it(op, r); it; ++it) s += it.value() * u[it.col()];
    out[r] = s;
  }
  return out;
}

std::vector<double> sample_f(const CoefficientSet& c, const Grid& g, double t) {
  std::vector<double> v(g.size(), 0.0);
  if (!c.f_zero) {
    for (std::size_t k = 0; k < g.size(); ++k) v[k] = c.f(t, g.point(k));
  }
  return v;
}

std::vector<double> sample_g(const CoefficientSet& c, const Grid& g, double t, int l) {
  std::vector<double> v(g.size(), 0.0);
  if (!c.g_zero) {
    for (std::size_t k = 0; k < g.size(); ++k) v[k] = c.g(t, g.point(k), l);
  }
  return v;
}

void require_finite_values(std::span<const double> v, const char* what) {
  for (double x : v) {
    if (!std::isfinite(x)) throw SolverError(std::string("non-finite values in ") + what);
  }
}

}  // namespace

void SolverConfig::validate() const {
  if (!(dt > 0.0) || !std::isfinite(dt)) throw ConfigError("dt must be positive");
  if (!(theta >= 0.5 && theta <= 1.0)) throw ConfigError("theta must lie in [1/2, 1]");
  if (mollify_eps && !(*mollify_eps > 0.0 && *mollify_eps < 1.0)) throw ConfigError("mollify eps must lie in (0,1)");
}

SparseOp assemble_generator(const CoefficientSet& coeffs, const Grid& grid, double t) {
  if (grid.dim() != coeffs.dim) throw ConfigError("grid and coefficient dimensions differ");
  const std::size_t n = grid.size();
  const int dim = grid.dim();
  const double h = grid.spacing();
  std::vector<Mat2> a(n);
  std::vector<Vec2> b(n);
  Triplets trip;
  trip.reserve(n * (dim == 1 ? 3 : 11));
  for (std::size_t k = 0; k < n; ++k) {
    const Point x = grid.point(k);
    a[k] = coeffs.a(t, x);
    if (dim == 2 && a[k](0, 1) != a[k](1, 0)) {
      throw ModelInvariantError("a is not symmetric at x=(" + std::to_string(x[0]) + "," + std::to_string(x[1]) + ")");
    }
    b[k] = coeffs.b(t, x);
    if (!coeffs.c_zero) trip.emplace_back(k, k, coeffs.c(t, x));
  }
  const double h2 = h * h;
  for (int axis = 0; axis < dim; ++axis) {
    const int other = 1 - axis;
    for (std::size_t k = 0; k < n; ++k) {
      const long kp = neighbor(grid, k, axis, +1);
      if (kp >= 0) {
        const auto k2 = static_cast<std::size_t>(kp);
        // Normal diffusive flux through the face between k and k2, times h.
        const double af = 0.5 * (a[k](axis, axis) + a[k2](axis, axis));
        // coefficient list of (cell, weight) for h * flux
        std::vector<std::pair<std::size_t, double>> flux{{k2, af / h}, {k, -af / h}};
        if (dim == 2) {
          const double cross = 0.5 * (a[k](axis, other) + a[k2](axis, other));
          if (cross != 0.0) {
            const double w = cross / (4.0 * h);
            for (std::size_t cell : {k, k2}) {
              const auto up = transverse(grid, cell, other, +1);
              const auto dn = transverse(grid, cell, other, -1);
              flux.emplace_back(up.first, w * up.second);
              flux.emplace_back(dn.first, -w * dn.second);
            }
          }
        }
        // Advective flux (b u)_face by averaging.
        flux.emplace_back(k, 0.5 * b[k][axis]);
        flux.emplace_back(k2, 0.5 * b[k2][axis]);
        for (const auto& [cell, w] : flux) {
          trip.emplace_back(k, cell, w / h);
          trip.emplace_back(k2, cell, -w / h);
        }
      }
      if (grid.boundary() == Boundary::ZeroValue) {
        // Odd ghost across the wall: flux = 2 a u_k / h.
        for (int side : {-1, +1}) {
          if (neighbor(grid, k, axis, side) >= 0) continue;
          const double aw = coeffs.a(t, wall_point(grid, k, axis, side))(axis, axis);
          trip.emplace_back(k, k, -2.0 * aw / h2);
        }
      }
    }
  }
  SparseOp op(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  op.setFromTriplets(trip.begin(), trip.end());
  return op;
}

SparseOp assemble_noise_op(const CoefficientSet& coeffs, const Grid& grid, double t, int l) {
  if (l < 0 || l >= coeffs.drivers) throw ArgumentError("driver index " + std::to_string(l) + " out of range");
  if (grid.dim() != coeffs.dim) throw ConfigError("grid and coefficient dimensions differ");
  const std::size_t n = grid.size();
  const double h = grid.spacing();
  Triplets trip;
  trip.reserve(n * (1 + 4 * grid.dim()));
  for (std::size_t k = 0; k < n; ++k) {
    const Point x = grid.point(k);
    if (!coeffs.h_zero) trip.emplace_back(k, k, coeffs.h(t, x, l));
    if (coeffs.sigma_zero) continue;
    const Vec2 s = coeffs.sigma(t, x, l);
    for (int axis = 0; axis < grid.dim(); ++axis) {
      if (s[axis] == 0.0) continue;
      // d u = (u_{face+} - u_{face-}) / h with face averages; wall faces carry 0.
      const double w = s[axis] / (2.0 * h);
      const long kp = neighbor(grid, k, axis, +1);
      const long km = neighbor(grid, k, axis, -1);
      if (kp >= 0) {
        trip.emplace_back(k, k, w);
        trip.emplace_back(k, kp, w);
      }
      if (km >= 0) {
        trip.emplace_back(k, k, -w);
        trip.emplace_back(k, km, -w);
      }
    }
  }
  SparseOp op(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  op.setFromTriplets(trip.begin(), trip.end());
  return op;
}

void check_stability(const CoefficientSet& coeffs, const Grid& grid, double t, double dt) {
  if (coeffs.sigma_zero) return;
  const double h = grid.spacing();
  double smax = 0.0;
  const std::size_t n = grid.size();
  std::vector<Mat2> a(n);
  std::vector<std::vector<Vec2>> s(n, std::vector<Vec2>(coeffs.drivers));
  for (std::size_t k = 0; k < n; ++k) {
    const Point x = grid.point(k);
    a[k] = coeffs.a(t, x);
    double tot = 0.0;
    for (int l = 0; l < coeffs.drivers; ++l) {
      s[k][l] = coeffs.sigma(t, x, l);
      tot += s[k][l].squaredNorm();
    }
    smax = std::max(smax, tot);
  }
  if (dt * smax / (h * h) > 1.0) {
    throw StabilityError("dt sum|sigma|^2 / h^2 = " + std::to_string(dt * smax / (h * h)) + " exceeds 1",
                         h * h / smax);
  }
  for (int axis = 0; axis < grid.dim(); ++axis) {
    for (std::size_t k = 0; k < n; ++k) {
      const long kp = neighbor(grid, k, axis, +1);
      if (kp < 0) continue;
      const double af = 0.5 * (a[k](axis, axis) + a[kp](axis, axis));
      double sf = 0.0;
      for (int l = 0; l < coeffs.drivers; ++l) sf += std::pow(0.5 * (s[k][l][axis] + s[kp][l][axis]), 2);
      if (2.0 * af - sf < -1e-12) {
        throw StabilityError("face degeneracy margin 2a - |sigma|^2 = " + std::to_string(2.0 * af - sf) +
                                 " is negative at x=" + std::to_string(grid.point(k)[0]),
                             0.0);
      }
    }
  }
}

DensityField Trajectory::snapshot(std::size_t k) const {
  DensityField f;
  f.grid = grid;
  f.values = values.at(k);
  f.time_index = steps.at(k);
  f.time = times.at(k);
  return f;
}

bool Trajectory::has_all_steps() const {
  for (std::size_t k = 0; k < steps.size(); ++k) {
    if (steps[k] != static_cast<int>(k)) return false;
  }
  return !steps.empty();
}

struct Stepper::Impl {
  CoefficientSet coeffs;
  Grid grid;
  SolverConfig cfg;
  // Cached when time invariant.
  std::optional<SparseOp> generator;
  std::vector<SparseOp> noise;
  std::unique_ptr<LinearSolver> solver;
  bool checked = false;

  SparseOp implicit_matrix(const SparseOp& l) const {
    SparseOp id(l.rows(), l.cols());
    id.setIdentity();
    return SparseOp(id - cfg.theta * cfg.dt * l);
  }
};

Stepper::Stepper(CoefficientSet coeffs, Grid grid, SolverConfig cfg) : impl_(std::make_unique<Impl>()) {
  cfg.validate();
  if (grid.dim() != coeffs.dim) throw ConfigError("grid and coefficient dimensions differ");
  if (cfg.milstein && !coeffs.sigma_zero) throw ArgumentError("the Milstein correction needs sigma == 0 in M");
  impl_->coeffs = std::move(coeffs);
  impl_->grid = std::move(grid);
  impl_->cfg = cfg;
  if (impl_->coeffs.time_invariant) {
    impl_->generator = assemble_generator(impl_->coeffs, impl_->grid, 0.0);
    for (int l = 0; l < impl_->coeffs.drivers; ++l) {
      impl_->noise.push_back(assemble_noise_op(impl_->coeffs, impl_->grid, 0.0, l));
    }
    impl_->solver = std::make_unique<LinearSolver>(impl_->implicit_matrix(*impl_->generator), impl_->grid.dim());
    if (cfg.stability_guard) check_stability(impl_->coeffs, impl_->grid, 0.0, cfg.dt);
  }
}

Stepper::~Stepper() = default;
Stepper::Stepper(Stepper&&) noexcept = default;
Stepper& Stepper::operator=(Stepper&&) noexcept = default;

const CoefficientSet& Stepper::coefficients() const noexcept { return impl_->coeffs; }
const Grid& Stepper::grid() const noexcept { return impl_->grid; }

std::vector<double> Stepper::advance(std::span<const double> u, int n, std::span<const double> dB,
                                     const SourceOverride* sources) {
  auto& im = *impl_;
  const auto& c = im.coeffs;
  const auto& g = im.grid;
  const auto& cfg = im.cfg;
  if (u.size() != g.size()) throw ArgumentError("state size does not match the grid");
  if (static_cast<int>(dB.size()) != c.drivers) throw ArgumentError("increment count does not match the drivers");
  const double t0 = n * cfg.dt;
  const double t1 = (n + 1) * cfg.dt;
  const double th = cfg.theta;

  const bool cached = c.time_invariant;
  std::vector<SparseOp> noise_local;
  if (!cached) {
    if (cfg.stability_guard) check_stability(c, g, t0, cfg.dt);
    for (int l = 0; l < c.drivers; ++l) noise_local.push_back(assemble_noise_op(c, g, t0, l));
  }
  const std::vector<SparseOp>& noise = cached ? im.noise : noise_local;

  std::vector<double> rhs(u.begin(), u.end());
  if (th < 1.0) {
    const SparseOp l0 = cached ? *im.generator : assemble_generator(c, g, t0);
    const auto lu = apply_op(l0, u);
    for (std::size_t k = 0; k < rhs.size(); ++k) rhs[k] += (1.0 - th) * cfg.dt * lu[k];
  }
  // Deterministic source.
  const bool have_f = (sources && sources->f) || !c.f_zero;
  if (have_f) {
    auto f_at = [&](int level, double t) { return sources && sources->f ? sources->f(level) : sample_f(c, g, t); };
    const auto f1 = f_at(n + 1, t1);
    for (std::size_t k = 0; k < rhs.size(); ++k) rhs[k] += th * cfg.dt * f1[k];
    if (th < 1.0) {
      const auto f0 = f_at(n, t0);
      for (std::size_t k = 0; k < rhs.size(); ++k) rhs[k] += (1.0 - th) * cfg.dt * f0[k];
    }
  }
  // Noise at the left point.
  const bool have_g = (sources && sources->g) || !c.g_zero;
  std::vector<std::vector<double>> mu(c.drivers);
  for (int l = 0; l < c.drivers; ++l) {
    mu[l] = apply_op(noise[l], u);
    if (have_g) {
      const auto gl = sources && sources->g ? sources->g(n, l) : sample_g(c, g, t0, l);
      for (std::size_t k = 0; k < rhs.size(); ++k) mu[l][k] += gl[k];
    }
    for (std::size_t k = 0; k < rhs.size(); ++k) rhs[k] += mu[l][k] * dB[l];
  }
  if (cfg.milstein) {
    // Diagonal M commute: 1/2 sum_{l,m} M_l (M_m u + g_m) (dB_l dB_m - delta dt).
    for (int l = 0; l < c.drivers; ++l) {
      const auto& op = noise[l];
      for (int m = 0; m < c.drivers; ++m) {
        const double w = 0.5 * (dB[l] * dB[m] - (l == m ? cfg.dt : 0.0));
        for (std::size_t k = 0; k < rhs.size(); ++k) rhs[k] += w * op.coeff(k, k) * mu[m][k];
      }
    }
  }
  std::vector<double> out;
  if (cached) {
    out = im.solver->solve(std::move(rhs));
  } else {
    const LinearSolver ls(im.implicit_matrix(assemble_generator(c, g, t1)), g.dim());
    out = ls.solve(std::move(rhs));
  }
  require_finite_values(out, "solver step");
  return out;
}

std::vector<double> Stepper::implicit_solve(std::span<const double> w, int n) {
  auto& im = *impl_;
  const auto& c = im.coeffs;
  const auto& g = im.grid;
  const auto& cfg = im.cfg;
  if (w.size() != g.size()) throw ArgumentError("state size does not match the grid");
  std::vector<double> rhs(w.begin(), w.end());
  if (cfg.theta < 1.0) {
    const SparseOp l0 = c.time_invariant ? *im.generator : assemble_generator(c, g, n * cfg.dt);
    const auto lw = apply_op(l0, w);
    for (std::size_t k = 0; k < rhs.size(); ++k) rhs[k] += (1.0 - cfg.theta) * cfg.dt * lw[k];
  }
  std::vector<double> out;
  if (c.time_invariant) {
    out = im.solver->solve(std::move(rhs));
  } else {
    const LinearSolver ls(im.implicit_matrix(assemble_generator(c, g, (n + 1) * cfg.dt)), g.dim());
    out = ls.solve(std::move(rhs));
  }
  require_finite_values(out, "implicit solve");
  return out;
}

DensityField step(const DensityField& u, double t, const SolverConfig& cfg, std::span<const double> dB,
                  const CoefficientSet& coeffs) {
  const double level = t / cfg.dt;
  const int n = static_cast<int>(std::llround(level));
  if (std::abs(level - n) > 1e-9 * std::max(1.0, level)) throw ArgumentError("t is not on the dt lattice");
  Stepper st(coeffs, u.grid, cfg);
  DensityField out;
  out.grid = u.grid;
  out.values = st.advance(u.values, n, dB);
  out.time_index = u.time_index + 1;
  out.time = t + cfg.dt;
  return out;
}

Trajectory solve(const CoefficientSet& coeffs_in, std::span<const double> u0_in, const Grid& grid,
                 const SolverConfig& cfg, const BrownianPath& path, std::span<const double> output_times,
                 const SourceOverride* sources) {
  cfg.validate();
  if (u0_in.size() != grid.size()) throw ArgumentError("initial field size does not match the grid");
  require_finite_values(u0_in, "initial field");
  if (path.drivers != coeffs_in.drivers) throw ConfigError("path driver count does not match the coefficients");
  if (std::abs(path.dt - cfg.dt) > 1e-12 * cfg.dt) throw ConfigError("path dt does not match the solver dt");
  std::vector<int> out_levels;
  for (double t : output_times) {
    const double level = t / cfg.dt;
    const long n = std::lround(level);
    if (std::abs(level - static_cast<double>(n)) > 1e-6 || n < 0) {
      throw ConfigError("output time " + std::to_string(t) + " is not on the dt lattice");
    }
    if (!out_levels.empty() && n <= out_levels.back()) throw ConfigError("output times must be strictly increasing");
    out_levels.push_back(static_cast<int>(n));
  }
  const int n_total = out_levels.empty() ? 0 : out_levels.back();
  if (path.n_steps < n_total) throw ConfigError("driving path is shorter than the run");

  CoefficientSet coeffs = coeffs_in;
  std::vector<double> u(u0_in.begin(), u0_in.end());
  if (cfg.mollify_eps) {
    const MollifierParams p{*cfg.mollify_eps, grid.dim()};
    coeffs = mollify_coefficients(coeffs_in, p, grid.spacing());
    u = mollify_field(grid, u, p, 1);
  }

  Trajectory traj;
  traj.grid = grid;
  traj.cfg = cfg;
  auto record = [&](int level) {
    traj.times.push_back(level * cfg.dt);
    traj.steps.push_back(level);
    traj.mass.push_back(grid_integral(grid, u));
    traj.l2.push_back(grid_l2(grid, u));
    traj.values.push_back(u);
  };
  record(0);
  std::size_t next = (!out_levels.empty() && out_levels.front() == 0) ? 1 : 0;
  Stepper st(coeffs, grid, cfg);
  for (int n = 0; n < n_total; ++n) {
    u = st.advance(u, n, path.step_increments(n), sources);
    const bool is_output = next < out_levels.size() && out_levels[next] == n + 1;
    if (is_output) ++next;
    if (is_output || cfg.record_all_steps) record(n + 1);
  }
  // Boundary-cell mass guard.
  double edge = 0.0;
  double total = 0.0;
  for (std::size_t k = 0; k < grid.size(); ++k) {
    total += std::abs(u[k]);
    if (grid.distance_to_boundary(k) < grid.spacing()) edge += std::abs(u[k]);
  }
  if (total > 0.0 && edge / total >= 1e-6) {
    traj.warnings.push_back("boundary-cell mass fraction " + std::to_string(edge / total) + " >= 1e-6");
  }
  return traj;
}

double adjoint_generator(const CoefficientSet& coeffs, const TestFunction& phi, double t, const Point& x) {
  const Mat2 a = coeffs.a(t, x);
  const Vec2 da = coeffs.divergence_of_a(t, x);
  const Vec2 b = coeffs.b(t, x);
  const Vec2 gp = phi.gradient(x);
  const Mat2 hp = phi.hessian(x);
  double s = 0.0;
  for (int i = 0; i < coeffs.dim; ++i) {
    for (int j = 0; j < coeffs.dim; ++j) s += a(i, j) * hp(i, j);
    s += da[i] * gp[i] - b[i] * gp[i];
  }
  if (!coeffs.c_zero) s += coeffs.c(t, x) * phi.value(x);
  return s;
}

double adjoint_noise(const CoefficientSet& coeffs, const TestFunction& phi, double t, const Point& x, int l) {
  const double v = phi.value(x);
  double s = coeffs.h_zero ? 0.0 : coeffs.h(t, x, l) * v;
  if (!coeffs.sigma_zero) {
    const Vec2 sg = coeffs.sigma(t, x, l);
    const Vec2 gp = phi.gradient(x);
    s -= coeffs.divergence_of_sigma(t, x, l) * v;
    for (int i = 0; i < coeffs.dim; ++i) s -= sg[i] * gp[i];
  }
  return s;
}

double weak_residual(const Trajectory& traj, const TestFunction& phi, const CoefficientSet& coeffs,
                     const BrownianPath& path, const SourceOverride* sources) {
  if (!traj.has_all_steps()) throw ArgumentError("weak residual needs every time level recorded");
  const Grid& grid = traj.grid;
  for (int axis = 0; axis < grid.dim(); ++axis) {
    const double r = phi.support_radius();
    if (phi.center()[axis] - r <= grid.lo(axis) || phi.center()[axis] + r >= grid.hi(axis)) {
      throw ArgumentError("test function support touches the boundary: " + phi.describe());
    }
  }
  const double dt = traj.cfg.dt;
  const double th = traj.cfg.theta;
  const std::size_t n = grid.size();
  const int levels = static_cast<int>(traj.size());
  if (path.n_steps < levels - 1) throw ConfigError("driving path is shorter than the trajectory");

  std::vector<double> phi_v(n);
  for (std::size_t k = 0; k < n; ++k) phi_v[k] = phi.value(grid.point(k));
  auto pair = [&](std::span<const double> u, std::span<const double> w) {
    std::vector<double> prod(n);
    for (std::size_t k = 0; k < n; ++k) prod[k] = u[k] * w[k];
    return grid_integral(grid, prod);
  };

  struct Level {
    std::vector<double> lphi;
    std::vector<std::vector<double>> mphi;
    double fphi = 0.0;
    std::vector<double> gphi;
  };
  auto eval_level = [&](int k) {
    const double t = k * dt;
    Level lv;
    lv.lphi.resize(n);
    lv.mphi.assign(coeffs.drivers, std::vector<double>(n));
    for (std::size_t q = 0; q < n; ++q) {
      const Point x = grid.point(q);
      lv.lphi[q] = adjoint_generator(coeffs, phi, t, x);
      for (int l = 0; l < coeffs.drivers; ++l) lv.mphi[l][q] = adjoint_noise(coeffs, phi, t, x, l);
    }
    if (sources && sources->f) {
      lv.fphi = pair(sources->f(k), phi_v);
    } else if (!coeffs.f_zero) {
      lv.fphi = pair(sample_f(coeffs, grid, t), phi_v);
    }
    lv.gphi.assign(coeffs.drivers, 0.0);
    for (int l = 0; l < coeffs.drivers; ++l) {
      if (sources && sources->g) {
        lv.gphi[l] = pair(sources->g(k, l), phi_v);
      } else if (!coeffs.g_zero) {
        lv.gphi[l] = pair(sample_g(coeffs, grid, t, l), phi_v);
      }
    }
    return lv;
  };

  const bool frozen = coeffs.time_invariant && !(sources && (sources->f || sources->g));
  Level cur = eval_level(0);
  const double base = pair(traj.values[0], phi_v);
  double sup_pair = std::abs(base);
  double drift = 0.0;
  double stoch = 0.0;
  double worst = 0.0;
  double lu_cur = pair(traj.values[0], cur.lphi);
  for (int k = 0; k + 1 < levels; ++k) {
    Level nxt = frozen ? cur : eval_level(k + 1);
    const double lu_next = pair(traj.values[k + 1], nxt.lphi);
    drift += dt * (th * (lu_next + nxt.fphi) + (1.0 - th) * (lu_cur + cur.fphi));
    for (int l = 0; l < coeffs.drivers; ++l) {
      stoch += (pair(traj.values[k], cur.mphi[l]) + cur.gphi[l]) * path.increment(k, l);
    }
    const double now = pair(traj.values[k + 1], phi_v);
    sup_pair = std::max(sup_pair, std::abs(now));
    worst = std::max(worst, std::abs(now - base - drift - stoch));
    cur = std::move(nxt);
    lu_cur = lu_next;
  }
  return worst / (sup_pair + 1.0);
}

}  // namespace spdelab
