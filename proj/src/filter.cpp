#include "spdelab/filter.hpp"

#include "spdelab/error.hpp"
#include "spdelab/mollifier.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace spdelab {

namespace {

constexpr std::uint64_t kInitialStateStream = 0x5EED0000ULL;

Point pt(double x) { return Point(x, 0.0); }

// Levels of the requested output times on the dt lattice.
std::vector<int> output_levels(std::span<const double> times, double dt) {
  std::vector<int> out;
  for (double t : times) {
    const double level = t / dt;
    const long n = std::lround(level);
    if (std::abs(level - static_cast<double>(n)) > 1e-6 || n < 0) {
      throw ConfigError("output time " + std::to_string(t) + " is not on the dt lattice");
    }
    if (!out.empty() && n <= out.back()) throw ConfigError("output times must be strictly increasing");
    out.push_back(static_cast<int>(n));
  }
  return out;
}

// Inverse CDF of a non-negative cell density, uniform within a cell.
class CellSampler {
 public:
  CellSampler(double lo, double h, std::vector<double> density) : lo_(lo), h_(h) {
    cum_.resize(density.size() + 1, 0.0);
    for (std::size_t i = 0; i < density.size(); ++i) cum_[i + 1] = cum_[i] + std::max(density[i], 0.0);
    if (!(cum_.back() > 0.0)) throw ScenarioError("prior has no mass on the sampling lattice");
  }

  double operator()(double u) const {
    const double target = u * cum_.back();
    auto it = std::upper_bound(cum_.begin(), cum_.end(), target);
    std::size_t i = static_cast<std::size_t>(std::distance(cum_.begin(), it));
    i = std::clamp<std::size_t>(i, 1, cum_.size() - 1) - 1;
    const double mass = cum_[i + 1] - cum_[i];
    const double frac = mass > 0.0 ? (target - cum_[i]) / mass : 0.5;
    return lo_ + (static_cast<double>(i) + std::clamp(frac, 0.0, 1.0)) * h_;
  }

 private:
  double lo_;
  double h_;
  std::vector<double> cum_;
};

void check_truth(const TruthRealization& truth, const SolverConfig& cfg, int d1) {
  if (truth.d1 != d1) throw ConfigError("truth and scenario observation dimensions differ");
  if (std::abs(truth.dt - cfg.dt) > 1e-12 * cfg.dt) throw ConfigError("truth dt does not match the solver dt");
}

CoefficientSet maybe_mollified(const CoefficientSet& c, const Grid& grid, const SolverConfig& cfg) {
  if (!cfg.mollify_eps) return c;
  return mollify_coefficients(c, MollifierParams{*cfg.mollify_eps, 1}, grid.spacing());
}

std::vector<std::vector<double>> h_on_grid(const CoefficientSet& c, const Grid& grid, double t) {
  std::vector<std::vector<double>> h(c.drivers, std::vector<double>(grid.size(), 0.0));
  if (c.h_zero) return h;
  for (int l = 0; l < c.drivers; ++l) {
    for (std::size_t k = 0; k < grid.size(); ++k) h[l][k] = c.h(t, grid.point(k), l);
  }
  return h;
}

double pair(const Grid& grid, std::span<const double> a, std::span<const double> b) {
  std::vector<double> prod(a.size());
  for (std::size_t k = 0; k < a.size(); ++k) prod[k] = a[k] * b[k];
  return grid_integral(grid, prod);
}

}  // namespace

void FilterScenario::validate() const {
  const auto d1 = static_cast<Eigen::Index>(b_tilde.size());
  if (d1 < 1 || d1 > 2) throw ConfigError("observation dimension must be 1 or 2");
  if (sigma_tilde.rows() != d1 || sigma_tilde.cols() != d1) {
    throw ConfigError("sigma_tilde must be a square matrix matching b_tilde");
  }
  if (!(std::abs(sigma_tilde.determinant()) > 1e-12)) {
    throw ModelInvariantError("sigma_tilde is not invertible (|det| <= 1e-12)");
  }
  if (!sigma_hat.differentiable()) throw ConfigError("sigma_hat must be differentiable in x");
  if (!(prior_hi > prior_lo)) throw ConfigError("prior sampling interval is empty");
}

FilterScenario FilterScenario::kalman_bucy(const LinearGaussianModel& m) {
  if (!(m.P0 > 0.0)) throw ConfigError("prior variance must be positive");
  FilterScenario sc;
  sc.b_hat = ScalarField::affine(0.0, Vec2(m.A, 0.0));
  sc.sigma_hat = ScalarField::constant(m.Q);
  sc.b_tilde = {ScalarField::affine(0.0, Vec2(m.H, 0.0))};
  sc.sigma_tilde = Eigen::MatrixXd::Constant(1, 1, m.R);
  const double sd = std::sqrt(m.P0);
  sc.prior = ScalarField::gaussian(1.0 / (sd * std::sqrt(2.0 * std::numbers::pi)), pt(m.m0), sd);
  sc.prior_lo = m.m0 - 10.0 * sd;
  sc.prior_hi = m.m0 + 10.0 * sd;
  sc.linear = m;
  return sc;
}

BrownianPath TruthRealization::bbar_path() const {
  BrownianPath p;
  p.drivers = d1;
  p.n_steps = n_steps;
  p.dt = dt;
  p.increments = bbar;
  p.seed = seed;
  p.generator_id = "observation/bbar";
  return p;
}

TruthRealization coarsen(const TruthRealization& truth, int factor) {
  if (factor < 1 || truth.n_steps % factor != 0) throw ArgumentError("coarsening factor must divide n_steps");
  TruthRealization c;
  c.n_steps = truth.n_steps / factor;
  c.d1 = truth.d1;
  c.dt = truth.dt * factor;
  c.seed = truth.seed;
  for (int n = 0; n <= c.n_steps; ++n) {
    c.x_path.push_back(truth.x_path[static_cast<std::size_t>(n) * factor]);
    for (int k = 0; k < truth.d1; ++k) c.y_path.push_back(truth.y(n * factor, k));
  }
  for (int n = 0; n < c.n_steps; ++n) {
    for (int k = 0; k < truth.d1; ++k) {
      double s = 0.0;
      for (int q = 0; q < factor; ++q) s += truth.bbar[static_cast<std::size_t>(n * factor + q) * truth.d1 + k];
      c.bbar.push_back(s);
    }
  }
  return c;
}

CoefficientSet zakai_coefficients(const FilterScenario& sc) {
  sc.validate();
  const int d1 = sc.observation_dim();
  const Eigen::MatrixXd sinv = sc.sigma_tilde.inverse();
  CoefficientSet c;
  c.dim = 1;
  c.drivers = d1;
  const ScalarField sh = sc.sigma_hat;
  const ScalarField bh = sc.b_hat;
  c.a = [sh](double t, const Point& x) {
    const double s = sh(t, x);
    Mat2 m = Mat2::Zero();
    m(0, 0) = 0.5 * s * s;
    return m;
  };
  c.div_a = [sh](double t, const Point& x) { return Vec2(sh(t, x) * sh.gradient(t, x)[0], 0.0); };
  // L u = d(a du) - d(b_f u) with b_f = b_hat - a'; the generic form carries +d(b u).
  c.b = [sh, bh](double t, const Point& x) { return Vec2(sh(t, x) * sh.gradient(t, x)[0] - bh(t, x), 0.0); };
  c.div_b = [sh, bh](double t, const Point& x) {
    const double s1 = sh.gradient(t, x)[0];
    return s1 * s1 + sh(t, x) * sh.hessian(t, x)(0, 0) - bh.gradient(t, x)[0];
  };
  c.c = [](double, const Point&) { return 0.0; };
  c.f = [](double, const Point&) { return 0.0; };
  c.sigma = [](double, const Point&, int) { return Vec2::Zero().eval(); };
  c.g = [](double, const Point&, int) { return 0.0; };
  const auto bt = sc.b_tilde;
  c.h = [bt, sinv](double t, const Point& x, int l) {
    double s = 0.0;
    for (std::size_t j = 0; j < bt.size(); ++j) s += sinv(l, static_cast<Eigen::Index>(j)) * bt[j](t, x);
    return s;
  };
  c.sigma_hat_columns = 1;
  c.sigma_hat = [sh](double t, const Point& x, int) { return Vec2(sh(t, x) / std::numbers::sqrt2, 0.0); };
  c.c_zero = c.f_zero = c.g_zero = c.sigma_zero = true;
  c.h_zero = std::all_of(bt.begin(), bt.end(), [](const ScalarField& f) { return f.is_zero(); });
  bool ti = sh.time_slope() == 0.0 && bh.time_slope() == 0.0;
  for (const auto& f : bt) ti = ti && f.time_slope() == 0.0;
  c.time_invariant = ti;
  c.description = "zakai:b_hat=" + bh.describe() + ";sigma_hat=" + sh.describe();
  return c;
}

TruthRealization simulate_truth(const FilterScenario& sc, std::uint64_t seed, int n_steps, double dt) {
  sc.validate();
  if (n_steps <= 0 || !(dt > 0.0)) throw ArgumentError("simulate_truth needs n_steps > 0 and dt > 0");
  const int d1 = sc.observation_dim();
  const BrownianPath drivers = generate_path(seed, 1 + d1, n_steps, dt);
  const Eigen::MatrixXd sinv = sc.sigma_tilde.inverse();
  TruthRealization tr;
  tr.n_steps = n_steps;
  tr.d1 = d1;
  tr.dt = dt;
  tr.seed = seed;
  double x;
  if (sc.x0) {
    x = *sc.x0;
  } else {
    constexpr int kCells = 4096;
    const double h = (sc.prior_hi - sc.prior_lo) / kCells;
    std::vector<double> dens(kCells);
    for (int i = 0; i < kCells; ++i) dens[i] = sc.prior(0.0, pt(sc.prior_lo + (i + 0.5) * h));
    x = CellSampler(sc.prior_lo, h, std::move(dens))(counter_uniform(seed, kInitialStateStream, 0));
  }
  tr.x_path.reserve(n_steps + 1);
  tr.x_path.push_back(x);
  tr.y_path.assign(d1, 0.0);
  tr.bbar.reserve(static_cast<std::size_t>(n_steps) * d1);
  Eigen::VectorXd dy(d1);
  Eigen::VectorXd db(d1);
  for (int n = 0; n < n_steps; ++n) {
    const double t = n * dt;
    const Point p = pt(x);
    for (int k = 0; k < d1; ++k) db[k] = drivers.increment(n, 1 + k);
    const Eigen::VectorXd noise = sc.sigma_tilde * db;
    for (int k = 0; k < d1; ++k) dy[k] = sc.b_tilde[k](t, p) * dt + noise[k];
    const Eigen::VectorXd bb = sinv * dy;
    for (int k = 0; k < d1; ++k) {
      tr.y_path.push_back(tr.y_path[static_cast<std::size_t>(n) * d1 + k] + dy[k]);
      tr.bbar.push_back(bb[k]);
    }
    x += sc.b_hat(t, p) * dt + sc.sigma_hat(t, p) * drivers.increment(n, 0);
    if (!std::isfinite(x) || std::abs(x) > sc.state_limit) {
      throw ScenarioError("signal left the admissible range at step " + std::to_string(n + 1) +
                          " (x = " + std::to_string(x) + ")");
    }
    tr.x_path.push_back(x);
  }
  return tr;
}

Moments density_moments(const Grid& grid, std::span<const double> density) {
  const double mass = grid_integral(grid, density);
  if (!(mass > 0.0)) throw DegeneracyError("density has non-positive mass");
  std::vector<double> w(density.size());
  for (std::size_t k = 0; k < w.size(); ++k) w[k] = grid.point(k)[0] * density[k];
  const double mean = grid_integral(grid, w) / mass;
  for (std::size_t k = 0; k < w.size(); ++k) w[k] = std::pow(grid.point(k)[0] - mean, 2) * density[k];
  return {mean, grid_integral(grid, w) / mass};
}

std::vector<double> normalize_density(const Grid& grid, std::span<const double> u) {
  const double m = grid_integral(grid, u);
  if (!(m > 0.0)) throw DegeneracyError("cannot normalize a density with non-positive mass");
  std::vector<double> out(u.begin(), u.end());
  // Already normalized to round-off: leave untouched so the map is idempotent.
  if (std::abs(m - 1.0) <= 1e-14) return out;
  for (double& v : out) v /= m;
  return out;
}

std::vector<double> prior_on_grid(const FilterScenario& sc, const Grid& grid) {
  if (grid.dim() != 1) throw ConfigError("filtering grids are one-dimensional");
  std::vector<double> p(grid.size());
  for (std::size_t k = 0; k < grid.size(); ++k) {
    p[k] = sc.prior(0.0, grid.point(k));
    if (!(p[k] >= 0.0)) throw ScenarioError("prior density is negative at x = " + std::to_string(grid.point(k)[0]));
  }
  return normalize_density(grid, p);
}

ZakaiResult run_zakai(const FilterScenario& sc, const TruthRealization& truth, const Grid& grid,
                      const SolverConfig& cfg, std::span<const double> output_times) {
  const CoefficientSet coeffs = maybe_mollified(zakai_coefficients(sc), grid, cfg);
  check_truth(truth, cfg, coeffs.drivers);
  const auto levels = output_levels(output_times, cfg.dt);
  const int n_total = levels.empty() ? 0 : levels.back();
  if (n_total > truth.n_steps) throw ConfigError("observation record is shorter than the run");

  ZakaiResult res;
  res.u.grid = res.pi.grid = grid;
  res.u.cfg = res.pi.cfg = cfg;
  std::vector<double> u = prior_on_grid(sc, grid);
  auto hgrid = h_on_grid(coeffs, grid, 0.0);
  auto record = [&](int level, const std::vector<double>& pi) {
    for (Trajectory* tr : {&res.u, &res.pi}) {
      const auto& v = tr == &res.u ? u : pi;
      tr->times.push_back(level * cfg.dt);
      tr->steps.push_back(level);
      tr->mass.push_back(grid_integral(grid, v));
      tr->l2.push_back(grid_l2(grid, v));
      tr->values.push_back(v);
    }
    res.moments.push_back(density_moments(grid, pi));
  };
  res.mass.push_back(grid_integral(grid, u));
  std::vector<double> pi = normalize_density(grid, u);
  record(0, pi);
  std::size_t next = (!levels.empty() && levels.front() == 0) ? 1 : 0;
  Stepper st(coeffs, grid, cfg);
  const BrownianPath bbar = truth.bbar_path();
  for (int n = 0; n < n_total; ++n) {
    if (!coeffs.time_invariant) hgrid = h_on_grid(coeffs, grid, n * cfg.dt);
    for (int k = 0; k < coeffs.drivers; ++k) {
      res.innovation.push_back(bbar.increment(n, k) - pair(grid, hgrid[k], pi) * cfg.dt);
    }
    u = st.advance(u, n, bbar.step_increments(n));
    const double mass = grid_integral(grid, u);
    if (!(mass > 0.0)) {
      throw DegeneracyError("unnormalized density lost its mass at step " + std::to_string(n + 1) +
                            "; the scenario is under-resolved");
    }
    res.mass.push_back(mass);
    pi = normalize_density(grid, u);
    const bool is_output = next < levels.size() && levels[next] == n + 1;
    if (is_output) ++next;
    if (is_output || cfg.record_all_steps) record(n + 1, pi);
  }
  return res;
}

Trajectory run_kushner(const FilterScenario& sc, const TruthRealization& truth, const Grid& grid,
                       const SolverConfig& cfg, std::span<const double> output_times) {
  const CoefficientSet coeffs = maybe_mollified(zakai_coefficients(sc), grid, cfg);
  check_truth(truth, cfg, coeffs.drivers);
  const auto levels = output_levels(output_times, cfg.dt);
  const int n_total = levels.empty() ? 0 : levels.back();
  if (n_total > truth.n_steps) throw ConfigError("observation record is shorter than the run");
  const int d1 = coeffs.drivers;

  Trajectory traj;
  traj.grid = grid;
  traj.cfg = cfg;
  std::vector<double> pi = prior_on_grid(sc, grid);
  auto record = [&](int level) {
    traj.times.push_back(level * cfg.dt);
    traj.steps.push_back(level);
    traj.mass.push_back(grid_integral(grid, pi));
    traj.l2.push_back(grid_l2(grid, pi));
    traj.values.push_back(pi);
  };
  record(0);
  std::size_t next = (!levels.empty() && levels.front() == 0) ? 1 : 0;
  Stepper st(coeffs, grid, cfg);
  auto hgrid = h_on_grid(coeffs, grid, 0.0);
  std::vector<double> ph(d1);
  std::vector<double> dcheck(d1);
  std::vector<std::vector<double>> shifted(d1, std::vector<double>(grid.size()));
  for (int n = 0; n < n_total; ++n) {
    if (!coeffs.time_invariant) hgrid = h_on_grid(coeffs, grid, n * cfg.dt);
    for (int k = 0; k < d1; ++k) {
      ph[k] = pair(grid, hgrid[k], pi);
      dcheck[k] = truth.bbar[static_cast<std::size_t>(n) * d1 + k] - ph[k] * cfg.dt;
      for (std::size_t q = 0; q < grid.size(); ++q) shifted[k][q] = hgrid[k][q] - ph[k];
    }
    std::vector<double> w = pi;
    for (std::size_t q = 0; q < grid.size(); ++q) {
      double s = 0.0;
      for (int k = 0; k < d1; ++k) s += shifted[k][q] * dcheck[k];
      if (cfg.milstein) {
        for (int k = 0; k < d1; ++k) {
          for (int m = 0; m < d1; ++m) {
            s += 0.5 * shifted[k][q] * shifted[m][q] * (dcheck[k] * dcheck[m] - (k == m ? cfg.dt : 0.0));
          }
        }
      }
      w[q] += s * pi[q];
    }
    auto next_pi = st.implicit_solve(w, n);
    if (!(grid_integral(grid, next_pi) > 0.0)) {
      throw DegeneracyError("Kushner step lost positivity of the mass at step " + std::to_string(n + 1));
    }
    pi = normalize_density(grid, next_pi);
    const bool is_output = next < levels.size() && levels[next] == n + 1;
    if (is_output) ++next;
    if (is_output || cfg.record_all_steps) record(n + 1);
  }
  return traj;
}

std::vector<ParticleEstimate> particle_estimate(const FilterScenario& sc, const TruthRealization& truth,
                                                const Grid& grid, int n_particles,
                                                std::span<const ScalarField> phis, std::uint64_t seed) {
  if (n_particles < 100) throw ArgumentError("particle_estimate needs at least 100 particles");
  sc.validate();
  const CoefficientSet coeffs = zakai_coefficients(sc);
  const int d1 = coeffs.drivers;
  const CellSampler sampler(grid.lo(0), grid.spacing(), prior_on_grid(sc, grid));
  const double dt = truth.dt;
  const double sdt = std::sqrt(dt);
  std::vector<std::vector<double>> contrib(phis.size(), std::vector<double>(n_particles));
  for (int i = 0; i < n_particles; ++i) {
    const auto stream = static_cast<std::uint64_t>(i);
    double x = sampler(counter_uniform(seed, stream, 0));
    double logw = 0.0;
    for (int n = 0; n < truth.n_steps; ++n) {
      const double t = n * dt;
      const Point p = pt(x);
      for (int k = 0; k < d1; ++k) {
        const double hk = coeffs.h(t, p, k);
        logw += hk * truth.bbar[static_cast<std::size_t>(n) * d1 + k] - 0.5 * hk * hk * dt;
      }
      x += sc.b_hat(t, p) * dt + sc.sigma_hat(t, p) * sdt * counter_normal(seed, stream, static_cast<std::uint64_t>(n));
    }
    const double w = std::exp(logw);
    const double tend = truth.n_steps * dt;
    for (std::size_t j = 0; j < phis.size(); ++j) contrib[j][i] = phis[j](tend, pt(x)) * w;
  }
  std::vector<ParticleEstimate> out;
  for (auto& c : contrib) {
    const double mean = pairwise_sum(c) / n_particles;
    for (double& v : c) v = (v - mean) * (v - mean);
    const double var = pairwise_sum(c) / (n_particles - 1);
    out.push_back({mean, std::sqrt(var / n_particles)});
  }
  return out;
}

KalmanSeries kalman_bucy_oracle(const FilterScenario& sc, const TruthRealization& truth, int substeps) {
  if (!sc.linear) throw ScenarioError("Kalman-Bucy oracle needs a linear-Gaussian scenario");
  if (truth.d1 != 1) throw ScenarioError("Kalman-Bucy oracle is implemented for one observation channel");
  if (substeps < 1) throw ArgumentError("substeps must be positive");
  const auto& m = *sc.linear;
  const double gain_scale = m.H / (m.R * m.R);
  KalmanSeries ks;
  double mean = m.m0;
  double var = m.P0;
  ks.times.push_back(0.0);
  ks.mean.push_back(mean);
  ks.var.push_back(var);
  const double hstep = truth.dt / substeps;
  for (int n = 0; n < truth.n_steps; ++n) {
    const double ydot = (truth.y(n + 1, 0) - truth.y(n, 0)) / truth.dt;
    auto rhs = [&](double mm, double pp) {
      return std::pair<double, double>{m.A * mm + pp * gain_scale * (ydot - m.H * mm),
                                       2.0 * m.A * pp + m.Q * m.Q - pp * pp * m.H * gain_scale};
    };
    for (int s = 0; s < substeps; ++s) {
      const auto k1 = rhs(mean, var);
      const auto k2 = rhs(mean + 0.5 * hstep * k1.first, var + 0.5 * hstep * k1.second);
      const auto k3 = rhs(mean + 0.5 * hstep * k2.first, var + 0.5 * hstep * k2.second);
      const auto k4 = rhs(mean + hstep * k3.first, var + hstep * k3.second);
      mean += hstep / 6.0 * (k1.first + 2 * k2.first + 2 * k3.first + k4.first);
      var += hstep / 6.0 * (k1.second + 2 * k2.second + 2 * k3.second + k4.second);
    }
    ks.times.push_back((n + 1) * truth.dt);
    ks.mean.push_back(mean);
    ks.var.push_back(var);
  }
  return ks;
}

}  // namespace spdelab
