#include "spdelab/diagnostics.hpp"

#include "spdelab/error.hpp"
#include "spdelab/mollifier.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace spdelab {

namespace {

double inner(const Grid& g, std::span<const double> a, std::span<const double> b) {
  std::vector<double> p(a.size());
  for (std::size_t k = 0; k < a.size(); ++k) p[k] = a[k] * b[k];
  return grid_integral(g, p);
}

std::vector<double> apply_op(const SparseOp& op, std::span<const double> u) {
  std::vector<double> out(u.size(), 0.0);
  for (int r = 0; r < op.outerSize(); ++r) {
    double s = 0.0;
    for (SparseOp::InnerIterator it(op, r); it; ++it) s += it.value() * u[it.col()];
    out[r] = s;
  }
  return out;
}

CoefficientSet effective(const CoefficientSet& coeffs, const Trajectory& traj) {
  if (!traj.cfg.mollify_eps) return coeffs;
  return mollify_coefficients(coeffs, MollifierParams{*traj.cfg.mollify_eps, traj.grid.dim()}, traj.grid.spacing());
}

double sup_abs(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s = std::max(s, std::abs(x));
  return s;
}

}  // namespace

CheckReport CheckReport::make(std::string name, double measured, double threshold, std::string note) {
  CheckReport r;
  r.name = std::move(name);
  r.measured = measured;
  r.threshold = threshold;
  r.pass = std::isfinite(measured) && measured <= threshold;
  r.note = std::move(note);
  return r;
}

CheckReport check_positivity(const Trajectory& traj, const CoefficientSet& coeffs, double tol) {
  if (traj.size() == 0) throw ArgumentError("empty trajectory");
  if (!coeffs.g_zero) throw HypothesisError("positivity check requires g == 0");
  if (std::any_of(traj.values[0].begin(), traj.values[0].end(), [](double v) { return v < 0.0; })) {
    throw HypothesisError("positivity check requires u_0 >= 0");
  }
  if (!coeffs.f_zero) {
    for (double t : traj.times) {
      for (std::size_t k = 0; k < traj.grid.size(); ++k) {
        if (coeffs.f(t, traj.grid.point(k)) < 0.0) throw HypothesisError("positivity check requires f >= 0");
      }
    }
  }
  double worst = 0.0;
  for (const auto& v : traj.values) {
    const double s = sup_abs(v);
    if (s == 0.0) continue;
    double neg = 0.0;
    for (double x : v) neg = std::max(neg, -x);
    worst = std::max(worst, neg / s);
  }
  return CheckReport::make("positivity", worst, tol);
}

L1Report l1_report(const Trajectory& traj, const CoefficientSet& coeffs_in) {
  if (!coeffs_in.g_zero) throw HypothesisError("L1 estimate requires g == 0");
  if (traj.size() == 0) throw ArgumentError("empty trajectory");
  const CoefficientSet coeffs = effective(coeffs_in, traj);
  const Grid& g = traj.grid;
  double c_plus = 0.0;
  double c_max = -std::numeric_limits<double>::infinity();
  double div_sigma = 0.0;
  double h_sup = 0.0;
  bool f_nonneg = true;
  for (double t : traj.times) {
    for (std::size_t k = 0; k < g.size(); ++k) {
      const Point x = g.point(k);
      const double c = coeffs.c_zero ? 0.0 : coeffs.c(t, x);
      c_plus = std::max(c_plus, c);
      c_max = std::max(c_max, c);
      for (int l = 0; l < coeffs.drivers; ++l) {
        if (!coeffs.sigma_zero) div_sigma = std::max(div_sigma, std::abs(coeffs.divergence_of_sigma(t, x, l)));
        if (!coeffs.h_zero) h_sup = std::max(h_sup, std::abs(coeffs.h(t, x, l)));
      }
      if (!coeffs.f_zero && coeffs.f(t, x) < 0.0) f_nonneg = false;
    }
  }
  // int_0^t ||f||_1 by the trapezoid rule over the recorded times.
  std::vector<double> f_l1(traj.size(), 0.0);
  if (!coeffs.f_zero) {
    for (std::size_t q = 0; q < traj.size(); ++q) {
      std::vector<double> fv(g.size());
      for (std::size_t k = 0; k < g.size(); ++k) fv[k] = std::abs(coeffs.f(traj.times[q], g.point(k)));
      f_l1[q] = grid_integral(g, fv);
    }
  }
  const double u0 = DensityField{g, traj.values[0]}.l1();
  double accum = 0.0;
  double sharp_excess = 0.0;
  double ratio = 0.0;
  for (std::size_t q = 0; q < traj.size(); ++q) {
    if (q > 0) accum += 0.5 * (f_l1[q] + f_l1[q - 1]) * (traj.times[q] - traj.times[q - 1]);
    const double ul1 = DensityField{g, traj.values[q]}.l1();
    const double rhs = u0 + accum;
    sharp_excess = std::max(sharp_excess, (ul1 - rhs) / std::max(rhs, 1e-300));
    ratio = std::max(ratio, ul1 / std::max(rhs, 1e-300));
  }
  L1Report rep;
  const bool u_nonneg = std::all_of(traj.values.begin(), traj.values.end(), [](const auto& v) {
    return std::all_of(v.begin(), v.end(), [](double x) { return x >= 0.0; });
  });
  rep.sharp_applicable = u_nonneg && c_max <= 0.0 && coeffs.h_zero && f_nonneg;
  rep.sharp = CheckReport::make("l1_sharp", sharp_excess, 1e-10,
                                rep.sharp_applicable ? "" : "sharp form not applicable to this scenario");
  if (!rep.sharp_applicable) rep.sharp.pass = true;
  const double t_end = traj.times.back();
  const double bound = std::exp(t_end * (c_plus + div_sigma + h_sup));
  // Relative round-off slack matching the sharp form.
  rep.constant = CheckReport::make("l1_constant", ratio, bound * (1.0 + 1e-10));
  return rep;
}

CheckReport l1_decay_check(const Trajectory& traj, double rate) {
  if (traj.size() == 0) throw ArgumentError("empty trajectory");
  const double u0 = DensityField{traj.grid, traj.values[0]}.l1();
  double worst = 0.0;
  for (std::size_t q = 0; q < traj.size(); ++q) {
    const double ul1 = DensityField{traj.grid, traj.values[q]}.l1();
    worst = std::max(worst, std::abs(ul1 / u0 - std::exp(-rate * traj.times[q])));
  }
  return CheckReport::make("l1_decay", worst, 2.0 * traj.cfg.dt * traj.times.back());
}

EnergyReport energy_report(const Trajectory& traj, const CoefficientSet& coeffs_in, const BrownianPath& path,
                           double threshold) {
  if (!traj.has_all_steps()) throw ArgumentError("energy report needs every time level recorded");
  const CoefficientSet coeffs = effective(coeffs_in, traj);
  const Grid& g = traj.grid;
  const double dt = traj.cfg.dt;
  const double th = traj.cfg.theta;
  const std::size_t n = g.size();
  const int steps = static_cast<int>(traj.size()) - 1;
  if (path.n_steps < steps) throw ConfigError("driving path is shorter than the trajectory");

  auto f_at = [&](double t) {
    std::vector<double> v(n, 0.0);
    if (!coeffs.f_zero) {
      for (std::size_t k = 0; k < n; ++k) v[k] = coeffs.f(t, g.point(k));
    }
    return v;
  };
  auto g_at = [&](double t, int l) {
    std::vector<double> v(n, 0.0);
    if (!coeffs.g_zero) {
      for (std::size_t k = 0; k < n; ++k) v[k] = coeffs.g(t, g.point(k), l);
    }
    return v;
  };
  std::optional<SparseOp> gen_fixed;
  std::vector<SparseOp> noise_fixed;
  if (coeffs.time_invariant) {
    gen_fixed = assemble_generator(coeffs, g, 0.0);
    for (int l = 0; l < coeffs.drivers; ++l) noise_fixed.push_back(assemble_noise_op(coeffs, g, 0.0, l));
  }

  EnergyReport rep;
  const double h = g.spacing();
  for (int s = 0; s < steps; ++s) {
    const double t0 = s * dt;
    const double t1 = (s + 1) * dt;
    const auto& u0 = traj.values[s];
    const auto& u1 = traj.values[s + 1];
    const SparseOp l1 = gen_fixed ? *gen_fixed : assemble_generator(coeffs, g, t1);
    auto gen = apply_op(l1, u1);
    for (double& v : gen) v *= th;
    if (th < 1.0) {
      const SparseOp l0 = gen_fixed ? *gen_fixed : assemble_generator(coeffs, g, t0);
      const auto lu0 = apply_op(l0, u0);
      for (std::size_t k = 0; k < n; ++k) gen[k] += (1.0 - th) * lu0[k];
    }
    if (!coeffs.f_zero) {
      const auto f1 = f_at(t1);
      const auto f0 = th < 1.0 ? f_at(t0) : std::vector<double>(n, 0.0);
      for (std::size_t k = 0; k < n; ++k) gen[k] += th * f1[k] + (1.0 - th) * f0[k];
    }
    std::vector<double> noise_inc(n, 0.0);
    std::vector<std::vector<double>> nl(coeffs.drivers);
    for (int l = 0; l < coeffs.drivers; ++l) {
      const SparseOp ml = gen_fixed ? noise_fixed[l] : assemble_noise_op(coeffs, g, t0, l);
      nl[l] = apply_op(ml, u0);
      const auto gl = g_at(t0, l);
      for (std::size_t k = 0; k < n; ++k) {
        nl[l][k] += gl[k];
        noise_inc[k] += nl[l][k] * path.increment(s, l);
      }
    }
    if (traj.cfg.milstein) {
      for (int l = 0; l < coeffs.drivers; ++l) {
        const SparseOp ml = gen_fixed ? noise_fixed[l] : assemble_noise_op(coeffs, g, t0, l);
        for (int m = 0; m < coeffs.drivers; ++m) {
          const double w = 0.5 * (path.increment(s, l) * path.increment(s, m) - (l == m ? dt : 0.0));
          for (std::size_t k = 0; k < n; ++k) noise_inc[k] += w * ml.coeff(k, k) * nl[m][k];
        }
      }
    }
    const double de = inner(g, u1, u1) - inner(g, u0, u0);
    const double drift = 2.0 * dt * inner(g, u1, gen);
    const double mart = 2.0 * inner(g, u0, noise_inc);
    const double quad = inner(g, noise_inc, noise_inc);
    const double defect = de - drift - mart - quad;
    // Axis-aligned part of the dissipation, for reporting.
    double diss = 0.0;
    if (g.dim() == 1) {
      const double hd = g.cell_volume();
      for (std::size_t k = 0; k + 1 < n; ++k) {
        const double af = 0.5 * (coeffs.a(t1, g.point(k))(0, 0) + coeffs.a(t1, g.point(k + 1))(0, 0));
        diss += af * std::pow((u1[k + 1] - u1[k]) / h, 2) * hd;
      }
    }
    rep.step_defect.push_back(defect);
    rep.dissipation.push_back(2.0 * dt * diss);
    rep.ito.push_back(quad);
    rep.martingale.push_back(mart);
  }
  std::vector<double> absd(rep.step_defect.size());
  std::transform(rep.step_defect.begin(), rep.step_defect.end(), absd.begin(), [](double v) { return std::abs(v); });
  rep.summed_defect = compensated_sum(absd);
  rep.report = CheckReport::make("energy_balance", rep.summed_defect, threshold);
  return rep;
}

ContinuityReport continuity_modulus(const Trajectory& traj, std::span<const TestFunction> phis) {
  if (traj.size() < 9) throw ArgumentError("continuity modulus needs at least 8 recorded intervals");
  for (std::size_t k = 2; k < traj.times.size(); ++k) {
    if (std::abs((traj.times[k] - traj.times[k - 1]) - (traj.times[1] - traj.times[0])) >
        1e-9 * (traj.times[1] - traj.times[0]) + 1e-15) {
      throw ArgumentError("continuity modulus needs equally spaced snapshots");
    }
  }
  const Grid& g = traj.grid;
  const double base = traj.times[1] - traj.times[0];
  ContinuityReport rep;
  double worst_ratio = 0.0;
  for (const auto& phi : phis) {
    std::vector<double> pv(g.size());
    for (std::size_t k = 0; k < g.size(); ++k) pv[k] = phi.value(g.point(k));
    std::vector<double> pairs(traj.size());
    for (std::size_t q = 0; q < traj.size(); ++q) pairs[q] = inner(g, traj.values[q], pv);
    std::vector<ContinuityRow> rows;
    for (int stride : {4, 2, 1}) {
      double m = 0.0;
      for (std::size_t q = 0; q + stride < pairs.size(); q += stride) m = std::max(m, std::abs(pairs[q + stride] - pairs[q]));
      rows.push_back({stride, stride * base, m});
    }
    for (std::size_t r = 1; r < rows.size(); ++r) {
      const double ratio = rows[r - 1].modulus > 0.0 ? rows[r].modulus / rows[r - 1].modulus : 0.0;
      worst_ratio = std::max(worst_ratio, ratio);
    }
    rep.per_phi.push_back(std::move(rows));
  }
  rep.report = CheckReport::make("continuity_modulus", worst_ratio, 0.8);
  return rep;
}

double ensemble_energy_drift(const CoefficientSet& coeffs, std::span<const double> u0, const Grid& grid,
                             const SolverConfig& cfg, double t_end, int n_paths, std::uint64_t seed) {
  if (n_paths < 1) throw ArgumentError("ensemble needs at least one path");
  const int steps = static_cast<int>(std::lround(t_end / cfg.dt));
  const double out[] = {steps * cfg.dt};
  std::vector<double> energies;
  for (int p = 0; p < n_paths; ++p) {
    const BrownianPath path = generate_path(seed + static_cast<std::uint64_t>(p), coeffs.drivers, steps, cfg.dt);
    SolverConfig c = cfg;
    c.record_all_steps = false;
    const Trajectory tr = solve(coeffs, u0, grid, c, path, out);
    energies.push_back(std::pow(tr.l2.back(), 2));
  }
  const double e0 = std::pow(grid_l2(grid, u0), 2);
  return pairwise_sum(energies) / (n_paths * e0) - 1.0;
}

double gradient_growth(const Trajectory& traj) {
  const Grid& g = traj.grid;
  auto grad_energy = [&](const std::vector<double>& u) {
    std::vector<double> terms;
    const double h = g.spacing();
    for (std::size_t k = 0; k < g.size(); ++k) {
      for (int axis = 0; axis < g.dim(); ++axis) {
        const int i = g.i_of(k);
        const int j = g.j_of(k);
        const bool last = axis == 0 ? i + 1 >= g.n(0) : j + 1 >= g.n(1);
        if (last) continue;
        const std::size_t kp = axis == 0 ? g.index(i + 1, j) : g.index(i, j + 1);
        terms.push_back(std::pow((u[kp] - u[k]) / h, 2));
      }
    }
    return g.cell_volume() * compensated_sum(terms);
  };
  const double e0 = grad_energy(traj.values.at(0));
  double worst = 0.0;
  for (const auto& v : traj.values) worst = std::max(worst, grad_energy(v));
  return e0 > 0.0 ? worst / e0 : 0.0;
}

}  // namespace spdelab
