#include "spdelab/cli.hpp"

#include "spdelab/commutator.hpp"
#include "spdelab/error.hpp"
#include "spdelab/filter.hpp"
#include "spdelab/format.hpp"
#include "spdelab/mollifier.hpp"
#include "spdelab/picard.hpp"
#include "spdelab/solver.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numbers>
#include <ostream>
#include <sstream>

#ifndef SPDELAB_VERSION
#define SPDELAB_VERSION "dev"
#endif

namespace spdelab {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

std::string fnv1a_hex(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

void write_text(const fs::path& file, const std::string& text) {
  std::ofstream out(file, std::ios::binary);
  if (!out) throw ConfigError("cannot write '" + file.string() + "'");
  out << text;
}

// Rows of pre-formatted cells; empty cells stay empty.
class Csv {
 public:
  explicit Csv(std::string header) : text_(std::move(header) + "\n") {}
  void row(std::initializer_list<std::string> cells) {
    bool first = true;
    for (const auto& c : cells) {
      if (!first) text_ += ',';
      text_ += c;
      first = false;
    }
    text_ += '\n';
  }
  const std::string& text() const { return text_; }

 private:
  std::string text_;
};

std::string num(double v) { return format_double(v); }

RunResult open_run(const RunManifest& m, const fs::path& root) {
  RunResult r;
  r.hash = m.hash();
  r.dir = root / r.hash;
  fs::create_directories(r.dir);
  write_text(r.dir / "manifest.json", m.to_json());
  r.files.push_back(r.dir / "manifest.json");
  return r;
}

void emit(RunResult& r, const std::string& name, const std::string& text) {
  write_text(r.dir / name, text);
  r.files.push_back(r.dir / name);
}

std::vector<double> sample(const Grid& grid, const ScalarField& f, double t = 0.0) {
  return DensityField::sample(grid, f, t).values;
}

std::string trajectory_csv(const Trajectory& tr, const std::vector<int>& levels, const std::string& value_name) {
  const Grid& g = tr.grid;
  Csv csv(g.dim() == 1 ? "t,x," + value_name : "t,x,y," + value_name);
  for (std::size_t k = 0; k < tr.size(); ++k) {
    if (!levels.empty() && !std::binary_search(levels.begin(), levels.end(), tr.steps[k])) continue;
    const std::string t = num(tr.times[k]);
    for (std::size_t q = 0; q < g.size(); ++q) {
      const Point x = g.point(q);
      if (g.dim() == 1) {
        csv.row({t, num(x[0]), num(tr.values[k][q])});
      } else {
        csv.row({t, num(x[0]), num(x[1]), num(tr.values[k][q])});
      }
    }
  }
  return csv.text();
}

std::vector<int> output_levels(const Scenario& sc) {
  std::vector<int> out;
  const int stride = sc.time.n_steps() / sc.time.outputs;
  for (int k = 0; k <= sc.time.outputs; ++k) out.push_back(k * stride);
  return out;
}

BrownianPath driver_path(const Scenario& sc) {
  return generate_path(sc.time.seed, sc.coefficients.drivers, sc.time.n_steps(), sc.time.solver.dt);
}

// First n steps of a truth record.
TruthRealization truncate(const TruthRealization& t, int n) {
  TruthRealization out = t;
  out.n_steps = n;
  out.x_path.resize(static_cast<std::size_t>(n) + 1);
  out.y_path.resize(static_cast<std::size_t>(n + 1) * t.d1);
  out.bbar.resize(static_cast<std::size_t>(n) * t.d1);
  return out;
}

double integrate(const Grid& grid, std::span<const double> u, const ScalarField& phi) {
  std::vector<double> w(grid.size());
  for (std::size_t k = 0; k < w.size(); ++k) w[k] = u[k] * phi(0.0, grid.point(k));
  return grid_integral(grid, w);
}

double relative_l2(const Grid& grid, std::span<const double> u, std::span<const double> ref) {
  std::vector<double> d(u.size());
  for (std::size_t k = 0; k < d.size(); ++k) d[k] = u[k] - ref[k];
  return grid_l2(grid, d) / grid_l2(grid, ref);
}

// ---- exact solutions -----------------------------------------------------------

double constant_value(const ScalarField& f, const std::string& what) {
  if (!f.is_constant() || f.time_slope() != 0.0) throw HypothesisError(what + " must be constant for this oracle");
  return f(0.0, Point::Zero());
}

// u0(x + sum_l sigma_l B^l_t) solves du = 1/2 (sigma.D)^2 u dt + sigma.D u dB.
std::vector<double> exact_transport(const Scenario& sc, const Grid& grid, const BrownianPath& path, int step) {
  const auto& cs = sc.coefficients;
  Vec2 shift = Vec2::Zero();
  Mat2 half_ss = Mat2::Zero();
  for (int l = 0; l < cs.drivers; ++l) {
    Vec2 s(constant_value(cs.sigma[l][0], "sigma"), cs.dim == 2 ? constant_value(cs.sigma[l][1], "sigma") : 0.0);
    shift += s * path.value(step, l);
    half_ss += 0.5 * s * s.transpose();
    if (!cs.h[l].is_zero() || !cs.g[l].is_zero()) throw HypothesisError("transport oracle needs h = g = 0");
  }
  const Mat2 a{{constant_value(cs.a[0], "a11"), constant_value(cs.a[1], "a12")},
               {constant_value(cs.a[1], "a12"), constant_value(cs.a[2], "a22")}};
  const Mat2 diff = cs.dim == 1 ? Mat2{{a(0, 0) - half_ss(0, 0), 0.0}, {0.0, 0.0}} : Mat2(a - half_ss);
  if (diff.cwiseAbs().maxCoeff() > 1e-14 || !cs.b[0].is_zero() || !cs.b[1].is_zero() || !cs.c.is_zero() ||
      !cs.f.is_zero()) {
    throw HypothesisError("transport oracle needs a = sigma sigma^T / 2 and b = c = f = 0");
  }
  std::vector<double> out(grid.size());
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = sc.u0(0.0, grid.point(k) + shift);
  return out;
}

// e^{ct} (G_{2at} * u0)(x) by a midpoint rule over +-12 standard deviations.
std::vector<double> exact_heat(const Scenario& sc, const Grid& grid, double t) {
  const auto& cs = sc.coefficients;
  if (cs.dim != 1) throw HypothesisError("heat oracle is one-dimensional");
  const double a = constant_value(cs.a[0], "a11");
  const double c = constant_value(cs.c, "c");
  for (int l = 0; l < cs.drivers; ++l) {
    if (!cs.sigma[l][0].is_zero() || !cs.h[l].is_zero() || !cs.g[l].is_zero()) {
      throw HypothesisError("heat oracle needs a noise-free equation");
    }
  }
  if (!cs.b[0].is_zero() || !cs.f.is_zero()) throw HypothesisError("heat oracle needs b = f = 0");
  const double sd = std::sqrt(2.0 * a * t);
  constexpr int kNodes = 4000;
  const double width = 24.0 * sd / kNodes;
  const double norm = 1.0 / (sd * std::sqrt(2.0 * std::numbers::pi));
  std::vector<double> out(grid.size());
  for (std::size_t k = 0; k < out.size(); ++k) {
    const double x = grid.point(k)[0];
    double s = 0.0;
    for (int j = 0; j < kNodes; ++j) {
      const double z = -12.0 * sd + (j + 0.5) * width;
      s += std::exp(-0.5 * z * z / (sd * sd)) * sc.u0(0.0, Point(x - z, 0.0));
    }
    out[k] = std::exp(c * t) * s * width * norm;
  }
  return out;
}

// ---- check helpers -------------------------------------------------------------------

class Checks {
 public:
  Checks(const Scenario& sc, std::string hash) : sc_(sc), hash_(std::move(hash)) {}

  bool has(const std::string& key) const { return sc_.checks.count(key) > 0; }
  double number(const std::string& key, double def) const {
    if (!has(key)) return def;
    try {
      return parse_double(sc_.checks.at(key));
    } catch (const std::invalid_argument&) {
      throw ParseError("key 'checks." + key + "': expected a number");
    }
  }
  bool flag(const std::string& key) const {
    if (!has(key)) return false;
    const auto& v = sc_.checks.at(key);
    return v == "true" || v == "1" || v == "yes";
  }
  std::vector<double> list(const std::string& key, std::vector<double> def) const {
    if (!has(key)) return def;
    std::vector<double> out;
    std::stringstream in(sc_.checks.at(key));
    std::string item;
    while (std::getline(in, item, ',')) {
      try {
        out.push_back(parse_double(item));
      } catch (const std::invalid_argument&) {
        throw ParseError("key 'checks." + key + "': expected a number list");
      }
    }
    return out;
  }
  const std::string& text(const std::string& key) const { return sc_.checks.at(key); }

  void add(const std::string& name, double measured, double threshold, std::string note = {}) {
    auto r = CheckReport::make(sc_.name + "." + name, measured, threshold, std::move(note));
    r.context = hash_;
    out_.push_back(std::move(r));
  }
  void add(CheckReport r, const std::string& name) {
    r.name = sc_.name + "." + name;
    r.context = hash_;
    out_.push_back(std::move(r));
  }
  std::vector<CheckReport> take() { return std::move(out_); }

 private:
  const Scenario& sc_;
  std::string hash_;
  std::vector<CheckReport> out_;
};

double max_exact_error(const Scenario& sc, const std::string& kind, const Trajectory& tr, const BrownianPath& path,
                       int stride) {
  double worst = 0.0;
  for (std::size_t k = 0; k < tr.size(); ++k) {
    const int step = tr.steps[k];
    if (step == 0 || step % stride != 0) continue;
    std::vector<double> ex;
    if (kind == "transport") {
      ex = exact_transport(sc, tr.grid, path, step);
    } else if (kind == "heat") {
      ex = exact_heat(sc, tr.grid, tr.times[k]);
    } else {
      throw ParseError("key 'checks.exact': expected 'transport' or 'heat'");
    }
    worst = std::max(worst, relative_l2(tr.grid, tr.values[k], ex));
  }
  return worst;
}

void spde_checks(const Scenario& sc, Checks& ck) {
  const Grid grid = sc.grid.build();
  const CoefficientSet coeffs = sc.coefficients.build();
  const auto u0 = sample(grid, sc.u0);
  const auto times = sc.time.output_times();
  const int n = sc.time.n_steps();
  const int stride = n / sc.time.outputs;
  const int L = sc.coefficients.drivers;
  const bool halving = ck.has("energy_halving");
  const bool refine = ck.flag("refine");
  const bool all_steps = ck.has("weak_phi") || ck.has("energy_tol") || halving;

  // Refinement checks share one fine path; the base run sees its pairwise sums.
  BrownianPath fine;
  BrownianPath path;
  if (halving || refine) {
    fine = generate_path(sc.time.seed, L, 2 * n, sc.time.solver.dt / 2);
    path = coarsen(fine, 2);
  } else {
    path = driver_path(sc);
  }
  SolverConfig cfg = sc.time.solver;
  cfg.record_all_steps = all_steps;
  const Trajectory tr = solve(coeffs, u0, grid, cfg, path, times);

  if (ck.has("exact")) {
    const std::string kind = ck.text("exact");
    const double err = max_exact_error(sc, kind, tr, path, stride);
    ck.add("exact_error", err, ck.number("exact_tol", 0.05), "relative L2 error, max over output times");
    if (refine) {
      GridSpec gs = sc.grid;
      gs.n = {2 * gs.n[0], 2 * gs.n[1]};
      const Grid g2 = gs.build();
      SolverConfig c2 = sc.time.solver;
      c2.dt /= 2;
      const Trajectory tr2 = solve(coeffs, sample(g2, sc.u0), g2, c2, fine, times);
      const double err2 = max_exact_error(sc, kind, tr2, fine, 2 * stride);
      ck.add("refinement_ratio", err2 / err, ck.number("refine_ratio", 0.8),
             "error(n*2, dt/2) / error(n, dt) = " + num(err2) + " / " + num(err));
    }
  }
  if (ck.has("mass_tol")) {
    double drift = 0.0;
    for (double m : tr.mass) drift = std::max(drift, std::abs(m - tr.mass[0]) / std::abs(tr.mass[0]));
    ck.add("mass_drift", drift, ck.number("mass_tol", 1e-12));
  }
  if (ck.has("positivity_tol")) {
    ck.add(check_positivity(tr, coeffs, ck.number("positivity_tol", 1e-8)), "positivity");
  }
  if (ck.flag("l1_sharp")) {
    const L1Report rep = l1_report(tr, coeffs);
    if (!rep.sharp_applicable) throw HypothesisError("sharp L1 bound requested outside its hypotheses");
    ck.add(rep.sharp, "l1_sharp");
    ck.add(rep.constant, "l1_constant");
  }
  if (ck.has("l1_decay_rate")) ck.add(l1_decay_check(tr, ck.number("l1_decay_rate", 1.0)), "l1_decay");
  if (ck.has("weak_phi")) {
    const TestFunction phi = TestFunction::parse(ck.text("weak_phi"));
    ck.add("weak_residual", weak_residual(tr, phi, coeffs, path), ck.number("weak_tol", 1e-2));
  }
  if (ck.has("energy_tol") || halving) {
    const EnergyReport e = energy_report(tr, coeffs, path, ck.number("energy_tol", 1e-3));
    if (ck.has("energy_tol")) ck.add(e.report, "energy_defect");
    if (halving) {
      SolverConfig cf = cfg;
      cf.dt /= 2;
      const Trajectory trf = solve(coeffs, u0, grid, cf, fine, times);
      const EnergyReport ef = energy_report(trf, coeffs, fine);
      const auto band = ck.list("energy_halving", {1.6, 2.4});
      if (band.size() != 2) throw ParseError("key 'checks.energy_halving': expected lo,hi");
      const double ratio = e.summed_defect / ef.summed_defect;
      const double mid = 0.5 * (band[0] + band[1]);
      ck.add("energy_halving", std::abs(ratio - mid), 0.5 * (band[1] - band[0]),
             "defect ratio " + num(ratio) + " (" + num(e.summed_defect) + " / " + num(ef.summed_defect) + ")");
    }
  }
  if (ck.has("ensemble_paths")) {
    SolverConfig c = sc.time.solver;
    c.record_all_steps = false;
    const int paths = static_cast<int>(ck.number("ensemble_paths", 64));
    const double drift = ensemble_energy_drift(coeffs, u0, grid, c, sc.time.t_end, paths, sc.time.seed);
    ck.add("ensemble_energy_drift", std::abs(drift), ck.number("ensemble_tol", 0.01),
           "mean ||u_T||^2 / ||u_0||^2 - 1 = " + num(drift));
  }
  if (ck.has("continuity_phi")) {
    const TestFunction phi = TestFunction::parse(ck.text("continuity_phi"));
    const TestFunction phis[] = {phi};
    ck.add(continuity_modulus(tr, phis).report, "continuity_modulus");
  }
  if (ck.has("mollifier_eps")) {
    const MollifierParams p{ck.number("mollifier_eps", 0.25), grid.dim()};
    const ScalarField kappa = sc.kappa;
    const double ts[] = {0.0, sc.time.t_end};
    const auto rep = mollified_parabolicity_check(
        coeffs, p, grid, ts, [kappa](double t, const Point& x) { return kappa(t, x); });
    ck.add("mollified_parabolicity", std::max(0.0, -rep.min_defect), 1e-10,
           "min defect " + num(rep.min_defect) + " over " + std::to_string(rep.samples) + " samples");
    ck.add("jensen_gap", std::max(0.0, jensen_gap(coeffs, p, grid, 0.0)), 1e-12);
  }
  auto div_quantity = [&](const ScalarField& b) {
    const auto eps = ck.list("div_bound_epsilons", {0.5, 0.25, 0.125});
    const double e_min = *std::min_element(eps.begin(), eps.end());
    const double radius = 2.0 / e_min + e_min + 0.5;
    const double h = e_min / 16.0;
    const int cells = 2 * static_cast<int>(std::ceil(radius / h));
    const Grid dg(-cells * h / 2, cells * h / 2, cells);
    const DivBoundSweep sw = div_bound_sweep(b, eps, dg);
    double q = 0.0;
    double first = 0.0;
    double worst = 0.0;
    for (const auto& row : sw.rows) {
      if (row.epsilon == *std::max_element(eps.begin(), eps.end())) first = row.sup_div_mollified;
      worst = std::max(worst, row.sup_div_mollified);
      q = std::max(q, row.sup_div_mollified / row.bound);
    }
    return std::max(q, worst / (2.0 * first));
  };
  if (ck.has("div_bound_b")) {
    ck.add("div_bound_uniform", div_quantity(ScalarField::parse(ck.text("div_bound_b"))), 1.0,
           "max of sup|div b_eps| / bound and growth over the sweep");
  }
  if (ck.has("div_bound_fail_b")) {
    const double q = div_quantity(ScalarField::parse(ck.text("div_bound_fail_b")));
    ck.add("div_bound_negative_control", 1.0 / q, 1.0, "negative control: passes when the bound is not uniform");
  }
}

void filter_checks(const Scenario& sc, Checks& ck) {
  const FilterScenario& fsc = sc.filter.scenario;
  const Grid grid = sc.grid.build();
  const int n = sc.time.n_steps();
  const double dt = sc.time.solver.dt;
  const auto times = sc.time.output_times();
  const int n_ext = sc.filter.extended_t_end ? static_cast<int>(std::lround(*sc.filter.extended_t_end / dt)) : n;

  // One fine truth; the base run sees its pairwise-summed observations.
  const TruthRealization fine_ext = simulate_truth(fsc, sc.filter.truth_seed, 2 * n_ext, dt / 2);
  const TruthRealization truth_ext = coarsen(fine_ext, 2);
  const TruthRealization truth = truncate(truth_ext, n);
  const TruthRealization fine = truncate(fine_ext, 2 * n);

  const bool halving = ck.has("energy_halving");
  SolverConfig cfg = sc.time.solver;
  cfg.record_all_steps = halving;
  const ZakaiResult z = run_zakai(fsc, truth, grid, cfg, times);
  const CoefficientSet coeffs = zakai_coefficients(fsc);

  if (ck.has("positivity_tol")) ck.add(check_positivity(z.u, coeffs, ck.number("positivity_tol", 1e-8)), "positivity");

  const double ktol = ck.number("kalman_tol", 0.02);
  if (ck.has("kalman_tol")) {
    const KalmanSeries kb = kalman_bucy_oracle(fsc, truth, 4);
    double dm = 0.0;
    double dv = 0.0;
    for (std::size_t k = 0; k < z.pi.size(); ++k) {
      const auto step = static_cast<std::size_t>(z.pi.steps[k]);
      dm = std::max(dm, std::abs(z.moments[k].mean - kb.mean[step]));
      dv = std::max(dv, std::abs(z.moments[k].var - kb.var[step]));
    }
    ck.add("kalman_mean", dm, ktol, "max |pde mean - m_t| over recorded times");
    ck.add("kalman_var", dv, ktol, "max |pde var - P_t| over recorded times");
  }
  if (ck.flag("steady_state")) {
    if (!fsc.linear) throw ScenarioError("steady-state check needs a linear-Gaussian scenario");
    const auto& m = *fsc.linear;
    const double r2h2 = (m.R * m.R) / (m.H * m.H);
    const double p_inf = (m.A + std::sqrt(m.A * m.A + m.Q * m.Q / r2h2)) * r2h2;
    SolverConfig c = sc.time.solver;
    const double t_ext[] = {0.0, n_ext * dt};
    const ZakaiResult ze = run_zakai(fsc, truth_ext, grid, c, t_ext);
    ck.add("steady_state_var", std::abs(ze.moments.back().var - p_inf), ktol,
           "var at t=" + num(n_ext * dt) + " = " + num(ze.moments.back().var) + ", target " + num(p_inf));
  }
  if (sc.filter.particles > 0 && !sc.filter.phis.empty()) {
    const auto est = particle_estimate(fsc, truth, grid, sc.filter.particles, sc.filter.phis, sc.filter.particle_seed);
    // Discretization budget: dt-halving difference plus a Richardson estimate
    // of the spatial error from a half-resolution grid.
    SolverConfig cf = sc.time.solver;
    cf.dt /= 2;
    const double t_end[] = {0.0, sc.time.t_end};
    const ZakaiResult zf = run_zakai(fsc, fine, grid, cf, t_end);
    const Grid coarse = grid.coarsened(2);
    const ZakaiResult zc = run_zakai(fsc, truth, coarse, sc.time.solver, t_end);
    const double sigmas = ck.number("particle_sigmas", 3.0);
    for (std::size_t k = 0; k < est.size(); ++k) {
      const ScalarField& phi = sc.filter.phis[k];
      const double pde = integrate(grid, z.u.values.back(), phi);
      const double budget = std::abs(pde - integrate(grid, zf.u.values.back(), phi)) +
                            std::abs(pde - integrate(coarse, zc.u.values.back(), phi)) / 3.0;
      ck.add("particle_phi" + std::to_string(k + 1), std::abs(pde - est[k].estimate),
             sigmas * est[k].stderr_ + budget,
             "pde " + num(pde) + ", particles " + num(est[k].estimate) + " +- " + num(est[k].stderr_) + ", budget " +
                 num(budget));
    }
  }
  if (halving) {
    SolverConfig cf = cfg;
    cf.dt /= 2;
    const ZakaiResult zf = run_zakai(fsc, fine, grid, cf, times);
    const EnergyReport e = energy_report(z.u, coeffs, truth.bbar_path());
    const EnergyReport ef = energy_report(zf.u, coeffs, fine.bbar_path());
    const auto band = ck.list("energy_halving", {1.6, 2.4});
    if (band.size() != 2) throw ParseError("key 'checks.energy_halving': expected lo,hi");
    const double ratio = e.summed_defect / ef.summed_defect;
    ck.add("energy_halving", std::abs(ratio - 0.5 * (band[0] + band[1])), 0.5 * (band[1] - band[0]),
           "defect ratio " + num(ratio) + " (" + num(e.summed_defect) + " / " + num(ef.summed_defect) + ")");
  }
  if (sc.filter.kushner && ck.has("kushner_tol")) {
    const Trajectory kt = run_kushner(fsc, truth, grid, sc.time.solver, times);
    std::map<int, std::size_t> by_step;
    for (std::size_t k = 0; k < z.pi.size(); ++k) by_step[z.pi.steps[k]] = k;
    double gap = 0.0;
    for (std::size_t k = 0; k < kt.size(); ++k) {
      const auto& zp = z.pi.values[by_step.at(kt.steps[k])];
      std::vector<double> d(zp.size());
      for (std::size_t q = 0; q < d.size(); ++q) d[q] = std::abs(kt.values[k][q] - zp[q]);
      gap = std::max(gap, grid_integral(grid, d));
    }
    ck.add("kushner_gap", gap, ck.number("kushner_tol", 0.05), "sup_t L1 distance to the normalized Zakai density");
  }
}

void commutator_checks(const Scenario& sc, Checks& ck) {
  const CommutatorSpec& cs = sc.commutator;
  const Grid grid = sc.grid.build();
  const CommutatorSweep sw = convergence_sweep(cs.b, cs.u, cs.epsilons, cs.radius, grid, cs.exponent);
  if (ck.has("sweep_tol")) {
    ck.add("sweep_max_norm", *std::max_element(sw.norms.begin(), sw.norms.end()), ck.number("sweep_tol", 1e-10));
  }
  if (ck.has("sweep_last_first")) {
    double worst = 0.0;
    for (std::size_t k = 1; k < sw.norms.size(); ++k) worst = std::max(worst, sw.norms[k] / sw.norms[k - 1]);
    ck.add("sweep_decreasing", worst, 1.0 - 1e-12, "max successive norm ratio");
    ck.add("sweep_last_first", sw.norms.back() / sw.norms.front(), ck.number("sweep_last_first", 0.5));
  }
  if (ck.has("gap_tol")) {
    if (!sw.consistency_checked) throw HypothesisError("form consistency needs both b and u differentiable");
    ck.add("form_gap", sw.consistency_gap, ck.number("gap_tol", 1e-6));
  }
  if (ck.has("identity_tol")) {
    const ScalarField a = cs.a.value_or(ScalarField::cosine(1.0, Vec2(1.0, 0.0)));
    double prod = 0.0;
    double fact = 0.0;
    auto sup = [](const CommutatorField& f) {
      double m = 0.0;
      for (double v : f.values) m = std::max(m, std::abs(v));
      return m;
    };
    for (double eps : cs.epsilons) {
      prod = std::max(prod, sup(product_rule_defect(a, cs.u, eps, grid)));
      fact = std::max(fact, sup(factor_rule_defect(a, cs.b, cs.u, eps, grid)));
    }
    const double tol = ck.number("identity_tol", 1e-8);
    ck.add("product_rule", prod, tol);
    ck.add("factor_rule", fact, tol);
  }
}

PicardOptions picard_options(const Scenario& sc) {
  PicardOptions opt;
  opt.tol = sc.picard.tol;
  opt.max_iter = sc.picard.max_iter;
  opt.guess = sc.picard.guess == "zero" ? InitialGuess::Zero : InitialGuess::InitialData;
  opt.residual_phi = sc.picard.residual_phi;
  opt.residual_threshold = sc.picard.residual_threshold;
  return opt;
}

void picard_checks(const Scenario& sc, Checks& ck) {
  const Grid grid = sc.grid.build();
  const CoefficientSet coeffs = sc.coefficients.build();
  const auto u0 = sample(grid, sc.u0);
  const BrownianPath path = driver_path(sc);
  const NonlinearSources src = NonlinearSources::parse(sc.picard.f, sc.picard.g, sc.coefficients.drivers);
  const PicardOptions opt = picard_options(sc);
  PicardResult res;
  try {
    res = picard_solve(coeffs, src, u0, grid, sc.time.solver, path, sc.time.t_end, opt);
  } catch (const ConvergenceError& e) {
    ck.add("picard_converged", e.differences().empty() ? 1.0 : e.differences().back(), opt.tol, e.what());
    return;
  }
  ck.add("picard_converged", res.log.back().sup_diff, opt.tol,
         std::to_string(res.iterations) + " iterations");
  if (ck.has("picard_max_iterations")) {
    ck.add("picard_iterations", res.iterations, ck.number("picard_max_iterations", 2));
    ck.add("picard_fixed_point", res.log.back().sup_diff, 1e-12, "last successive difference");
  }
  if (ck.has("picard_ratio")) {
    double worst = 0.0;
    const std::size_t first = res.log.size() > 3 ? res.log.size() - 3 : 1;
    for (std::size_t k = first; k < res.log.size(); ++k) worst = std::max(worst, res.log[k].ratio);
    ck.add("picard_ratio", worst, ck.number("picard_ratio", 0.9), "max of the last three difference ratios");
  }
  if (ck.has("picard_guess_tol")) {
    PicardOptions other = opt;
    other.guess = opt.guess == InitialGuess::Zero ? InitialGuess::InitialData : InitialGuess::Zero;
    other.residual_phi.reset();
    const PicardResult alt = picard_solve(coeffs, src, u0, grid, sc.time.solver, path, sc.time.t_end, other);
    ck.add("picard_guesses", sup_l2_distance(res.trajectory, alt.trajectory), ck.number("picard_guess_tol", 1e-7));
  }
  if (ck.has("picard_linear_lambda")) {
    CoefficientSpec spec = sc.coefficients;
    spec.c = spec.c + ScalarField::constant(ck.number("picard_linear_lambda", 0.0));
    SolverConfig c = sc.time.solver;
    c.record_all_steps = true;
    const double t_end[] = {sc.time.t_end};
    const Trajectory lin = solve(spec.build(), u0, grid, c, path, t_end);
    ck.add("picard_linear", sup_l2_distance(res.trajectory, lin), ck.number("picard_linear_tol", 1e-8));
  }
  if (ck.has("picard_growth")) {
    const double mx = *std::max_element(res.iterate_sup_l2.begin(), res.iterate_sup_l2.end());
    ck.add("picard_growth", mx / res.iterate_sup_l2.front(), ck.number("picard_growth", 10.0));
  }
  if (res.weak_residual) ck.add("picard_weak_residual", *res.weak_residual, opt.residual_threshold);
}

std::vector<std::string> args_with_program(const std::vector<std::string>& args) {
  std::vector<std::string> out{"spdelab"};
  out.insert(out.end(), args.begin(), args.end());
  return out;
}

Scenario load(const std::string& file) {
  if (fs::path(file).extension() == ".json") {
    std::ifstream in(file);
    if (!in) throw ConfigError("cannot open manifest '" + file + "'");
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_config_text(to_config_text(RunManifest::from_json(buf.str()).config));
  }
  return parse_config_file(file);
}

}  // namespace

// ---- manifest ------------------------------------------------------------------

std::string RunManifest::to_json() const {
  json j;
  j["scenario"] = scenario;
  j["subcommand"] = subcommand;
  j["version"] = version;
  j["config"] = config;
  j["grid"] = grid;
  j["dt"] = dt;
  j["drivers"] = drivers;
  j["seeds"] = {{"path", path_seed}, {"truth", truth_seed}, {"particle", particle_seed}, {"direction", direction_seed}};
  return j.dump(2) + "\n";
}

std::string RunManifest::hash() const { return fnv1a_hex(to_json()); }

RunManifest RunManifest::from_json(const std::string& text) {
  try {
    const json j = json::parse(text);
    RunManifest m;
    m.scenario = j.at("scenario").get<std::string>();
    m.subcommand = j.at("subcommand").get<std::string>();
    m.version = j.at("version").get<std::string>();
    m.config = j.at("config").get<RawConfig>();
    m.grid = j.at("grid").get<std::string>();
    m.dt = j.at("dt").get<double>();
    m.drivers = j.at("drivers").get<int>();
    const auto& s = j.at("seeds");
    m.path_seed = s.at("path").get<std::uint64_t>();
    m.truth_seed = s.at("truth").get<std::uint64_t>();
    m.particle_seed = s.at("particle").get<std::uint64_t>();
    m.direction_seed = s.at("direction").get<std::uint64_t>();
    return m;
  } catch (const json::exception& e) {
    throw ParseError(std::string("manifest: ") + e.what());
  }
}

RunManifest make_manifest(const Scenario& sc, const std::string& subcommand) {
  RunManifest m;
  m.scenario = sc.name;
  m.subcommand = subcommand;
  m.version = SPDELAB_VERSION;
  m.config = sc.raw;
  m.grid = sc.grid.build().describe();
  m.dt = sc.time.solver.dt;
  m.drivers = sc.coefficients.drivers;
  m.path_seed = sc.time.seed;
  m.truth_seed = sc.filter.truth_seed;
  m.particle_seed = sc.filter.particle_seed;
  return m;
}

// ---- subcommands ----------------------------------------------------------------

RunResult run_spde(const Scenario& sc, const fs::path& out_root) {
  RunResult r = open_run(make_manifest(sc, "run-spde"), out_root);
  const Grid grid = sc.grid.build();
  const auto times = sc.time.output_times();
  const Trajectory tr = solve(sc.coefficients.build(), sample(grid, sc.u0), grid, sc.time.solver, driver_path(sc), times);
  emit(r, "trajectory.csv", trajectory_csv(tr, {}, "u"));
  Csv mass("t,mass,l2");
  for (std::size_t k = 0; k < tr.size(); ++k) mass.row({num(tr.times[k]), num(tr.mass[k]), num(tr.l2[k])});
  emit(r, "mass.csv", mass.text());
  if (!tr.warnings.empty()) {
    std::string w;
    for (const auto& s : tr.warnings) w += s + "\n";
    emit(r, "warnings.txt", w);
  }
  return r;
}

RunResult run_filter(const Scenario& sc, const fs::path& out_root) {
  if (!sc.filter.present) throw ConfigError("run-filter needs a [filter] section");
  RunResult r = open_run(make_manifest(sc, "run-filter"), out_root);
  const FilterScenario& fsc = sc.filter.scenario;
  const Grid grid = sc.grid.build();
  const auto times = sc.time.output_times();
  const TruthRealization truth = simulate_truth(fsc, sc.filter.truth_seed, sc.time.n_steps(), sc.time.solver.dt);
  const ZakaiResult z = run_zakai(fsc, truth, grid, sc.time.solver, times);
  emit(r, "posterior.csv", trajectory_csv(z.pi, {}, "pi"));

  Csv moments("t,mean,var,mass");
  for (std::size_t k = 0; k < z.pi.size(); ++k) {
    moments.row({num(z.pi.times[k]), num(z.moments[k].mean), num(z.moments[k].var), num(z.u.mass[k])});
  }
  emit(r, "moments.csv", moments.text());

  std::optional<KalmanSeries> kb;
  if (fsc.linear) kb = kalman_bucy_oracle(fsc, truth, 4);
  std::vector<ParticleEstimate> est;
  if (sc.filter.particles > 0 && !sc.filter.phis.empty()) {
    est = particle_estimate(fsc, truth, grid, sc.filter.particles, sc.filter.phis, sc.filter.particle_seed);
  }
  Csv oracle("t,pde_mean,kb_mean,pde_var,kb_var,particle_phi,stderr");
  for (std::size_t k = 0; k < z.pi.size(); ++k) {
    const auto step = static_cast<std::size_t>(z.pi.steps[k]);
    const bool last = k + 1 == z.pi.size();
    oracle.row({num(z.pi.times[k]), num(z.moments[k].mean), kb ? num(kb->mean[step]) : "", num(z.moments[k].var),
                kb ? num(kb->var[step]) : "", last && !est.empty() ? num(est[0].estimate) : "",
                last && !est.empty() ? num(est[0].stderr_) : ""});
  }
  emit(r, "oracle.csv", oracle.text());
  if (!est.empty()) {
    Csv parts("phi,pde,particle,stderr");
    for (std::size_t k = 0; k < est.size(); ++k) {
      parts.row({sc.filter.phis[k].describe(), num(integrate(grid, z.u.values.back(), sc.filter.phis[k])),
                 num(est[k].estimate), num(est[k].stderr_)});
    }
    emit(r, "particles.csv", parts.text());
  }
  if (sc.filter.kushner) {
    emit(r, "kushner.csv", trajectory_csv(run_kushner(fsc, truth, grid, sc.time.solver, times), {}, "pi"));
  }
  return r;
}

RunResult sweep_commutator(const Scenario& sc, const fs::path& out_root) {
  if (!sc.commutator.present) throw ConfigError("sweep-commutator needs a [commutator] section");
  RunResult r = open_run(make_manifest(sc, "sweep-commutator"), out_root);
  const CommutatorSpec& cs = sc.commutator;
  const CommutatorSweep sw = convergence_sweep(cs.b, cs.u, cs.epsilons, cs.radius, sc.grid.build(), cs.exponent);
  Csv csv("epsilon,norm,consistency_gap");
  for (std::size_t k = 0; k < sw.epsilons.size(); ++k) {
    csv.row({num(sw.epsilons[k]), num(sw.norms[k]), sw.gaps.empty() ? "" : num(sw.gaps[k])});
  }
  emit(r, "commutator.csv", csv.text());
  return r;
}

RunResult run_picard(const Scenario& sc, const fs::path& out_root) {
  if (!sc.picard.present) throw ConfigError("picard needs a [picard] section");
  RunResult r = open_run(make_manifest(sc, "picard"), out_root);
  const Grid grid = sc.grid.build();
  const NonlinearSources src = NonlinearSources::parse(sc.picard.f, sc.picard.g, sc.coefficients.drivers);
  PicardResult res;
  try {
    res = picard_solve(sc.coefficients.build(), src, sample(grid, sc.u0), grid, sc.time.solver, driver_path(sc),
                       sc.time.t_end, picard_options(sc));
  } catch (const ConvergenceError& e) {
    Csv log("iter,sup_diff,ratio");
    const auto& d = e.differences();
    for (std::size_t k = 0; k < d.size(); ++k) {
      log.row({std::to_string(k + 1), num(d[k]), num(k == 0 || d[k - 1] == 0.0 ? 0.0 : d[k] / d[k - 1])});
    }
    emit(r, "iterates_log.csv", log.text());
    throw;
  }
  Csv log("iter,sup_diff,ratio");
  for (const auto& e : res.log) log.row({std::to_string(e.iter), num(e.sup_diff), num(e.ratio)});
  emit(r, "iterates_log.csv", log.text());
  emit(r, "trajectory.csv", trajectory_csv(res.trajectory, output_levels(sc), "u"));
  return r;
}

std::string default_subcommand(const Scenario& sc) {
  if (sc.filter.present) return "run-filter";
  if (sc.commutator.present) return "sweep-commutator";
  if (sc.picard.present) return "picard";
  return "run-spde";
}

std::vector<CheckReport> evaluate_checks(const Scenario& sc) {
  Checks ck(sc, make_manifest(sc, "check").hash());
  if (sc.filter.present) {
    filter_checks(sc, ck);
  } else if (sc.commutator.present) {
    commutator_checks(sc, ck);
  } else if (sc.picard.present) {
    picard_checks(sc, ck);
  } else {
    spde_checks(sc, ck);
  }
  return ck.take();
}

RunResult run_check(const std::vector<Scenario>& scenarios, const fs::path& out_root) {
  std::string combined;
  for (const auto& sc : scenarios) combined += make_manifest(sc, "check").to_json();
  RunResult r;
  r.hash = fnv1a_hex(combined);
  r.dir = out_root / r.hash;
  fs::create_directories(r.dir);
  json manifests = json::array();
  for (const auto& sc : scenarios) manifests.push_back(json::parse(make_manifest(sc, "check").to_json()));
  emit(r, "manifest.json", manifests.dump(2) + "\n");

  json report = json::array();
  for (const auto& sc : scenarios) {
    std::vector<CheckReport> reps;
    try {
      reps = evaluate_checks(sc);
    } catch (const Error& e) {
      auto f = CheckReport::make(sc.name + ".error", 1.0, 0.0, e.what());
      f.context = make_manifest(sc, "check").hash();
      reps.push_back(f);
    }
    for (const auto& c : reps) {
      report.push_back({{"name", c.name},
                        {"pass", c.pass},
                        {"measured", c.measured},
                        {"threshold", c.threshold},
                        {"manifest_hash", c.context}});
      r.reports.push_back(c);
    }
  }
  emit(r, "report.json", report.dump(2) + "\n");
  return r;
}

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Degenerate linear SPDE and nonlinear filtering toolkit"};
  app.set_version_flag("--version", SPDELAB_VERSION);
  app.require_subcommand(1);
  std::string out_root = "runs";
  app.add_option("--out", out_root, "Root directory for run outputs")->capture_default_str();

  std::string config;
  std::vector<std::string> configs;
  const std::vector<std::pair<std::string, std::string>> single{
      {"run-spde", "Solve the linear SPDE and write the trajectory"},
      {"run-filter", "Run the Zakai filter against its oracles"},
      {"sweep-commutator", "Commutator norms over an epsilon sweep"},
      {"picard", "Picard iteration for the nonlinear equation"}};
  for (const auto& [name, help] : single) {
    auto* sub = app.add_subcommand(name, help);
    sub->add_option("config", config, "Scenario config (.ini) or a manifest.json to replay")->required();
  }
  auto* check = app.add_subcommand("check", "Run the declared checks over scenarios and write report.json");
  check->add_option("configs", configs, "Scenario configs")->required();

  const auto argv_strings = args_with_program(args);
  std::vector<const char*> argv;
  for (const auto& s : argv_strings) argv.push_back(s.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForVersion&) {
    out << SPDELAB_VERSION << "\n";
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << "\n" << app.help();
    return 2;
  }

  const std::string sub = app.get_subcommands().front()->get_name();
  try {
    if (sub == "check") {
      std::vector<Scenario> scenarios;
      for (const auto& c : configs) scenarios.push_back(load(c));
      const RunResult r = run_check(scenarios, out_root);
      bool pass = true;
      for (const auto& c : r.reports) {
        out << (c.pass ? "PASS " : "FAIL ") << c.name << " measured=" << format_double(c.measured)
            << " threshold=" << format_double(c.threshold);
        if (!c.pass && !c.note.empty()) out << " (" << c.note << ")";
        out << "\n";
        pass = pass && c.pass;
      }
      out << "report: " << (r.dir / "report.json").string() << "\n";
      return pass ? 0 : 1;
    }
    const Scenario sc = load(config);
    RunResult r;
    if (sub == "run-spde") r = run_spde(sc, out_root);
    if (sub == "run-filter") r = run_filter(sc, out_root);
    if (sub == "sweep-commutator") r = sweep_commutator(sc, out_root);
    if (sub == "picard") r = run_picard(sc, out_root);
    out << r.dir.string() << "\n";
    return 0;
  } catch (const ParseError& e) {
    err << "config error: " << e.what() << "\n";
    return 2;
  } catch (const ValidationError& e) {
    err << "config error: " << e.what() << "\n";
    return 2;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace spdelab
