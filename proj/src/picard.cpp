#include "spdelab/picard.hpp"

#include "spdelab/error.hpp"
#include "spdelab/field.hpp"
#include "spdelab/format.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace spdelab {

namespace {

struct Family {
  std::function<double(double, const Point&, double)> fn;
  double lipschitz = 0.0;
  double growth = 0.0;
};

Family parse_family(std::string_view spec) {
  std::string s(spec);
  std::istringstream in(s);
  std::string head;
  in >> head;
  if (head.empty() || head == "zero") return {[](double, const Point&, double) { return 0.0; }, 0.0, 0.0};
  auto read_value = [&](const std::string& key) {
    std::string tok;
    if (!(in >> tok)) throw ParseError("nonlinear source '" + s + "' needs " + key + "=<value>");
    const auto eq = tok.find('=');
    if (eq == std::string::npos || tok.substr(0, eq) != key) {
      throw ParseError("unknown parameter '" + tok + "' in nonlinear source '" + s + "'");
    }
    const double v = parse_double(tok.substr(eq + 1));
    std::string extra;
    if (in >> extra) throw ParseError("unexpected token '" + extra + "' in nonlinear source '" + s + "'");
    return v;
  };
  if (head == "linear") {
    const double lambda = read_value("lambda");
    return {[lambda](double, const Point&, double z) { return lambda * z; }, std::abs(lambda), 0.0};
  }
  if (head == "sine") {
    const double amp = read_value("amp");
    return {[amp](double, const Point&, double z) { return amp * std::sin(z); }, std::abs(amp), std::abs(amp)};
  }
  if (head == "field") {
    const auto rest = s.substr(s.find("field") + 5);
    const ScalarField f = ScalarField::parse(rest);
    return {[f](double t, const Point& x, double) { return f(t, x); }, 0.0, 0.0};
  }
  throw ParseError("unknown nonlinear source family '" + head + "'");
}

}  // namespace

NonlinearSources NonlinearSources::parse(std::string_view f_spec, std::string_view g_spec, int drivers) {
  const Family f = parse_family(f_spec);
  const Family g = parse_family(g_spec);
  NonlinearSources src;
  src.f = f.fn;
  const bool g_zero = g_spec.empty() || g_spec == "zero";
  if (!g_zero) {
    auto gf = g.fn;
    src.g = [gf](double t, const Point& x, double z, int) { return gf(t, x, z); };
  }
  src.K = f.lipschitz + (g_zero ? 0.0 : drivers * g.lipschitz);
  src.gamma_bound = f.growth + (g_zero ? 0.0 : drivers * g.growth);
  src.description = "f=" + std::string(f_spec) + ";g=" + std::string(g_zero ? "zero" : g_spec);
  return src;
}

double lipschitz_excess(const NonlinearSources& src, const Grid& grid, double t_end, double z_range, int drivers,
                        int samples, std::uint64_t seed) {
  double worst = -std::numeric_limits<double>::infinity();
  for (int s = 0; s < samples; ++s) {
    const auto idx = static_cast<std::uint64_t>(s);
    const double t = t_end * counter_uniform(seed, 0, idx);
    const auto k = std::min<std::size_t>(grid.size() - 1,
                                         static_cast<std::size_t>(counter_uniform(seed, 1, idx) * grid.size()));
    const Point x = grid.point(k);
    const double z = z_range * (2.0 * counter_uniform(seed, 2, idx) - 1.0);
    const double z2 = z_range * (2.0 * counter_uniform(seed, 3, idx) - 1.0);
    double lhs = std::abs(src.f(t, x, z) - src.f(t, x, z2));
    if (src.g) {
      for (int l = 0; l < drivers; ++l) lhs += std::abs(src.g(t, x, z, l) - src.g(t, x, z2, l));
    }
    worst = std::max(worst, lhs - src.K * std::abs(z - z2));
  }
  return worst;
}

double sup_l2_distance(const Trajectory& a, const Trajectory& b) {
  if (a.size() != b.size()) throw ArgumentError("trajectories have different lengths");
  double worst = 0.0;
  std::vector<double> d;
  for (std::size_t k = 0; k < a.size(); ++k) {
    d.resize(a.values[k].size());
    for (std::size_t q = 0; q < d.size(); ++q) d[q] = a.values[k][q] - b.values[k][q];
    worst = std::max(worst, grid_l2(a.grid, d));
  }
  return worst;
}

PicardResult picard_solve(const CoefficientSet& coeffs, const NonlinearSources& sources, std::span<const double> u0,
                          const Grid& grid, const SolverConfig& cfg_in, const BrownianPath& path, double t_end,
                          const PicardOptions& opt) {
  if (!(opt.tol > 0.0)) throw ArgumentError("Picard tolerance must be positive");
  if (opt.max_iter < 1) throw ArgumentError("Picard needs at least one iteration");
  if (!sources.f) throw ArgumentError("nonlinear sources need an f component");
  double zr = 1.0;
  for (double v : u0) zr = std::max(zr, 2.0 * std::abs(v) + 1.0);
  if (lipschitz_excess(sources, grid, t_end, zr, coeffs.drivers) > 1e-10) {
    throw HypothesisError("nonlinear sources violate the declared Lipschitz constant K = " +
                          std::to_string(sources.K));
  }
  SolverConfig cfg = cfg_in;
  cfg.record_all_steps = true;
  const double out_t[] = {t_end};
  const int levels = static_cast<int>(std::lround(t_end / cfg.dt)) + 1;

  Trajectory prev;
  prev.grid = grid;
  prev.cfg = cfg;
  for (int k = 0; k < levels; ++k) {
    prev.times.push_back(k * cfg.dt);
    prev.steps.push_back(k);
    prev.values.emplace_back(opt.guess == InitialGuess::InitialData ? std::vector<double>(u0.begin(), u0.end())
                                                                      : std::vector<double>(u0.size(), 0.0));
  }

  auto make_override = [&](const Trajectory& from) {
    SourceOverride ov;
    ov.f = [&from, &grid, &sources, dt = cfg.dt](int level) {
      std::vector<double> v(grid.size());
      const auto& z = from.values.at(level);
      for (std::size_t k = 0; k < v.size(); ++k) v[k] = sources.f(level * dt, grid.point(k), z[k]);
      return v;
    };
    if (sources.g) {
      ov.g = [&from, &grid, &sources, dt = cfg.dt](int level, int l) {
        std::vector<double> v(grid.size());
        const auto& z = from.values.at(level);
        for (std::size_t k = 0; k < v.size(); ++k) v[k] = sources.g(level * dt, grid.point(k), z[k], l);
        return v;
      };
    }
    return ov;
  };

  PicardResult res;
  std::vector<double> diffs;
  for (int it = 1; it <= opt.max_iter; ++it) {
    const SourceOverride ov = make_override(prev);
    Trajectory cur = solve(coeffs, u0, grid, cfg, path, out_t, &ov);
    const double diff = sup_l2_distance(cur, prev);
    diffs.push_back(diff);
    const double ratio = res.log.empty() || res.log.back().sup_diff == 0.0 ? 0.0 : diff / res.log.back().sup_diff;
    res.log.push_back({it, diff, ratio});
    res.iterate_sup_l2.push_back(*std::max_element(cur.l2.begin(), cur.l2.end()));
    prev = std::move(cur);
    res.iterations = it;
    if (diff < opt.tol) {
      res.trajectory = std::move(prev);
      if (opt.residual_phi) {
        // Sources frozen at the final iterate.
        const SourceOverride frozen = make_override(res.trajectory);
        res.weak_residual = weak_residual(res.trajectory, *opt.residual_phi, coeffs, path, &frozen);
        res.residual_passed = *res.weak_residual <= opt.residual_threshold;
      }
      return res;
    }
  }
  throw ConvergenceError("Picard iteration did not reach tol " + std::to_string(opt.tol) + " in " +
                             std::to_string(opt.max_iter) + " iterations",
                         diffs);
}

}  // namespace spdelab
