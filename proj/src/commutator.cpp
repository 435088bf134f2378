#include "spdelab/commutator.hpp"

#include "spdelab/error.hpp"
#include "spdelab/mollifier.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>

namespace spdelab {

namespace {

struct GaussRule {
  std::vector<double> nodes;  // on [-1, 1]
  std::vector<double> weights;
};

GaussRule gauss_legendre(int n) {
  GaussRule g;
  g.nodes.resize(n);
  g.weights.resize(n);
  for (int i = 0; i < n; ++i) {
    double x = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0;
      double p1 = x;
      for (int k = 2; k <= n; ++k) {
        const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      dp = n * (x * p1 - p0) / (x * x - 1.0);
      const double dx = p1 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-16) break;
    }
    g.nodes[i] = x;
    g.weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
  }
  return g;
}

double rho(double z, double eps) { return kernel_eps(Point(z, 0.0), eps, 1); }
double drho(double z, double eps) { return kernel_eps_gradient(Point(z, 0.0), eps, 1)[0]; }

class SupportQuadrature {
 public:
  SupportQuadrature(double eps, const CommutatorOptions& opt, std::vector<const ScalarField*> fields)
      : eps_(eps), opt_(opt), rule_(gauss_legendre(opt.gauss_points)), fields_(std::move(fields)) {
    if (opt.panels < 1 || opt.gauss_points < 2) throw ArgumentError("invalid commutator quadrature options");
  }

  // int_{x-eps}^{x+eps} g(y) dy
  double integrate(double x, const std::function<double(double)>& g) const {
    const double lo = x - eps_;
    const double hi = x + eps_;
    std::vector<double> cuts;
    cuts.reserve(opt_.panels + 8);
    for (int p = 0; p <= opt_.panels; ++p) cuts.push_back(lo + (hi - lo) * p / opt_.panels);
    for (const ScalarField* f : fields_) {
      for (double b : f->breakpoints(lo, hi)) {
        if (b > lo && b < hi) cuts.push_back(b);
      }
    }
    std::sort(cuts.begin(), cuts.end());
    double total = 0.0;
    for (std::size_t k = 0; k + 1 < cuts.size(); ++k) {
      const double a = cuts[k];
      const double b = cuts[k + 1];
      if (b <= a) continue;
      const double mid = 0.5 * (a + b);
      const double half = 0.5 * (b - a);
      double s = 0.0;
      for (std::size_t q = 0; q < rule_.nodes.size(); ++q) s += rule_.weights[q] * g(mid + half * rule_.nodes[q]);
      total += half * s;
    }
    return total;
  }

 private:
  double eps_;
  CommutatorOptions opt_;
  GaussRule rule_;
  std::vector<const ScalarField*> fields_;
};

double val(const ScalarField& f, double y) { return f(0.0, Point(y, 0.0)); }
double der(const ScalarField& f, double y) { return f.gradient(0.0, Point(y, 0.0))[0]; }

CommutatorField make_field(double eps, const Grid& grid, const std::function<double(double)>& eval) {
  if (grid.dim() != 1) throw ArgumentError("commutators are evaluated on one-dimensional grids");
  const MollifierParams p{eps, 1};
  require_resolved(p, grid.spacing());
  CommutatorField out;
  out.spacing = grid.spacing();
  out.epsilon = eps;
  for (std::size_t k = 0; k < grid.size(); ++k) {
    if (grid.distance_to_boundary(k) <= eps) continue;
    const double x = grid.point(k)[0];
    out.x.push_back(x);
    out.values.push_back(eval(x));
  }
  return out;
}

void require_differentiable(const ScalarField& f, const char* name) {
  if (!f.differentiable()) throw HypothesisError(std::string(name) + " must be differentiable for this form");
}

}  // namespace

double CommutatorField::norm(double radius, double r) const {
  if (!(r >= 1.0)) throw ArgumentError("norm exponent must be >= 1");
  std::vector<double> terms;
  for (std::size_t k = 0; k < x.size(); ++k) {
    if (std::abs(x[k]) <= radius) terms.push_back(std::pow(std::abs(values[k]), r));
  }
  return std::pow(spacing * compensated_sum(terms), 1.0 / r);
}

CommutatorField commutator_direct(const ScalarField& b, const ScalarField& u, double eps, const Grid& grid,
                                  const CommutatorOptions& opt) {
  require_differentiable(u, "u");
  const SupportQuadrature q(eps, opt, {&b, &u});
  return make_field(eps, grid, [&](double x) {
    const double smooth_flux = q.integrate(x, [&](double y) { return rho(x - y, eps) * val(b, y) * der(u, y); });
    const double grad_moll = q.integrate(x, [&](double y) { return drho(x - y, eps) * val(u, y); });
    return smooth_flux - val(b, x) * grad_moll;
  });
}

CommutatorField commutator_integral(const ScalarField& b, const ScalarField& u, double eps, const Grid& grid,
                                    const CommutatorOptions& opt) {
  require_differentiable(b, "b");
  const SupportQuadrature q(eps, opt, {&b, &u});
  return make_field(eps, grid, [&](double x) {
    const double bx = val(b, x);
    return q.integrate(x, [&](double y) {
      const double uy = val(u, y);
      return (val(b, y) - bx) * uy * drho(x - y, eps) - der(b, y) * uy * rho(x - y, eps);
    });
  });
}

CommutatorField commutator_zero_order(const ScalarField& c, const ScalarField& u, double eps, const Grid& grid,
                                      const CommutatorOptions& opt) {
  const SupportQuadrature q(eps, opt, {&c, &u});
  return make_field(eps, grid, [&](double x) {
    const double cx = val(c, x);
    return q.integrate(x, [&](double y) { return (val(c, y) - cx) * val(u, y) * rho(x - y, eps); });
  });
}

CommutatorField product_rule_defect(const ScalarField& a, const ScalarField& u, double eps, const Grid& grid,
                                    const CommutatorOptions& opt) {
  require_differentiable(a, "a");
  require_differentiable(u, "u");
  const SupportQuadrature q(eps, opt, {&a, &u});
  return make_field(eps, grid, [&](double x) {
    const double ax = val(a, x);
    const double dax = der(a, x);
    const double mu = q.integrate(x, [&](double y) { return rho(x - y, eps) * val(u, y); });
    const double dmu = q.integrate(x, [&](double y) { return drho(x - y, eps) * val(u, y); });
    // d[rho, a](u)
    const double lhs = q.integrate(x, [&](double y) { return drho(x - y, eps) * val(a, y) * val(u, y); }) -
                       dax * mu - ax * dmu;
    // [rho, a'](u) + [rho, a d](u)
    const double c0 = q.integrate(x, [&](double y) { return rho(x - y, eps) * der(a, y) * val(u, y); }) - dax * mu;
    const double c1 = q.integrate(x, [&](double y) { return rho(x - y, eps) * val(a, y) * der(u, y); }) - ax * dmu;
    return lhs - c0 - c1;
  });
}

CommutatorField factor_rule_defect(const ScalarField& a, const ScalarField& b, const ScalarField& u, double eps,
                                   const Grid& grid, const CommutatorOptions& opt) {
  require_differentiable(u, "u");
  const ScalarField ab = a * b;
  const auto lhs = commutator_direct(ab, u, eps, grid, opt);
  const auto cb = commutator_direct(b, u, eps, grid, opt);
  const SupportQuadrature q(eps, opt, {&a, &b, &u});
  std::size_t k = 0;
  return make_field(eps, grid, [&](double x) {
    const double ax = val(a, x);
    // [rho, a](b u')
    const double zero = q.integrate(x, [&](double y) {
      return (val(a, y) - ax) * val(b, y) * der(u, y) * rho(x - y, eps);
    });
    const double d = lhs.values[k] - ax * cb.values[k] - zero;
    ++k;
    return d;
  });
}

double relative_gap(const CommutatorField& direct, const CommutatorField& integral, double radius, double r) {
  if (direct.values.size() != integral.values.size()) throw ArgumentError("commutator fields differ in size");
  CommutatorField diff = direct;
  for (std::size_t k = 0; k < diff.values.size(); ++k) diff.values[k] -= integral.values[k];
  return diff.norm(radius, r) / std::max(direct.norm(radius, r), 1e-6);
}

CommutatorSweep convergence_sweep(const ScalarField& b, const ScalarField& u, std::span<const double> epsilons,
                                  double radius, const Grid& grid, double r, const CommutatorOptions& opt) {
  if (!b.differentiable() && !u.differentiable()) {
    throw HypothesisError("commutator convergence needs b or u differentiable");
  }
  if (epsilons.empty()) throw ArgumentError("empty epsilon sweep");
  for (std::size_t k = 1; k < epsilons.size(); ++k) {
    if (!(epsilons[k] < epsilons[k - 1])) throw ArgumentError("epsilons must be strictly decreasing");
  }
  CommutatorSweep sweep;
  sweep.ball_radius = radius;
  sweep.exponent = r;
  sweep.consistency_checked = b.differentiable() && u.differentiable();
  for (double eps : epsilons) {
    sweep.epsilons.push_back(eps);
    if (u.differentiable()) {
      const auto d = commutator_direct(b, u, eps, grid, opt);
      sweep.norms.push_back(d.norm(radius, r));
      if (sweep.consistency_checked) {
        const auto i = commutator_integral(b, u, eps, grid, opt);
        sweep.gaps.push_back(relative_gap(d, i, radius, r));
        sweep.consistency_gap = std::max(sweep.consistency_gap, sweep.gaps.back());
      }
    } else {
      sweep.norms.push_back(commutator_integral(b, u, eps, grid, opt).norm(radius, r));
    }
  }
  return sweep;
}

}  // namespace spdelab
