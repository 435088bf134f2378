#include "spdelab/error.hpp"
#include "spdelab/solver.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

namespace spdelab {
namespace {

using test::k;
using test::parse;

std::vector<double> apply_op(const SparseOp& op, const std::vector<double>& u) {
  const Eigen::Map<const Eigen::VectorXd> v(u.data(), static_cast<Eigen::Index>(u.size()));
  const Eigen::VectorXd r = op * v;
  return {r.data(), r.data() + r.size()};
}

TEST(Generator, HeatStencil) {
  auto s = test::spec1();
  s.a[0] = k(1);
  const Grid g(0, 1, 20);
  const SparseOp op = assemble_generator(s.build(), g, 0.0);
  const double h2 = g.spacing() * g.spacing();
  for (int i = 1; i < 19; ++i) {
    EXPECT_NEAR(op.coeff(i, i - 1), 1.0 / h2, 1e-9);
    EXPECT_NEAR(op.coeff(i, i), -2.0 / h2, 1e-9);
    EXPECT_NEAR(op.coeff(i, i + 1), 1.0 / h2, 1e-9);
  }
}

TEST(Generator, ConstantStateWithConstantDrift) {
  auto s = test::spec1();
  s.a[0] = k(0.7);
  s.b[0] = k(1.3);
  const Grid g(-1, 1, 32);
  const auto r = apply_op(assemble_generator(s.build(), g, 0.0), std::vector<double>(g.size(), 2.0));
  for (std::size_t i = 1; i + 1 < r.size(); ++i) EXPECT_NEAR(r[i], 0.0, 1e-12);
}

TEST(Generator, ColumnSumsVanishWithoutZeroOrder) {
  auto s = test::spec1();
  s.a[0] = parse("sine amp=0.3 offset=1");
  s.b[0] = parse("cosine amp=0.5");
  const Grid g(-2, 2, 40);
  const SparseOp op = assemble_generator(s.build(), g, 0.0);
  const Eigen::VectorXd ones = Eigen::VectorXd::Ones(static_cast<Eigen::Index>(g.size()));
  const Eigen::VectorXd cols = op.transpose() * ones;
  EXPECT_LE(cols.cwiseAbs().maxCoeff(), 1e-10 / (g.spacing() * g.spacing()));
}

double generator_error(int n) {
  // a = 1 + 0.3 sin x, b = 0.5 cos x, c = 0.2 x, u = sin x.
  auto s = test::spec1();
  s.a[0] = parse("sine amp=0.3 offset=1");
  s.b[0] = parse("cosine amp=0.5");
  s.c = parse("affine slope=0.2,0");
  const Grid g(-3, 3, n);
  const auto r = apply_op(assemble_generator(s.build(), g, 0.0), test::sample(g, parse("sine amp=1")));
  double err = 0.0;
  for (std::size_t q = 0; q < g.size(); ++q) {
    const double x = g.point(q)[0];
    if (std::abs(x) > 2.0) continue;
    const double a = 1 + 0.3 * std::sin(x), da = 0.3 * std::cos(x);
    const double b = 0.5 * std::cos(x), db = -0.5 * std::sin(x);
    const double exact = da * std::cos(x) - a * std::sin(x) + db * std::sin(x) + b * std::cos(x) + 0.2 * x * std::sin(x);
    err = std::max(err, std::abs(r[q] - exact));
  }
  return err;
}

TEST(Generator, SecondOrderAccurate) {
  const double ratio = generator_error(64) / generator_error(128);
  EXPECT_GE(ratio, 3.5);
  EXPECT_LE(ratio, 4.5);
}

TEST(Generator, AsymmetricDiffusionRejected) {
  auto c = test::spec2().build();
  c.a = [](double, const Point&) { return Mat2{{1.0, 0.2}, {0.1, 1.0}}; };
  const Grid g({-1, -1}, {1, 1}, {16, 16});
  EXPECT_THROW(assemble_generator(c, g, 0.0), ModelInvariantError);
}

TEST(NoiseOp, Examples) {
  const Grid g(-1, 1, 32);
  auto s = test::spec1();
  s.h[0] = k(1);
  const auto id = apply_op(assemble_noise_op(s.build(), g, 0.0, 0), test::sample(g, parse("sine amp=1")));
  EXPECT_EQ(id, test::sample(g, parse("sine amp=1")));

  auto t = test::spec1();
  t.sigma[0][0] = k(1);
  const auto one = apply_op(assemble_noise_op(t.build(), g, 0.0, 0), test::sample(g, parse("affine slope=1,0")));
  for (std::size_t i = 1; i + 1 < one.size(); ++i) EXPECT_NEAR(one[i], 1.0, 1e-12);

  EXPECT_THROW(assemble_noise_op(t.build(), g, 0.0, 1), ArgumentError);
}

double noise_error(int n) {
  auto s = test::spec1();
  s.sigma[0][0] = parse("sine amp=1");
  s.h[0] = parse("cosine amp=1");
  const Grid g(-5, 5, n);
  const auto r = apply_op(assemble_noise_op(s.build(), g, 0.0, 0), test::sample(g, parse("gaussian width=0.8")));
  double err = 0.0;
  for (std::size_t q = 0; q < g.size(); ++q) {
    const double x = g.point(q)[0];
    const double u = std::exp(-x * x / (2 * 0.64));
    const double exact = std::sin(x) * (-x / 0.64) * u + std::cos(x) * u;
    err = std::max(err, std::abs(r[q] - exact));
  }
  return err;
}

TEST(NoiseOp, SecondOrderAccurate) {
  const double ratio = noise_error(100) / noise_error(200);
  EXPECT_GE(ratio, 3.5);
  EXPECT_LE(ratio, 4.5);
}

TEST(Step, ZeroCoefficientsAreIdentity) {
  const Grid g(-2, 2, 64);
  const auto u = DensityField::sample(g, parse("gaussian width=0.5"));
  const double dB[] = {0.3};
  SolverConfig cfg;
  cfg.dt = 0.01;
  const auto v = step(u, 0.0, cfg, dB, test::spec1().build());
  EXPECT_EQ(v.values, u.values);
}

TEST(Step, HeatGaussianVarianceGrowth) {
  auto s = test::spec1();
  s.a[0] = k(0.5);
  const Grid g(-8, 8, 512);
  const double dt = 1e-3;
  // Unit-mass Gaussian of variance s2 -> variance s2 + dt.
  const auto gauss = [](double s2) {
    return parse(("gaussian amp=" + std::to_string(1.0 / std::sqrt(2 * std::numbers::pi * s2)) +
                  " width=" + std::to_string(std::sqrt(s2)))
                     .c_str());
  };
  const auto u = DensityField::sample(g, gauss(1.0));
  SolverConfig cfg;
  cfg.dt = dt;
  const double dB[] = {0.0};
  const auto v = step(u, 0.0, cfg, dB, s.build());
  const auto exact = test::sample(g, gauss(1.0 + dt));
  EXPECT_LE(test::max_abs_diff(v.values, exact), 1e-6);
}

TEST(Step, TransportOneStepFirstOrder) {
  auto s = test::spec1();
  s.a[0] = k(0.5);
  s.sigma[0][0] = k(1);
  const Grid g(-6, 6, 1200);
  const auto u = DensityField::sample(g, parse("gaussian width=0.5"));
  SolverConfig cfg;
  cfg.dt = 1e-4;
  const double dB[] = {0.01};
  const auto v = step(u, 0.0, cfg, dB, s.build());
  const auto shifted = test::sample(g, parse("gaussian center=-0.01,0 width=0.5"));
  std::vector<double> d(g.size());
  for (std::size_t q = 0; q < d.size(); ++q) d[q] = v.values[q] - shifted[q];
  // O(dt + h^2) with an O(1) constant for this profile.
  EXPECT_LE(grid_l2(g, d), 5.0 * (cfg.dt + g.spacing() * g.spacing()));
}

TEST(Step, StabilityGuard) {
  auto s = test::spec1();
  s.a[0] = k(0.5);
  s.sigma[0][0] = k(1);
  const Grid g(-1, 1, 200);
  try {
    check_stability(s.build(), g, 0.0, 1e-3);
    FAIL() << "expected StabilityError";
  } catch (const StabilityError& e) {
    EXPECT_GT(e.suggested_dt(), 0.0);
    EXPECT_LE(e.suggested_dt(), g.spacing() * g.spacing());
    EXPECT_NO_THROW(check_stability(s.build(), g, 0.0, 0.999 * e.suggested_dt()));
  }
  EXPECT_NO_THROW(check_stability(s.build(), g, 0.0, 1e-5));
  // A face margin violation cannot be cured by a smaller dt.
  s.a[0] = k(0.3);
  EXPECT_THROW(check_stability(s.build(), g, 0.0, 1e-5), StabilityError);
}

TEST(SolverConfig, Validation) {
  SolverConfig cfg;
  cfg.theta = 0.4;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg.theta = 0.5;
  cfg.dt = 0.0;
  EXPECT_THROW(cfg.validate(), ConfigError);
}

struct DriftRun {
  CoefficientSet coeffs;
  Grid grid;
  SolverConfig cfg;
  BrownianPath path;
  std::vector<double> u0;
};

DriftRun drift_run() {
  auto s = test::spec1();
  s.a[0] = parse("cosine amp=0.2 offset=0.7");
  s.b[0] = parse("sine amp=0.8");
  s.sigma[0][0] = k(0.6);
  s.h[0] = parse("cosine amp=0.3");
  const Grid g(-6, 6, 240);
  SolverConfig cfg;
  cfg.dt = 2e-3;
  cfg.record_all_steps = true;
  return {s.build(), g, cfg, generate_path(17, 1, 100, cfg.dt), test::sample(g, parse("gaussian width=0.6"))};
}

TEST(Solve, MassConservedWithoutZeroOrderTerms) {
  auto s = test::spec1();
  s.a[0] = parse("cosine amp=0.2 offset=0.7");
  s.b[0] = parse("sine amp=0.8");
  s.sigma[0][0] = k(0.6);
  const Grid g(-6, 6, 240);
  SolverConfig cfg;
  cfg.dt = 2e-3;
  const double out[] = {0.1, 0.2};
  const auto tr = solve(s.build(), test::sample(g, parse("gaussian width=0.6")), g, cfg,
                        generate_path(4, 1, 100, cfg.dt), out);
  ASSERT_EQ(tr.size(), 3u);
  for (double m : tr.mass) EXPECT_NEAR(m, tr.mass[0], 1e-12 * tr.mass[0]);
}

TEST(Solve, LinearInInitialData) {
  const DriftRun r = drift_run();
  const auto w = test::sample(r.grid, parse("cosine amp=0.1 freq=2,0"));
  std::vector<double> mix(w.size());
  for (std::size_t q = 0; q < w.size(); ++q) mix[q] = 2.5 * r.u0[q] + w[q];
  const double out[] = {0.2};
  const auto a = solve(r.coeffs, r.u0, r.grid, r.cfg, r.path, out);
  const auto b = solve(r.coeffs, w, r.grid, r.cfg, r.path, out);
  const auto c = solve(r.coeffs, mix, r.grid, r.cfg, r.path, out);
  for (std::size_t q = 0; q < w.size(); ++q) {
    EXPECT_NEAR(c.values.back()[q], 2.5 * a.values.back()[q] + b.values.back()[q], 1e-10);
  }
}

TEST(Solve, OutputTimesMustSitOnLattice) {
  const DriftRun r = drift_run();
  const double out[] = {0.1003};
  EXPECT_THROW(solve(r.coeffs, r.u0, r.grid, r.cfg, r.path, out), ConfigError);
  const double late[] = {0.5};
  EXPECT_THROW(solve(r.coeffs, r.u0, r.grid, r.cfg, r.path, late), ConfigError);
}

TEST(WeakResidual, ZeroCoefficientsExact) {
  const Grid g(-3, 3, 120);
  SolverConfig cfg;
  cfg.dt = 0.01;
  cfg.record_all_steps = true;
  const auto c = test::spec1().build();
  const auto path = generate_path(2, 1, 20, cfg.dt);
  const double out[] = {0.2};
  const auto tr = solve(c, test::sample(g, parse("gaussian width=0.5")), g, cfg, path, out);
  EXPECT_LE(weak_residual(tr, TestFunction::gaussian(Point(0.2, 0), 0.3), c, path), 1e-12);
}

TEST(WeakResidual, HeatRunAndWrongSignControl) {
  auto s = test::spec1();
  s.a[0] = k(0.5);
  s.b[0] = k(0.8);
  const Grid g(-8, 8, 512);
  SolverConfig cfg;
  cfg.dt = 1e-4;
  cfg.record_all_steps = true;
  const auto path = generate_path(8, 1, 2500, cfg.dt);
  const double out[] = {0.25};
  const auto coeffs = s.build();
  const auto tr = solve(coeffs, test::sample(g, parse("gaussian width=0.5")), g, cfg, path, out);
  const auto phi = TestFunction::gaussian(Point(0.3, 0), 0.5);
  const double good = weak_residual(tr, phi, coeffs, path);
  EXPECT_LE(good, 5e-3);

  s.b[0] = k(-0.8);
  const double wrong = weak_residual(tr, phi, s.build(), path);
  EXPECT_GT(wrong, 10.0 * good);
}

TEST(WeakResidual, NoisyRunIsSmall) {
  const DriftRun r = drift_run();
  const double out[] = {0.2};
  const auto tr = solve(r.coeffs, r.u0, r.grid, r.cfg, r.path, out);
  EXPECT_LE(weak_residual(tr, TestFunction::compact_bump(Point(0.1, 0), 2.0), r.coeffs, r.path), 5e-3);
}

TEST(WeakResidual, Preconditions) {
  DriftRun r = drift_run();
  r.cfg.record_all_steps = false;
  const double out[] = {0.2};
  const auto tr = solve(r.coeffs, r.u0, r.grid, r.cfg, r.path, out);
  EXPECT_THROW(weak_residual(tr, TestFunction::gaussian(Point(0, 0), 0.3), r.coeffs, r.path), ArgumentError);
  r.cfg.record_all_steps = true;
  const auto full = solve(r.coeffs, r.u0, r.grid, r.cfg, r.path, out);
  EXPECT_THROW(weak_residual(full, TestFunction::compact_bump(Point(5.5, 0), 1.0), r.coeffs, r.path), ArgumentError);
}

TEST(Adjoints, MatchIntegrationByParts) {
  // int (L u) phi = int u L* phi on compactly supported data, by quadrature.
  const DriftRun r = drift_run();
  const Grid g(-6, 6, 4800);
  const auto phi = TestFunction::compact_bump(Point(0.2, 0), 1.5);
  const auto u = test::sample(g, parse("gaussian width=0.7"));
  const auto lu = apply_op(assemble_generator(r.coeffs, g, 0.0), u);
  const auto mu = apply_op(assemble_noise_op(r.coeffs, g, 0.0, 0), u);
  double lhs = 0.0, rhs = 0.0, mlhs = 0.0, mrhs = 0.0;
  for (std::size_t q = 0; q < g.size(); ++q) {
    const Point x = g.point(q);
    lhs += lu[q] * phi.value(x);
    rhs += u[q] * adjoint_generator(r.coeffs, phi, 0.0, x);
    mlhs += mu[q] * phi.value(x);
    mrhs += u[q] * adjoint_noise(r.coeffs, phi, 0.0, x, 0);
  }
  EXPECT_NEAR(lhs * g.spacing(), rhs * g.spacing(), 1e-5);
  EXPECT_NEAR(mlhs * g.spacing(), mrhs * g.spacing(), 1e-5);
}

}  // namespace
}  // namespace spdelab
