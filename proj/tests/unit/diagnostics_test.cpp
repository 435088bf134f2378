#include "spdelab/diagnostics.hpp"
#include "spdelab/error.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

namespace spdelab {
namespace {

using test::k;
using test::parse;

Trajectory run(const CoefficientSpec& s, const Grid& g, double dt, int steps, std::uint64_t seed,
               const char* u0 = "gaussian width=0.5", BrownianPath* path_out = nullptr) {
  SolverConfig cfg;
  cfg.dt = dt;
  cfg.record_all_steps = true;
  const auto path = generate_path(seed, s.drivers, steps, dt);
  if (path_out) *path_out = path;
  const double out[] = {steps * dt};
  return solve(s.build(), test::sample(g, parse(u0)), g, cfg, path, out);
}

CoefficientSpec heat() {
  auto s = test::spec1();
  s.a[0] = k(0.5);
  return s;
}

CoefficientSpec transport() {
  auto s = test::spec1();
  s.a[0] = k(0.5);
  s.sigma[0][0] = k(1);
  return s;
}

TEST(CheckReport, PassMeansMeasuredWithinThreshold) {
  EXPECT_TRUE(CheckReport::make("x", 1.0, 1.0).pass);
  EXPECT_FALSE(CheckReport::make("x", 1.0 + 1e-15, 1.0).pass);
  EXPECT_FALSE(CheckReport::make("x", std::nan(""), 1.0).pass);
}

TEST(Positivity, HeatRunIsNonNegative) {
  const Grid g(-5, 5, 200);
  const auto tr = run(heat(), g, 1e-3, 100, 1);
  const auto r = check_positivity(tr, heat().build());
  EXPECT_EQ(r.measured, 0.0);
  EXPECT_TRUE(r.pass);
}

TEST(Positivity, TransportRunIsNonNegative) {
  const Grid g(-6, 6, 600);
  const auto tr = run(transport(), g, 1e-4, 500, 2);
  EXPECT_LE(check_positivity(tr, transport().build()).measured, 1e-10);
}

TEST(Positivity, DriftDominatedCoarseRunFails) {
  auto s = test::spec1();
  s.a[0] = k(0.005);
  s.b[0] = k(4.0);
  const Grid g(-4, 4, 32);
  const auto tr = run(s, g, 1e-2, 50, 3, "gaussian width=0.3");
  const auto r = check_positivity(tr, s.build());
  EXPECT_FALSE(r.pass);
  EXPECT_GT(r.measured, 1e-8);
}

TEST(Positivity, RefusesWithoutHypotheses) {
  const Grid g(-5, 5, 100);
  auto s = heat();
  s.g[0] = k(0.1);
  const auto tr = run(s, g, 1e-3, 10, 1);
  EXPECT_THROW(check_positivity(tr, s.build()), HypothesisError);
  EXPECT_THROW(l1_report(tr, s.build()), HypothesisError);

  const auto neg = run(heat(), g, 1e-3, 10, 1, "sine amp=1");
  EXPECT_THROW(check_positivity(neg, heat().build()), HypothesisError);
}

TEST(L1, ConservativeRunKeepsMass) {
  const Grid g(-6, 6, 600);
  const auto tr = run(transport(), g, 1e-4, 500, 4);
  for (double m : tr.mass) EXPECT_NEAR(m, tr.mass[0], 1e-12 * tr.mass[0]);
  EXPECT_TRUE(l1_report(tr, transport().build()).sharp.pass);

  // Pure diffusion keeps u >= 0 exactly, so the sharp form applies.
  const auto warm = run(heat(), Grid(-5, 5, 200), 1e-3, 100, 4);
  const auto rep = l1_report(warm, heat().build());
  EXPECT_TRUE(rep.sharp_applicable);
  EXPECT_LE(rep.sharp.measured, 1e-12);
  EXPECT_TRUE(rep.constant.pass);
}

TEST(L1, DecayMatchesExponential) {
  auto s = heat();
  s.c = k(-1);
  const Grid g(-5, 5, 200);
  const double dt = 1e-3;
  SolverConfig cfg;
  cfg.dt = dt;
  std::vector<double> out;
  for (int q = 1; q <= 10; ++q) out.push_back(0.1 * q);
  const auto tr = solve(s.build(), test::sample(g, parse("gaussian width=0.5")), g, cfg,
                        generate_path(1, 1, 1000, dt), out);
  const auto r = l1_decay_check(tr, 1.0);
  EXPECT_TRUE(r.pass);
  EXPECT_DOUBLE_EQ(r.threshold, 2.0 * dt * 1.0);
  EXPECT_TRUE(l1_report(tr, s.build()).sharp.pass);
}

TEST(L1, SourceAddsItsIntegral) {
  auto s = heat();
  s.f = parse("gaussian amp=0.1 width=0.4");
  const Grid g(-5, 5, 200);
  const auto tr = run(s, g, 1e-3, 200, 5);
  const double bump = grid_integral(g, test::sample(g, parse("gaussian amp=1 width=0.4")));
  for (std::size_t q = 0; q < tr.size(); ++q) {
    EXPECT_NEAR(tr.mass[q], tr.mass[0] + 0.1 * tr.times[q] * bump, 1e-10);
  }
  EXPECT_LE(l1_report(tr, s.build()).sharp.measured, 1e-10);
}

TEST(Energy, ZeroCoefficientsHaveNoDefect) {
  const Grid g(-3, 3, 60);
  BrownianPath path;
  const auto tr = run(test::spec1(), g, 1e-2, 20, 1, "gaussian width=0.5", &path);
  const auto rep = energy_report(tr, test::spec1().build(), path);
  EXPECT_EQ(rep.summed_defect, 0.0);
}

TEST(Energy, HeatDefectSmallAndHalves) {
  const Grid g(-8, 8, 512);
  BrownianPath fine;
  const auto tr_f = run(heat(), g, 5e-5, 5000, 6, "gaussian width=0.5", &fine);
  const auto coarse = coarsen(fine, 2);
  SolverConfig cfg;
  cfg.dt = 1e-4;
  cfg.record_all_steps = true;
  const double out[] = {0.25};
  const auto tr_c = solve(heat().build(), test::sample(g, parse("gaussian width=0.5")), g, cfg, coarse, out);
  const auto rc = energy_report(tr_c, heat().build(), coarse);
  const auto rf = energy_report(tr_f, heat().build(), fine);
  EXPECT_LE(rc.summed_defect, 1e-3);
  const double ratio = rc.summed_defect / rf.summed_defect;
  EXPECT_GE(ratio, 1.6);
  EXPECT_LE(ratio, 2.4);
}

TEST(Energy, TransportHasNoDissipationBeyondNoise) {
  const Grid g(-6, 6, 600);
  BrownianPath path;
  const auto tr = run(transport(), g, 1e-4, 200, 7, "gaussian width=0.5", &path);
  const auto rep = energy_report(tr, transport().build(), path);
  EXPECT_LE(rep.summed_defect, 1e-3);
}

TEST(Energy, EnsembleDriftOfTransportIsSmall) {
  const Grid g(-6, 6, 300);
  SolverConfig cfg;
  cfg.dt = 1e-3;
  const double drift = ensemble_energy_drift(transport().build(), test::sample(g, parse("gaussian width=0.5")), g,
                                             cfg, 0.25, 64, 100);
  EXPECT_LT(std::abs(drift), 0.01 * 3);
  EXPECT_LT(1.0 + drift, 3.0);
}

TEST(Continuity, ZeroAndHeat) {
  const Grid g(-5, 5, 200);
  SolverConfig cfg;
  cfg.dt = 1e-3;
  std::vector<double> out;
  for (int q = 1; q <= 16; ++q) out.push_back(0.01 * q);
  const auto path = generate_path(1, 1, 160, cfg.dt);
  const auto u0 = test::sample(g, parse("gaussian width=0.5"));
  const TestFunction phis[] = {TestFunction::gaussian(Point(0.3, 0), 0.5)};

  const auto still = solve(test::spec1().build(), u0, g, cfg, path, out);
  const auto r0 = continuity_modulus(still, phis);
  for (const auto& row : r0.per_phi[0]) EXPECT_EQ(row.modulus, 0.0);

  const auto warm = solve(heat().build(), u0, g, cfg, path, out);
  const auto r1 = continuity_modulus(warm, phis);
  EXPECT_TRUE(r1.report.pass);
  const auto& rows = r1.per_phi[0];
  const double ratio = rows[1].modulus / rows[2].modulus;
  EXPECT_GE(ratio, 1.6);
  EXPECT_LE(ratio, 2.4);
}

TEST(Continuity, NeedsEnoughSnapshots) {
  const Grid g(-5, 5, 100);
  SolverConfig cfg;
  cfg.dt = 1e-3;
  const double out[] = {0.005, 0.01};
  const auto tr = solve(heat().build(), test::sample(g, parse("gaussian width=0.5")), g, cfg,
                        generate_path(1, 1, 10, cfg.dt), out);
  const TestFunction phis[] = {TestFunction::gaussian(Point(0, 0), 0.5)};
  EXPECT_THROW(continuity_modulus(tr, phis), ArgumentError);
}

TEST(GradientGrowth, HeatStaysBounded) {
  const Grid g(-5, 5, 200);
  const auto tr = run(heat(), g, 1e-3, 100, 1);
  EXPECT_LT(gradient_growth(tr), 10.0);
  EXPECT_LE(gradient_growth(tr), 1.0 + 1e-12);
}

}  // namespace
}  // namespace spdelab
