#include "spdelab/error.hpp"
#include "spdelab/filter.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

namespace spdelab {
namespace {

using test::k;
using test::parse;

FilterScenario blind_scenario() {
  FilterScenario sc;
  sc.b_hat = parse("affine slope=-0.5,0");
  sc.sigma_hat = k(0.8);
  sc.b_tilde = {k(0)};
  sc.prior = parse("gaussian width=0.7");
  sc.prior_lo = -6;
  sc.prior_hi = 6;
  return sc;
}

TEST(ZakaiCoefficients, UnitSignalNoise) {
  FilterScenario sc;
  sc.b_hat = parse("sine amp=1");
  sc.sigma_hat = k(1);
  const auto c = zakai_coefficients(sc);
  const Point x(0.7, 0);
  EXPECT_DOUBLE_EQ(c.a(0, x)(0, 0), 0.5);
  // Stored drift for the + d(b u) form is a' - b_hat.
  EXPECT_NEAR(c.b(0, x)[0], -std::sin(0.7), 1e-15);
  EXPECT_TRUE(c.sigma_zero);
  EXPECT_TRUE(c.c_zero);
}

TEST(ZakaiCoefficients, ObservationScaling) {
  FilterScenario sc;
  sc.b_hat = k(0);
  sc.sigma_tilde = Eigen::MatrixXd::Constant(1, 1, 2.0);
  const auto c = zakai_coefficients(sc);
  for (double x : {-1.0, 0.3, 2.0}) EXPECT_DOUBLE_EQ(c.h(0, Point(x, 0), 0), x / 2);
}

TEST(ZakaiCoefficients, StateDependentSignalNoise) {
  FilterScenario sc;
  sc.b_hat = parse("cosine amp=1");
  sc.sigma_hat = parse("affine slope=1,0");
  const auto c = zakai_coefficients(sc);
  for (double x : {-1.5, 0.2, 1.1}) {
    EXPECT_NEAR(c.a(0, Point(x, 0))(0, 0), x * x / 2, 1e-15);
    // b_hat - a' = cos x - x, stored with the opposite sign.
    EXPECT_NEAR(c.b(0, Point(x, 0))[0], x - std::cos(x), 1e-14);
  }
}

TEST(FilterScenario, SingularObservationNoise) {
  FilterScenario sc;
  sc.b_hat = k(0);
  sc.sigma_tilde = Eigen::MatrixXd::Constant(1, 1, 1e-13);
  EXPECT_THROW(sc.validate(), ModelInvariantError);
}

TEST(SimulateTruth, NoObservationSignal) {
  FilterScenario sc = blind_scenario();
  sc.x0 = 0.4;
  const auto tr = simulate_truth(sc, 5, 200, 0.01);
  const auto raw = generate_path(5, 2, 200, 0.01);
  for (int n = 0; n < 200; ++n) EXPECT_EQ(tr.bbar[n], raw.increment(n, 1));
}

TEST(SimulateTruth, FrozenSignal) {
  FilterScenario sc;
  sc.b_hat = k(0);
  sc.sigma_hat = k(0);
  sc.x0 = 1.25;
  const auto tr = simulate_truth(sc, 3, 50, 0.02);
  for (double x : tr.x_path) EXPECT_EQ(x, 1.25);
}

TEST(SimulateTruth, OrnsteinUhlenbeckMean) {
  LinearGaussianModel m;
  auto sc = FilterScenario::kalman_bucy(m);
  sc.x0 = 1.0;
  const int seeds = 10000;
  double s = 0.0, s2 = 0.0;
  for (int q = 0; q < seeds; ++q) {
    const double x = simulate_truth(sc, 1000 + q, 100, 0.01).x_path.back();
    s += x;
    s2 += x * x;
  }
  const double mean = s / seeds;
  const double se = std::sqrt((s2 / seeds - mean * mean) / seeds);
  EXPECT_NEAR(mean, std::exp(-0.5), 3.0 * se);
}

TEST(SimulateTruth, ObservationReconstruction) {
  LinearGaussianModel m;
  m.R = 2.0;
  const auto sc = FilterScenario::kalman_bucy(m);
  const auto tr = simulate_truth(sc, 8, 300, 0.01);
  double y = 0.0;
  for (int n = 0; n < tr.n_steps; ++n) {
    y += 2.0 * tr.bbar[n];
    EXPECT_EQ(y, tr.y(n + 1, 0));
  }
}

TEST(SimulateTruth, ExplosionIsScenarioError) {
  FilterScenario sc;
  sc.b_hat = parse("affine slope=5,0");
  sc.x0 = 1.0;
  sc.state_limit = 10.0;
  EXPECT_THROW(simulate_truth(sc, 1, 1000, 0.01), ScenarioError);
}

TEST(Normalize, Idempotent) {
  const Grid g(-5, 5, 333);
  const auto u = test::sample(g, parse("gaussian amp=3.7 width=0.9 center=0.3,0"));
  const auto once = normalize_density(g, u);
  EXPECT_NEAR(grid_integral(g, once), 1.0, 1e-14);
  EXPECT_EQ(normalize_density(g, once), once);
  EXPECT_THROW(normalize_density(g, std::vector<double>(g.size(), 0.0)), DegeneracyError);
}

TEST(RunZakai, BlindFilterConservesMass) {
  const auto sc = blind_scenario();
  const Grid g(-6, 6, 240);
  SolverConfig cfg;
  cfg.dt = 1e-3;
  const auto tr = simulate_truth(sc, 9, 200, cfg.dt);
  const double out[] = {0.1, 0.2};
  const auto res = run_zakai(sc, tr, g, cfg, out);
  for (double m : res.mass) EXPECT_NEAR(m, res.mass.front(), 1e-12);
  for (std::size_t q = 0; q < res.pi.size(); ++q) {
    EXPECT_NEAR(grid_integral(g, res.pi.values[q]), 1.0, 1e-10);
  }

  // Same as the deterministic Fokker-Planck solve.
  const auto c = zakai_coefficients(sc);
  const auto fp = solve(c, prior_on_grid(sc, g), g, cfg, tr.bbar_path(), out);
  EXPECT_LE(test::max_abs_diff(fp.values.back(), res.u.values.back()), 1e-14);

  const auto ks = run_kushner(sc, tr, g, cfg, out);
  EXPECT_LE(test::max_abs_diff(ks.values.back(), res.pi.values.back()), 1e-12);
}

TEST(RunZakai, MassMartingaleBookkeeping) {
  // Generator contributes nothing to the mass, so with Euler noise each step
  // changes it by exactly int h u dBbar up to round-off.
  LinearGaussianModel m;
  const auto sc = FilterScenario::kalman_bucy(m);
  const Grid g(-8, 8, 320);
  SolverConfig cfg;
  cfg.dt = 1e-3;
  cfg.record_all_steps = true;
  const auto tr = simulate_truth(sc, 12, 100, cfg.dt);
  const double out[] = {0.1};
  const auto res = run_zakai(sc, tr, g, cfg, out);
  const auto c = zakai_coefficients(sc);
  for (int n = 0; n < tr.n_steps; ++n) {
    std::vector<double> hu(g.size());
    for (std::size_t q = 0; q < g.size(); ++q) hu[q] = c.h(0, g.point(q), 0) * res.u.values[n][q];
    const double predicted = grid_integral(g, hu) * tr.bbar[n];
    EXPECT_NEAR(res.mass[n + 1] - res.mass[n], predicted, 1e-12);
  }
}

TEST(Particles, BlindWeightsAreOne) {
  const auto sc = blind_scenario();
  const Grid g(-6, 6, 240);
  const auto tr = simulate_truth(sc, 4, 50, 0.01);
  const ScalarField phis[] = {k(1), parse("affine slope=1,0")};
  const auto est = particle_estimate(sc, tr, g, 2000, phis, 77);
  EXPECT_EQ(est[0].estimate, 1.0);
  EXPECT_EQ(est[0].stderr_, 0.0);
  EXPECT_GT(est[1].stderr_, 0.0);
  EXPECT_THROW(particle_estimate(sc, tr, g, 50, phis, 77), ArgumentError);
}

TEST(KalmanOracle, SteadyStateVariance) {
  LinearGaussianModel m;
  const auto sc = FilterScenario::kalman_bucy(m);
  const auto tr = simulate_truth(sc, 1, 2000, 0.01);
  const auto ks = kalman_bucy_oracle(sc, tr);
  EXPECT_NEAR(ks.var.back(), (std::sqrt(5.0) - 1.0) / 2.0, 1e-8);
}

TEST(KalmanOracle, NoInformation) {
  LinearGaussianModel m;
  m.H = 0.0;
  m.P0 = 2.5;
  const auto sc = FilterScenario::kalman_bucy(m);
  const auto tr = simulate_truth(sc, 2, 300, 0.01);
  const auto ks = kalman_bucy_oracle(sc, tr);
  // dP = 2 A P + Q^2 with A = -1/2, Q = 1.
  for (std::size_t n = 0; n < ks.times.size(); n += 50) {
    EXPECT_NEAR(ks.var[n], 1.0 + 1.5 * std::exp(-ks.times[n]), 1e-9);
  }
}

TEST(KalmanOracle, SeparableRiccati) {
  LinearGaussianModel m;
  m.A = 0.0;
  m.Q = 0.0;
  m.H = 1.5;
  m.R = 0.5;
  const auto sc = FilterScenario::kalman_bucy(m);
  const auto tr = simulate_truth(sc, 3, 200, 0.01);
  const auto ks = kalman_bucy_oracle(sc, tr, 4);
  for (std::size_t n = 0; n < ks.times.size(); n += 20) {
    EXPECT_NEAR(ks.var[n], 1.0 / (1.0 + ks.times[n] * 9.0), 1e-8);
  }
}

TEST(KalmanOracle, NeedsLinearScenario) {
  const auto sc = blind_scenario();
  const auto tr = simulate_truth(sc, 1, 10, 0.01);
  EXPECT_THROW(kalman_bucy_oracle(sc, tr), ScenarioError);
}

TEST(TruthCoarsen, SumsIncrements) {
  LinearGaussianModel m;
  const auto sc = FilterScenario::kalman_bucy(m);
  const auto tr = simulate_truth(sc, 6, 40, 0.005);
  const auto c = coarsen(tr, 4);
  EXPECT_EQ(c.n_steps, 10);
  EXPECT_DOUBLE_EQ(c.dt, 0.02);
  EXPECT_EQ(c.x_path.back(), tr.x_path.back());
  EXPECT_NEAR(c.bbar[1], tr.bbar[4] + tr.bbar[5] + tr.bbar[6] + tr.bbar[7], 1e-16);
  EXPECT_THROW(coarsen(tr, 3), ArgumentError);
}

}  // namespace
}  // namespace spdelab
