#include "spdelab/error.hpp"
#include "spdelab/picard.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

namespace spdelab {
namespace {

using test::k;
using test::parse;

struct Setup {
  CoefficientSet coeffs;
  Grid grid{-5, 5, 128};
  SolverConfig cfg;
  BrownianPath path;
  std::vector<double> u0;
};

Setup heat_setup(double sigma = 0.0) {
  auto s = test::spec1();
  s.a[0] = k(0.5);
  if (sigma != 0.0) s.sigma[0][0] = k(sigma);
  Setup st;
  st.coeffs = s.build();
  st.cfg.dt = 5e-3;
  st.path = generate_path(31, 1, 50, st.cfg.dt);
  st.u0 = test::sample(st.grid, parse("gaussian width=0.6"));
  return st;
}

TEST(NonlinearSources, ParseFamilies) {
  const auto lin = NonlinearSources::parse("linear lambda=0.2");
  EXPECT_DOUBLE_EQ(lin.K, 0.2);
  EXPECT_DOUBLE_EQ(lin.f(0, Point(0, 0), 3.0), 0.6);
  EXPECT_FALSE(lin.g);
  const auto sn = NonlinearSources::parse("sine amp=0.1", "sine amp=0.05", 2);
  EXPECT_DOUBLE_EQ(sn.K, 0.2);
  EXPECT_TRUE(sn.g);
  EXPECT_THROW(NonlinearSources::parse("cubic a=1"), ParseError);
  EXPECT_THROW(NonlinearSources::parse("linear gamma=1"), ParseError);
}

TEST(NonlinearSources, LipschitzExcess) {
  const Grid g(-1, 1, 16);
  EXPECT_LE(lipschitz_excess(NonlinearSources::parse("sine amp=0.3"), g, 1.0, 5.0, 1), 1e-10);
  auto bad = NonlinearSources::parse("linear lambda=1");
  bad.K = 0.5;
  EXPECT_GT(lipschitz_excess(bad, g, 1.0, 5.0, 1), 0.1);
}

TEST(Picard, StateIndependentSourceConvergesInOneCorrection) {
  const auto st = heat_setup(0.5);
  PicardOptions opt;
  opt.tol = 1e-12;
  const auto res = picard_solve(st.coeffs, NonlinearSources::parse("field gaussian amp=0.5 width=1"), st.u0,
                                st.grid, st.cfg, st.path, 0.25, opt);
  EXPECT_EQ(res.iterations, 2);
  EXPECT_LE(res.log[1].sup_diff, 1e-12);
}

TEST(Picard, SineSourceContracts) {
  const auto st = heat_setup();
  PicardOptions opt;
  opt.tol = 1e-12;
  const auto res = picard_solve(st.coeffs, NonlinearSources::parse("sine amp=0.1"), st.u0, st.grid, st.cfg,
                                st.path, 0.25, opt);
  ASSERT_GE(res.log.size(), 4u);
  double worst = 0.0;
  for (std::size_t q = res.log.size() - 3; q < res.log.size(); ++q) worst = std::max(worst, res.log[q].ratio);
  EXPECT_LT(worst, 0.9);
  const double first = res.iterate_sup_l2.front();
  for (double v : res.iterate_sup_l2) EXPECT_LT(v / first, 10.0);
}

TEST(Picard, LinearSourceAbsorbsIntoZeroOrderTerm) {
  const auto st = heat_setup();
  PicardOptions opt;
  opt.tol = 1e-11;
  const auto res = picard_solve(st.coeffs, NonlinearSources::parse("linear lambda=0.2"), st.u0, st.grid, st.cfg,
                                st.path, 0.25, opt);
  auto s = test::spec1();
  s.a[0] = k(0.5);
  s.c = k(0.2);
  SolverConfig cfg = st.cfg;
  cfg.record_all_steps = true;
  const double out[] = {0.25};
  const auto ref = solve(s.build(), st.u0, st.grid, cfg, st.path, out);
  EXPECT_LE(sup_l2_distance(res.trajectory, ref), 1e-8);
}

TEST(Picard, GuessesAgreeAndReruns) {
  const auto st = heat_setup(0.5);
  const auto src = NonlinearSources::parse("sine amp=0.2");
  PicardOptions opt;
  opt.tol = 1e-10;
  const auto a = picard_solve(st.coeffs, src, st.u0, st.grid, st.cfg, st.path, 0.25, opt);
  const auto again = picard_solve(st.coeffs, src, st.u0, st.grid, st.cfg, st.path, 0.25, opt);
  EXPECT_EQ(a.trajectory.values, again.trajectory.values);
  opt.guess = InitialGuess::Zero;
  const auto b = picard_solve(st.coeffs, src, st.u0, st.grid, st.cfg, st.path, 0.25, opt);
  EXPECT_LE(sup_l2_distance(a.trajectory, b.trajectory), 10.0 * opt.tol);
}

TEST(Picard, ResidualWithFrozenSources) {
  const auto st = heat_setup();
  PicardOptions opt;
  opt.tol = 1e-10;
  opt.residual_phi = TestFunction::gaussian(Point(0.2, 0), 0.5);
  const auto res = picard_solve(st.coeffs, NonlinearSources::parse("sine amp=0.1"), st.u0, st.grid, st.cfg,
                                st.path, 0.25, opt);
  ASSERT_TRUE(res.weak_residual.has_value());
  EXPECT_TRUE(res.residual_passed);
}

TEST(Picard, NonConvergenceCarriesLog) {
  const auto st = heat_setup();
  PicardOptions opt;
  opt.tol = 1e-12;
  opt.max_iter = 2;
  try {
    picard_solve(st.coeffs, NonlinearSources::parse("sine amp=0.1"), st.u0, st.grid, st.cfg, st.path, 0.25, opt);
    FAIL() << "expected ConvergenceError";
  } catch (const ConvergenceError& e) {
    EXPECT_EQ(e.differences().size(), 2u);
  }
}

TEST(Picard, Preconditions) {
  const auto st = heat_setup();
  PicardOptions opt;
  opt.tol = 0.0;
  EXPECT_THROW(picard_solve(st.coeffs, NonlinearSources::parse("zero"), st.u0, st.grid, st.cfg, st.path, 0.25, opt),
               ArgumentError);
  auto bad = NonlinearSources::parse("linear lambda=1");
  bad.K = 0.1;
  EXPECT_THROW(picard_solve(st.coeffs, bad, st.u0, st.grid, st.cfg, st.path, 0.25), HypothesisError);
}

}  // namespace
}  // namespace spdelab
