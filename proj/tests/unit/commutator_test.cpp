#include "spdelab/commutator.hpp"
#include "spdelab/error.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

namespace spdelab {
namespace {

using test::k;
using test::parse;

const Grid kGrid(-4, 4, 800);

ScalarField gaussian() { return parse("gaussian amp=1 center=0.3,0 width=0.7"); }

TEST(CommutatorDirect, ConstantDriftVanishes) {
  const auto d = commutator_direct(k(2), gaussian(), 0.2, kGrid);
  const auto i = commutator_integral(k(2), gaussian(), 0.2, kGrid);
  EXPECT_LE(test::max_abs(d.values), 1e-10);
  EXPECT_LE(test::max_abs(i.values), 1e-10);
}

TEST(CommutatorDirect, AffineCaseVanishes) {
  const auto x = parse("affine slope=1,0");
  const auto d = commutator_direct(x, x, 0.1, kGrid);
  EXPECT_LE(test::max_abs(d.values), 1e-10);
}

TEST(CommutatorDirect, ReportsOnlyAwayFromBoundary) {
  const auto d = commutator_direct(k(1), gaussian(), 0.5, kGrid);
  ASSERT_FALSE(d.x.empty());
  EXPECT_GT(d.x.front(), -3.5);
  EXPECT_LT(d.x.back(), 3.5);
  EXPECT_EQ(d.x.size(), d.values.size());
}

TEST(CommutatorDirect, RoughInputMatchesFinerQuadrature) {
  const auto b = parse("sine amp=1");
  const auto u = parse("triangle amp=1 period=2");
  const auto base = commutator_direct(b, u, 0.1, kGrid);
  const auto fine = commutator_direct(b, u, 0.1, kGrid, CommutatorOptions{480, 16});
  const double nb = base.norm(3.0);
  EXPECT_GT(nb, 1e-4);
  EXPECT_NEAR(nb, fine.norm(3.0), 0.01 * fine.norm(3.0));
}

TEST(CommutatorIntegral, AgreesWithDirectForm) {
  const auto x = parse("affine slope=1,0");
  const auto d1 = commutator_direct(x, gaussian(), 0.2, kGrid);
  const auto i1 = commutator_integral(x, gaussian(), 0.2, kGrid);
  EXPECT_LE(relative_gap(d1, i1, 3.0), 1e-8);

  const auto b = parse("sine amp=1");
  const auto u = parse("triangle amp=1 period=2");
  const auto d2 = commutator_direct(b, u, 0.1, kGrid);
  const auto i2 = commutator_integral(b, u, 0.1, kGrid);
  EXPECT_LE(relative_gap(d2, i2, 3.0), 1e-6);
}

TEST(CommutatorIntegral, NeedsDifferentiableDrift) {
  EXPECT_THROW(commutator_integral(parse("step"), gaussian(), 0.2, kGrid), HypothesisError);
  EXPECT_THROW(commutator_direct(k(1), parse("step"), 0.2, kGrid), HypothesisError);
}

TEST(CommutatorZeroOrder, Examples) {
  EXPECT_LE(test::max_abs(commutator_zero_order(k(3), gaussian(), 0.2, kGrid).values), 1e-10);
  EXPECT_LE(test::max_abs(commutator_zero_order(parse("affine slope=1,0"), k(1), 0.2, kGrid).values), 1e-12);
}

TEST(CommutatorZeroOrder, KinkTimesStepDecreases) {
  const auto c = parse("abs amp=1");
  const auto u = parse("step");
  double prev = std::numeric_limits<double>::infinity();
  for (double eps : {0.2, 0.1, 0.05}) {
    const double n = commutator_zero_order(c, u, eps, kGrid).norm(2.0);
    EXPECT_LT(n, prev);
    prev = n;
  }
}

TEST(Commutator, Bilinear) {
  const auto b1 = parse("sine amp=1");
  const auto b2 = parse("affine offset=0.5 slope=0.3,0");
  const auto u1 = gaussian();
  const auto u2 = parse("cosine amp=0.4 freq=2,0");
  const double eps = 0.2;
  const auto base = commutator_direct(b1 + b2.scaled(2.0), u1, eps, kGrid);
  const auto p1 = commutator_direct(b1, u1, eps, kGrid);
  const auto p2 = commutator_direct(b2, u1, eps, kGrid);
  for (std::size_t q = 0; q < base.values.size(); ++q) {
    EXPECT_NEAR(base.values[q], p1.values[q] + 2.0 * p2.values[q], 1e-12);
  }
  const auto su = commutator_direct(b1, u1.scaled(-1.5) + u2, eps, kGrid);
  const auto q2 = commutator_direct(b1, u2, eps, kGrid);
  for (std::size_t q = 0; q < su.values.size(); ++q) {
    EXPECT_NEAR(su.values[q], -1.5 * p1.values[q] + q2.values[q], 1e-12);
  }
}

TEST(CommutatorIdentities, ProductAndFactorRules) {
  const auto a = parse("sine amp=1");
  const auto b = parse("cosine amp=0.5 offset=0.5");
  const double eps = 0.25;
  EXPECT_LE(test::max_abs(product_rule_defect(a, gaussian(), eps, kGrid).values), 1e-8);
  EXPECT_LE(test::max_abs(factor_rule_defect(a, b, gaussian(), eps, kGrid).values), 1e-8);
}

TEST(ConvergenceSweep, ConstantDriftIsFlat) {
  const double eps[] = {0.4, 0.2, 0.1};
  const auto s = convergence_sweep(k(2), gaussian(), eps, 3.0, kGrid);
  for (double n : s.norms) EXPECT_LE(n, 1e-10);
  EXPECT_TRUE(s.consistency_checked);
}

TEST(ConvergenceSweep, RoughInputDecays) {
  const double eps[] = {0.2, 0.1, 0.05, 0.025};
  const auto s = convergence_sweep(parse("sine amp=1"), parse("triangle amp=1 period=1"), eps, 3.0, kGrid);
  ASSERT_EQ(s.norms.size(), 4u);
  for (std::size_t q = 1; q < s.norms.size(); ++q) EXPECT_LT(s.norms[q], s.norms[q - 1]);
  EXPECT_LT(s.norms.back() / s.norms.front(), 0.5);
  EXPECT_LT(s.consistency_gap, 1e-6);
}

TEST(ConvergenceSweep, SmoothInputsDecayTenfold) {
  const double eps[] = {0.4, 0.2, 0.1, 0.05, 0.025};
  const auto s = convergence_sweep(parse("sine amp=1"), gaussian(), eps, 3.0, kGrid);
  EXPECT_LT(s.norms.back(), 0.1 * s.norms.front());
}

TEST(ConvergenceSweep, Preconditions) {
  const double eps[] = {0.2, 0.1};
  EXPECT_THROW(convergence_sweep(parse("step"), parse("step"), eps, 1.0, kGrid), HypothesisError);
  const double bad[] = {0.1, 0.2};
  EXPECT_THROW(convergence_sweep(k(1), gaussian(), bad, 1.0, kGrid), ArgumentError);
  const double tiny[] = {0.2, 0.01};
  EXPECT_THROW(convergence_sweep(k(1), gaussian(), tiny, 1.0, kGrid), UnderResolutionError);
}

}  // namespace
}  // namespace spdelab
