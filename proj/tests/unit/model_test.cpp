#include "spdelab/error.hpp"
#include "spdelab/model.hpp"
#include "support.hpp"

#include <Eigen/Eigenvalues>
#include <gtest/gtest.h>

#include <limits>

namespace spdelab {
namespace {

using test::k;

TEST(ParabolicDefect, IdentityDiffusionNoNoise) {
  auto s = test::spec2();
  s.a = {k(1), k(0), k(1)};
  const auto c = s.build();
  EXPECT_DOUBLE_EQ(parabolic_defect(c, 0.0, Point(0.3, -0.2), Vec2(1, 0)), 2.0);
}

TEST(ParabolicDefect, HalfSigmaSigmaTransposeIsDegenerate) {
  auto s = test::spec2(2);
  // sigma columns (1, 0.5) and (-0.3, 2); a = sigma sigma^T / 2
  s.sigma[0] = {k(1), k(0.5)};
  s.sigma[1] = {k(-0.3), k(2)};
  s.a = {k(0.5 * (1 + 0.09)), k(0.5 * (0.5 - 0.6)), k(0.5 * (0.25 + 4))};
  const auto c = s.build();
  for (const Vec2& xi : {Vec2(1, 0), Vec2(0, 1), Vec2(0.6, -0.8), Vec2(3, 7)}) {
    EXPECT_NEAR(parabolic_defect(c, 0.1, Point(1, 2), xi), 0.0, 1e-13);
  }
}

TEST(ParabolicDefect, TwoDriversInOneDimension) {
  auto s = test::spec1(2);
  s.a[0] = k(1);
  s.sigma[0][0] = k(1);
  s.sigma[1][0] = k(1);
  EXPECT_DOUBLE_EQ(parabolic_defect(s.build(), 0.0, Point(0, 0), Vec2(1, 0)), 0.0);
}

TEST(ParabolicDefect, EvenAndTwoHomogeneous) {
  auto s = test::spec2();
  s.a = {test::parse("sine amp=0.3 offset=1"), k(0.2), k(0.8)};
  s.sigma[0] = {k(0.4), test::parse("cosine amp=0.5")};
  const auto c = s.build();
  const Point x(0.7, -1.1);
  const Vec2 xi(0.3, -1.7);
  const double base = parabolic_defect(c, 0.0, x, xi);
  EXPECT_NEAR(parabolic_defect(c, 0.0, x, -xi), base, 1e-14);
  EXPECT_NEAR(parabolic_defect(c, 0.0, x, 2.5 * xi), 6.25 * base, 1e-12);
}

TEST(ParabolicDefect, NonFiniteFieldIsNamed) {
  auto c = test::spec1().build();
  c.sigma = [](double, const Point&, int) { return Vec2(std::numeric_limits<double>::quiet_NaN(), 0.0); };
  try {
    parabolic_defect(c, 0.0, Point(0, 0), Vec2(1, 0));
    FAIL() << "expected EvaluationError";
  } catch (const EvaluationError& e) {
    EXPECT_EQ(e.field(), "sigma");
  }
}

TEST(VerifyParabolicity, HeatWithUnitKappa) {
  auto s = test::spec1();
  s.a[0] = k(0.5);
  const Grid g(-2, 2, 32);
  const double times[] = {0.0, 1.0};
  const auto rep = verify_parabolicity(s.build(), g, times, [](double, const Point&) { return 1.0; }, 4);
  EXPECT_TRUE(rep.passed);
  EXPECT_NEAR(rep.min_defect, 0.0, 1e-15);
}

TEST(VerifyParabolicity, DegenerateTransport) {
  auto s = test::spec1();
  s.a[0] = k(0.5);
  s.sigma[0][0] = k(1);
  const Grid g(-2, 2, 32);
  const double times[] = {0.0};
  const auto rep = verify_parabolicity(s.build(), g, times, [](double, const Point&) { return 0.0; }, 2);
  EXPECT_TRUE(rep.passed);
  EXPECT_NEAR(rep.min_defect, 0.0, 1e-15);
  EXPECT_FALSE(rep.witnesses.empty());
}

TEST(VerifyParabolicity, RandomSpdMatchesEigenOracle) {
  // Fixed SPD matrix, sigma = 0: the sampled minimum of 2 xi^T a xi / |xi|^2
  // must equal the same minimum recomputed from the eigen-decomposition.
  Mat2 a;
  a << 1.3, 0.45, 0.45, 0.4;
  auto s = test::spec2();
  s.a = {k(a(0, 0)), k(a(0, 1)), k(a(1, 1))};
  const Grid g({-1, -1}, {1, 1}, {16, 16});
  const double times[] = {0.0};
  const int n_dirs = 400;
  const auto rep = verify_parabolicity(s.build(), g, times, [](double, const Point&) { return 0.0; }, n_dirs, 9);

  Eigen::SelfAdjointEigenSolver<Mat2> eig(a);
  double oracle = std::numeric_limits<double>::infinity();
  for (const Vec2& xi : sample_directions(2, n_dirs, 9)) {
    double q = 0.0;
    for (int j = 0; j < 2; ++j) q += eig.eigenvalues()[j] * std::pow(eig.eigenvectors().col(j).dot(xi), 2);
    oracle = std::min(oracle, 2.0 * q / xi.squaredNorm());
  }
  EXPECT_NEAR(rep.min_defect, oracle, 1e-10);
  EXPECT_GE(rep.min_defect, 2.0 * eig.eigenvalues()[0] - 1e-12);
  EXPECT_NEAR(rep.min_defect, 2.0 * eig.eigenvalues()[0], 1e-3);
}

TEST(VerifyParabolicity, ViolationIsReported) {
  auto s = test::spec1();
  s.a[0] = k(0.4);
  s.sigma[0][0] = k(1);
  const Grid g(-1, 1, 16);
  const double times[] = {0.0};
  const auto rep = verify_parabolicity(s.build(), g, times, [](double, const Point&) { return 0.0; }, 2);
  EXPECT_FALSE(rep.passed);
  EXPECT_NEAR(rep.min_defect, -0.2, 1e-14);
}

TEST(VerifyParabolicity, EmptyInputsAreConfigErrors) {
  const Grid g(-1, 1, 16);
  const auto c = test::spec1().build();
  EXPECT_THROW(verify_parabolicity(c, g, {}, [](double, const Point&) { return 0.0; }, 2), ConfigError);
}

TEST(SampleDirections, AxesFirstThenDeterministic) {
  const auto d = sample_directions(2, 6, 4);
  ASSERT_EQ(d.size(), 6u);
  EXPECT_EQ(d[0], Vec2(1, 0));
  EXPECT_EQ(d[1], Vec2(0, 1));
  for (const auto& v : d) EXPECT_NEAR(v.norm(), 1.0, 1e-15);
  EXPECT_EQ(d, sample_directions(2, 6, 4));
}

TEST(FactorizedMargin, CoercivityConstant) {
  auto s = test::spec1();
  s.a[0] = k(0.5);
  s.sigma[0][0] = k(1);
  s.sigma_hat = {{k(1), k(0)}};
  const auto c = s.build();
  const auto m = factorized_margin(c, 1.0, 0.0, Point(0, 0), Vec2(1, 0));
  EXPECT_DOUBLE_EQ(m.coercivity, 0.5);
  EXPECT_DOUBLE_EQ(m.margin, 0.0);
}

TEST(FactorizedMargin, ScaledFactorization) {
  auto s = test::spec2();
  s.sigma[0] = {k(0.7), k(-0.4)};
  const double r2 = std::sqrt(2.0);
  s.sigma_hat = {{k(0.7 * r2), k(-0.4 * r2)}};
  s.a = {k(2 * 0.49), k(2 * -0.28), k(2 * 0.16)};
  const auto c = s.build();
  const auto m = factorized_margin(c, 2.0, 0.0, Point(0.1, 0.2), Vec2(0.6, 0.8));
  EXPECT_NEAR(m.margin, 0.0, 1e-14);
  EXPECT_DOUBLE_EQ(m.coercivity, 1.0);
}

TEST(FactorizedMargin, Preconditions) {
  auto s = test::spec1();
  const auto plain = s.build();
  EXPECT_THROW(factorized_margin(plain, 1.0, 0.0, Point(0, 0), Vec2(1, 0)), ConfigError);
  s.a[0] = k(0.5);
  s.sigma_hat = {{k(1), k(0)}};
  EXPECT_THROW(factorized_margin(s.build(), 0.5, 0.0, Point(0, 0), Vec2(1, 0)), ArgumentError);
}

TEST(FactorizedMargin, NonNegativeMarginImpliesParabolicity) {
  // sigma_hat^2 = 2a, sigma = 0.8 sigma_hat: margin >= 0 for alpha = 1.5.
  auto s = test::spec1();
  s.sigma_hat = {{test::parse("cosine amp=0.3 offset=1"), k(0)}};
  s.a[0] = test::parse("cosine amp=0.3 offset=1") * test::parse("cosine amp=0.3 offset=1");
  s.a[0] = s.a[0].scaled(0.5);
  s.sigma[0][0] = test::parse("cosine amp=0.3 offset=1").scaled(0.8 / std::sqrt(2.0));
  s.sigma_hat[0][0] = s.sigma_hat[0][0].scaled(1.0 / std::sqrt(2.0));
  const auto c = s.build();
  const Grid g(-3, 3, 64);
  for (std::size_t q = 0; q < g.size(); ++q) {
    EXPECT_GE(factorized_margin(c, 1.5, 0.0, g.point(q), Vec2(1, 0)).margin, 0.0);
  }
  const double times[] = {0.0};
  EXPECT_TRUE(verify_parabolicity(c, g, times, [](double, const Point&) { return 0.0; }, 2).passed);
}

TEST(ValidateCoefficients, RejectsAsymmetricA) {
  auto c = test::spec2().build();
  c.a = [](double, const Point&) { return Mat2{{1.0, 0.1}, {0.0, 1.0}}; };
  const Grid g({-1, -1}, {1, 1}, {16, 16});
  const double times[] = {0.0};
  EXPECT_THROW(validate_coefficients(c, g, times), ModelInvariantError);
}

TEST(ValidateCoefficients, RejectsInconsistentFactorization) {
  auto s = test::spec1();
  s.a[0] = k(0.6);
  s.sigma_hat = {{k(1), k(0)}};
  const Grid g(-1, 1, 16);
  const double times[] = {0.0};
  EXPECT_THROW(validate_coefficients(s.build(), g, times), ModelInvariantError);
  s.a[0] = k(1.0);
  EXPECT_NO_THROW(validate_coefficients(s.build(), g, times));
}

TEST(CoefficientSpec, BuildsDerivedQuantities) {
  auto s = test::spec1();
  s.a[0] = test::parse("sine amp=0.2 offset=1");
  s.b[0] = test::parse("affine slope=2,0");
  const auto c = s.build();
  EXPECT_TRUE(c.time_invariant);
  EXPECT_TRUE(c.sigma_zero);
  EXPECT_TRUE(c.c_zero);
  const Point x(0.4, 0.0);
  EXPECT_NEAR(c.divergence_of_a(0.0, x)[0], 0.2 * std::cos(0.4), 1e-10);
  EXPECT_NEAR(c.divergence_of_b(0.0, x), 2.0, 1e-12);
}

}  // namespace
}  // namespace spdelab
