#include "spdelab/error.hpp"
#include "spdelab/noise.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>

namespace spdelab {
namespace {

TEST(Philox, KnownAnswer) {
  // Reference vector for Philox4x32-10 with zero counter and key.
  const auto out = Philox4x32::generate({0, 0, 0, 0}, {0, 0});
  EXPECT_EQ(out[0], 0x6627e8d5u);
  EXPECT_EQ(out[1], 0xe169c58du);
  EXPECT_EQ(out[2], 0xbc57ac4cu);
  EXPECT_EQ(out[3], 0x9b00dbd8u);
}

TEST(GeneratePath, Deterministic) {
  const auto a = generate_path(7, 1, 10, 0.01);
  const auto b = generate_path(7, 1, 10, 0.01);
  EXPECT_EQ(a.increments, b.increments);
  EXPECT_EQ(a.generator_id, kGeneratorId);
}

TEST(GeneratePath, SeedsDiffer) {
  EXPECT_NE(generate_path(7, 1, 10, 0.01).increments, generate_path(8, 1, 10, 0.01).increments);
}

TEST(GeneratePath, PooledVariance) {
  const auto p = generate_path(11, 1, 1000000, 0.01);
  double s = 0.0;
  double s2 = 0.0;
  for (double v : p.increments) {
    s += v;
    s2 += v * v;
  }
  const double n = static_cast<double>(p.increments.size());
  const double var = s2 / n - (s / n) * (s / n);
  EXPECT_GE(var, 0.0097);
  EXPECT_LE(var, 0.0103);
  EXPECT_LE(std::abs(s / n), 1.5 * 4.0 * 0.1 / std::sqrt(n));
}

TEST(GeneratePath, DriversAreIndependentColumns) {
  const auto p = generate_path(5, 3, 20000, 0.01);
  double c = 0.0;
  for (int n = 0; n < p.n_steps; ++n) c += p.increment(n, 0) * p.increment(n, 2);
  // Each product has standard deviation dt.
  EXPECT_LT(std::abs(c / p.n_steps) / p.dt, 6.0 / std::sqrt(p.n_steps));
}

TEST(GeneratePath, RejectsBadArguments) {
  EXPECT_THROW(generate_path(1, 0, 10, 0.01), ArgumentError);
  EXPECT_THROW(generate_path(1, 1, 0, 0.01), ArgumentError);
  EXPECT_THROW(generate_path(1, 1, 10, 0.0), ArgumentError);
}

TEST(Coarsen, IdentityAndFullSum) {
  const auto p = generate_path(3, 2, 64, 0.001);
  const auto same = coarsen(p, 1);
  EXPECT_EQ(same.increments, p.increments);
  EXPECT_EQ(same.dt, p.dt);
  const auto one = coarsen(p, 64);
  ASSERT_EQ(one.n_steps, 1);
  for (int l = 0; l < 2; ++l) {
    double s = 0.0;
    for (int n = 0; n < 64; ++n) s += p.increment(n, l);
    EXPECT_EQ(one.increment(0, l), s);
  }
}

TEST(Coarsen, EndpointsAndComposition) {
  const auto p = generate_path(9, 2, 1200, 0.001);
  const auto c = coarsen(p, 8 * 3 / 2);
  for (int l = 0; l < 2; ++l) EXPECT_NEAR(c.endpoint(l), p.endpoint(l), 1e-15);
  EXPECT_EQ(coarsen(coarsen(p, 4), 3).increments, coarsen(p, 12).increments);
  EXPECT_DOUBLE_EQ(c.dt, 0.012);
}

TEST(Coarsen, NonDivisorIsArgumentError) {
  EXPECT_THROW(coarsen(generate_path(1, 1, 10, 0.1), 3), ArgumentError);
}

TEST(PathFile, RoundTrip) {
  const auto p = generate_path(21, 2, 50, 0.002);
  const auto file = std::filesystem::temp_directory_path() / "spdelab_path_roundtrip.bin";
  write_path(p, file);
  EXPECT_EQ(std::filesystem::file_size(file), 24u + 50u * 2u * 8u);
  std::ifstream in(file, std::ios::binary);
  char magic[4];
  in.read(magic, 4);
  EXPECT_EQ(std::string(magic, 4), "BPTH");
  const auto q = read_path(file);
  EXPECT_EQ(q.drivers, 2);
  EXPECT_EQ(q.n_steps, 50);
  EXPECT_EQ(q.dt, p.dt);
  EXPECT_EQ(q.increments, p.increments);
  std::filesystem::remove(file);
}

}  // namespace
}  // namespace spdelab
