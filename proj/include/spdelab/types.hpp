#pragma once

#include <Eigen/Core>

#include <cmath>
#include <span>
#include <vector>

namespace spdelab {

// Spatial points and small vectors are stored in two components; when the
// problem dimension is 1 the second component is ignored (kept at zero).
using Point = Eigen::Vector2d;
using Vec2 = Eigen::Vector2d;
using Mat2 = Eigen::Matrix2d;

inline Point make_point(double x, double y = 0.0) { return Point(x, y); }

// Neumaier-compensated sum. Mass and norm reductions go through this so that
// telescoping flux sums stay at round-off level.
inline double compensated_sum(std::span<const double> values) {
  double sum = 0.0;
  double carry = 0.0;
  for (double v : values) {
    const double t = sum + v;
    if (std::abs(sum) >= std::abs(v)) {
      carry += (sum - t) + v;
    } else {
      carry += (v - t) + sum;
    }
    sum = t;
  }
  return sum + carry;
}

// Pairwise summation; deterministic for a fixed input order.
inline double pairwise_sum(std::span<const double> values) {
  if (values.size() <= 8) {
    double s = 0.0;
    for (double v : values) s += v;
    return s;
  }
  const std::size_t half = values.size() / 2;
  return pairwise_sum(values.first(half)) + pairwise_sum(values.subspan(half));
}

}  // namespace spdelab
