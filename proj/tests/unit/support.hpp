#pragma once

#include "spdelab/field.hpp"
#include "spdelab/grid.hpp"
#include "spdelab/model.hpp"

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

namespace spdelab::test {

inline ScalarField k(double v) { return ScalarField::constant(v); }
inline ScalarField parse(const char* spec) { return ScalarField::parse(spec); }

// One-dimensional spec with drivers L and every entry zero.
inline CoefficientSpec spec1(int drivers = 1) {
  CoefficientSpec s;
  s.dim = 1;
  s.drivers = drivers;
  s.normalize();
  return s;
}

inline CoefficientSpec spec2(int drivers = 1) {
  CoefficientSpec s;
  s.dim = 2;
  s.drivers = drivers;
  s.normalize();
  return s;
}

inline std::vector<double> sample(const Grid& g, const ScalarField& f, double t = 0.0) {
  return DensityField::sample(g, f, t).values;
}

inline double max_abs(std::span<const double> v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace spdelab::test
