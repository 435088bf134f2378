#pragma once

#include "spdelab/types.hpp"

#include <memory>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace spdelab {

// A scalar field of (t, x) drawn from a closed set of parametric families.
// Families know their value, gradient, Hessian, and (along the first axis)
// the points where the first derivative jumps. Keeping fields parametric
// makes every scenario serializable: `describe()` round-trips through
// `ScalarField::parse`.
//
// Time dependence is a multiplicative factor (1 + time_slope * t).
class ScalarField {
 public:
  class Impl;

  ScalarField();  // constant 0
  explicit ScalarField(std::shared_ptr<const Impl> impl, double time_slope = 0.0);

  static ScalarField constant(double value);
  static ScalarField affine(double offset, Vec2 slope);
  // amp * sin(freq . x + phase) + offset
  static ScalarField sine(double amp, Vec2 freq, double phase = 0.0, double offset = 0.0);
  // amp * cos(freq . x + phase) + offset
  static ScalarField cosine(double amp, Vec2 freq, double phase = 0.0, double offset = 0.0);
  // amp * exp(-|x - center|^2 / (2 width^2)) + offset
  static ScalarField gaussian(double amp, Point center, double width, double offset = 0.0);
  // Piecewise linear in x[0] through (knot, value) pairs, constant outside.
  static ScalarField piecewise_linear(std::vector<std::pair<double, double>> knots);
  // Triangle wave in x[0]: 0 at multiples of `period`, `amp` at half periods.
  static ScalarField triangle(double amp, double period);
  // amp * |x[0] - center|
  static ScalarField abs(double amp = 1.0, double center = 0.0);
  // amp for x[0] >= center, 0 otherwise
  static ScalarField step(double amp = 1.0, double center = 0.0);
  // amp * x[0]^p for integer p >= 0
  static ScalarField power(double amp, int p);

  // Family grammar: "<family> key=value ..." or a bare number.
  static ScalarField parse(std::string_view spec);

  double operator()(double t, const Point& x) const;
  Vec2 gradient(double t, const Point& x) const;
  Mat2 hessian(double t, const Point& x) const;
  double value(double t, const Point& x) const { return (*this)(t, x); }

  // Sorted x[0]-locations in [lo, hi] where the derivative jumps.
  std::vector<double> breakpoints(double lo, double hi) const;
  // True when the field is Lipschitz on bounded sets (weak gradient in L^inf_loc).
  bool differentiable() const;
  bool is_constant() const;
  // True when the field is identically zero.
  bool is_zero() const;
  double time_slope() const noexcept { return time_slope_; }
  ScalarField with_time_slope(double slope) const { return ScalarField(impl_, slope); }

  std::string describe() const;

  ScalarField operator+(const ScalarField& other) const;
  ScalarField operator*(const ScalarField& other) const;
  ScalarField scaled(double factor) const;

 private:
  double time_factor(double t) const { return 1.0 + time_slope_ * t; }

  std::shared_ptr<const Impl> impl_;
  double time_slope_ = 0.0;
};

class ScalarField::Impl {
 public:
  virtual ~Impl() = default;
  virtual double value(const Point& x) const = 0;
  virtual Vec2 gradient(const Point& x) const = 0;
  virtual Mat2 hessian(const Point& x) const = 0;
  virtual std::vector<double> breakpoints(double /*lo*/, double /*hi*/) const { return {}; }
  virtual bool differentiable() const { return true; }
  virtual bool is_constant() const { return false; }
  virtual std::string describe() const = 0;
};

// Smooth test functions for the weak formulation: Gaussian bumps and
// compactly supported bumps exp(-1/(1-r^2)) scaled to a center/width.
class TestFunction {
 public:
  enum class Kind { Gaussian, CompactBump };

  static TestFunction gaussian(Point center, double width, double amp = 1.0);
  static TestFunction compact_bump(Point center, double radius, double amp = 1.0);
  static TestFunction parse(std::string_view spec);

  double value(const Point& x) const;
  Vec2 gradient(const Point& x) const;
  Mat2 hessian(const Point& x) const;

  Kind kind() const noexcept { return kind_; }
  const Point& center() const noexcept { return center_; }
  // Radius beyond which |phi| < 1e-16 (Gaussian) or exactly 0 (compact bump).
  double support_radius() const;
  std::string describe() const;

 private:
  TestFunction(Kind kind, Point center, double width, double amp)
      : kind_(kind), center_(std::move(center)), width_(width), amp_(amp) {}

  Kind kind_;
  Point center_;
  double width_;
  double amp_;
};

}  // namespace spdelab
