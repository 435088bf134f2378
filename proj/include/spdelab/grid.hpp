#pragma once

#include "spdelab/types.hpp"

#include <array>
#include <string>
#include <vector>

namespace spdelab {

class ScalarField;

enum class Boundary { ZeroFlux, ZeroValue };

std::string to_string(Boundary b);
Boundary boundary_from_string(const std::string& name);

// Uniform cell-centred lattice on a box in one or two dimensions:
// x_i = x_min + (i + 1/2) h along each axis, flat index i + n0 * j.
class Grid {
 public:
  Grid() = default;
  // One-dimensional grid on [x_min, x_max] with n cells.
  Grid(double x_min, double x_max, int n, Boundary boundary = Boundary::ZeroFlux);
  // Two-dimensional grid; both axes must share the same spacing.
  Grid(std::array<double, 2> lo, std::array<double, 2> hi, std::array<int, 2> n,
       Boundary boundary = Boundary::ZeroFlux);

  int dim() const noexcept { return dim_; }
  int n(int axis) const noexcept { return n_[axis]; }
  double lo(int axis) const noexcept { return lo_[axis]; }
  double hi(int axis) const noexcept { return hi_[axis]; }
  double spacing(int axis = 0) const noexcept { return h_[axis]; }
  Boundary boundary() const noexcept { return boundary_; }
  std::size_t size() const noexcept { return static_cast<std::size_t>(n_[0]) * static_cast<std::size_t>(n_[1]); }
  // h^d
  double cell_volume() const noexcept { return dim_ == 1 ? h_[0] : h_[0] * h_[1]; }

  std::size_t index(int i, int j = 0) const noexcept {
    return static_cast<std::size_t>(i) + static_cast<std::size_t>(n_[0]) * static_cast<std::size_t>(j);
  }
  int i_of(std::size_t k) const noexcept { return static_cast<int>(k % static_cast<std::size_t>(n_[0])); }
  int j_of(std::size_t k) const noexcept { return static_cast<int>(k / static_cast<std::size_t>(n_[0])); }
  double coord(int axis, int i) const noexcept { return lo_[axis] + (i + 0.5) * h_[axis]; }
  Point point(std::size_t k) const noexcept {
    return dim_ == 1 ? Point(coord(0, i_of(k)), 0.0) : Point(coord(0, i_of(k)), coord(1, j_of(k)));
  }
  // Distance from point k to the nearest face of the box.
  double distance_to_boundary(std::size_t k) const noexcept;

  // Same box, cells refined/coarsened by an integer factor.
  Grid refined(int factor) const;
  Grid coarsened(int factor) const;

  std::string describe() const;

 private:
  int dim_ = 1;
  std::array<double, 2> lo_{0.0, 0.0};
  std::array<double, 2> hi_{1.0, 0.0};
  std::array<int, 2> n_{16, 1};
  std::array<double, 2> h_{1.0 / 16, 1.0};
  Boundary boundary_ = Boundary::ZeroFlux;
};

// A grid function with its time stamp.
struct DensityField {
  Grid grid;
  std::vector<double> values;
  int time_index = 0;
  double time = 0.0;

  static DensityField sample(const Grid& grid, const ScalarField& f, double t = 0.0);

  double integral() const;  // h^d * sum u (signed mass), compensated
  double l1() const;        // h^d * sum |u|
  double l2() const;        // (h^d * sum u^2)^(1/2)
  double sup() const;       // max |u|
  double min() const;
  double integrate_against(std::span<const double> weights) const;
};

double grid_integral(const Grid& grid, std::span<const double> values);
double grid_l2(const Grid& grid, std::span<const double> values);

}  // namespace spdelab
