#include "spdelab/grid.hpp"

#include "spdelab/error.hpp"
#include "spdelab/field.hpp"
#include "spdelab/format.hpp"

#include <algorithm>
#include <cmath>

namespace spdelab {

std::string to_string(Boundary b) { return b == Boundary::ZeroFlux ? "zero-flux" : "zero-value"; }

Boundary boundary_from_string(const std::string& name) {
  if (name == "zero-flux") return Boundary::ZeroFlux;
  if (name == "zero-value") return Boundary::ZeroValue;
  throw ConfigError("unknown boundary '" + name + "' (expected zero-flux or zero-value)");
}

Grid::Grid(double x_min, double x_max, int n, Boundary boundary)
    : dim_(1), lo_{x_min, 0.0}, hi_{x_max, 0.0}, n_{n, 1}, boundary_(boundary) {
  if (n < 16) throw ConfigError("grid needs n >= 16 cells per axis, got " + std::to_string(n));
  if (!(x_max > x_min)) throw ConfigError("grid needs x_max > x_min");
  h_ = {(x_max - x_min) / n, 1.0};
}

Grid::Grid(std::array<double, 2> lo, std::array<double, 2> hi, std::array<int, 2> n, Boundary boundary)
    : dim_(2), lo_(lo), hi_(hi), n_(n), boundary_(boundary) {
  for (int a = 0; a < 2; ++a) {
    if (n[a] < 16) throw ConfigError("grid needs n >= 16 cells per axis, got " + std::to_string(n[a]));
    if (!(hi[a] > lo[a])) throw ConfigError("grid needs hi > lo on every axis");
    h_[a] = (hi[a] - lo[a]) / n[a];
  }
  if (std::abs(h_[0] - h_[1]) > 1e-12 * h_[0]) throw ConfigError("2-D grid needs equal spacing on both axes");
}

double Grid::distance_to_boundary(std::size_t k) const noexcept {
  double d = std::min(coord(0, i_of(k)) - lo_[0], hi_[0] - coord(0, i_of(k)));
  if (dim_ == 2) d = std::min({d, coord(1, j_of(k)) - lo_[1], hi_[1] - coord(1, j_of(k))});
  return d;
}

Grid Grid::refined(int factor) const {
  if (factor < 1) throw ArgumentError("refinement factor must be >= 1");
  if (dim_ == 1) return Grid(lo_[0], hi_[0], n_[0] * factor, boundary_);
  return Grid(lo_, hi_, {n_[0] * factor, n_[1] * factor}, boundary_);
}

Grid Grid::coarsened(int factor) const {
  if (factor < 1 || n_[0] % factor != 0 || (dim_ == 2 && n_[1] % factor != 0)) {
    throw ArgumentError("coarsening factor must divide the cell count");
  }
  if (dim_ == 1) return Grid(lo_[0], hi_[0], n_[0] / factor, boundary_);
  return Grid(lo_, hi_, {n_[0] / factor, n_[1] / factor}, boundary_);
}

std::string Grid::describe() const {
  std::string s = "dim=" + std::to_string(dim_) + " x=[" + format_double(lo_[0]) + "," + format_double(hi_[0]) +
                  "] n=" + std::to_string(n_[0]);
  if (dim_ == 2) {
    s += " y=[" + format_double(lo_[1]) + "," + format_double(hi_[1]) + "] ny=" + std::to_string(n_[1]);
  }
  return s + " boundary=" + to_string(boundary_);
}

double grid_integral(const Grid& grid, std::span<const double> values) {
  return grid.cell_volume() * compensated_sum(values);
}

double grid_l2(const Grid& grid, std::span<const double> values) {
  std::vector<double> sq(values.size());
  std::transform(values.begin(), values.end(), sq.begin(), [](double v) { return v * v; });
  return std::sqrt(grid.cell_volume() * compensated_sum(sq));
}

DensityField DensityField::sample(const Grid& grid, const ScalarField& f, double t) {
  DensityField out{grid, std::vector<double>(grid.size()), 0, t};
  for (std::size_t k = 0; k < grid.size(); ++k) out.values[k] = f(t, grid.point(k));
  return out;
}

double DensityField::integral() const { return grid_integral(grid, values); }

double DensityField::l1() const {
  std::vector<double> a(values.size());
  std::transform(values.begin(), values.end(), a.begin(), [](double v) { return std::abs(v); });
  return grid.cell_volume() * compensated_sum(a);
}

double DensityField::l2() const { return grid_l2(grid, values); }

double DensityField::sup() const {
  double m = 0.0;
  for (double v : values) m = std::max(m, std::abs(v));
  return m;
}

double DensityField::min() const { return *std::min_element(values.begin(), values.end()); }

double DensityField::integrate_against(std::span<const double> weights) const {
  std::vector<double> prod(values.size());
  for (std::size_t k = 0; k < values.size(); ++k) prod[k] = values[k] * weights[k];
  return grid.cell_volume() * compensated_sum(prod);
}

}  // namespace spdelab
