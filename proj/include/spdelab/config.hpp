#pragma once

#include "spdelab/field.hpp"
#include "spdelab/filter.hpp"
#include "spdelab/grid.hpp"
#include "spdelab/model.hpp"
#include "spdelab/solver.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace spdelab {

// Flat key-tree scenario file:
//
//   name = heat
//   [grid]         dim, lo, hi, n, boundary
//   [time]         dt, t_end, theta, outputs, seed, stability_guard, milstein, mollify_eps
//   [coefficients] drivers, a11 a12 a22, b1 b2, c, f, sigma<i><l>, h<l>, g<l>,
//                  sigma_hat<i><k>, u0, kappa
//   [filter]       A Q H R m0 P0 | b_hat sigma_hat b_tilde<k> sigma_tilde prior x0,
//                  particles, truth_seed, particle_seed, phi<k>, kushner, extended_t_end
//   [picard]       f, g, tol, max_iter, guess, residual_phi, residual_threshold
//   [commutator]   b, u, c, a, epsilons, radius, exponent
//   [checks]       see cli.hpp
//
// Field values use the ScalarField grammar. Unknown keys or sections raise
// ParseError naming the key.
using RawConfig = std::map<std::string, std::map<std::string, std::string>>;

struct GridSpec {
  int dim = 1;
  std::array<double, 2> lo{-8.0, -8.0};
  std::array<double, 2> hi{8.0, 8.0};
  std::array<int, 2> n{512, 512};
  Boundary boundary = Boundary::ZeroFlux;

  Grid build() const;
};

struct TimeSpec {
  double dt = 1e-3;
  double t_end = 0.1;
  int outputs = 10;  // equally spaced output intervals
  std::uint64_t seed = 1;
  SolverConfig solver;

  int n_steps() const;
  std::vector<double> output_times() const;
};

struct FilterSpec {
  bool present = false;
  FilterScenario scenario;
  int particles = 0;  // 0: no particle comparison
  std::uint64_t truth_seed = 1;
  std::uint64_t particle_seed = 2;
  std::vector<ScalarField> phis;
  bool kushner = false;
  std::optional<double> extended_t_end;
};

struct PicardSpec {
  bool present = false;
  std::string f = "zero";
  std::string g = "zero";
  double tol = 1e-8;
  int max_iter = 50;
  std::string guess = "initial";
  std::optional<TestFunction> residual_phi;
  double residual_threshold = 1e-2;
};

struct CommutatorSpec {
  bool present = false;
  ScalarField b;
  ScalarField u;
  std::optional<ScalarField> c;
  std::optional<ScalarField> a;  // for the product/factor identities
  std::vector<double> epsilons{0.2, 0.1, 0.05, 0.025};
  double radius = 3.0;
  double exponent = 2.0;
};

struct Scenario {
  std::string name = "scenario";
  GridSpec grid;
  TimeSpec time;
  CoefficientSpec coefficients;
  ScalarField u0;
  ScalarField kappa;
  FilterSpec filter;
  PicardSpec picard;
  CommutatorSpec commutator;
  std::map<std::string, std::string> checks;
  RawConfig raw;  // canonical key/value tree, the manifest's source of truth
};

// Parses and validates (model invariants at t = 0 and t_end on the grid).
Scenario parse_config_text(const std::string& text);
Scenario parse_config_file(const std::filesystem::path& path);

// Serializes a raw tree back to the config text format (sorted, canonical).
std::string to_config_text(const RawConfig& raw);

}  // namespace spdelab
