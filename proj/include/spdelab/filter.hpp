#pragma once

#include "spdelab/field.hpp"
#include "spdelab/grid.hpp"
#include "spdelab/model.hpp"
#include "spdelab/noise.hpp"
#include "spdelab/solver.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <vector>

namespace spdelab {

// dx = A x dt + Q dB_hat, dy = H x dt + R dB_tilde, x_0 ~ N(m0, P0).
struct LinearGaussianModel {
  double A = -0.5;
  double Q = 1.0;
  double H = 1.0;
  double R = 1.0;
  double m0 = 0.0;
  double P0 = 1.0;
};

// Scalar signal x with d1 observation channels:
//   dx = b_hat(x) dt + sigma_hat(x) dB_hat
//   dy = b_tilde(x) dt + sigma_tilde dB_tilde   (sigma_tilde constant d1 x d1)
struct FilterScenario {
  ScalarField b_hat;
  ScalarField sigma_hat = ScalarField::constant(1.0);
  std::vector<ScalarField> b_tilde{ScalarField::affine(0.0, Vec2(1.0, 0.0))};
  Eigen::MatrixXd sigma_tilde = Eigen::MatrixXd::Identity(1, 1);
  // Prior density up to normalization.
  ScalarField prior = ScalarField::gaussian(1.0, Point::Zero(), 1.0);
  // Where the truth's initial state is drawn from when x0 is unset.
  double prior_lo = -8.0;
  double prior_hi = 8.0;
  std::optional<double> x0;
  double K = 10.0;
  // |x| beyond this during simulate_truth is a scenario error.
  double state_limit = std::numeric_limits<double>::infinity();
  std::optional<LinearGaussianModel> linear;

  int observation_dim() const noexcept { return static_cast<int>(b_tilde.size()); }
  // sigma_tilde square, matching b_tilde, with |det| > 1e-12.
  void validate() const;

  static FilterScenario kalman_bucy(const LinearGaussianModel& m);
};

struct TruthRealization {
  int n_steps = 0;
  int d1 = 1;
  double dt = 0.0;
  std::uint64_t seed = 0;
  std::vector<double> x_path;  // n_steps + 1
  std::vector<double> y_path;  // (n_steps + 1) x d1, row-major
  std::vector<double> bbar;    // n_steps x d1, sigma_tilde^{-1} dy

  double y(int step, int k) const { return y_path[static_cast<std::size_t>(step) * d1 + k]; }
  // The transformed observation path as driver increments.
  BrownianPath bbar_path() const;
};

// Blocks of `factor` steps: bbar summed, x and y sub-sampled.
TruthRealization coarsen(const TruthRealization& truth, int factor);

// a = sigma_hat^2 / 2, stored drift b = a' - b_hat (for the + d(b u) form),
// c = 0, sigma = 0, h = sigma_tilde^{-1} b_tilde.
CoefficientSet zakai_coefficients(const FilterScenario& sc);

TruthRealization simulate_truth(const FilterScenario& sc, std::uint64_t seed, int n_steps, double dt);

struct Moments {
  double mean = 0.0;
  double var = 0.0;
};
Moments density_moments(const Grid& grid, std::span<const double> density);

// u / int u; normalize(normalize(u)) == normalize(u) bit for bit.
std::vector<double> normalize_density(const Grid& grid, std::span<const double> u);

// Prior sampled at cell centres and normalized; throws ScenarioError if
// negative.
std::vector<double> prior_on_grid(const FilterScenario& sc, const Grid& grid);

struct ZakaiResult {
  Trajectory u;                     // unnormalized
  std::vector<double> mass;         // every step
  Trajectory pi;                    // normalized snapshots
  std::vector<double> innovation;   // n_steps x d1
  std::vector<Moments> moments;     // per pi snapshot
};

// Steps the Zakai equation driven by the truth's bbar increments. Snapshots
// at output_times (time 0 always). DegeneracyError if the mass is not
// positive at some step.
ZakaiResult run_zakai(const FilterScenario& sc, const TruthRealization& truth, const Grid& grid,
                      const SolverConfig& cfg, std::span<const double> output_times);

// Kushner-Stratonovich by splitting: one linear step of pi_n with noise
// coefficient h - pi_n(h) driven by the innovation, then renormalization.
Trajectory run_kushner(const FilterScenario& sc, const TruthRealization& truth, const Grid& grid,
                       const SolverConfig& cfg, std::span<const double> output_times);

struct ParticleEstimate {
  double estimate = 0.0;
  double stderr_ = 0.0;
};

// Kallianpur-Striebel weights under the reference measure: fresh signal paths
// weighted by exp(sum h dBbar - 1/2 sum |h|^2 dt) with the truth's bbar. The
// initial particles are drawn from the prior as discretized on `grid`.
std::vector<ParticleEstimate> particle_estimate(const FilterScenario& sc, const TruthRealization& truth,
                                                const Grid& grid, int n_particles,
                                                std::span<const ScalarField> phis, std::uint64_t seed);

struct KalmanSeries {
  std::vector<double> times;
  std::vector<double> mean;
  std::vector<double> var;
};

// RK4 on (m, P) with dy/dt held constant over each observation step.
// ScenarioError if the scenario carries no linear-Gaussian description.
KalmanSeries kalman_bucy_oracle(const FilterScenario& sc, const TruthRealization& truth, int substeps = 1);

}  // namespace spdelab
