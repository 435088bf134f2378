#pragma once

#include "spdelab/config.hpp"
#include "spdelab/diagnostics.hpp"

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace spdelab {

// Everything a run depends on. Serialized as canonical JSON; its FNV-1a hash
// names the run directory.
struct RunManifest {
  std::string scenario;
  std::string subcommand;
  std::string version;
  RawConfig config;
  std::string grid;
  double dt = 0.0;
  int drivers = 1;
  std::uint64_t path_seed = 0;
  std::uint64_t truth_seed = 0;
  std::uint64_t particle_seed = 0;
  std::uint64_t direction_seed = 1;

  std::string to_json() const;
  std::string hash() const;  // 16 hex digits
  static RunManifest from_json(const std::string& text);
};

RunManifest make_manifest(const Scenario& sc, const std::string& subcommand);

struct RunResult {
  std::filesystem::path dir;
  std::string hash;
  std::vector<CheckReport> reports;
  std::vector<std::filesystem::path> files;  // written outputs, in order
};

// Subcommands. Each writes manifest.json plus its CSV outputs into
// <out_root>/<manifest hash>/.
RunResult run_spde(const Scenario& sc, const std::filesystem::path& out_root);
RunResult run_filter(const Scenario& sc, const std::filesystem::path& out_root);
RunResult sweep_commutator(const Scenario& sc, const std::filesystem::path& out_root);
RunResult run_picard(const Scenario& sc, const std::filesystem::path& out_root);

// The subcommand matching a scenario's sections.
std::string default_subcommand(const Scenario& sc);

// Runs every check declared in [checks] (plus the section-specific ones for
// filter, picard and commutator scenarios). Report names are
// "<scenario>.<check>".
//
// Check keys:
//   exact = transport|heat, exact_tol     relative L2 error against the exact solution
//   refine = true, refine_ratio           error ratio when n doubles and dt halves
//   mass_tol                              relative mass drift
//   positivity_tol                        max (-u)^+ / ||u||_inf
//   l1_sharp = true                       sharp L1 bound
//   l1_decay_rate                         ||u_t||_1 against e^{-rate t}||u_0||_1
//   weak_phi, weak_tol                    weak-form residual
//   energy_tol                            summed discrete energy defect
//   energy_halving = lo,hi                defect ratio band under dt halving
//   ensemble_paths, ensemble_tol          ensemble-mean energy drift
//   continuity_phi                        weak time-continuity modulus
//   mollifier_eps                         mollified parabolicity and Jensen gap
//   div_bound_b, div_bound_fail_b, div_bound_epsilons
//   kalman_tol, steady_state, particle_sigmas, kushner_tol
//   sweep_tol, sweep_last_first, gap_tol, identity_tol
//   picard_max_iterations, picard_ratio, picard_guess_tol,
//   picard_linear_lambda, picard_linear_tol, picard_growth
std::vector<CheckReport> evaluate_checks(const Scenario& sc);

// Runs evaluate_checks over every scenario and writes report.json into a
// directory named by the combined manifest hash.
RunResult run_check(const std::vector<Scenario>& scenarios, const std::filesystem::path& out_root);

// Command-line entry point. Returns the process exit status: 0 success,
// 1 failed check or runtime error, 2 usage or configuration error.
int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace spdelab
