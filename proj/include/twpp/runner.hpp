#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "twpp/correlators.hpp"
#include "twpp/dynamics.hpp"
#include "twpp/fock.hpp"
#include "twpp/scenario.hpp"

namespace twpp {

struct CorrelationRequests {
  bool occupations = true;
  std::vector<std::pair<double, double>> g1_pairs;  // positions (r, s)
  bool g1_diagonal = false;                         // full grid, final time
  std::vector<std::pair<double, double>> g2_pairs;
  std::optional<std::pair<double, double>> visibility_window;
};

struct OracleOptions {
  bool enabled = false;
  size_t n_max = 0;  // 0: derived from the coherent-occupancy tail bound
};

struct RunFlags {
  bool dump_derivation = false;
  bool dump_trajectories = false;
  bool deterministic_merge = true;
};

// Optional run matrix: the tilt of every double-well stage is set to each
// value in turn and the per-run excitation observables are tabulated.
struct SweepSpec {
  std::vector<double> tilt;
};

struct RunConfig {
  double x_min = -8.0, x_max = 8.0;
  size_t n_points = 257;
  size_t n_modes = 12;
  size_t n_condensate = 2;
  double g_strength = 0.0;
  PotentialProtocol protocol;
  std::vector<cplx> alpha0;  // condensate coherent amplitudes (2)
  double dt = 1e-3;
  std::vector<double> observation_times;
  size_t n_trajectories = 0;
  uint64_t seed = 1;
  CorrelationRequests correlations;
  std::string output_dir = "out";
  OracleOptions oracle;
  std::optional<double> divergence_cap;
  // Measure single-particle energies from the instantaneous mean mode
  // energy (time-dependent zero of the trap potential). A pure gauge for
  // every equal-number observable; it removes the fast common phase
  // rotation and with it the dominant Euler stiffness.
  bool energy_gauge = false;
  RunFlags flags;
  size_t workers = 0;  // 0: hardware concurrency
  std::optional<SweepSpec> sweep;

  nlohmann::json to_json() const;  // canonical (defaults applied)
  std::string hash() const;
};

RunConfig parse_config_json(const nlohmann::json& j);
RunConfig parse_config(const std::string& path);

// Everything derived from a config before trajectories run.
struct SimulationSetup {
  Grid grid;
  ModeBasis basis;
  CouplingTensors tensors;  // at t = 0
  SdeSystem sde;            // full derivation at t = 0 (authoritative dump)
  SdeSystem sde_run;        // stepping system (interaction part when
                            // the protocol is time-dependent)
  bool time_dependent = false;
  Schedule schedule;
  double divergence_cap = 0.0;
  InitialStateSpec initial;
  std::string derivation_hash;

  // Time-dependent single-particle structure: h(t) = h_kin + a(t) Q2 +
  // b(t) QG + eps(t) Q1, with matching constant diffusion patterns per
  // noise block (the hybrid representation attaches constant cross-sector
  // diffusion to condensate/non-condensate hopping).
  Eigen::MatrixXcd h_kin, Q2, QG, Q1;
  std::vector<Eigen::MatrixXcd> D_kin, D_Q2, D_QG, D_Q1;  // per noise block

  // Energy-gauge bookkeeping: c(t) = [tr_kin + a tr_Q2 + b tr_QG +
  // eps tr_Q1] / n_modes is subtracted from the diagonal when enabled.
  bool energy_gauge = false;
  double tr_kin = 0.0, tr_Q2 = 0.0, tr_QG = 0.0, tr_Q1 = 0.0;

  double gauge_shift(const TrapCoeffs& c) const {
    if (!energy_gauge) return 0.0;
    return (tr_kin + c.a * tr_Q2 + c.b * tr_QG + c.eps * tr_Q1) /
           double(basis.n_modes);
  }
};

SimulationSetup prepare_simulation(const RunConfig& config);

struct CompareRow {
  std::string observable;
  double time = 0.0;
  double stochastic = 0.0;
  double se = 0.0;
  double exact = 0.0;
  double z = 0.0;
};

struct RunReport {
  std::string config_hash;
  std::string derivation_hash;
  size_t n_trajectories = 0;
  size_t diverged = 0;
  double diverged_fraction = 0.0;
  // max over trajectories and times of max_{k<=2} |alpha_k^+ - conj(alpha_k)|;
  // stays at round-off for g = 0 and is a monitored diagnostic otherwise.
  double condensate_conjugacy_max = 0.0;
  std::map<std::string, double> wall_times_s;
  std::vector<std::string> files;
  std::optional<Visibility> fringe_visibility;
  std::optional<ExcitationReport> excitation;
  std::vector<CompareRow> comparison;
  bool comparison_pass = true;
  double comparison_pass_fraction = 1.0;
  int exit_code = 0;

  nlohmann::json to_json() const;
};

// Full stochastic pipeline: derive, run trajectories in a deterministic
// work pool, aggregate, write CSV/JSON artifacts.
RunReport run_ensemble(const RunConfig& config);

// Runs the stochastic pipeline and the exact Fock oracle on the identical
// protocol and emits a z-score table (pass: |z| <= 3 for >= 95% of rows).
RunReport run_oracle_compare(const RunConfig& config);

// In-memory ensemble result for tests and the comparison path.
struct EnsembleData {
  EnsembleAccumulator acc;
  SimulationSetup setup;
  double conjugacy_max = 0.0;
};

EnsembleData run_trajectories(const RunConfig& config,
                              const SimulationSetup& setup);

// Exact-oracle observables on the identical schedule.
struct OracleData {
  std::vector<Eigen::MatrixXcd> one_body;  // per observation time
  FockBasis fock;
  FockState final_state;
};

OracleData run_oracle(const RunConfig& config, const SimulationSetup& setup);

// Expands the sweep into one ensemble run per tilt value (subdirectories of
// the output dir) and writes a sweep.csv summary of the excitation curve.
std::vector<RunReport> run_sweep(const RunConfig& config);

}  // namespace twpp
