// Command-line front end: run ensembles, validate against the exact
// oracle, or dump the derived equations / trap eigenbasis for a config.

#include "CLI11.hpp"

#include "twpp/io.hpp"
#include "twpp/runner.hpp"

#include <cstdio>
#include <iostream>

namespace {

struct CommonOpts {
  std::string config_path;
  std::optional<size_t> trajectories;
  std::optional<uint64_t> seed;
  std::optional<size_t> workers;
  std::optional<std::string> output;
  std::optional<std::string> deterministic_merge;
};

void add_common(CLI::App* cmd, CommonOpts& o) {
  cmd->add_option("config", o.config_path, "run configuration (JSON)")
      ->required();
  cmd->add_option("--trajectories", o.trajectories, "override n_trajectories");
  cmd->add_option("--seed", o.seed, "override master seed");
  cmd->add_option("--workers", o.workers, "worker thread count (0 = hardware)");
  cmd->add_option("--output", o.output, "override output directory");
  cmd->add_option("--deterministic-merge", o.deterministic_merge,
                  "on|off: seed-ordered reduction (default on)");
}

twpp::RunConfig load(const CommonOpts& o) {
  twpp::RunConfig c = twpp::parse_config(o.config_path);
  if (o.trajectories) c.n_trajectories = *o.trajectories;
  if (o.seed) c.seed = *o.seed;
  if (o.workers) c.workers = *o.workers;
  if (o.output) c.output_dir = *o.output;
  if (o.deterministic_merge) {
    if (*o.deterministic_merge == "on") {
      c.flags.deterministic_merge = true;
    } else if (*o.deterministic_merge == "off") {
      c.flags.deterministic_merge = false;
    } else {
      throw twpp::ConfigError("--deterministic-merge takes on|off");
    }
  }
  if (c.n_trajectories == 0) {
    throw twpp::ConfigError("n_trajectories must be at least 1");
  }
  return c;
}

void print_report(const twpp::RunReport& r) {
  std::printf("config_hash      %s\n", r.config_hash.c_str());
  std::printf("derivation_hash  %s\n", r.derivation_hash.c_str());
  std::printf("trajectories     %zu (diverged %zu, %.3f%%)\n",
              r.n_trajectories, r.diverged, 100.0 * r.diverged_fraction);
  std::printf("conjugacy drift  %.3e\n", r.condensate_conjugacy_max);
  for (const auto& [phase, secs] : r.wall_times_s) {
    std::printf("wall[%s]  %.2f s\n", phase.c_str(), secs);
  }
  if (r.fringe_visibility) {
    std::printf("visibility       %.6f +- %.6f\n", r.fringe_visibility->value,
                r.fringe_visibility->se);
  }
  if (r.excitation) {
    std::printf("p_excited        %.6f +- %.6f (total number %.4f)\n",
                r.excitation->p_excited, r.excitation->p_excited_se,
                r.excitation->total_number);
  }
  if (!r.comparison.empty()) {
    std::printf("oracle compare: %zu observables, %.1f%% with |z| <= 3 -> %s\n",
                r.comparison.size(), 100.0 * r.comparison_pass_fraction,
                r.comparison_pass ? "PASS" : "FAIL");
  }
  for (const auto& f : r.files) std::printf("wrote %s\n", f.c_str());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"hybrid Wigner / positive-P stochastic simulator for 1D "
               "double-well boson dynamics"};
  app.require_subcommand(1);

  CommonOpts run_o, cmp_o, der_o, mod_o;
  CLI::App* run_cmd =
      app.add_subcommand("run", "derive, integrate an ensemble, write results");
  add_common(run_cmd, run_o);
  CLI::App* cmp_cmd = app.add_subcommand(
      "compare", "run the ensemble and the exact Fock oracle, report z-scores");
  add_common(cmp_cmd, cmp_o);
  CLI::App* der_cmd =
      app.add_subcommand("derive", "emit the derivation dump only");
  add_common(der_cmd, der_o);
  CLI::App* mod_cmd =
      app.add_subcommand("modes", "emit the trap eigenbasis and tensors");
  add_common(mod_cmd, mod_o);

  CLI11_PARSE(app, argc, argv);

  try {
    if (run_cmd->parsed()) {
      twpp::RunConfig c = load(run_o);
      if (c.sweep) {
        auto reports = twpp::run_sweep(c);
        int worst = 0;
        for (size_t i = 0; i < reports.size(); ++i) {
          std::printf("-- sweep point %zu/%zu (tilt %g) --\n", i + 1,
                      reports.size(), c.sweep->tilt[i]);
          print_report(reports[i]);
          worst = std::max(worst, reports[i].exit_code);
        }
        std::printf("wrote sweep.csv\n");
        return worst;
      }
      twpp::RunReport r = twpp::run_ensemble(c);
      print_report(r);
      return r.exit_code;
    }
    if (cmp_cmd->parsed()) {
      twpp::RunReport r = twpp::run_oracle_compare(load(cmp_o));
      print_report(r);
      return r.exit_code;
    }
    if (der_cmd->parsed()) {
      twpp::RunConfig c = load(der_o);
      twpp::SimulationSetup s = twpp::prepare_simulation(c);
      nlohmann::json dump = twpp::derivation_to_json(s.sde);
      dump["config_hash"] = c.hash();
      std::filesystem::create_directories(c.output_dir);
      std::string path = c.output_dir + "/derivation.json";
      twpp::write_text_file(path, dump.dump(2));
      std::printf("derivation_hash  %s\nwrote %s\n", s.derivation_hash.c_str(),
                  path.c_str());
      return 0;
    }
    if (mod_cmd->parsed()) {
      twpp::RunConfig c = load(mod_o);
      twpp::Grid grid = twpp::build_grid(c.x_min, c.x_max, c.n_points);
      std::vector<double> v0 = c.protocol.sample(grid, 0.0);
      twpp::ModeBasis basis = twpp::solve_modes(grid, v0, c.n_modes);
      twpp::CouplingTensors tensors =
          twpp::compute_tensors(basis, v0, c.g_strength);
      nlohmann::json dump = twpp::basis_to_json(basis, tensors);
      dump["config_hash"] = c.hash();
      std::filesystem::create_directories(c.output_dir);
      std::string path = c.output_dir + "/modes.json";
      twpp::write_text_file(path, dump.dump());
      for (size_t k = 0; k < basis.n_modes; ++k) {
        std::printf("E_%zu = %.9f\n", k + 1, basis.energies[k]);
      }
      std::printf("wrote %s\n", path.c_str());
      return 0;
    }
  } catch (const twpp::ConfigError& e) {
    std::fprintf(stderr, "%s\n", e.what());
    return 2;
  } catch (const twpp::NumericError& e) {
    std::fprintf(stderr, "numeric error: %s\n", e.what());
    return 3;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
