// Acceptance suite: one pass/fail line per criterion, nonzero exit on any
// failure. Criteria marked with runtime budgets are timed.

#include "support/grid_schrodinger.hpp"
#include "twpp/io.hpp"
#include "twpp/runner.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

using namespace twpp;

namespace {

int g_failures = 0;
std::string g_config_dir = "configs";

struct Criterion {
  std::string name;
  double t0;
  bool ok = true;
  std::string detail;

  explicit Criterion(std::string n)
      : name(std::move(n)),
        t0(std::chrono::duration<double>(
               std::chrono::steady_clock::now().time_since_epoch())
               .count()) {}

  void expect(bool cond, const std::string& what) {
    if (!cond) {
      ok = false;
      detail += (detail.empty() ? "" : "; ") + what;
    }
  }

  ~Criterion() {
    double dt = std::chrono::duration<double>(
                    std::chrono::steady_clock::now().time_since_epoch())
                    .count() -
                t0;
    std::printf("%s  %s (%.1f s)%s%s\n", ok ? "PASS" : "FAIL", name.c_str(),
                dt, detail.empty() ? "" : " -- ", detail.c_str());
    std::fflush(stdout);
    if (!ok) ++g_failures;
  }
};

RunConfig load_config(const std::string& name) {
  return parse_config(g_config_dir + "/" + name);
}

Poly mono(std::initializer_list<std::pair<uint32_t, uint32_t>> vars,
          cplx coeff) {
  MultiIndex m;
  for (auto [v, e] : vars) m.raise(v, e);
  Poly p;
  p.add_term(m, coeff);
  return p;
}

OperatorTerm quartic_term(double chi) {
  OperatorTerm t;
  t.coeff = cplx{chi, 0.0};
  t.factors = {{0, OpKind::Create},
               {0, OpKind::Create},
               {0, OpKind::Annihilate},
               {0, OpKind::Annihilate}};
  return t;
}

// ---- criterion 1: derivation anchors ---------------------------------------

void criterion_1() {
  Criterion c(" 1. derivation anchors (single-mode Wigner / positive-P)");
  const double chi = 0.85;

  {
    std::vector<Sector> sectors{Sector::Wigner};
    auto trunc = truncate(apply_rules({quartic_term(chi)}, sectors));
    SdeSystem sde = extract_sde(trunc.kept, 1, trunc.report);
    Poly ax = mono({{0, 2}, {1, 1}}, cplx{0.0, -2.0 * chi}) +
              mono({{0, 1}}, cplx{0.0, 2.0 * chi});
    c.expect((sde.drift[0] - ax).is_zero(1e-13), "Wigner drift mismatch");
    c.expect(sde.diffusion.is_zero(), "Wigner diffusion not identically zero");
    c.expect(sde.report.size() == 2, "Wigner third-order remainder count");
  }
  {
    std::vector<Sector> sectors{Sector::PositiveP};
    auto trunc = truncate(apply_rules({quartic_term(chi)}, sectors));
    SdeSystem sde = extract_sde(trunc.kept, 1, trunc.report);
    Poly ax = mono({{0, 2}, {1, 1}}, cplx{0.0, -2.0 * chi});
    c.expect((sde.drift[0] - ax).is_zero(1e-13), "positive-P drift mismatch");
    const Poly* dxx = sde.diffusion.find(0, 0);
    Poly expect = mono({{0, 2}}, cplx{0.0, -2.0 * chi});
    c.expect(dxx && (*dxx - expect).is_zero(1e-13),
             "positive-P diffusion mismatch");
  }
}

// ---- criterion 2: noise statistics ------------------------------------------

void criterion_2() {
  Criterion c(" 2. noise statistics at 1e6 samples");
  auto t0 = std::chrono::steady_clock::now();
  const double dt = 0.01;
  const size_t M = 1000000;
  double s0 = 0.0, s1 = 0.0, sq0 = 0.0, cross = 0.0, lag = 0.0, prev0 = 0.0;
  NoiseSlice n;
  for (size_t step = 0; step < M; ++step) {
    generate_noise_into(n, 2, dt, 314159, step);
    s0 += n.values[0];
    s1 += n.values[1];
    sq0 += n.values[0] * n.values[0];
    cross += n.values[0] * n.values[1];
    if (step > 0) lag += prev0 * n.values[0];
    prev0 = n.values[0];
  }
  const double Md = double(M), var = 1.0 / dt;
  c.expect(std::abs(s0 / Md) < 3.0 * std::sqrt(var / Md), "channel 0 mean");
  c.expect(std::abs(s1 / Md) < 3.0 * std::sqrt(var / Md), "channel 1 mean");
  c.expect(std::abs(sq0 / Md - var) < 3.0 * var * std::sqrt(2.0 / Md),
           "variance");
  c.expect(std::abs(cross / Md) < 3.0 * var / std::sqrt(Md),
           "cross-channel covariance");
  c.expect(std::abs(lag / Md) < 3.0 * var / std::sqrt(Md),
           "step-to-step covariance");
  double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                              t0)
                    .count();
  c.expect(secs < 10.0, "runtime " + std::to_string(secs) + " s >= 10 s");
}

// ---- criterion 3: noise factorization residual ------------------------------

void criterion_3() {
  Criterion c(" 3. noise factorization ||d d^T - D|| < 1e-10, all configs");
  const std::vector<std::string> configs{
      "g0_harmonic.json", "vacuum_ordering.json", "josephson.json",
      "hybrid_small.json", "doublewell_default.json"};
  for (const std::string& name : configs) {
    RunConfig cfg = load_config(name);
    SimulationSetup s = prepare_simulation(cfg);
    double n0 = 0.0;
    for (const cplx& a : cfg.alpha0) n0 += std::norm(a);
    const double scale = std::max(1.0, std::sqrt(n0));
    std::vector<std::vector<cplx>> pts(100);
    for (size_t p = 0; p < 100; ++p) {
      pts[p].resize(s.sde_run.n_vars);
      for (size_t v = 0; v < s.sde_run.n_vars; ++v) {
        auto [z0, z1] = normal_pair(p, v, 0xACCE55 + cfg.seed);
        pts[p][v] = cplx{z0, z1} * (0.5 * scale);
      }
    }
    try {
      double resid = verify_noise_factor(s.sde, pts, 1e-10);
      (void)resid;
    } catch (const NumericError& e) {
      c.expect(false, name + ": " + e.what());
      continue;
    }
    if (s.time_dependent) {
      // include the per-step constant diffusion at the barrier peak
      double t_mid = 0.5 * cfg.protocol.total_duration();
      TrapCoeffs tc = cfg.protocol.coeffs(t_mid);
      std::vector<Eigen::MatrixXcd> extra(s.D_kin.size());
      for (size_t b = 0; b < extra.size(); ++b) {
        extra[b] = s.D_kin[b] + tc.a * s.D_Q2[b] + tc.b * s.D_QG[b] +
                   tc.eps * s.D_Q1[b];
      }
      const auto& model = s.sde_run.noise;
      for (const auto& pt : pts) {
        Eigen::MatrixXcd d =
            model.dense_factor(pt.data(), s.sde_run.n_vars, &extra);
        Eigen::MatrixXcd DD = d * d.transpose();
        double resid = 0.0;
        for (size_t v = 0; v < s.sde_run.n_vars; ++v) {
          for (size_t w = 0; w < s.sde_run.n_vars; ++w) {
            const Poly* p = s.sde_run.diffusion.find(uint32_t(v), uint32_t(w));
            cplx expect = p ? p->eval(pt) : cplx{0.0, 0.0};
            DD(long(v), long(w)) -= expect;
          }
        }
        for (size_t b = 0; b < extra.size(); ++b) {
          const auto& blk = model.blocks()[b];
          for (size_t i = 0; i < blk.vars.size(); ++i) {
            for (size_t j = 0; j < blk.vars.size(); ++j) {
              DD(blk.vars[i], blk.vars[j]) -= extra[b](long(i), long(j));
            }
          }
        }
        resid = DD.cwiseAbs().maxCoeff();
        if (resid >= 1e-10) {
          c.expect(false, name + ": time-dependent residual " +
                              std::to_string(resid));
          break;
        }
      }
    }
  }
}

// ---- criterion 4: linear exactness with dt halving ---------------------------

void criterion_4() {
  Criterion c(" 4. g = 0 exactness: Euler error halves with dt");
  RunConfig cfg = load_config("g0_harmonic.json");
  cfg.n_trajectories = 1000;

  auto mean_error = [&](double dt) {
    RunConfig run = cfg;
    run.dt = dt;
    SimulationSetup s = prepare_simulation(run);
    const size_t n = run.n_modes;
    const double T = run.observation_times.back();
    std::vector<cplx> mean_init(n, cplx{0.0, 0.0});
    std::vector<cplx> mean_fin(n, cplx{0.0, 0.0});
    size_t diverged = 0;
    for (size_t idx = 0; idx < run.n_trajectories; ++idx) {
      uint64_t seed = mix_seed(run.seed, idx);
      PhasePoint init = sample_initial(s.initial, seed);
      TrajectoryResult traj = evolve_trajectory(init, s.sde_run, nullptr,
                                                s.schedule, seed,
                                                s.divergence_cap);
      if (traj.status != TrajectoryStatus::Completed) {
        ++diverged;
        continue;
      }
      for (size_t k = 0; k < n; ++k) {
        mean_init[k] += init.alpha[k];
        mean_fin[k] += traj.samples.back().alpha[k];
      }
    }
    c.expect(diverged == 0, "diverged trajectories in a g = 0 run");
    double err = 0.0;
    for (size_t k = 0; k < n; ++k) {
      cplx exact = mean_init[k] / double(run.n_trajectories) *
                   std::exp(cplx{0.0, -s.basis.energies[k] * T});
      cplx got = mean_fin[k] / double(run.n_trajectories);
      err = std::max(err, std::abs(got - exact));
    }
    return err;
  };

  double e1 = mean_error(1e-3);
  double e2 = mean_error(5e-4);
  double ratio = e1 / e2;
  c.expect(ratio > 1.8 && ratio < 2.2,
           "halving ratio " + std::to_string(ratio) + " outside [1.8, 2.2]");
}

// ---- criterion 5: ordering correction at the vacuum --------------------------

void criterion_5() {
  Criterion c(" 5. vacuum ordering correction (raw 1/2, corrected 0)");
  RunConfig cfg = load_config("vacuum_ordering.json");
  SimulationSetup s = prepare_simulation(cfg);
  EnsembleData data = run_trajectories(cfg, s);
  uint32_t t_last = uint32_t(cfg.observation_times.size() - 1);

  for (uint32_t k = 0; k < cfg.n_condensate; ++k) {
    MomentStat raw = data.acc.stat(MomentKey::pair(t_last, k, k));
    c.expect(std::abs(raw.mean - cplx{0.5, 0.0}) < 3.0 * raw.se,
             "raw symmetric diagonal of condensate mode " +
                 std::to_string(k + 1));
  }
  std::vector<std::pair<size_t, size_t>> diag;
  for (size_t i = 0; i < s.grid.n_points; ++i) diag.emplace_back(i, i);
  CorrelationResult res = g1(data.acc, s.basis, diag, t_last);
  size_t bad = 0;
  for (size_t i = 0; i < diag.size(); ++i) {
    if (std::abs(res.values[i]) > 3.0 * res.errors[i] + 1e-12) ++bad;
  }
  c.expect(bad == 0, std::to_string(bad) + " grid points beyond 3 SE");
}

// ---- criterion 6: two-mode Josephson against the exact oracle ----------------

void criterion_6() {
  Criterion c(" 6. two-mode Josephson vs exact Fock oracle");
  auto t0 = std::chrono::steady_clock::now();
  RunConfig cfg = load_config("josephson.json");
  cfg.output_dir = "acceptance_out/josephson";
  RunReport rep = run_oracle_compare(cfg);
  c.expect(rep.diverged == 0, "diverged trajectories");

  // population imbalance n_L - n_R = 2 Re<c1+ c2> per observation time
  size_t total = 0, pass = 0;
  for (const CompareRow& row : rep.comparison) {
    if (row.observable.rfind("Re<c1+ c2>", 0) == 0) {
      ++total;
      if (std::abs(row.z) <= 3.0) ++pass;
    }
  }
  c.expect(total == cfg.observation_times.size(), "imbalance row count");
  double frac = total ? double(pass) / double(total) : 0.0;
  c.expect(frac >= 0.95, "imbalance pass fraction " + std::to_string(frac));
  c.expect(rep.comparison_pass,
           "full observable table pass fraction " +
               std::to_string(rep.comparison_pass_fraction));
  double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  c.expect(secs < 300.0, "runtime " + std::to_string(secs) + " s >= 5 min");
}

// ---- criterion 7: hybrid 2C + 2NC against the exact oracle -------------------

void criterion_7() {
  Criterion c(" 7. hybrid 2C+2NC protocol vs exact Fock oracle");
  auto t0 = std::chrono::steady_clock::now();
  RunConfig cfg = load_config("hybrid_small.json");
  cfg.output_dir = "acceptance_out/hybrid_small";
  RunReport rep = run_oracle_compare(cfg);
  c.expect(rep.diverged_fraction < 0.01,
           "diverged fraction " + std::to_string(rep.diverged_fraction));
  c.expect(rep.comparison_pass_fraction >= 0.95,
           "pass fraction " + std::to_string(rep.comparison_pass_fraction));
  double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  c.expect(secs < 900.0, "runtime " + std::to_string(secs) + " s >= 15 min");
}

// ---- criterion 8: single-particle interferometer -----------------------------

void criterion_8() {
  Criterion c(" 8. single-particle interferometer vs grid propagation");
  const double dt = 2e-3;
  const size_t n_modes = 24;
  Grid grid = build_grid(-10.0, 10.0, 513);
  std::vector<double> sweep{0.0, 0.04, 0.08};
  double pmin = 1.0, pmax = 0.0;
  for (double eps : sweep) {
    std::vector<Stage> st(5);
    st[0] = {2.0, RampShape::Hold, 1.0, 0.0, 0.0};
    st[1] = {3.0, RampShape::Smoothstep, 1.0, 12.0, eps};
    st[2] = {4.0, RampShape::Hold, 1.0, 12.0, eps};
    st[3] = {3.0, RampShape::Smoothstep, 1.0, 0.0, 0.0};
    st[4] = {2.0, RampShape::Hold, 1.0, 0.0, 0.0};
    PotentialProtocol proto(0.8, st);
    ModeBasis evo = solve_modes(grid, proto.sample(grid, 0.0), n_modes);
    OneBodyMatrix ob =
        single_particle_one_body(grid, evo, proto, dt, proto.total_duration());
    ModeBasis fin =
        solve_modes(grid, proto.sample(grid, proto.total_duration()), n_modes);
    ExcitationReport rep = excitation_probability(ob, evo, fin);
    double oracle =
        twpp_test::grid_p_excited(grid, proto, proto.total_duration(), dt, fin);
    c.expect(std::abs(rep.p_excited - oracle) < 1e-3,
             "eps=" + std::to_string(eps) + " |scenario - grid| = " +
                 std::to_string(std::abs(rep.p_excited - oracle)));
    pmin = std::min(pmin, rep.p_excited);
    pmax = std::max(pmax, rep.p_excited);
  }
  c.expect(pmax - pmin > 10.0 * 1e-3,
           "asymmetry spread " + std::to_string(pmax - pmin) +
               " not above 10x tolerance");
}

// ---- criterion 9: reproducibility --------------------------------------------

void criterion_9() {
  Criterion c(" 9. byte-identical outputs across runs and worker counts");
  RunConfig cfg = load_config("g0_harmonic.json");
  auto run_to = [&](const std::string& dir, size_t workers) {
    RunConfig r = cfg;
    r.output_dir = "acceptance_out/" + dir;
    r.workers = workers;
    std::filesystem::remove_all(r.output_dir);
    run_ensemble(r);
    return read_text_file(r.output_dir + "/occupations.csv") +
           read_text_file(r.output_dir + "/g1_pairs.csv");
  };
  std::string a = run_to("repro_a", 1);
  std::string b = run_to("repro_b", 1);
  std::string d = run_to("repro_d", 2);
  c.expect(a == b, "repeated runs differ");
  c.expect(a == d, "1-worker vs 2-worker outputs differ");
}

// ---- criterion 10: SE halves when the ensemble quadruples ---------------------

void criterion_10() {
  Criterion c("10. statistical scaling: 4x trajectories halves SEs");
  RunConfig cfg = load_config("josephson.json");
  cfg.observation_times = {0.0, 0.5, 1.0};
  cfg.dt = 1e-3;
  auto errors_at = [&](size_t n_traj) {
    RunConfig r = cfg;
    r.n_trajectories = n_traj;
    SimulationSetup s = prepare_simulation(r);
    EnsembleData data = run_trajectories(r, s);
    std::vector<double> ses;
    for (uint32_t t = 0; t < r.observation_times.size(); ++t) {
      OneBodyMatrix ob =
          one_body_density_matrix(data.acc, r.n_modes, r.n_condensate, t);
      for (size_t j = 0; j < r.n_modes; ++j) {
        for (size_t k = 0; k < r.n_modes; ++k) {
          ses.push_back(ob.errors(long(j), long(k)));
        }
      }
    }
    return ses;
  };
  std::vector<double> small = errors_at(2000);
  std::vector<double> big = errors_at(8000);
  for (size_t i = 0; i < small.size(); ++i) {
    if (small[i] < 1e-12 && big[i] < 1e-12) continue;  // exactly conserved
    double ratio = small[i] / big[i];
    if (!(ratio > 1.6 && ratio < 2.4)) {
      c.expect(false, "SE ratio " + std::to_string(ratio) + " at entry " +
                          std::to_string(i));
      break;
    }
  }
}

}  // namespace

int main(int argc, char** argv) {
  if (argc > 1) g_config_dir = argv[1];
  if (!std::filesystem::exists(g_config_dir + "/g0_harmonic.json")) {
    std::fprintf(stderr, "config directory not found: %s\n",
                 g_config_dir.c_str());
    return 64;
  }
  std::printf("acceptance suite (configs: %s)\n", g_config_dir.c_str());
  criterion_1();
  criterion_2();
  criterion_3();
  criterion_4();
  criterion_5();
  criterion_6();
  criterion_7();
  criterion_8();
  criterion_9();
  criterion_10();
  if (g_failures == 0) {
    std::printf("all criteria passed\n");
  } else {
    std::printf("%d criteria FAILED\n", g_failures);
  }
  return g_failures;
}
