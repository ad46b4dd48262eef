#include "doctest.h"

#include "twpp/dynamics.hpp"

#include <cmath>

using namespace twpp;

namespace {

SdeSystem harmonic_sde(double energy) {
  CouplingTensors t;
  t.n_modes = 1;
  t.g_strength = 0.0;
  t.h = {cplx{energy, 0.0}};
  std::vector<Sector> sectors{Sector::Wigner};
  auto gen = apply_rules(expand_hamiltonian(t, 2), sectors);
  auto trunc = truncate(gen);
  return extract_sde(trunc.kept, 1, trunc.report);
}

SdeSystem zero_sde(size_t n_modes) {
  return extract_sde(DiffTermMap{}, n_modes);
}

}  // namespace

TEST_CASE("initial sampler: coherent Wigner statistics over 1e5 draws") {
  InitialStateSpec spec;
  spec.n_modes = 4;
  spec.alpha0 = {cplx{10.0, 0.0}, cplx{0.0, 0.0}};
  const size_t M = 100000;

  cplx sum{0.0, 0.0};
  double sum_sq = 0.0;
  cplx sum_sq_c{0.0, 0.0};
  for (size_t i = 0; i < M; ++i) {
    PhasePoint p = sample_initial(spec, mix_seed(42, i));
    REQUIRE(p.alpha.size() == 8);
    cplx eta = p.alpha[0] - spec.alpha0[0];
    sum += p.alpha[0];
    sum_sq += std::norm(eta);
    sum_sq_c += eta * eta;
    // plus block conjugate, non-condensate block exactly zero
    CHECK(p.alpha[4] == std::conj(p.alpha[0]));
    CHECK(p.alpha[5] == std::conj(p.alpha[1]));
    CHECK(p.alpha[2] == cplx{0.0, 0.0});
    CHECK(p.alpha[3] == cplx{0.0, 0.0});
    CHECK(p.alpha[6] == cplx{0.0, 0.0});
    CHECK(p.alpha[7] == cplx{0.0, 0.0});
  }
  double mean_err = std::abs(sum / double(M) - cplx{10.0, 0.0});
  CHECK(mean_err < 3.0 * std::sqrt(0.5 / double(M)));
  double var = sum_sq / double(M);
  // Var(|eta|^2) = E|eta|^4 - (E|eta|^2)^2 = 2s^2 - s^2 with s = 1/2
  CHECK(std::abs(var - 0.5) < 3.0 * 0.5 / std::sqrt(double(M)));
  // <eta^2> = 0 (no anomalous width)
  CHECK(std::abs(sum_sq_c / double(M)) < 3.0 * 0.5 / std::sqrt(double(M)) * 2.0);
}

TEST_CASE("noise moments match the delta-correlation discretization") {
  const double dt = 0.01;
  const size_t M = 1000000;
  const size_t channels = 2;
  double s0 = 0.0, s1 = 0.0, sq0 = 0.0, cross = 0.0, lag = 0.0;
  double prev0 = 0.0;
  for (size_t step = 0; step < M; ++step) {
    NoiseSlice n = generate_noise(channels, dt, 987, step);
    s0 += n.values[0];
    s1 += n.values[1];
    sq0 += n.values[0] * n.values[0];
    cross += n.values[0] * n.values[1];
    if (step > 0) lag += prev0 * n.values[0];
    prev0 = n.values[0];
  }
  const double Md = double(M);
  const double var = 1.0 / dt;  // 100
  // mean: SE = sqrt(var/M)
  CHECK(std::abs(s0 / Md) < 3.0 * std::sqrt(var / Md));
  CHECK(std::abs(s1 / Md) < 3.0 * std::sqrt(var / Md));
  // variance: SE = var * sqrt(2/M)
  CHECK(std::abs(sq0 / Md - var) < 3.0 * var * std::sqrt(2.0 / Md));
  // independent channels and steps: covariance SE = var / sqrt(M)
  CHECK(std::abs(cross / Md) < 3.0 * var / std::sqrt(Md));
  CHECK(std::abs(lag / Md) < 3.0 * var / std::sqrt(Md));
}

TEST_CASE("noise is a pure function of (seed, step)") {
  NoiseSlice a = generate_noise(6, 0.01, 7, 123);
  NoiseSlice b = generate_noise(6, 0.01, 7, 123);
  CHECK(a.values == b.values);
  NoiseSlice c = generate_noise(6, 0.01, 8, 123);
  CHECK(a.values != c.values);
  NoiseSlice d = generate_noise(6, 0.01, 7, 124);
  CHECK(a.values != d.values);
}

TEST_CASE("step_ito: linear rotation matches exp(-i E t) to Euler accuracy") {
  SdeSystem sde = harmonic_sde(0.5);
  PhasePoint p;
  p.alpha = {cplx{1.0, 0.0}, cplx{1.0, 0.0}};
  const double dt = 1e-4;
  NoiseSlice no_noise;
  no_noise.dt = dt;
  for (int s = 0; s < 10000; ++s) {
    REQUIRE(step_ito(p, sde, dt, no_noise, 1e12) == StepStatus::Ok);
  }
  cplx expect = std::exp(cplx{0.0, -0.5 * 1.0});  // t = 1
  CHECK(std::abs(p.alpha[0] - expect) < 5e-4);
  CHECK(std::abs(p.alpha[1] - std::conj(expect)) < 5e-4);
}

TEST_CASE("step_ito: zero drift and diffusion leave the point unchanged") {
  SdeSystem sde = zero_sde(2);
  PhasePoint p;
  p.alpha = {cplx{0.3, -0.4}, cplx{1.0, 2.0}, cplx{0.3, 0.4}, cplx{1.0, -2.0}};
  PhasePoint q = p;
  NoiseSlice no_noise;
  step_ito(p, sde, 0.1, no_noise, 1e12);
  CHECK(p.alpha == q.alpha);
}

TEST_CASE("divergence cap flags the offending step") {
  SdeSystem sde = harmonic_sde(0.5);
  PhasePoint p;
  p.alpha = {cplx{1.0, 0.0}, cplx{1.0, 0.0}};
  NoiseSlice no_noise;
  CHECK(step_ito(p, sde, 1e-3, no_noise, 0.0) == StepStatus::Diverged);
}

TEST_CASE("schedule validation") {
  Schedule s = make_schedule(1e-3, {0.0, 0.5, 1.0});
  CHECK(s.total_steps == 1000);
  CHECK(s.observation_steps == std::vector<size_t>{0, 500, 1000});
  CHECK_THROWS_AS(make_schedule(1e-3, {0.0005}), ConfigError);
  CHECK_THROWS_AS(make_schedule(1e-3, {1.0, 0.5}), ConfigError);
  CHECK_THROWS_AS(make_schedule(0.0, {1.0}), ConfigError);
}

TEST_CASE("evolve_trajectory: determinism, norm conservation, divergence") {
  SdeSystem sde = harmonic_sde(0.5);
  Schedule sched = make_schedule(1e-3, {0.0, 2.5, 5.0, 10.0});
  InitialStateSpec spec;
  spec.n_modes = 1;
  spec.n_condensate = 1;
  spec.alpha0 = {cplx{2.0, 0.0}};

  SUBCASE("identical (initial, seed) gives bit-identical results") {
    PhasePoint init = sample_initial(spec, 99);
    TrajectoryResult a = evolve_trajectory(init, sde, nullptr, sched, 99, 1e12);
    TrajectoryResult b = evolve_trajectory(init, sde, nullptr, sched, 99, 1e12);
    REQUIRE(a.samples.size() == b.samples.size());
    for (size_t i = 0; i < a.samples.size(); ++i) {
      CHECK(a.samples[i].alpha == b.samples[i].alpha);
    }
  }

  SUBCASE("|alpha(t)| constant to 1e-3 over t in [0, 10] for g = 0") {
    // Euler bound on the norm drift: |alpha| E^2 dt t / 2 ~ 2.5e-4 here.
    Schedule fine = make_schedule(2e-4, {0.0, 2.5, 5.0, 10.0});
    InitialStateSpec unit = spec;
    unit.alpha0 = {cplx{1.0, 0.0}};
    PhasePoint init = sample_initial(unit, 7);
    TrajectoryResult r = evolve_trajectory(init, sde, nullptr, fine, 7, 1e12);
    REQUIRE(r.status == TrajectoryStatus::Completed);
    REQUIRE(r.samples.size() == 4);
    double n0 = std::abs(r.samples[0].alpha[0]);
    for (const PhasePoint& p : r.samples) {
      CHECK(std::abs(std::abs(p.alpha[0]) - n0) < 1e-3);
    }
  }

  SUBCASE("divergence_cap = 0 diverges at step 0") {
    PhasePoint init = sample_initial(spec, 7);
    TrajectoryResult r = evolve_trajectory(init, sde, nullptr, sched, 7, 0.0);
    CHECK(r.status == TrajectoryStatus::Diverged);
    CHECK(r.diverged_step == 0);
    CHECK(r.samples.empty());
  }
}

TEST_CASE("ensemble mean error halves when dt halves (weak order 1)") {
  // g = 0, E = 0.5: exact mean alpha(t) = alpha0 exp(-i E t). The Euler
  // error is deterministic here (no noise), so one trajectory suffices.
  SdeSystem sde = harmonic_sde(0.5);
  const double T = 2.0;
  auto run_err = [&](double dt) {
    Schedule sched = make_schedule(dt, {T});
    PhasePoint init;
    init.alpha = {cplx{3.0, 0.0}, cplx{3.0, 0.0}};
    TrajectoryResult r = evolve_trajectory(init, sde, nullptr, sched, 1, 1e12);
    cplx expect = 3.0 * std::exp(cplx{0.0, -0.5 * T});
    return std::abs(r.samples[0].alpha[0] - expect);
  };
  double e1 = run_err(1e-3);
  double e2 = run_err(5e-4);
  double ratio = e1 / e2;
  CHECK(ratio > 1.8);
  CHECK(ratio < 2.2);
}

TEST_CASE("condensate pair conjugacy is exact to round-off for g = 0") {
  SdeSystem sde = harmonic_sde(0.5);
  Schedule sched = make_schedule(1e-3, {5.0});
  InitialStateSpec spec;
  spec.n_modes = 1;
  spec.n_condensate = 1;
  spec.alpha0 = {cplx{2.0, 1.0}};
  PhasePoint init = sample_initial(spec, 5);
  TrajectoryResult r = evolve_trajectory(init, sde, nullptr, sched, 5, 1e12);
  REQUIRE(r.status == TrajectoryStatus::Completed);
  const PhasePoint& p = r.samples[0];
  CHECK(std::abs(p.alpha[1] - std::conj(p.alpha[0])) < 1e-12);
}
