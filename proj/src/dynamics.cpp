#include "twpp/dynamics.hpp"

#include <cmath>
#include <numbers>

namespace twpp {

namespace {

constexpr uint64_t kPhiloxM = 0xD2B74407B1CE6E93ULL;
constexpr uint64_t kWeyl = 0x9E3779B97F4A7C15ULL;

// Counter domains keep independent variate streams from one key.
constexpr uint64_t kDomainNoise = 0x0000000000000000ULL;
constexpr uint64_t kDomainInitial = 0x8000000000000000ULL;

inline double to_unit(uint64_t x) {
  // (0, 1]: never 0, so log() below is safe.
  return double((x >> 11) + 1) * 0x1.0p-53;
}

}  // namespace

std::pair<uint64_t, uint64_t> philox2x64(uint64_t c0, uint64_t c1,
                                         uint64_t key) {
  for (int round = 0; round < 10; ++round) {
    unsigned __int128 prod = (unsigned __int128)kPhiloxM * c0;
    uint64_t hi = uint64_t(prod >> 64);
    uint64_t lo = uint64_t(prod);
    c0 = hi ^ key ^ c1;
    c1 = lo;
    key += kWeyl;
  }
  return {c0, c1};
}

std::pair<double, double> normal_pair(uint64_t c0, uint64_t c1, uint64_t key) {
  auto [a, b] = philox2x64(c0, c1, key);
  double u1 = to_unit(a);
  double u2 = to_unit(b);
  double r = std::sqrt(-2.0 * std::log(u1));
  double phi = 2.0 * std::numbers::pi * u2;
  return {r * std::cos(phi), r * std::sin(phi)};
}

uint64_t mix_seed(uint64_t master_seed, uint64_t index) {
  auto [a, b] = philox2x64(index, 0x7261757374ULL, master_seed);
  (void)b;
  return a;
}

double PhasePoint::norm_sq() const {
  double acc = 0.0;
  for (const cplx& a : alpha) acc += std::norm(a);
  return acc;
}

bool PhasePoint::finite() const {
  for (const cplx& a : alpha) {
    if (!std::isfinite(a.real()) || !std::isfinite(a.imag())) return false;
  }
  return true;
}

void generate_noise_into(NoiseSlice& slice, size_t n_channels, double dt,
                         uint64_t seed, uint64_t step_index) {
  if (!(dt > 0.0)) throw ConfigError("generate_noise: dt must be positive");
  slice.dt = dt;
  slice.values.resize(n_channels);
  const double scale = 1.0 / std::sqrt(dt);
  for (size_t c = 0; c < n_channels; c += 2) {
    auto [z0, z1] =
        normal_pair(kDomainNoise | step_index, uint64_t(c / 2), seed);
    slice.values[c] = z0 * scale;
    if (c + 1 < n_channels) slice.values[c + 1] = z1 * scale;
  }
}

NoiseSlice generate_noise(size_t n_channels, double dt, uint64_t seed,
                          uint64_t step_index) {
  NoiseSlice slice;
  generate_noise_into(slice, n_channels, dt, seed, step_index);
  return slice;
}

PhasePoint sample_initial(const InitialStateSpec& spec, uint64_t seed) {
  if (spec.alpha0.size() != spec.n_condensate) {
    throw ConfigError("sample_initial: need one coherent amplitude per condensate mode");
  }
  if (spec.n_condensate > spec.n_modes) {
    throw ConfigError("sample_initial: more condensate modes than modes");
  }
  PhasePoint p;
  p.t = 0.0;
  p.alpha.assign(2 * spec.n_modes, cplx{0.0, 0.0});
  for (size_t k = 0; k < spec.n_condensate; ++k) {
    auto [z0, z1] = normal_pair(kDomainInitial | k, 0, seed);
    // eta = (z0 + i z1)/2: <|eta|^2> = 1/2, <eta^2> = 0.
    cplx a = spec.alpha0[k] + cplx{0.5 * z0, 0.5 * z1};
    p.alpha[k] = a;
    p.alpha[spec.n_modes + k] = std::conj(a);
  }
  return p;
}

StepStatus step_ito(PhasePoint& point, const SdeSystem& sde, double dt,
                    const NoiseSlice& noise, double divergence_cap,
                    const StepTerms& terms, StepScratch& scratch) {
  const size_t nv = sde.n_vars;
  const size_t n = sde.n_modes;
  if (point.alpha.size() != nv) {
    throw ConfigError("step_ito: phase point dimension mismatch");
  }
  if (noise.values.size() != sde.noise.n_channels()) {
    throw ConfigError("step_ito: noise slice has wrong channel count");
  }

  scratch.delta.assign(nv, cplx{0.0, 0.0});
  cplx* delta = scratch.delta.data();
  sde.drift_eval(point.alpha.data(), delta);
  if (terms.h) {
    const Eigen::MatrixXcd& h = *terms.h;
    for (size_t k = 0; k < n; ++k) {
      cplx acc{0.0, 0.0}, accp{0.0, 0.0};
      for (size_t l = 0; l < n; ++l) {
        acc += h(long(k), long(l)) * point.alpha[l];
        accp += std::conj(h(long(k), long(l))) * point.alpha[n + l];
      }
      delta[k] += cplx{0.0, -1.0} * acc;
      delta[n + k] += cplx{0.0, 1.0} * accp;
    }
  }
  for (size_t v = 0; v < nv; ++v) delta[v] *= dt;

  if (!noise.values.empty()) {
    scratch.dw.resize(noise.values.size());
    for (size_t c = 0; c < scratch.dw.size(); ++c) {
      scratch.dw[c] = noise.values[c] * dt;
    }
    sde.noise.accumulate(point.alpha.data(), terms.extra_diffusion,
                         scratch.dw.data(), delta, scratch.noise);
  }

  for (size_t v = 0; v < nv; ++v) point.alpha[v] += delta[v];
  point.t += dt;

  if (!point.finite() || point.norm_sq() > divergence_cap) {
    return StepStatus::Diverged;
  }
  return StepStatus::Ok;
}

StepStatus step_ito(PhasePoint& point, const SdeSystem& sde, double dt,
                    const NoiseSlice& noise, double divergence_cap,
                    const StepTerms& terms) {
  StepScratch scratch;
  return step_ito(point, sde, dt, noise, divergence_cap, terms, scratch);
}

Schedule make_schedule(double dt, const std::vector<double>& observation_times) {
  if (!(dt > 0.0)) throw ConfigError("schedule: dt must be positive");
  if (observation_times.empty()) {
    throw ConfigError("schedule: need at least one observation time");
  }
  Schedule s;
  s.dt = dt;
  s.observation_times = observation_times;
  double prev = 0.0;
  size_t step = 0;
  for (double t : observation_times) {
    if (t < prev - 1e-12) {
      throw ConfigError("schedule: observation times must be ascending");
    }
    double span = t - prev;
    auto k = size_t(std::llround(span / dt));
    if (std::abs(double(k) * dt - span) > 1e-9) {
      throw ConfigError("schedule: dt does not divide interval ending at t=" +
                        std::to_string(t));
    }
    step += k;
    s.observation_steps.push_back(step);
    prev = double(step) * dt;
  }
  s.total_steps = step;
  return s;
}

TrajectoryResult evolve_trajectory(const PhasePoint& initial,
                                   const SdeSystem& sde,
                                   const StepProvider* provider,
                                   const Schedule& schedule, uint64_t seed,
                                   double divergence_cap) {
  TrajectoryResult result;
  result.seed = seed;

  PhasePoint point = initial;
  point.t = 0.0;

  if (!point.finite() || point.norm_sq() > divergence_cap) {
    result.status = TrajectoryStatus::Diverged;
    result.diverged_step = 0;
    return result;
  }

  const size_t n_channels = sde.noise.n_channels();
  size_t next_obs = 0;
  NoiseSlice noise;
  noise.dt = schedule.dt;
  StepScratch scratch;
  for (size_t step = 0; step <= schedule.total_steps; ++step) {
    while (next_obs < schedule.observation_steps.size() &&
           schedule.observation_steps[next_obs] == step) {
      PhasePoint sample = point;
      sample.t = schedule.observation_times[next_obs];
      result.samples.push_back(std::move(sample));
      ++next_obs;
    }
    if (step == schedule.total_steps) break;

    if (n_channels > 0) {
      generate_noise_into(noise, n_channels, schedule.dt, seed, step);
    }
    StepTerms terms;
    if (provider) terms = provider->at_step(step);
    if (step_ito(point, sde, schedule.dt, noise, divergence_cap, terms,
                 scratch) == StepStatus::Diverged) {
      result.status = TrajectoryStatus::Diverged;
      result.diverged_step = step;
      return result;
    }
  }
  return result;
}

}  // namespace twpp
