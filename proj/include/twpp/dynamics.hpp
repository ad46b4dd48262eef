#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <vector>

#include "twpp/ffpe.hpp"

namespace twpp {

// --- Counter-based random numbers -----------------------------------------
//
// Philox 2x64-10. Every variate is a pure function of (key, counter), so
// trajectories can be scheduled on any worker in any order and reproduce
// bit-identically.

std::pair<uint64_t, uint64_t> philox2x64(uint64_t c0, uint64_t c1,
                                         uint64_t key);

// Standard-normal pair derived from one Philox call via Box-Muller.
std::pair<double, double> normal_pair(uint64_t c0, uint64_t c1, uint64_t key);

// Stable per-trajectory key from (master seed, trajectory index).
uint64_t mix_seed(uint64_t master_seed, uint64_t index);

// --- Phase-space state ------------------------------------------------------

struct PhasePoint {
  std::vector<cplx> alpha;  // (alpha_1..alpha_n, alpha_1^+..alpha_n^+)
  double t = 0.0;

  size_t n_modes() const { return alpha.size() / 2; }
  double norm_sq() const;
  bool finite() const;
};

struct NoiseSlice {
  std::vector<double> values;  // one Gaussian per channel, variance 1/dt
  double dt = 0.0;
};

// Discretized Gaussian-Markov noise: independent real Gaussians with mean 0
// and variance 1/dt, reproducible per (seed, step_index).
NoiseSlice generate_noise(size_t n_channels, double dt, uint64_t seed,
                          uint64_t step_index);
void generate_noise_into(NoiseSlice& slice, size_t n_channels, double dt,
                         uint64_t seed, uint64_t step_index);

// --- Initial state ----------------------------------------------------------

struct InitialStateSpec {
  size_t n_modes = 0;
  size_t n_condensate = 2;
  std::vector<cplx> alpha0;  // condensate coherent amplitudes, size 2
};

// Condensate modes: coherent-state Wigner sampling, alpha = alpha0 + eta
// with eta complex Gaussian of variance 1/2 and alpha^+ = conj(alpha).
// Non-condensate modes: positive-P vacuum, exactly zero.
PhasePoint sample_initial(const InitialStateSpec& spec, uint64_t seed);

// --- Time stepping -----------------------------------------------------------

// Optional time-dependent pieces for one step: a single-particle matrix
// applied as drift -i h alpha (and +i h^T alpha^+), and per-noise-block
// constant additions to the diffusion matrix.
struct StepTerms {
  const Eigen::MatrixXcd* h = nullptr;
  const std::vector<Eigen::MatrixXcd>* extra_diffusion = nullptr;
};

// Supplies the time-dependent pieces for step j (covering t_j -> t_j+dt).
class StepProvider {
public:
  virtual ~StepProvider() = default;
  virtual StepTerms at_step(size_t step) const = 0;
};

enum class StepStatus : uint8_t { Ok, Diverged };

// Per-worker buffers reused across steps.
struct StepScratch {
  std::vector<cplx> delta;
  std::vector<double> dw;
  NoiseScratch noise;
};

// One Euler-Maruyama update in Ito form: drift and noise factor evaluated
// at the step start, alpha += A dt + d * dW with dW = noise.values * dt.
StepStatus step_ito(PhasePoint& point, const SdeSystem& sde, double dt,
                    const NoiseSlice& noise, double divergence_cap,
                    const StepTerms& terms, StepScratch& scratch);

StepStatus step_ito(PhasePoint& point, const SdeSystem& sde, double dt,
                    const NoiseSlice& noise, double divergence_cap,
                    const StepTerms& terms = {});

struct Schedule {
  double dt = 0.0;
  std::vector<double> observation_times;  // ascending, first may be 0
  std::vector<size_t> observation_steps;  // step index of each time
  size_t total_steps = 0;
};

// Validates that dt divides every observation interval within 1e-9.
Schedule make_schedule(double dt, const std::vector<double>& observation_times);

enum class TrajectoryStatus : uint8_t { Completed, Diverged };

struct TrajectoryResult {
  std::vector<PhasePoint> samples;  // one per observation time reached
  TrajectoryStatus status = TrajectoryStatus::Completed;
  size_t diverged_step = 0;
  uint64_t seed = 0;
};

TrajectoryResult evolve_trajectory(const PhasePoint& initial,
                                   const SdeSystem& sde,
                                   const StepProvider* provider,
                                   const Schedule& schedule, uint64_t seed,
                                   double divergence_cap);

}  // namespace twpp
