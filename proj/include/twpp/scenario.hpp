#pragma once

#include <Eigen/Dense>

#include <optional>
#include <string>
#include <vector>

#include "twpp/correlators.hpp"
#include "twpp/lattice.hpp"

namespace twpp {

enum class RampShape : uint8_t { Hold, Linear, Smoothstep };

RampShape ramp_from_string(const std::string& s);
const char* to_string(RampShape r);

// Stage targets in the combined trap family
//   V(x, t) = a(t) x^2/2 + b(t) exp(-x^2 / (2 sigma^2)) + eps(t) x.
// A harmonic stage is {a = omega^2, b = 0, eps = 0}; a double-well stage
// raises the Gaussian barrier b and may tilt with eps. During a stage the
// coefficients ramp from the previous stage's end values to the targets, so
// the potential is continuous in time by construction.
struct Stage {
  double duration = 0.0;
  RampShape ramp = RampShape::Hold;
  double a = 1.0;
  double b = 0.0;
  double eps = 0.0;
};

struct TrapCoeffs {
  double a = 1.0;
  double b = 0.0;
  double eps = 0.0;
};

class PotentialProtocol {
public:
  PotentialProtocol() = default;
  PotentialProtocol(double sigma, std::vector<Stage> stages);

  double sigma() const { return sigma_; }
  const std::vector<Stage>& stages() const { return stages_; }
  double total_duration() const { return total_; }

  TrapCoeffs coeffs(double t) const;  // throws on t outside [0, total]
  std::vector<double> sample(const Grid& grid, double t) const;
  bool time_dependent() const;

  // Single harmonic hold: the degenerate protocol used by static configs.
  static PotentialProtocol static_harmonic(double omega, double duration);

private:
  double sigma_ = 0.8;
  double total_ = 0.0;
  std::vector<Stage> stages_;
  std::vector<double> starts_;
};

// Solves for the Gaussian width that puts the double-well minima at +-q for
// barrier b over the a x^2/2 backbone (bisection on
// q^2 = 2 sigma^2 ln(b / (a sigma^2))).
double sigma_from_half_separation(double q, double b, double a = 1.0);

struct ExcitationReport {
  std::vector<double> populations;  // final-trap eigenmode occupations
  std::vector<double> errors;
  double p_excited = 0.0;
  double p_excited_se = 0.0;
  double total_number = 0.0;
  std::optional<Visibility> fringe;  // filled by the runner when requested
};

// Rotates the one-body matrix (evolution basis) onto the final-trap
// eigenbasis and reports mode populations and the excited fraction
// (everything above the two condensate modes).
ExcitationReport excitation_probability(const OneBodyMatrix& one_body,
                                        const ModeBasis& evolution_basis,
                                        const ModeBasis& final_basis);

// One boson through the protocol: evolves the single-particle amplitude
// vector in the mode basis (ground mode at t = 0) with per-step
// piecewise-constant h(t) exponentials, and returns the pure-state one-body
// matrix at t_final. The mode-count cap of the many-body oracle does not
// apply here, so this is the interferometer reference at large n_modes.
OneBodyMatrix single_particle_one_body(const Grid& grid,
                                       const ModeBasis& basis,
                                       const PotentialProtocol& protocol,
                                       double dt, double t_final);

}  // namespace twpp
