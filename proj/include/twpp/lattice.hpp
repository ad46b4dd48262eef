#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "twpp/common.hpp"

namespace twpp {

// Uniform 1D spatial grid in oscillator units (hbar = m = omega_ref = 1).
struct Grid {
  double x_min = 0.0;
  double x_max = 0.0;
  size_t n_points = 0;
  double dx = 0.0;
  std::vector<double> x;  // x[i] = x_min + i*dx

  size_t nearest_index(double pos) const;
};

Grid build_grid(double x_min, double x_max, size_t n_points);

// Orthonormal trap eigenmodes on the grid. The first n_condensate (= 2)
// modes form the condensate sector, the rest the non-condensate sector.
struct ModeBasis {
  size_t n_modes = 0;
  size_t n_condensate = 2;
  size_t n_points = 0;
  double dx = 0.0;
  double x_min = 0.0;
  std::vector<double> energies;            // nondecreasing
  std::vector<std::vector<double>> modes;  // modes[k][i] = phi_k(x_i)

  bool is_condensate(size_t k) const { return k < n_condensate; }
};

// Lowest n_modes eigenpairs of -1/2 d^2/dx^2 + V(x) with hard walls,
// discretely orthonormalized, sign-fixed (positive integral, or positive
// first antinode from the x_min side for odd-parity modes).
ModeBasis solve_modes(const Grid& grid, std::span<const double> potential,
                      size_t n_modes);

// Mode-space Hamiltonian data: single-particle matrix h_{kl} and the bare
// interaction overlap tensor g_{klmn} = g * sum_i phi_k phi_l phi_m phi_n dx.
// The 1/2 in front of the quartic term is applied by the FFPE engine when it
// emits Hamiltonian monomials, not stored here.
struct CouplingTensors {
  size_t n_modes = 0;
  double g_strength = 0.0;
  std::vector<cplx> h;     // row-major n x n, Hermitian
  std::vector<double> g4;  // dense n^4, index ((k*n + l)*n + m)*n + n2

  cplx h_at(size_t k, size_t l) const { return h[k * n_modes + l]; }
  double g_at(size_t k, size_t l, size_t m, size_t n) const {
    return g4[((k * n_modes + l) * n_modes + m) * n_modes + n];
  }
};

CouplingTensors compute_tensors(const ModeBasis& basis,
                                std::span<const double> potential,
                                double g_strength);

// Projects V(x) onto the mode basis: h[k][l] = sum_i phi_k V phi_l dx.
// Used to refresh the single-particle matrix as the trap changes shape.
std::vector<cplx> project_potential(const ModeBasis& basis,
                                    std::span<const double> potential);

// Kinetic part of h alone (potential-independent).
std::vector<cplx> kinetic_matrix(const ModeBasis& basis, const Grid& grid);

enum class FieldSector : uint8_t { C, NC, CPlus, NCPlus };

// Realizes psi_C(x) = sum_{k<2} alpha_k phi_k(x) and the NC / plus-field
// analogues from the stacked amplitude vector (alpha_1..alpha_n,
// alpha_1^+..alpha_n^+).
std::vector<cplx> assemble_field(const ModeBasis& basis,
                                 std::span<const cplx> alpha,
                                 FieldSector sector);

}  // namespace twpp
