#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <cstdint>
#include <functional>
#include <map>
#include <vector>

#include "twpp/correlators.hpp"
#include "twpp/lattice.hpp"

namespace twpp {

using SparseC = Eigen::SparseMatrix<cplx>;

// Truncated few-mode Fock space: every occupation vector with total boson
// number <= n_max, enumerated by total then lexicographically.
class FockBasis {
public:
  FockBasis() = default;

  size_t n_modes() const { return n_modes_; }
  size_t n_max() const { return n_max_; }
  size_t dim() const { return states_.size(); }
  const std::vector<uint16_t>& state(size_t i) const { return states_[i]; }

  // Returns dim() when the occupation vector is outside the basis.
  size_t index(const std::vector<uint16_t>& occ) const;

  friend FockBasis build_fock_basis(size_t n_modes, size_t n_max);

private:
  size_t n_modes_ = 0;
  size_t n_max_ = 0;
  std::vector<std::vector<uint16_t>> states_;
  std::map<std::vector<uint16_t>, size_t> index_;
};

// Caps: n_modes <= 4 and dim <= 2e5.
FockBasis build_fock_basis(size_t n_modes, size_t n_max);

struct FockState {
  Eigen::VectorXcd amplitudes;
  double t = 0.0;

  double norm() const { return amplitudes.norm(); }
};

// H = sum h_kl c_k^dag c_l + 1/2 sum g_klmn c_k^dag c_l^dag c_m c_n on the
// truncated basis. Conserves total number (block structure over totals).
SparseC build_hamiltonian_matrix(const CouplingTensors& tensors,
                                 const FockBasis& basis);

// Sparse hop operator c_k^dag c_l.
SparseC hop_matrix(const FockBasis& basis, size_t k, size_t l);

// Product coherent state |alpha_1> x ... x |alpha_n> truncated to the
// basis and renormalized. Throws if the truncated tail exceeds tail_tol.
FockState coherent_state(const FockBasis& basis,
                         const std::vector<cplx>& alpha,
                         double tail_tol = 1e-6);

// Time-dependent Hamiltonian as a matvec: out = H(t) * in.
using HamiltonianApply =
    std::function<void(double t, const Eigen::VectorXcd& in,
                       Eigen::VectorXcd& out)>;

HamiltonianApply static_hamiltonian(SparseC H);

// Unitary short-time propagation with piecewise-constant H per step
// (Lanczos / Krylov exponential). Throws NumericError when the norm drifts
// beyond 1e-9 of unity, advising a smaller dt.
FockState evolve_exact(const FockState& state, const HamiltonianApply& H,
                       double t_final, double dt);

// <c_j^dag c_k> for all mode pairs.
Eigen::MatrixXcd one_body_exact(const FockState& state, const FockBasis& basis);

// <c_i^dag c_j^dag c_k c_l>.
cplx quartic_exact(const FockState& state, const FockBasis& basis, size_t i,
                   size_t j, size_t k, size_t l);

// Expectation of the total number operator.
double total_number(const FockState& state, const FockBasis& basis);

// Exact correlation functions mapped to positions via the mode functions;
// zero statistical error (the errors array is all zeros).
CorrelationResult g1_exact(const FockState& state, const FockBasis& fock,
                           const ModeBasis& modes,
                           const std::vector<std::pair<size_t, size_t>>& pairs);

CorrelationResult g2_exact(const FockState& state, const FockBasis& fock,
                           const ModeBasis& modes,
                           const std::vector<std::pair<size_t, size_t>>& pairs);

}  // namespace twpp
