#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <map>
#include <optional>
#include <vector>

#include "twpp/algebra.hpp"
#include "twpp/lattice.hpp"
#include "twpp/linalg.hpp"
#include "twpp/polynomial.hpp"

namespace twpp {

enum class Sector : uint8_t { Wigner, PositiveP };

// Phase variables: index k is alpha_k, index n_modes + k is alpha_k^+.
inline uint32_t var_alpha(uint32_t mode) { return mode; }
inline uint32_t var_alpha_plus(uint32_t mode, size_t n_modes) {
  return uint32_t(n_modes) + mode;
}

// One term of the expanded evolution generator in the canonical form
//   coeff * d^deriv ( x^mono * P ).
// Keeping all derivatives outside the monomial makes drift/diffusion
// extraction a direct read-off of the Fokker-Planck convention.
struct DiffTerm {
  MultiIndex deriv;
  MultiIndex mono;
  cplx coeff;
};

using DiffKey = std::pair<MultiIndex, MultiIndex>;
using DiffTermMap = std::map<DiffKey, cplx>;

std::vector<DiffTerm> to_terms(const DiffTermMap& m);

// --- Hamiltonian expansion ----------------------------------------------

// Emits every h_{kl} c_k^dag c_l monomial and every (g_{klmn}/2)
// c_k^dag c_l^dag c_m c_n monomial, classified by condensate content.
// Weights below 1e-14 are dropped.
std::vector<OperatorTerm> expand_hamiltonian(const CouplingTensors& tensors,
                                             size_t n_condensate);

// --- Correspondence-rule rewriting ---------------------------------------

// Rewrites one side of the commutator: the product `factors` (written
// order) acting on the given side of rho, with the innermost rule applied
// first (the factor adjacent to rho). Returns merged canonical terms
// including the overall `coeff`.
DiffTermMap rewrite_side(const std::vector<OperatorFactor>& factors,
                         cplx coeff, Side side,
                         const std::vector<Sector>& sectors);

// Full generator of dP/dt for [H, rho]/(i hbar): for each term,
// -i * (term rho) + i * (rho term), merged across all terms.
DiffTermMap apply_rules(const std::vector<OperatorTerm>& terms,
                        const std::vector<Sector>& sectors);

// --- Truncation -----------------------------------------------------------

struct TruncationReport {
  std::vector<DiffTerm> dropped;
  double max_abs_coeff() const;
  size_t size() const { return dropped.size(); }
};

struct TruncationResult {
  DiffTermMap kept;
  TruncationReport report;
};

// Moves every term of derivative order above max_order into the report.
// max_order is fixed at 2 by the truncated Wigner scheme; the parameter
// exists for diagnostics.
TruncationResult truncate(const DiffTermMap& terms, uint32_t max_order = 2);

// --- SDE extraction --------------------------------------------------------

// Sparse symmetric matrix of polynomials, stored for v <= w.
class SymPolyMatrix {
public:
  SymPolyMatrix() = default;
  explicit SymPolyMatrix(size_t n) : n_(n) {}

  size_t dim() const { return n_; }
  void add(uint32_t v, uint32_t w, const Poly& p);
  const Poly* find(uint32_t v, uint32_t w) const;
  bool is_zero() const { return entries_.empty(); }

  const std::map<std::pair<uint32_t, uint32_t>, Poly>& entries() const {
    return entries_;
  }

private:
  size_t n_ = 0;
  std::map<std::pair<uint32_t, uint32_t>, Poly> entries_;
};

// Reentrant per-worker buffers for pointwise noise evaluation.
struct NoiseScratch {
  Eigen::MatrixXcd Dblk;
  Eigen::MatrixXcd dblk;
  SymFactorWorkspace factor;
};

// Compiled pointwise evaluator for the noise factor d with D = d d^T.
// The diffusion support is grouped into connected blocks; scalar blocks use
// an analytic square root, larger blocks a pointwise Takagi factorization.
// Channel count and ordering are fixed at build time so that a noise slice
// maps deterministically onto variables.
class NoiseModel {
public:
  struct Block {
    std::vector<uint32_t> vars;      // global variable indices, ascending
    uint32_t channel_base = 0;       // first channel owned by this block
    bool scalar = false;             // 1x1 block: d = sqrt(D)
    std::vector<CompiledPoly> entries;  // row-major m x m block of D
  };

  NoiseModel() = default;

  size_t n_channels() const { return n_channels_; }
  const std::vector<Block>& blocks() const { return blocks_; }
  bool trivial() const { return blocks_.empty(); }

  // alpha += d(vars) * dw, where dw has one entry per channel. extra, when
  // present, holds a per-block constant addition to D (time-dependent
  // single-particle cross coupling), indexed like Block::entries.
  void accumulate(const cplx* vars,
                  const std::vector<Eigen::MatrixXcd>* extra,
                  const double* dw, cplx* alpha, NoiseScratch& scratch) const;

  // Evaluates d as a dense (n_vars x n_channels) matrix at one point.
  Eigen::MatrixXcd dense_factor(
      const cplx* vars, size_t n_vars,
      const std::vector<Eigen::MatrixXcd>* extra = nullptr) const;

private:
  friend NoiseModel build_noise_model(
      const SymPolyMatrix&, const std::vector<std::pair<uint32_t, uint32_t>>&);
  std::vector<Block> blocks_;
  size_t n_channels_ = 0;
};

NoiseModel build_noise_model(
    const SymPolyMatrix& D,
    const std::vector<std::pair<uint32_t, uint32_t>>& extra_support = {});

struct SdeSystem {
  size_t n_modes = 0;
  size_t n_vars = 0;
  std::vector<Poly> drift;              // A_alpha, one per variable
  std::vector<CompiledPoly> drift_fast;
  SymPolyMatrix diffusion;              // D_{alpha beta}
  NoiseModel noise;
  TruncationReport report;

  void drift_eval(const cplx* vars, cplx* out) const {
    for (size_t v = 0; v < n_vars; ++v) out[v] = drift_fast[v].eval(vars);
  }
};

// Reads the drift vector and diffusion matrix off the truncated generator
// (Eq. FFPE sign conventions: -d/dphi A and +1/2 d^2/dphi^2 D), builds the
// noise factor, and attaches the truncation report.
SdeSystem extract_sde(const DiffTermMap& terms, size_t n_modes,
                      TruncationReport report = {});

// Convenience: full pipeline from tensors to SdeSystem.
SdeSystem derive_sde(const CouplingTensors& tensors, size_t n_condensate);

// Residual check ||d d^T - D||_max at the given phase points (the spec's
// factor_diffusion probe contract). Throws NumericError naming the first
// failing point.
double verify_noise_factor(const SdeSystem& sde,
                           const std::vector<std::vector<cplx>>& points,
                           double tol = 1e-10);

}  // namespace twpp
