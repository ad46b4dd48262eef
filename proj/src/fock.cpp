#include "twpp/fock.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

namespace twpp {

namespace {

constexpr size_t kDimCap = 200000;
constexpr size_t kModeCap = 4;

void enumerate_rec(std::vector<uint16_t>& occ, size_t mode, size_t remaining,
                   std::vector<std::vector<uint16_t>>& out) {
  if (mode + 1 == occ.size()) {
    occ[mode] = uint16_t(remaining);
    out.push_back(occ);
    return;
  }
  for (size_t n = 0; n <= remaining; ++n) {
    occ[mode] = uint16_t(n);
    enumerate_rec(occ, mode + 1, remaining - n, out);
  }
}

}  // namespace

size_t FockBasis::index(const std::vector<uint16_t>& occ) const {
  auto it = index_.find(occ);
  return it == index_.end() ? dim() : it->second;
}

FockBasis build_fock_basis(size_t n_modes, size_t n_max) {
  if (n_modes == 0 || n_modes > kModeCap) {
    throw ConfigError("build_fock_basis: n_modes must be in [1, 4]");
  }
  // dim = C(n_max + n_modes, n_modes); compute with overflow care.
  double dim_est = 1.0;
  for (size_t i = 1; i <= n_modes; ++i) {
    dim_est *= double(n_max + i) / double(i);
  }
  if (dim_est > double(kDimCap)) {
    throw ConfigError("build_fock_basis: dimension " +
                      std::to_string(size_t(dim_est)) + " exceeds cap " +
                      std::to_string(kDimCap));
  }

  FockBasis basis;
  basis.n_modes_ = n_modes;
  basis.n_max_ = n_max;
  std::vector<uint16_t> occ(n_modes, 0);
  // Lexicographic within each total: enumerate_rec assigns the first mode
  // the smallest share first.
  for (size_t total = 0; total <= n_max; ++total) {
    enumerate_rec(occ, 0, total, basis.states_);
  }
  for (size_t i = 0; i < basis.states_.size(); ++i) {
    basis.index_[basis.states_[i]] = i;
  }
  return basis;
}

SparseC hop_matrix(const FockBasis& basis, size_t k, size_t l) {
  std::vector<Eigen::Triplet<cplx>> trips;
  std::vector<uint16_t> occ;
  for (size_t i = 0; i < basis.dim(); ++i) {
    occ = basis.state(i);
    if (occ[l] == 0) continue;
    double amp = std::sqrt(double(occ[l]));
    occ[l] -= 1;
    amp *= std::sqrt(double(occ[k] + 1));
    occ[k] += 1;
    size_t j = basis.index(occ);
    if (j < basis.dim()) trips.emplace_back(long(j), long(i), cplx{amp, 0.0});
  }
  SparseC m(long(basis.dim()), long(basis.dim()));
  m.setFromTriplets(trips.begin(), trips.end());
  return m;
}

SparseC build_hamiltonian_matrix(const CouplingTensors& tensors,
                                 const FockBasis& basis) {
  const size_t n = basis.n_modes();
  if (tensors.n_modes != n) {
    throw ConfigError("build_hamiltonian_matrix: tensors restricted to basis modes");
  }
  std::vector<Eigen::Triplet<cplx>> trips;
  std::vector<uint16_t> occ;
  for (size_t i = 0; i < basis.dim(); ++i) {
    const auto& src = basis.state(i);
    // single-particle: c_k^dag c_l
    for (size_t k = 0; k < n; ++k) {
      for (size_t l = 0; l < n; ++l) {
        cplx w = tensors.h_at(k, l);
        if (w == cplx{0.0, 0.0}) continue;
        occ = src;
        if (occ[l] == 0) continue;
        double amp = std::sqrt(double(occ[l]));
        occ[l] -= 1;
        amp *= std::sqrt(double(occ[k] + 1));
        occ[k] += 1;
        size_t j = basis.index(occ);
        if (j < basis.dim()) trips.emplace_back(long(j), long(i), w * amp);
      }
    }
    // interaction: (g_klmq / 2) c_k^dag c_l^dag c_m c_q
    if (tensors.g_strength != 0.0) {
      for (size_t k = 0; k < n; ++k) {
        for (size_t l = 0; l < n; ++l) {
          for (size_t m = 0; m < n; ++m) {
            for (size_t q = 0; q < n; ++q) {
              double g = tensors.g_at(k, l, m, q);
              if (g == 0.0) continue;
              occ = src;
              if (occ[q] == 0) continue;
              double amp = std::sqrt(double(occ[q]));
              occ[q] -= 1;
              if (occ[m] == 0) continue;
              amp *= std::sqrt(double(occ[m]));
              occ[m] -= 1;
              amp *= std::sqrt(double(occ[l] + 1));
              occ[l] += 1;
              amp *= std::sqrt(double(occ[k] + 1));
              occ[k] += 1;
              size_t j = basis.index(occ);
              if (j < basis.dim()) {
                trips.emplace_back(long(j), long(i), cplx{0.5 * g * amp, 0.0});
              }
            }
          }
        }
      }
    }
  }
  SparseC H(long(basis.dim()), long(basis.dim()));
  H.setFromTriplets(trips.begin(), trips.end());
  return H;
}

FockState coherent_state(const FockBasis& basis, const std::vector<cplx>& alpha,
                         double tail_tol) {
  if (alpha.size() != basis.n_modes()) {
    throw ConfigError("coherent_state: one amplitude per mode required");
  }
  FockState st;
  st.amplitudes = Eigen::VectorXcd::Zero(long(basis.dim()));
  // log-amplitude per mode to keep factorials under control
  for (size_t i = 0; i < basis.dim(); ++i) {
    const auto& occ = basis.state(i);
    cplx amp{1.0, 0.0};
    for (size_t k = 0; k < occ.size(); ++k) {
      cplx a = alpha[k];
      double n = double(occ[k]);
      if (occ[k] > 0 && a == cplx{0.0, 0.0}) {
        amp = {0.0, 0.0};
        break;
      }
      cplx pw{1.0, 0.0};
      for (uint16_t p = 0; p < occ[k]; ++p) pw *= a;
      amp *= pw / std::sqrt(std::tgamma(n + 1.0));
    }
    st.amplitudes(long(i)) = amp;
  }
  double total = 0.0;
  for (const cplx& a : alpha) total += std::norm(a);
  double weight = st.amplitudes.squaredNorm() * std::exp(-total);
  if (1.0 - weight > tail_tol) {
    throw ConfigError("coherent_state: truncation tail " +
                      std::to_string(1.0 - weight) + " exceeds tolerance; raise n_max");
  }
  st.amplitudes.normalize();
  return st;
}

HamiltonianApply static_hamiltonian(SparseC H) {
  auto held = std::make_shared<SparseC>(std::move(H));
  return [held](double, const Eigen::VectorXcd& in, Eigen::VectorXcd& out) {
    out.noalias() = (*held) * in;
  };
}

namespace {

// One Krylov step: psi <- exp(-i H dt) psi for Hermitian H given as matvec.
void lanczos_step(const HamiltonianApply& H, double t, double dt,
                  Eigen::VectorXcd& psi, int m_max) {
  const long dim = psi.size();
  const int m_cap = int(std::min<long>(m_max, dim));
  std::vector<Eigen::VectorXcd> basis;
  basis.reserve(m_cap);
  std::vector<double> alpha, beta;

  double nrm = psi.norm();
  basis.push_back(psi / nrm);
  Eigen::VectorXcd w(dim);
  int m = 0;
  for (; m < m_cap; ++m) {
    H(t, basis[m], w);
    cplx a = basis[m].dot(w);
    alpha.push_back(a.real());
    w -= a * basis[m];
    if (m > 0) w -= beta[m - 1] * basis[m - 1];
    // full reorthogonalization: cheap at these Krylov sizes
    for (int j = 0; j <= m; ++j) w -= basis[j].dot(w) * basis[j];
    double b = w.norm();
    if (b < 1e-12 || m + 1 == m_cap) {
      ++m;
      break;
    }
    beta.push_back(b);
    basis.push_back(w / b);
  }

  Eigen::MatrixXd T = Eigen::MatrixXd::Zero(m, m);
  for (int i = 0; i < m; ++i) {
    T(i, i) = alpha[i];
    if (i + 1 < m) T(i, i + 1) = T(i + 1, i) = beta[i];
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(T);
  Eigen::VectorXcd phases(m);
  for (int i = 0; i < m; ++i) {
    phases(i) = std::exp(cplx{0.0, -dt * eig.eigenvalues()(i)});
  }
  Eigen::VectorXcd e1 = Eigen::VectorXcd::Zero(m);
  e1(0) = 1.0;
  Eigen::VectorXcd small =
      eig.eigenvectors().cast<cplx>() *
      (phases.asDiagonal() * (eig.eigenvectors().transpose().cast<cplx>() * e1));
  psi.setZero();
  for (int i = 0; i < m; ++i) psi += small(i) * basis[i];
  psi *= nrm;
}

}  // namespace

FockState evolve_exact(const FockState& state, const HamiltonianApply& H,
                       double t_final, double dt) {
  if (!(dt > 0.0)) throw ConfigError("evolve_exact: dt must be positive");
  FockState st = state;
  double span = t_final - st.t;
  if (span < -1e-12) throw ConfigError("evolve_exact: t_final precedes state time");
  auto steps = size_t(std::llround(span / dt));
  if (std::abs(double(steps) * dt - span) > 1e-9) {
    throw ConfigError("evolve_exact: dt does not divide evolution span");
  }
  for (size_t s = 0; s < steps; ++s) {
    double t = state.t + double(s) * dt;
    lanczos_step(H, t, dt, st.amplitudes, 24);
    double nrm = st.amplitudes.norm();
    if (std::abs(nrm - 1.0) > 1e-9) {
      throw NumericError(
          "evolve_exact: norm drift " + std::to_string(std::abs(nrm - 1.0)) +
          " exceeds 1e-9; use a smaller dt");
    }
  }
  st.t = t_final;
  return st;
}

Eigen::MatrixXcd one_body_exact(const FockState& state, const FockBasis& basis) {
  const size_t n = basis.n_modes();
  std::vector<Eigen::VectorXcd> lowered(n);
  std::vector<uint16_t> occ;
  for (size_t k = 0; k < n; ++k) {
    lowered[k] = Eigen::VectorXcd::Zero(long(basis.dim()));
  }
  for (size_t i = 0; i < basis.dim(); ++i) {
    cplx amp = state.amplitudes(long(i));
    if (amp == cplx{0.0, 0.0}) continue;
    for (size_t k = 0; k < n; ++k) {
      occ = basis.state(i);
      if (occ[k] == 0) continue;
      double w = std::sqrt(double(occ[k]));
      occ[k] -= 1;
      size_t j = basis.index(occ);
      if (j < basis.dim()) lowered[k](long(j)) += w * amp;
    }
  }
  Eigen::MatrixXcd M(n, n);
  for (size_t j = 0; j < n; ++j) {
    for (size_t k = 0; k < n; ++k) {
      M(long(j), long(k)) = lowered[j].dot(lowered[k]);
    }
  }
  return M;
}

cplx quartic_exact(const FockState& state, const FockBasis& basis, size_t i,
                   size_t j, size_t k, size_t l) {
  const size_t dim = basis.dim();
  Eigen::VectorXcd ket = Eigen::VectorXcd::Zero(long(dim));
  Eigen::VectorXcd bra = Eigen::VectorXcd::Zero(long(dim));
  std::vector<uint16_t> occ;
  for (size_t s = 0; s < dim; ++s) {
    cplx amp = state.amplitudes(long(s));
    if (amp == cplx{0.0, 0.0}) continue;
    // ket side: c_k c_l |psi>
    occ = basis.state(s);
    if (occ[l] > 0) {
      double w = std::sqrt(double(occ[l]));
      occ[l] -= 1;
      if (occ[k] > 0) {
        w *= std::sqrt(double(occ[k]));
        occ[k] -= 1;
        size_t tgt = basis.index(occ);
        if (tgt < dim) ket(long(tgt)) += w * amp;
      }
    }
    // bra side: c_j c_i |psi>
    occ = basis.state(s);
    if (occ[i] > 0) {
      double w = std::sqrt(double(occ[i]));
      occ[i] -= 1;
      if (occ[j] > 0) {
        w *= std::sqrt(double(occ[j]));
        occ[j] -= 1;
        size_t tgt = basis.index(occ);
        if (tgt < dim) bra(long(tgt)) += w * amp;
      }
    }
  }
  return bra.dot(ket);
}

double total_number(const FockState& state, const FockBasis& basis) {
  double acc = 0.0;
  for (size_t i = 0; i < basis.dim(); ++i) {
    const auto& occ = basis.state(i);
    double tot = 0.0;
    for (uint16_t n : occ) tot += double(n);
    acc += tot * std::norm(state.amplitudes(long(i)));
  }
  return acc;
}

CorrelationResult g1_exact(const FockState& state, const FockBasis& fock,
                           const ModeBasis& modes,
                           const std::vector<std::pair<size_t, size_t>>& pairs) {
  if (fock.n_modes() != modes.n_modes) {
    throw ConfigError("g1_exact: mode count mismatch");
  }
  Eigen::MatrixXcd M = one_body_exact(state, fock);
  CorrelationResult res;
  res.time = state.t;
  res.ordering = Ordering::NormalCorrected;
  for (const auto& [ri, si] : pairs) {
    cplx val{0.0, 0.0};
    for (size_t j = 0; j < modes.n_modes; ++j) {
      for (size_t k = 0; k < modes.n_modes; ++k) {
        val += M(long(j), long(k)) * modes.modes[j][ri] * modes.modes[k][si];
      }
    }
    res.coords.push_back({modes.x_min + modes.dx * double(ri),
                          modes.x_min + modes.dx * double(si)});
    res.values.push_back(val);
    res.errors.push_back(0.0);
  }
  return res;
}

CorrelationResult g2_exact(const FockState& state, const FockBasis& fock,
                           const ModeBasis& modes,
                           const std::vector<std::pair<size_t, size_t>>& pairs) {
  if (fock.n_modes() != modes.n_modes) {
    throw ConfigError("g2_exact: mode count mismatch");
  }
  const size_t n = modes.n_modes;
  CorrelationResult res;
  res.time = state.t;
  for (const auto& [r1_req, r2_req] : pairs) {
    const size_t r1 = std::min(r1_req, r2_req);
    const size_t r2 = std::max(r1_req, r2_req);
    cplx val{0.0, 0.0};
    for (size_t i = 0; i < n; ++i) {
      for (size_t j = 0; j < n; ++j) {
        for (size_t k = 0; k < n; ++k) {
          for (size_t l = 0; l < n; ++l) {
            double w = modes.modes[i][r1] * modes.modes[j][r2] *
                       modes.modes[k][r2] * modes.modes[l][r1];
            if (w == 0.0) continue;
            val += w * quartic_exact(state, fock, i, j, k, l);
          }
        }
      }
    }
    res.coords.push_back({modes.x_min + modes.dx * double(r1_req),
                          modes.x_min + modes.dx * double(r2_req)});
    res.values.push_back(val);
    res.errors.push_back(0.0);
  }
  return res;
}

}  // namespace twpp
