// Test-only oracle: single-particle Schrodinger propagation directly on the
// spatial grid (no mode truncation), with its own Lanczos stepper. Used to
// validate the scenario pipeline's excitation probabilities.
#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <vector>

#include "twpp/lattice.hpp"
#include "twpp/scenario.hpp"

namespace twpp_test {

using twpp::cplx;

// Applies the discrete single-particle Hamiltonian (same 6th-order kinetic
// stencil as the mode solver, so only mode truncation is being probed).
inline void apply_grid_h(const twpp::Grid& grid,
                         const std::vector<double>& potential,
                         const Eigen::VectorXcd& in, Eigen::VectorXcd& out) {
  static const double stencil[7] = {1.0 / 90.0,  -3.0 / 20.0, 3.0 / 2.0,
                                    -49.0 / 18.0, 3.0 / 2.0,  -3.0 / 20.0,
                                    1.0 / 90.0};
  const long n = long(grid.n_points);
  const double kfac = -0.5 / (grid.dx * grid.dx);
  out.resize(n);
  for (long i = 0; i < n; ++i) {
    cplx acc = potential[size_t(i)] * in(i);
    for (int s = -3; s <= 3; ++s) {
      long j = i + s;
      if (j < 0 || j >= n) continue;
      acc += kfac * stencil[s + 3] * in(j);
    }
    out(i) = acc;
  }
}

inline void grid_lanczos_step(const twpp::Grid& grid,
                              const std::vector<double>& potential, double dt,
                              Eigen::VectorXcd& psi) {
  const int m_cap = 24;
  std::vector<Eigen::VectorXcd> basis;
  std::vector<double> alpha, beta;
  double nrm = psi.norm();
  basis.push_back(psi / nrm);
  Eigen::VectorXcd w;
  int m = 0;
  for (; m < m_cap; ++m) {
    apply_grid_h(grid, potential, basis[m], w);
    cplx a = basis[m].dot(w);
    alpha.push_back(a.real());
    w -= a * basis[m];
    if (m > 0) w -= beta[m - 1] * basis[m - 1];
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
  Eigen::VectorXcd e1 = Eigen::VectorXcd::Zero(m);
  e1(0) = 1.0;
  Eigen::VectorXcd phases(m);
  for (int i = 0; i < m; ++i) {
    phases(i) = std::exp(cplx{0.0, -dt * eig.eigenvalues()(i)});
  }
  Eigen::VectorXcd small =
      eig.eigenvectors().cast<cplx>() *
      (phases.asDiagonal() * (eig.eigenvectors().transpose().cast<cplx>() * e1));
  psi.setZero();
  for (int i = 0; i < m; ++i) psi += small(i) * basis[i];
  psi *= nrm;
}

// Propagates the ground state of the t = 0 trap through the protocol and
// reports the excited fraction in the final-trap eigenbasis.
inline double grid_p_excited(const twpp::Grid& grid,
                             const twpp::PotentialProtocol& proto,
                             double t_final, double dt,
                             const twpp::ModeBasis& final_basis) {
  auto v0 = proto.sample(grid, 0.0);
  twpp::ModeBasis initial = twpp::solve_modes(grid, v0, 1);
  Eigen::VectorXcd psi(long(grid.n_points));
  for (size_t i = 0; i < grid.n_points; ++i) psi(long(i)) = initial.modes[0][i];
  psi *= std::sqrt(grid.dx);  // unit vector on the grid

  auto steps = size_t(std::llround(t_final / dt));
  for (size_t s = 0; s < steps; ++s) {
    auto v = proto.sample(grid, double(s) * dt);
    grid_lanczos_step(grid, v, dt, psi);
  }

  double total = 0.0, excited = 0.0;
  for (size_t k = 0; k < final_basis.n_modes; ++k) {
    cplx ov{0.0, 0.0};
    for (size_t i = 0; i < grid.n_points; ++i) {
      ov += final_basis.modes[k][i] * psi(long(i));
    }
    double p = std::norm(ov) * grid.dx;
    total += p;
    if (k >= final_basis.n_condensate) excited += p;
  }
  return excited / total;
}

}  // namespace twpp_test
