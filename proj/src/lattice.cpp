#include "twpp/lattice.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>

namespace twpp {

namespace {

// 6th-order central stencil for d^2/dx^2. Hard walls: off-grid points are
// zero, consistent with modes that vanish at the boundary.
constexpr double kStencil[7] = {1.0 / 90.0,  -3.0 / 20.0, 3.0 / 2.0,
                                -49.0 / 18.0, 3.0 / 2.0,  -3.0 / 20.0,
                                1.0 / 90.0};

}  // namespace

size_t Grid::nearest_index(double pos) const {
  double u = (pos - x_min) / dx;
  long i = std::lround(u);
  i = std::clamp<long>(i, 0, long(n_points) - 1);
  return size_t(i);
}

Grid build_grid(double x_min, double x_max, size_t n_points) {
  if (!(x_max > x_min)) {
    throw ConfigError("build_grid: x_max must exceed x_min");
  }
  if (n_points < 16) {
    throw ConfigError("build_grid: need at least 16 points, got " +
                      std::to_string(n_points));
  }
  Grid g;
  g.x_min = x_min;
  g.x_max = x_max;
  g.n_points = n_points;
  g.dx = (x_max - x_min) / double(n_points - 1);
  g.x.resize(n_points);
  for (size_t i = 0; i < n_points; ++i) g.x[i] = x_min + double(i) * g.dx;
  return g;
}

ModeBasis solve_modes(const Grid& grid, std::span<const double> potential,
                      size_t n_modes) {
  const size_t n = grid.n_points;
  if (potential.size() != n) {
    throw ConfigError("solve_modes: potential sampled on wrong grid");
  }
  if (n_modes > n / 4) {
    throw ConfigError("solve_modes: n_modes exceeds n_points/4 resolution guard");
  }
  if (n_modes == 0) throw ConfigError("solve_modes: n_modes must be positive");

  Eigen::MatrixXd H = Eigen::MatrixXd::Zero(long(n), long(n));
  const double kfac = -0.5 / (grid.dx * grid.dx);
  for (size_t i = 0; i < n; ++i) {
    for (int s = -3; s <= 3; ++s) {
      long j = long(i) + s;
      if (j < 0 || j >= long(n)) continue;
      H(long(i), j) += kfac * kStencil[s + 3];
    }
    H(long(i), long(i)) += potential[i];
  }

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(H);
  if (solver.info() != Eigen::Success) {
    throw NumericError("solve_modes: eigensolver failed to converge");
  }

  ModeBasis basis;
  basis.n_modes = n_modes;
  basis.n_points = n;
  basis.dx = grid.dx;
  basis.x_min = grid.x_min;
  basis.energies.resize(n_modes);
  basis.modes.resize(n_modes);
  const double inv_sqrt_dx = 1.0 / std::sqrt(grid.dx);
  for (size_t k = 0; k < n_modes; ++k) {
    basis.energies[k] = solver.eigenvalues()(long(k));
    auto col = solver.eigenvectors().col(long(k));
    std::vector<double>& phi = basis.modes[k];
    phi.resize(n);
    // Eigen returns unit vectors; rescale so sum phi^2 dx = 1.
    for (size_t i = 0; i < n; ++i) phi[i] = col(long(i)) * inv_sqrt_dx;

    double integral = 0.0, peak = 0.0;
    for (double v : phi) {
      integral += v * grid.dx;
      peak = std::max(peak, std::abs(v));
    }
    double sign = 0.0;
    if (std::abs(integral) > 1e-8) {
      sign = integral > 0 ? 1.0 : -1.0;
    } else {
      // Odd parity: orient by the first antinode from the x_min side.
      for (double v : phi) {
        if (std::abs(v) > 0.5 * peak) {
          sign = v > 0 ? 1.0 : -1.0;
          break;
        }
      }
    }
    if (sign < 0) {
      for (double& v : phi) v = -v;
    }
  }
  return basis;
}

CouplingTensors compute_tensors(const ModeBasis& basis,
                                std::span<const double> potential,
                                double g_strength) {
  if (!std::isfinite(g_strength)) {
    throw ConfigError("compute_tensors: g_strength must be finite");
  }
  const size_t n = basis.n_modes;
  const size_t np = basis.n_points;
  if (potential.size() != np) {
    throw ConfigError("compute_tensors: potential sampled on wrong grid");
  }

  CouplingTensors t;
  t.n_modes = n;
  t.g_strength = g_strength;

  // h = kinetic + potential in the mode basis. The kinetic part needs the
  // grid spacing only, which the basis carries.
  Grid pseudo;
  pseudo.dx = basis.dx;
  pseudo.n_points = np;
  t.h = kinetic_matrix(basis, pseudo);
  std::vector<cplx> pot = project_potential(basis, potential);
  for (size_t i = 0; i < n * n; ++i) t.h[i] += pot[i];

  t.g4.assign(n * n * n * n, 0.0);
  if (g_strength != 0.0) {
    for (size_t k = 0; k < n; ++k) {
      for (size_t l = k; l < n; ++l) {
        std::vector<double> pair_kl(np);
        for (size_t i = 0; i < np; ++i) {
          pair_kl[i] = basis.modes[k][i] * basis.modes[l][i];
        }
        for (size_t m = 0; m < n; ++m) {
          for (size_t q = m; q < n; ++q) {
            double acc = 0.0;
            for (size_t i = 0; i < np; ++i) {
              acc += pair_kl[i] * basis.modes[m][i] * basis.modes[q][i];
            }
            double val = g_strength * acc * basis.dx;
            for (auto [a, b] : {std::pair{k, l}, std::pair{l, k}}) {
              for (auto [c, d] : {std::pair{m, q}, std::pair{q, m}}) {
                t.g4[((a * n + b) * n + c) * n + d] = val;
              }
            }
          }
        }
      }
    }
  }
  return t;
}

std::vector<cplx> project_potential(const ModeBasis& basis,
                                    std::span<const double> potential) {
  const size_t n = basis.n_modes;
  const size_t np = basis.n_points;
  std::vector<cplx> h(n * n, cplx{0.0, 0.0});
  for (size_t k = 0; k < n; ++k) {
    for (size_t l = k; l < n; ++l) {
      double acc = 0.0;
      for (size_t i = 0; i < np; ++i) {
        acc += basis.modes[k][i] * potential[i] * basis.modes[l][i];
      }
      h[k * n + l] = h[l * n + k] = acc * basis.dx;
    }
  }
  return h;
}

std::vector<cplx> kinetic_matrix(const ModeBasis& basis, const Grid& grid) {
  const size_t n = basis.n_modes;
  const size_t np = basis.n_points;
  const double kfac = -0.5 / (grid.dx * grid.dx);
  std::vector<cplx> h(n * n, cplx{0.0, 0.0});
  std::vector<double> tmp(np);
  for (size_t l = 0; l < n; ++l) {
    for (size_t i = 0; i < np; ++i) {
      double acc = 0.0;
      for (int s = -3; s <= 3; ++s) {
        long j = long(i) + s;
        if (j < 0 || j >= long(np)) continue;
        acc += kStencil[s + 3] * basis.modes[l][size_t(j)];
      }
      tmp[i] = kfac * acc;
    }
    for (size_t k = 0; k <= l; ++k) {
      double acc = 0.0;
      for (size_t i = 0; i < np; ++i) acc += basis.modes[k][i] * tmp[i];
      h[k * n + l] = h[l * n + k] = acc * grid.dx;
    }
  }
  return h;
}

std::vector<cplx> assemble_field(const ModeBasis& basis,
                                 std::span<const cplx> alpha,
                                 FieldSector sector) {
  const size_t n = basis.n_modes;
  if (alpha.size() != 2 * n) {
    throw ConfigError("assemble_field: amplitude vector has wrong dimension");
  }
  const bool plus = sector == FieldSector::CPlus || sector == FieldSector::NCPlus;
  const bool cond = sector == FieldSector::C || sector == FieldSector::CPlus;
  const size_t k0 = cond ? 0 : basis.n_condensate;
  const size_t k1 = cond ? basis.n_condensate : n;
  std::vector<cplx> field(basis.n_points, cplx{0.0, 0.0});
  for (size_t k = k0; k < k1; ++k) {
    cplx a = alpha[plus ? n + k : k];
    if (a == cplx{0.0, 0.0}) continue;
    for (size_t i = 0; i < basis.n_points; ++i) {
      field[i] += a * basis.modes[k][i];
    }
  }
  return field;
}

}  // namespace twpp
