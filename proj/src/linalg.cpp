#include "twpp/linalg.hpp"

#include <cmath>

namespace twpp {

// Real-embedding construction: for S = X + iY (X, Y real symmetric) the
// real symmetric matrix M = [[X, Y], [Y, -X]] has spectrum {+sigma, -sigma};
// an eigenvector (u; v) at +sigma yields w = u + iv with S conj(w) = sigma w,
// and the w from any real orthonormal eigenbasis are complex-orthonormal.
// Collecting columns sqrt(sigma) * w gives d with d d^T = S.
void takagi_factor(const Eigen::MatrixXcd& S, TakagiWorkspace& ws,
                   Eigen::MatrixXcd& d, double tol_rel, double tol_abs) {
  const long n = S.rows();
  if (S.cols() != n) throw ConfigError("takagi_factor: matrix not square");

  d.resize(n, n);
  d.setZero();
  const double scale = S.cwiseAbs().maxCoeff();
  if (scale == 0.0) return;

  const double sym_resid = (S - S.transpose()).cwiseAbs().maxCoeff();
  if (sym_resid > 1e-10 * scale) {
    throw NumericError("takagi_factor: input not complex symmetric");
  }

  ws.M.resize(2 * n, 2 * n);
  ws.M.topLeftCorner(n, n) = S.real();
  ws.M.topRightCorner(n, n) = S.imag();
  ws.M.bottomLeftCorner(n, n) = S.imag();
  ws.M.bottomRightCorner(n, n) = -S.real();

  ws.solver.compute(ws.M);
  if (ws.solver.info() != Eigen::Success) {
    throw NumericError("takagi_factor: eigensolver failed");
  }

  // Eigenvalues ascend; the top n are the +sigma branch.
  long col = 0;
  for (long j = 2 * n - 1; j >= n && col < n; --j, ++col) {
    double sigma = ws.solver.eigenvalues()(j);
    if (sigma <= tol_abs) continue;
    auto u = ws.solver.eigenvectors().col(j).head(n);
    auto v = ws.solver.eigenvectors().col(j).tail(n);
    double root = std::sqrt(sigma);
    for (long i = 0; i < n; ++i) {
      d(i, col) = root * cplx(u(i), v(i));
    }
  }

  ws.dd.noalias() = d * d.transpose();
  const double resid = (ws.dd - S).cwiseAbs().maxCoeff();
  if (resid > std::max(tol_abs, tol_rel * scale)) {
    throw NumericError("takagi_factor: residual " + std::to_string(resid) +
                       " exceeds tolerance");
  }
}

Eigen::MatrixXcd takagi_factor(const Eigen::MatrixXcd& S, double tol_rel,
                               double tol_abs) {
  TakagiWorkspace ws;
  Eigen::MatrixXcd d;
  takagi_factor(S, ws, d, tol_rel, tol_abs);
  return d;
}

namespace {

// 2x2 complex symmetric Takagi through the fixed-size real embedding.
void takagi_2x2(const cplx& a, const cplx& c, const cplx& b,
                Eigen::Matrix2cd& E) {
  Eigen::Matrix4d M;
  M << a.real(), c.real(), a.imag(), c.imag(),
       c.real(), b.real(), c.imag(), b.imag(),
       a.imag(), c.imag(), -a.real(), -c.real(),
       c.imag(), b.imag(), -c.real(), -b.real();
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix4d> eig(M);
  E.setZero();
  for (int col = 0; col < 2; ++col) {
    double sigma = eig.eigenvalues()(3 - col);
    if (sigma <= 0.0) continue;
    double root = std::sqrt(sigma);
    for (int i = 0; i < 2; ++i) {
      E(i, col) = root * cplx(eig.eigenvectors()(i, 3 - col),
                              eig.eigenvectors()(i + 2, 3 - col));
    }
  }
}

}  // namespace

void complex_symmetric_factor(const Eigen::MatrixXcd& S_in,
                              SymFactorWorkspace& ws, Eigen::MatrixXcd& d,
                              double tol_rel, double tol_abs) {
  const long m = S_in.rows();
  d.resize(m, m);
  d.setZero();
  const double scale = S_in.cwiseAbs().maxCoeff();
  if (scale == 0.0) return;

  ws.S = S_in;
  Eigen::MatrixXcd& S = ws.S;
  ws.perm.resize(size_t(m));
  for (long i = 0; i < m; ++i) ws.perm[size_t(i)] = int(i);
  ws.d.resize(m, m);
  ws.d.setZero();

  auto swap_sym = [&](long a, long b) {
    if (a == b) return;
    S.row(a).swap(S.row(b));
    S.col(a).swap(S.col(b));
    ws.d.row(a).swap(ws.d.row(b));
    std::swap(ws.perm[size_t(a)], ws.perm[size_t(b)]);
  };

  const double tol_zero = 1e-14 * scale;
  long k = 0;
  bool ok = true;
  while (k < m && ok) {
    long pdiag = k;
    double dmax = 0.0;
    for (long i = k; i < m; ++i) {
      double v = std::abs(S(i, i));
      if (v > dmax) {
        dmax = v;
        pdiag = i;
      }
    }
    long pr = k, pc = k;
    double omax = 0.0;
    for (long i = k; i < m; ++i) {
      for (long j = i + 1; j < m; ++j) {
        double v = std::abs(S(i, j));
        if (v > omax) {
          omax = v;
          pr = i;
          pc = j;
        }
      }
    }
    if (std::max(dmax, omax) <= tol_zero) break;

    if (dmax >= 0.33 * omax) {
      swap_sym(k, pdiag);
      cplx root = std::sqrt(S(k, k));
      for (long i = k; i < m; ++i) ws.d(i, k) = S(i, k) / root;
      for (long i = k + 1; i < m; ++i) {
        for (long j = k + 1; j <= i; ++j) {
          cplx upd = ws.d(i, k) * ws.d(j, k);
          S(i, j) -= upd;
          if (i != j) S(j, i) -= upd;
        }
      }
      k += 1;
    } else {
      swap_sym(k, pr);
      if (pc == k) pc = pr;
      swap_sym(k + 1, pc);
      Eigen::Matrix2cd E;
      takagi_2x2(S(k, k), S(k, k + 1), S(k + 1, k + 1), E);
      cplx det = E(0, 0) * E(1, 1) - E(0, 1) * E(1, 0);
      if (std::abs(det) < 1e-12 * scale) {
        ok = false;
        break;
      }
      ws.d(k, k) = E(0, 0);
      ws.d(k, k + 1) = E(0, 1);
      ws.d(k + 1, k) = E(1, 0);
      ws.d(k + 1, k + 1) = E(1, 1);
      // W E^T = S(k+2:, k:k+2)  ->  W = S_block * E^{-T}
      for (long i = k + 2; i < m; ++i) {
        cplx s0 = S(i, k), s1 = S(i, k + 1);
        ws.d(i, k) = (s0 * E(1, 1) - s1 * E(1, 0)) / det;
        ws.d(i, k + 1) = (s1 * E(0, 0) - s0 * E(0, 1)) / det;
      }
      for (long i = k + 2; i < m; ++i) {
        for (long j = k + 2; j <= i; ++j) {
          cplx upd = ws.d(i, k) * ws.d(j, k) + ws.d(i, k + 1) * ws.d(j, k + 1);
          S(i, j) -= upd;
          if (i != j) S(j, i) -= upd;
        }
      }
      k += 2;
    }
  }

  if (ok) {
    for (long i = 0; i < m; ++i) {
      d.row(ws.perm[size_t(i)]) = ws.d.row(i);
    }
    ws.S.noalias() = d * d.transpose();
    double resid = (ws.S - S_in).cwiseAbs().maxCoeff();
    if (resid <= std::max(tol_abs, tol_rel * scale)) return;
  }
  // Elimination growth spoiled the residual; the Takagi route always works.
  takagi_factor(S_in, ws.takagi, d, tol_rel, tol_abs);
}

}  // namespace twpp
