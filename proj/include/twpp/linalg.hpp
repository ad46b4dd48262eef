#pragma once

#include <Eigen/Dense>

#include <vector>

#include "twpp/common.hpp"

namespace twpp {

// Reusable buffers for the factorization below; safe to keep per worker
// thread and reuse across calls of varying size.
struct TakagiWorkspace {
  Eigen::MatrixXd M;
  Eigen::MatrixXcd dd;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver;
};

// Factors a complex symmetric matrix S as d * d^T (Autonne-Takagi).
// Works for singular and indefinite S; the result has the same shape as S
// with rank-deficient directions as zero columns, so the column count is
// stable across inputs. Column order follows descending singular value,
// which makes the factor deterministic.
//
// Throws NumericError if the residual ||d d^T - S||_max exceeds
// max(tol_abs, tol_rel * ||S||_max).
void takagi_factor(const Eigen::MatrixXcd& S, TakagiWorkspace& ws,
                   Eigen::MatrixXcd& d, double tol_rel = 1e-10,
                   double tol_abs = 1e-12);

Eigen::MatrixXcd takagi_factor(const Eigen::MatrixXcd& S,
                               double tol_rel = 1e-10,
                               double tol_abs = 1e-12);

// Fast path for the integrator: pivoted complex-symmetric elimination
// (1x1 and 2x2 pivots, deterministic pivot order), residual-checked, with
// the Takagi route as the fallback when elimination growth spoils the
// residual. Same contract: d d^T = S within tolerance.
struct SymFactorWorkspace {
  Eigen::MatrixXcd S;
  Eigen::MatrixXcd d;
  std::vector<int> perm;
  TakagiWorkspace takagi;
};

void complex_symmetric_factor(const Eigen::MatrixXcd& S,
                              SymFactorWorkspace& ws, Eigen::MatrixXcd& d,
                              double tol_rel = 1e-10, double tol_abs = 1e-12);

}  // namespace twpp
