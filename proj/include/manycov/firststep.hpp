#pragma once

#include <Eigen/Dense>

#include "manycov/dataset.hpp"
#include "manycov/errors.hpp"

namespace manycov {

// Least-squares first step r ~ Z. Q holds an orthonormal basis of the
// fitted column space, so projections, hat columns and leave-one-out
// updates all run in O(n * rank) without refitting.
struct FirstStepFit {
  Eigen::VectorXd beta_hat;  // minimum-norm coefficients, length k
  Eigen::VectorXd mu_hat;    // fitted values Z beta_hat, length n
  Eigen::VectorXd leverage;  // hat-matrix diagonal pi_ii, length n
  Eigen::Index rank = 0;
  Eigen::MatrixXd Q;         // n x rank orthonormal basis of col(Z)
  Eigen::MatrixXd hat;       // full hat matrix; empty unless cached

  Eigen::Index n() const { return mu_hat.size(); }
};

// Summary of how concentrated the design is. max_inv_gap is
// max 1/(1 - pi_ii); saturated observations (pi_ii = 1 within 1e-10)
// set the has_saturated flag instead of producing an infinity.
struct BalanceDiagnostics {
  double sum_sq_leverage = 0.0;  // sum of pi_ii^2
  double max_leverage = 0.0;
  double max_inv_gap = 0.0;
  bool has_saturated = false;
  double k_ratio = 0.0;          // rank / n
};

// Rank-revealing fit; rank-deficient Z gets the minimum-norm solution.
FirstStepFit fit_least_squares(const Eigen::MatrixXd& Z,
                               const Eigen::VectorXd& r);

// Column ell of the hat matrix, O(n * rank).
Eigen::VectorXd hat_column(const FirstStepFit& fit, Eigen::Index ell);

// Projection of v onto the fitted column space, O(n * rank).
Eigen::VectorXd project(const FirstStepFit& fit, const Eigen::VectorXd& v);

// Fitted values after deleting observation ell, via the rank-one
// leverage update. Throws numerical_error when pi_ll is 1 within 1e-10,
// since the deleted fit is not identified there.
Eigen::VectorXd loo_mu(const FirstStepFit& fit, const Eigen::VectorXd& r,
                       Eigen::Index ell);

// Materialises the full n x n hat matrix into fit.hat so repeated
// column access becomes a row read. Guarded to n <= 4000 (32 MB).
void build_hat_cache(FirstStepFit& fit);

BalanceDiagnostics balance_diagnostics(const FirstStepFit& fit);

}  // namespace manycov
