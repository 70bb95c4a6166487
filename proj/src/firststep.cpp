#include "manycov/firststep.hpp"

#include <algorithm>
#include <string>

namespace manycov {

FirstStepFit fit_least_squares(const Eigen::MatrixXd& Z,
                               const Eigen::VectorXd& r) {
  const Eigen::Index n = Z.rows();
  const Eigen::Index k = Z.cols();
  if (r.size() != n) throw data_error("Z and r row counts differ");
  if (n < 2) throw data_error("need at least 2 observations");

  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(Z);
  // Pivots below 1e-12 * max(n,k) relative to the largest one count as
  // zero, which makes the detected rank stable under column scaling.
  cod.setThreshold(1e-12 * double(std::max(n, k)));

  FirstStepFit fit;
  fit.rank = cod.rank();
  if (fit.rank == 0)
    throw numerical_error("design matrix has rank 0");
  fit.beta_hat = cod.solve(r);
  fit.Q = cod.householderQ() * Eigen::MatrixXd::Identity(n, fit.rank);
  fit.mu_hat = fit.Q * (fit.Q.transpose() * r);
  fit.leverage = fit.Q.rowwise().squaredNorm();
  return fit;
}

Eigen::VectorXd hat_column(const FirstStepFit& fit, Eigen::Index ell) {
  if (ell < 0 || ell >= fit.n())
    throw config_error("hat_column: index " + std::to_string(ell) +
                       " out of range");
  if (fit.hat.size() > 0) return fit.hat.col(ell);
  return fit.Q * fit.Q.row(ell).transpose();
}

Eigen::VectorXd project(const FirstStepFit& fit, const Eigen::VectorXd& v) {
  if (v.size() != fit.n()) throw config_error("project: length mismatch");
  return fit.Q * (fit.Q.transpose() * v);
}

Eigen::VectorXd loo_mu(const FirstStepFit& fit, const Eigen::VectorXd& r,
                       Eigen::Index ell) {
  if (ell < 0 || ell >= fit.n())
    throw config_error("loo_mu: index " + std::to_string(ell) +
                       " out of range");
  const double pll = fit.leverage(ell);
  if (pll > 1.0 - 1e-10)
    throw numerical_error(
        "leave-one-out fit is not identified: observation " +
        std::to_string(ell) + " has leverage 1");
  // mu^{(l)}_i = mu_i + (mu_l - r_l) / (1 - pi_ll) * pi_il
  const double scale = (fit.mu_hat(ell) - r(ell)) / (1.0 - pll);
  return fit.mu_hat + scale * hat_column(fit, ell);
}

void build_hat_cache(FirstStepFit& fit) {
  if (fit.hat.size() > 0) return;
  if (fit.n() > 4000)
    throw config_error("hat cache limited to n <= 4000");
  fit.hat = fit.Q * fit.Q.transpose();
}

BalanceDiagnostics balance_diagnostics(const FirstStepFit& fit) {
  BalanceDiagnostics d;
  d.sum_sq_leverage = fit.leverage.squaredNorm();
  d.max_leverage = fit.leverage.maxCoeff();
  d.k_ratio = double(fit.rank) / double(fit.n());
  for (Eigen::Index i = 0; i < fit.n(); ++i) {
    const double p = fit.leverage(i);
    if (p > 1.0 - 1e-10) {
      d.has_saturated = true;
    } else {
      d.max_inv_gap = std::max(d.max_inv_gap, 1.0 / (1.0 - p));
    }
  }
  return d;
}

}  // namespace manycov
