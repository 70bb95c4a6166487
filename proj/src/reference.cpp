#include "manycov/reference.hpp"

namespace manycov {
namespace reference {

Eigen::VectorXd fit_normal_equations(const Eigen::MatrixXd& Z,
                                     const Eigen::VectorXd& r) {
  Eigen::BDCSVD<Eigen::MatrixXd> svd(Z, Eigen::ComputeThinU | Eigen::ComputeThinV);
  svd.setThreshold(1e-12 * double(std::max(Z.rows(), Z.cols())));
  return svd.solve(r);
}

Eigen::MatrixXd hat_matrix(const Eigen::MatrixXd& Z) {
  Eigen::BDCSVD<Eigen::MatrixXd> svd(Z, Eigen::ComputeThinU);
  svd.setThreshold(1e-12 * double(std::max(Z.rows(), Z.cols())));
  const Eigen::Index rank = svd.rank();
  const Eigen::MatrixXd U1 = svd.matrixU().leftCols(rank);
  return U1 * U1.transpose();
}

Eigen::VectorXd loo_refit_mu(const Eigen::MatrixXd& Z,
                             const Eigen::VectorXd& r, Eigen::Index ell) {
  const Eigen::Index n = Z.rows();
  Eigen::MatrixXd Zr(n - 1, Z.cols());
  Eigen::VectorXd rr(n - 1);
  Eigen::Index at = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (i == ell) continue;
    Zr.row(at) = Z.row(i);
    rr(at) = r(i);
    ++at;
  }
  return Z * fit_normal_equations(Zr, rr);
}

Dataset drop_row(const Dataset& data, Eigen::Index ell) {
  const Eigen::Index n = data.n();
  Dataset out;
  out.y.resize(n - 1, data.y.cols());
  out.r.resize(n - 1);
  out.Z.resize(n - 1, data.Z.cols());
  Eigen::Index at = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (i == ell) continue;
    out.y.row(at) = data.y.row(i);
    out.r(at) = data.r(i);
    out.Z.row(at) = data.Z.row(i);
    ++at;
  }
  return out;
}

Eigen::VectorXd loo_two_step(const MomentModel& model, const Dataset& data,
                             const GmmConfig& cfg,
                             const Eigen::VectorXd& theta_init,
                             Eigen::Index ell) {
  const Dataset reduced = drop_row(data, ell);
  const FirstStepFit fit = fit_least_squares(reduced.Z, reduced.r);
  GmmConfig warm = cfg;
  warm.theta_init = theta_init;
  return run_second_step(model, reduced, fit.mu_hat, warm).theta_hat;
}

JackknifeResult jackknife_refit(const MomentModel& model, const Dataset& data,
                                const GmmConfig& cfg,
                                const Eigen::VectorXd& theta_hat) {
  const Eigen::Index n = data.n();
  const Eigen::Index d = model.dim_theta();
  JackknifeResult res;
  res.theta_loo.resize(n, d);
  for (Eigen::Index ell = 0; ell < n; ++ell)
    res.theta_loo.row(ell) =
        loo_two_step(model, data, cfg, theta_hat, ell).transpose();
  res.theta_dot = res.theta_loo.colwise().mean();
  res.bias_hat = double(n - 1) * (res.theta_dot - theta_hat);
  res.var_hat = Eigen::MatrixXd::Zero(d, d);
  for (Eigen::Index ell = 0; ell < n; ++ell) {
    const Eigen::VectorXd dev =
        res.theta_loo.row(ell).transpose() - res.theta_dot;
    res.var_hat.noalias() += dev * dev.transpose();
  }
  res.var_hat *= double(n - 1) / double(n);
  return res;
}

}  // namespace reference
}  // namespace manycov
