#include "manycov/mte.hpp"

#include <cmath>

#include "manycov/normal.hpp"

namespace manycov {

double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0))
    throw config_error("normal_quantile needs p in (0,1)");
  static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                             -2.759285104469687e+02, 1.383577518672690e+02,
                             -3.066479806614716e+01, 2.506628277459239e+00};
  static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                             -1.556989798598866e+02, 6.680131188771972e+01,
                             -1.328068155288572e+01};
  static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                             -2.400758277161838e+00, -2.549732539343734e+00,
                             4.374664141464968e+00,  2.938163982698783e+00};
  static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                             2.445134137142996e+00, 3.754408661907416e+00};
  const double plow = 0.02425;
  double x;
  if (p < plow) {
    const double q = std::sqrt(-2.0 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (p <= 1.0 - plow) {
    const double q = p - 0.5;
    const double r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) *
        q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    const double q = std::sqrt(-2.0 * std::log(1.0 - p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  // One Halley step against erfc brings the approximation to full
  // double precision.
  const double e = 0.5 * std::erfc(-x / std::sqrt(2.0)) - p;
  const double u = e * std::sqrt(2.0 * M_PI) * std::exp(x * x / 2.0);
  x = x - u / (1.0 + x * u / 2.0);
  return x;
}

MteModel::MteModel(int degree) : degree_(degree) {
  if (degree < 1) throw config_error("polynomial degree must be at least 1");
}

Eigen::VectorXd monomials(double a, Eigen::Index dim) {
  Eigen::VectorXd g(dim);
  g(0) = 1.0;
  for (Eigen::Index p = 1; p < dim; ++p) g(p) = g(p - 1) * a;
  return g;
}

Eigen::VectorXd monomials_d1(double a, Eigen::Index dim) {
  Eigen::VectorXd g = Eigen::VectorXd::Zero(dim);
  double ap = 1.0;
  for (Eigen::Index p = 1; p < dim; ++p) {
    g(p) = double(p) * ap;
    ap *= a;
  }
  return g;
}

Eigen::VectorXd monomials_d2(double a, Eigen::Index dim) {
  Eigen::VectorXd g = Eigen::VectorXd::Zero(dim);
  double ap = 1.0;
  for (Eigen::Index p = 2; p < dim; ++p) {
    g(p) = double(p) * double(p - 1) * ap;
    ap *= a;
  }
  return g;
}

double mte_tau(const Eigen::VectorXd& theta, double a) {
  return monomials_d1(a, theta.size()).dot(theta);
}

double mte_tau_prime(const Eigen::VectorXd& theta, double a) {
  return monomials_d2(a, theta.size()).dot(theta);
}

Eigen::VectorXd MteModel::m(const Dataset& d, Eigen::Index i, double mu,
                            const Eigen::VectorXd& theta) const {
  const Eigen::VectorXd g = monomials(mu, dim_theta());
  return g * (d.y(i, 0) - g.dot(theta));
}

Eigen::MatrixXd MteModel::jac_theta(const Dataset&, Eigen::Index, double mu,
                                    const Eigen::VectorXd&) const {
  const Eigen::VectorXd g = monomials(mu, dim_theta());
  return -g * g.transpose();
}

Eigen::VectorXd MteModel::deriv_mu(const Dataset& d, Eigen::Index i, double mu,
                                   const Eigen::VectorXd& theta) const {
  const Eigen::VectorXd g = monomials(mu, dim_theta());
  const Eigen::VectorXd g1 = monomials_d1(mu, dim_theta());
  return g1 * (d.y(i, 0) - g.dot(theta)) - g * g1.dot(theta);
}

Eigen::VectorXd MteModel::deriv_mu2(const Dataset& d, Eigen::Index i,
                                    double mu,
                                    const Eigen::VectorXd& theta) const {
  const Eigen::VectorXd g = monomials(mu, dim_theta());
  const Eigen::VectorXd g1 = monomials_d1(mu, dim_theta());
  const Eigen::VectorXd g2 = monomials_d2(mu, dim_theta());
  return g2 * (d.y(i, 0) - g.dot(theta)) - 2.0 * g1 * g1.dot(theta) -
         g * g2.dot(theta);
}

MteEstimate estimate_mte(const Dataset& data, const MteModel& model,
                         const GmmConfig& cfg) {
  for (Eigen::Index i = 0; i < data.n(); ++i)
    if (data.r(i) != 0.0 && data.r(i) != 1.0)
      throw data_error("treatment column must be binary 0/1");

  MteEstimate est;
  est.first_step = fit_least_squares(data.Z, data.r);

  const Eigen::VectorXd ones = Eigen::VectorXd::Ones(data.n());
  if ((project(est.first_step, ones) - ones).cwiseAbs().maxCoeff() > 1e-8)
    throw data_error("Z must span an intercept");

  for (Eigen::Index i = 0; i < data.n(); ++i) {
    const double p = est.first_step.mu_hat(i);
    if (p < 0.0 || p > 1.0) ++est.outside_unit;
  }

  GmmConfig c = cfg;
  if (c.theta_init.size() == 0)
    c.theta_init = Eigen::VectorXd::Zero(model.dim_theta());
  est.second_step = run_second_step(model, data, est.first_step.mu_hat, c);
  return est;
}

OracleTerms oracle_bias_variance(const DgpMoments& dgp,
                                 const FirstStepFit& fit,
                                 const MteModel& model) {
  const Eigen::Index n = fit.n();
  const Eigen::Index d = model.dim_theta();
  if (dgp.propensity.size() != n)
    throw config_error("propensity length must match the fit");
  if (dgp.theta0.size() != d)
    throw config_error("theta0 length must match the model");

  // Plug-in sensitivity from the realised fit: with moment
  // g(mu)(Y - g(mu)'theta) the Jacobian is -(1/n) sum g g', so
  // Sigma0 = -M^{-1} = (mean outer product)^{-1}.
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(d, d);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::VectorXd g = monomials(fit.mu_hat(i), d);
    A.noalias() += g * g.transpose();
  }
  A /= double(n);
  Eigen::FullPivLU<Eigen::MatrixXd> lu(A);
  if (!lu.isInvertible())
    throw numerical_error("second-step design is singular");

  OracleTerms out;
  out.Sigma0 = lu.inverse();

  // E[dm/dmu | Z] rows: -g'(P) tau(P); smoothing through the hat matrix
  // gives the influence loading H_i = sum_j E[dm_j/dmu|Z] pi_ij.
  Eigen::MatrixXd Edot(n, d);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double p = dgp.propensity(i);
    Edot.row(i) = -dgp.tau(p) * monomials_d1(p, d).transpose();
  }
  Eigen::MatrixXd H(n, d);
  for (Eigen::Index j = 0; j < d; ++j)
    H.col(j) = project(fit, Edot.col(j));

  // s_i = sum_j pi_ij^2 Var[T_j|Z_j], one hat column at a time.
  Eigen::VectorXd s = Eigen::VectorXd::Zero(n);
  for (Eigen::Index j = 0; j < n; ++j) {
    const double pj = dgp.propensity(j);
    const double vj = pj * (1.0 - pj);
    s += vj * hat_column(fit, j).cwiseAbs2();
  }

  out.B.resize(n, d);
  Eigen::VectorXd bsum = Eigen::VectorXd::Zero(d);
  Eigen::MatrixXd Sm = Eigen::MatrixXd::Zero(d, d);   // (1/n) sum E[m|Z] E[m|Z]'
  Eigen::MatrixXd Spsi = Eigen::MatrixXd::Zero(d, d); // (1/n) sum V[Psi|Z]
  for (Eigen::Index i = 0; i < n; ++i) {
    const double p = dgp.propensity(i);
    const Eigen::VectorXd g = monomials(p, d);
    const Eigen::VectorXd g1 = monomials_d1(p, d);

    // Cov(Y, T | Z) from the treatment-arm moments.
    const double cyt = (1.0 - p) * dgp.ty1(p) - p * dgp.t0y0(p);
    // E[dm/dmu (r - mu) | Z] pi_ii + (1/2) E[d2m/dmu2 | Z] s_i.
    const Eigen::VectorXd K =
        g1 * dgp.tau(p) + 0.5 * g * dgp.dtau(p);
    out.B.row(i) =
        (g1 * (cyt * fit.leverage(i)) - K * s(i)).transpose();
    bsum += out.B.row(i).transpose();

    // E[m|Z] = g (E[Y|Z] - g' theta0); the population mean is zero, so
    // the variance of the conditional mean is the raw second moment.
    const Eigen::VectorXd em = g * (dgp.ey(p) - g.dot(dgp.theta0));
    Sm.noalias() += em * em.transpose();

    const double vy = dgp.ey2(p) - dgp.ey(p) * dgp.ey(p);
    const double vt = p * (1.0 - p);
    const Eigen::VectorXd hi = H.row(i).transpose();
    Spsi.noalias() += vy * g * g.transpose() +
                      cyt * (g * hi.transpose() + hi * g.transpose()) +
                      vt * hi * hi.transpose();
  }
  Sm /= double(n);
  Spsi /= double(n);

  out.bias = out.Sigma0 * (bsum / double(n));
  out.variance = (out.Sigma0 * (Sm + Spsi / double(n)) *
                  out.Sigma0.transpose()) /
                 double(n);
  return out;
}

std::vector<double> default_mte_grid() {
  std::vector<double> g(99);
  for (int i = 0; i < 99; ++i) g[size_t(i)] = double(i + 1) / 100.0;
  return g;
}

std::vector<MteCurvePoint> mte_curve(const Eigen::VectorXd& theta_hat,
                                     const Eigen::VectorXd& bias_hat,
                                     const Eigen::MatrixXd& var_hat,
                                     double alpha,
                                     const std::vector<double>& grid) {
  if (!(alpha > 0.0 && alpha < 1.0))
    throw config_error("alpha must be in (0,1)");
  const double z = normal_quantile(1.0 - alpha / 2.0);
  std::vector<MteCurvePoint> out;
  out.reserve(grid.size());
  for (const double a : grid) {
    const Eigen::VectorXd g1 = monomials_d1(a, theta_hat.size());
    MteCurvePoint pt;
    pt.a = a;
    pt.tau_hat = g1.dot(theta_hat);
    pt.tau_bc = g1.dot(theta_hat - bias_hat);
    const double v = g1.dot(var_hat * g1);
    const double se = std::sqrt(std::max(0.0, v));
    pt.ci_lo = pt.tau_bc - z * se;
    pt.ci_hi = pt.tau_bc + z * se;
    out.push_back(pt);
  }
  return out;
}

}  // namespace manycov
