#include "manycov/gmm.hpp"

#include <cmath>
#include <sstream>

namespace manycov {

namespace {

void validate_omega(const Eigen::MatrixXd& omega, Eigen::Index dm) {
  if (omega.size() == 0) return;
  if (omega.rows() != dm || omega.cols() != dm)
    throw config_error("omega must be dim_moment x dim_moment");
  if ((omega - omega.transpose()).cwiseAbs().maxCoeff() > 1e-10)
    throw config_error("omega must be symmetric");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(omega);
  const double lo = es.eigenvalues().minCoeff();
  const double hi = es.eigenvalues().maxCoeff();
  if (lo < -1e-10 * std::max(1.0, hi))
    throw config_error("omega is not positive semidefinite");
}

struct Accum {
  Eigen::VectorXd mbar;  // (1/n) sum_i w_i m_i
  Eigen::MatrixXd J;     // (1/n) sum_i w_i dm_i/dtheta'
};

// Serial accumulation in index order keeps results bit-identical
// regardless of the caller's threading.
Accum accumulate(const MomentModel& model, const Dataset& data,
                 const Eigen::VectorXd& mu, const Eigen::VectorXd& theta,
                 const Eigen::VectorXd& w, bool with_jac) {
  const Eigen::Index n = data.n();
  Accum a;
  a.mbar = Eigen::VectorXd::Zero(model.dim_moment());
  if (with_jac) a.J = Eigen::MatrixXd::Zero(model.dim_moment(), model.dim_theta());
  for (Eigen::Index i = 0; i < n; ++i) {
    const double wi = w.size() ? w(i) : 1.0;
    if (wi == 0.0) continue;
    a.mbar += wi * model.m(data, i, mu(i), theta);
    if (with_jac) a.J += wi * model.jac_theta(data, i, mu(i), theta);
  }
  a.mbar /= double(n);
  if (with_jac) a.J /= double(n);
  return a;
}

GmmSolution closed_form_ls(const MomentModel& model, const Dataset& data,
                           const Eigen::VectorXd& mu,
                           const Eigen::VectorXd& w) {
  const Eigen::Index n = data.n();
  const int q = model.poly_degree();
  const Eigen::Index d = q + 1;
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(d, d);
  Eigen::VectorXd b = Eigen::VectorXd::Zero(d);
  Eigen::VectorXd g(d);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double wi = w.size() ? w(i) : 1.0;
    if (wi == 0.0) continue;
    g(0) = 1.0;
    for (Eigen::Index p = 1; p < d; ++p) g(p) = g(p - 1) * mu(i);
    A.noalias() += wi * g * g.transpose();
    b.noalias() += wi * model.response(data, i) * g;
  }
  Eigen::FullPivLU<Eigen::MatrixXd> lu(A);
  if (!lu.isInvertible())
    throw numerical_error("weighted least-squares normal equations are singular");

  GmmSolution sol;
  sol.theta_hat = lu.solve(b);
  sol.moment_avg = (b - A * sol.theta_hat) / double(n);
  sol.M_hat = -A / double(n);
  sol.Sigma_hat = lu.inverse() * double(n);
  sol.objective_value = 0.5 * sol.moment_avg.squaredNorm();
  sol.converged = true;
  sol.iterations = 0;
  sol.objective_path = {sol.objective_value};
  return sol;
}

}  // namespace

GmmSolution solve_gmm(const MomentModel& model, const Dataset& data,
                      const Eigen::VectorXd& mu, const GmmConfig& cfg,
                      const Eigen::VectorXd& weights) {
  const Eigen::Index dm = model.dim_moment();
  const Eigen::Index dt = model.dim_theta();
  if (dm < dt)
    throw config_error("dim_moment must be at least dim_theta");
  if (mu.size() != data.n()) throw config_error("mu length mismatch");
  if (weights.size() && weights.size() != data.n())
    throw config_error("weights length mismatch");
  validate_omega(cfg.omega, dm);
  if (cfg.theta_init.size() != dt)
    throw config_error("theta_init must have length dim_theta");

  const bool identity_w = cfg.omega.size() == 0;
  const bool just_identified = dm == dt;
  const auto apply_omega = [&](const Eigen::VectorXd& v) -> Eigen::VectorXd {
    return identity_w ? v : Eigen::VectorXd(cfg.omega * v);
  };

  GmmSolution sol;
  Eigen::VectorXd theta = cfg.theta_init;
  Accum a = accumulate(model, data, mu, theta, weights, true);
  Eigen::VectorXd om = apply_omega(a.mbar);
  double obj = 0.5 * a.mbar.dot(om);
  sol.objective_path.push_back(obj);

  const auto finish = [&](int it) {
    sol.theta_hat = theta;
    sol.objective_value = obj;
    sol.moment_avg = a.mbar;
    sol.M_hat = a.J;
    sol.converged = true;
    sol.iterations = it;
    Eigen::MatrixXd MtOM =
        identity_w ? Eigen::MatrixXd(a.J.transpose() * a.J)
                   : Eigen::MatrixXd(a.J.transpose() * cfg.omega * a.J);
    Eigen::FullPivLU<Eigen::MatrixXd> lu(MtOM);
    if (!lu.isInvertible())
      throw numerical_error(
          "moment Jacobian is rank-deficient at the solution");
    sol.Sigma_hat = identity_w
                        ? Eigen::MatrixXd(-lu.solve(a.J.transpose()))
                        : Eigen::MatrixXd(-lu.solve(a.J.transpose() * cfg.omega));
    return sol;
  };

  for (int it = 0; it <= cfg.max_iter; ++it) {
    const Eigen::VectorXd grad = a.J.transpose() * om;
    const bool done = (just_identified && identity_w)
                          ? a.mbar.norm() <= cfg.grad_tol
                          : grad.norm() <= cfg.grad_tol * (1.0 + theta.norm());
    if (done) return finish(it);
    if (it == cfg.max_iter) break;

    // Gauss-Newton direction, gradient descent when the system is singular.
    Eigen::MatrixXd JtOJ = identity_w
                               ? Eigen::MatrixXd(a.J.transpose() * a.J)
                               : Eigen::MatrixXd(a.J.transpose() * cfg.omega * a.J);
    Eigen::FullPivLU<Eigen::MatrixXd> lu(JtOJ);
    Eigen::VectorXd delta =
        lu.isInvertible() ? Eigen::VectorXd(-lu.solve(grad)) : Eigen::VectorXd(-grad);
    double dir_deriv = grad.dot(delta);
    if (dir_deriv >= 0.0) {
      delta = -grad;
      dir_deriv = -grad.squaredNorm();
    }

    double t = 1.0;
    bool stepped = false;
    while (t * delta.norm() > cfg.step_tol * (1.0 + theta.norm())) {
      const Eigen::VectorXd cand = theta + t * delta;
      Accum ca = accumulate(model, data, mu, cand, weights, true);
      const Eigen::VectorXd com = apply_omega(ca.mbar);
      const double cobj = 0.5 * ca.mbar.dot(com);
      if (cobj <= obj + 1e-4 * t * dir_deriv) {
        theta = cand;
        a = std::move(ca);
        om = com;
        obj = cobj;
        sol.objective_path.push_back(obj);
        stepped = true;
        break;
      }
      t *= 0.5;
    }
    if (!stepped) {
      // The objective is flat to rounding along every admissible step.
      // With a tiny gradient that is convergence, not failure: the
      // quadratic tail of the objective sits below double epsilon long
      // before the gradient test at grad_tol can fire.
      if (grad.norm() <= 1e-7 * (1.0 + theta.norm())) return finish(it);
      std::ostringstream msg;
      msg << "line search stalled at iteration " << it
          << "; gradient norm " << grad.norm() << "; last iterate (";
      for (Eigen::Index j = 0; j < theta.size(); ++j)
        msg << (j ? ", " : "") << theta(j);
      msg << ")";
      throw numerical_error(msg.str());
    }
  }

  const Eigen::VectorXd grad = a.J.transpose() * om;
  // Same grace as a stalled line search: ill-conditioned problems can
  // keep shaving the objective by sub-epsilon amounts forever while the
  // gradient sits at its rounding floor.
  if (grad.norm() <= 1e-7 * (1.0 + theta.norm())) return finish(cfg.max_iter);
  std::ostringstream msg;
  msg << "no convergence in " << cfg.max_iter
      << " iterations; gradient norm " << grad.norm() << "; last iterate (";
  for (Eigen::Index j = 0; j < theta.size(); ++j)
    msg << (j ? ", " : "") << theta(j);
  msg << ")";
  throw numerical_error(msg.str());
}

GmmSolution run_second_step(const MomentModel& model, const Dataset& data,
                            const Eigen::VectorXd& mu, const GmmConfig& cfg,
                            const Eigen::VectorXd& weights) {
  if (model.poly_degree() >= 0 && cfg.omega.size() == 0 &&
      model.dim_moment() == model.dim_theta() &&
      model.dim_theta() == model.poly_degree() + 1) {
    if (mu.size() != data.n()) throw config_error("mu length mismatch");
    if (weights.size() && weights.size() != data.n())
      throw config_error("weights length mismatch");
    return closed_form_ls(model, data, mu, weights);
  }
  return solve_gmm(model, data, mu, cfg, weights);
}

double check_jacobian(const MomentModel& model, const Dataset& data,
                      Eigen::Index i, double mu, const Eigen::VectorXd& theta) {
  const Eigen::Index dt = model.dim_theta();
  double worst = 0.0;
  const auto rel = [](double analytic, double fd) {
    return std::abs(analytic - fd) /
           std::max(1.0, std::abs(analytic) + std::abs(fd));
  };

  const Eigen::MatrixXd J = model.jac_theta(data, i, mu, theta);
  for (Eigen::Index j = 0; j < dt; ++j) {
    const double h = 1e-6 * (1.0 + std::abs(theta(j)));
    Eigen::VectorXd tp = theta, tm = theta;
    tp(j) += h;
    tm(j) -= h;
    const Eigen::VectorXd fd =
        (model.m(data, i, mu, tp) - model.m(data, i, mu, tm)) / (2.0 * h);
    for (Eigen::Index a = 0; a < J.rows(); ++a)
      worst = std::max(worst, rel(J(a, j), fd(a)));
  }

  const double h = 1e-6 * (1.0 + std::abs(mu));
  const Eigen::VectorXd dmu = model.deriv_mu(data, i, mu, theta);
  const Eigen::VectorXd fd =
      (model.m(data, i, mu + h, theta) - model.m(data, i, mu - h, theta)) /
      (2.0 * h);
  for (Eigen::Index a = 0; a < dmu.size(); ++a)
    worst = std::max(worst, rel(dmu(a), fd(a)));
  return worst;
}

}  // namespace manycov
