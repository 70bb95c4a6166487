#pragma once

#include <Eigen/Dense>
#include <vector>

#include "manycov/dataset.hpp"
#include "manycov/errors.hpp"

namespace manycov {

// Per-observation moment function m(w_i, mu_i, theta) together with the
// derivatives the corrections need. Observation data comes from the
// Dataset row; mu is that observation's first-step fitted value.
class MomentModel {
 public:
  virtual ~MomentModel() = default;

  virtual Eigen::Index dim_theta() const = 0;
  virtual Eigen::Index dim_moment() const = 0;

  virtual Eigen::VectorXd m(const Dataset& d, Eigen::Index i, double mu,
                            const Eigen::VectorXd& theta) const = 0;
  // d m / d theta', dim_moment x dim_theta
  virtual Eigen::MatrixXd jac_theta(const Dataset& d, Eigen::Index i,
                                    double mu,
                                    const Eigen::VectorXd& theta) const = 0;
  // d m / d mu
  virtual Eigen::VectorXd deriv_mu(const Dataset& d, Eigen::Index i, double mu,
                                   const Eigen::VectorXd& theta) const = 0;
  // d^2 m / d mu^2; only the oracle needs it, so models without one can
  // keep the throwing default.
  virtual Eigen::VectorXd deriv_mu2(const Dataset&, Eigen::Index, double,
                                    const Eigen::VectorXd&) const {
    throw config_error("deriv_mu2 not implemented for this model");
  }

  // >= 0 declares the structure m = g(mu) (y - g(mu)' theta) with
  // monomial regressors g(mu) = (1, mu, ..., mu^q) and y = response(),
  // which unlocks the closed-form weighted least-squares solve.
  virtual int poly_degree() const { return -1; }
  virtual double response(const Dataset&, Eigen::Index) const {
    throw config_error("response not implemented for this model");
  }
};

struct GmmConfig {
  Eigen::MatrixXd omega;      // weight matrix; empty means identity
  Eigen::VectorXd theta_init;
  int max_iter = 200;
  double grad_tol = 1e-10;
  double step_tol = 1e-14;
};

struct GmmSolution {
  Eigen::VectorXd theta_hat;
  double objective_value = 0.0;
  Eigen::VectorXd moment_avg;       // (1/n) sum_i w_i m_i at theta_hat
  Eigen::MatrixXd M_hat;            // (1/n) sum_i w_i dm_i/dtheta'
  Eigen::MatrixXd Sigma_hat;        // -(M' Omega M)^{-1} M' Omega
  bool converged = false;
  int iterations = 0;
  std::vector<double> objective_path;
};

// Gauss-Newton with Armijo backtracking on 1/2 |Omega^{1/2} mbar|^2,
// falling back to a gradient step when the Gauss-Newton system is
// singular. weights scales each observation's contribution (empty means
// all ones); a zero weight drops the observation entirely.
// Throws numerical_error on non-convergence (the message carries the
// last iterate and gradient norm) and when M' Omega M is singular at
// the solution.
GmmSolution solve_gmm(const MomentModel& model, const Dataset& data,
                      const Eigen::VectorXd& mu, const GmmConfig& cfg,
                      const Eigen::VectorXd& weights = Eigen::VectorXd());

// Preferred entry point: dispatches to the exact weighted least-squares
// solve when the model declares polynomial structure and the weight
// matrix is the identity, and to solve_gmm otherwise. Identical inputs
// give bit-identical outputs on either path.
GmmSolution run_second_step(const MomentModel& model, const Dataset& data,
                            const Eigen::VectorXd& mu, const GmmConfig& cfg,
                            const Eigen::VectorXd& weights = Eigen::VectorXd());

// Max relative error between the analytic derivatives (jac_theta and
// deriv_mu) and central differences of m at one evaluation point.
double check_jacobian(const MomentModel& model, const Dataset& data,
                      Eigen::Index i, double mu, const Eigen::VectorXd& theta);

}  // namespace manycov
