#pragma once

#include <Eigen/Dense>
#include <functional>
#include <vector>

#include "manycov/firststep.hpp"
#include "manycov/gmm.hpp"

namespace manycov {

// Marginal treatment effect via a polynomial in the fitted propensity:
// second-step regressors g(mu) = (1, mu, ..., mu^q), moment
// m = g(mu) (Y - g(mu)' theta), so tau(a) = g'(a)' theta.
class MteModel : public MomentModel {
 public:
  explicit MteModel(int degree = 2);

  Eigen::Index dim_theta() const override { return degree_ + 1; }
  Eigen::Index dim_moment() const override { return degree_ + 1; }
  Eigen::VectorXd m(const Dataset& d, Eigen::Index i, double mu,
                    const Eigen::VectorXd& theta) const override;
  Eigen::MatrixXd jac_theta(const Dataset& d, Eigen::Index i, double mu,
                            const Eigen::VectorXd& theta) const override;
  Eigen::VectorXd deriv_mu(const Dataset& d, Eigen::Index i, double mu,
                           const Eigen::VectorXd& theta) const override;
  Eigen::VectorXd deriv_mu2(const Dataset& d, Eigen::Index i, double mu,
                            const Eigen::VectorXd& theta) const override;
  int poly_degree() const override { return degree_; }
  double response(const Dataset& d, Eigen::Index i) const override {
    return d.y(i, 0);
  }

  int degree() const { return degree_; }

 private:
  int degree_;
};

// Monomial basis g(a) = (1, a, ..., a^q) and its first two derivatives.
Eigen::VectorXd monomials(double a, Eigen::Index dim);
Eigen::VectorXd monomials_d1(double a, Eigen::Index dim);
Eigen::VectorXd monomials_d2(double a, Eigen::Index dim);

// tau(a) = g'(a)' theta and its derivative in a.
double mte_tau(const Eigen::VectorXd& theta, double a);
double mte_tau_prime(const Eigen::VectorXd& theta, double a);

struct MteEstimate {
  FirstStepFit first_step;
  GmmSolution second_step;
  Eigen::Index outside_unit = 0;  // fitted propensities outside [0,1]
};

// Full two-step fit: propensity by least squares of T (= data.r) on Z,
// then the polynomial outcome step. Requires binary T and an intercept
// in the span of Z. Out-of-range fitted propensities are counted, not
// clamped and not an error.
MteEstimate estimate_mte(const Dataset& data, const MteModel& model,
                         const GmmConfig& cfg = GmmConfig());

// Conditional-moment structure of a data generating process, used to
// assemble the exact bias and variance of the two-step estimator given
// the realised design. Every closure is a function of the true
// propensity p.
struct DgpMoments {
  Eigen::VectorXd propensity;            // true P_i = E[T_i | Z_i]
  Eigen::VectorXd theta0;                // true second-step coefficients
  std::function<double(double)> tau;     // d E[Y | P=a] / da
  std::function<double(double)> dtau;    // d^2 E[Y | P=a] / da^2
  std::function<double(double)> ty1;     // E[T Y(1) | P]
  std::function<double(double)> t0y0;    // E[(1-T) Y(0) | P]
  std::function<double(double)> ey;      // E[Y | P]
  std::function<double(double)> ey2;     // E[Y^2 | P]
};

struct OracleTerms {
  Eigen::MatrixXd B;         // n rows, per-observation bias contribution
  Eigen::MatrixXd Sigma0;    // plug-in sensitivity -(M'M)^{-1}M'
  Eigen::VectorXd bias;      // Sigma0 * (1/n) sum_i B_i, bias of theta_hat
  Eigen::MatrixXd variance;  // sandwich variance of theta_hat
};

// Design-conditional bias and variance of the two-step estimator.
// The per-observation pieces are evaluated at the true propensities;
// the sensitivity Sigma0 is the plug-in from the realised fit.
OracleTerms oracle_bias_variance(const DgpMoments& dgp,
                                 const FirstStepFit& fit,
                                 const MteModel& model);

struct MteCurvePoint {
  double a = 0.0;
  double tau_hat = 0.0;
  double tau_bc = 0.0;
  double ci_lo = 0.0;
  double ci_hi = 0.0;
};

// Evaluates tau along a grid with bias correction and normal-theory
// intervals from the supplied bias/variance of theta_hat.
std::vector<MteCurvePoint> mte_curve(const Eigen::VectorXd& theta_hat,
                                     const Eigen::VectorXd& bias_hat,
                                     const Eigen::MatrixXd& var_hat,
                                     double alpha,
                                     const std::vector<double>& grid);

// Default evaluation grid: 99 points 0.01, 0.02, ..., 0.99.
std::vector<double> default_mte_grid();

}  // namespace manycov
