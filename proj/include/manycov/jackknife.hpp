#pragma once

#include <Eigen/Dense>
#include <functional>
#include <vector>

#include "manycov/firststep.hpp"
#include "manycov/gmm.hpp"

namespace manycov {

// Delete-one estimates of the two-step parameter. bias_hat and var_hat
// follow the usual jackknife recipe,
//   bias = (n-1) (theta_dot - theta_hat),
//   var  = ((n-1)/n) sum_l w_l (loo_l - theta_dot)(loo_l - theta_dot)',
// with theta_dot the w-weighted mean of the delete-one estimates.
// Unweighted calls have w = 1 everywhere and reduce to the textbook
// formulas. Rows whose weight is zero are skipped and left as zeros.
struct JackknifeResult {
  Eigen::VectorXd bias_hat;
  Eigen::MatrixXd var_hat;
  Eigen::MatrixXd theta_loo;  // n x dim_theta, row l from deleting l
  Eigen::VectorXd theta_dot;
  std::vector<Eigen::Index> failed_deletions;  // empty on success
};

// Jackknife that tracks both steps: deletion l updates the first-step
// fitted values through the leverage identity and removes l's moment
// contribution from the second step. Every deletion must succeed;
// a singular or non-convergent deletion raises numerical_error naming
// the observations involved.
JackknifeResult jackknife_two_step(const MomentModel& model,
                                   const Dataset& data,
                                   const FirstStepFit& fit,
                                   const Eigen::VectorXd& theta_hat,
                                   const GmmConfig& cfg);

// Weighted engine behind both the plain jackknife and the multiplier
// bootstrap. design provides the projection geometry of Z; mu holds the
// fitted values of response r under that design; deletion l uses
// second-step observation weights w - e_l. Deletions with w_l == 0
// carry no weight in any average and are skipped outright.
JackknifeResult weighted_jackknife(const MomentModel& model,
                                   const Dataset& data,
                                   const FirstStepFit& design,
                                   const Eigen::VectorXd& mu,
                                   const Eigen::VectorXd& r,
                                   const Eigen::VectorXd& w,
                                   const Eigen::VectorXd& theta_hat,
                                   const GmmConfig& cfg);

enum class CorrectionMode { plug_in, linearized, direct };

struct FunctionalCorrection {
  double estimate = 0.0;   // phi(theta_hat)
  double corrected = 0.0;  // bias-corrected phi
  double bias = 0.0;       // estimate - corrected
  double variance = 0.0;   // jackknife variance of phi
};

// Bias-corrects a scalar functional of theta using an unweighted
// jackknife result. plug_in evaluates phi at the corrected parameter,
// linearized subtracts dphi' bias_hat, direct jackknifes phi itself.
FunctionalCorrection bias_correct_functional(
    const std::function<double(const Eigen::VectorXd&)>& phi,
    const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& dphi,
    const Eigen::VectorXd& theta_hat, const JackknifeResult& jk,
    CorrectionMode mode);

}  // namespace manycov
