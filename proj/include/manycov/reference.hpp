#pragma once

#include <Eigen/Dense>

#include "manycov/dataset.hpp"
#include "manycov/gmm.hpp"
#include "manycov/jackknife.hpp"

namespace manycov {
namespace reference {

// Textbook serial implementations. They recompute everything from
// scratch instead of updating, which makes them slow and obviously
// correct: tests use them as oracles and the benchmark as baselines.

// Minimum-norm least-squares coefficients through the SVD pseudoinverse.
Eigen::VectorXd fit_normal_equations(const Eigen::MatrixXd& Z,
                                     const Eigen::VectorXd& r);

// Full hat matrix from an orthonormal basis of col(Z).
Eigen::MatrixXd hat_matrix(const Eigen::MatrixXd& Z);

// Fitted values for all n rows after refitting without row ell.
Eigen::VectorXd loo_refit_mu(const Eigen::MatrixXd& Z,
                             const Eigen::VectorXd& r, Eigen::Index ell);

// Dataset with row ell removed.
Dataset drop_row(const Dataset& data, Eigen::Index ell);

// Both steps refit from scratch without observation ell.
Eigen::VectorXd loo_two_step(const MomentModel& model, const Dataset& data,
                             const GmmConfig& cfg,
                             const Eigen::VectorXd& theta_init,
                             Eigen::Index ell);

// Jackknife assembled from full refits of every deletion.
JackknifeResult jackknife_refit(const MomentModel& model, const Dataset& data,
                                const GmmConfig& cfg,
                                const Eigen::VectorXd& theta_hat);

}  // namespace reference
}  // namespace manycov
