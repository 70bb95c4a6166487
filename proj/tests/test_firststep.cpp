#include <Eigen/Dense>

#include "doctest.h"
#include "manycov/firststep.hpp"
#include "manycov/philox.hpp"
#include "manycov/reference.hpp"

using namespace manycov;

namespace {

Eigen::MatrixXd random_matrix(Eigen::Index n, Eigen::Index k, uint64_t seed) {
  RngStream s(seed, 0);
  Eigen::MatrixXd Z(n, k);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < k; ++j)
      Z(i, j) = 2.0 * s.uniform(uint64_t(i * k + j)) - 1.0;
  return Z;
}

Eigen::VectorXd random_vector(Eigen::Index n, uint64_t seed) {
  RngStream s(seed, 1);
  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = s.uniform(uint64_t(i));
  return v;
}

}  // namespace

TEST_SUITE("firststep") {

TEST_CASE("coefficients match the SVD pseudoinverse solution") {
  for (uint64_t seed : {1, 2, 3}) {
    const Eigen::MatrixXd Z = random_matrix(60, 12, seed);
    const Eigen::VectorXd r = random_vector(60, seed + 100);
    const FirstStepFit fit = fit_least_squares(Z, r);
    const Eigen::VectorXd beta_ref = reference::fit_normal_equations(Z, r);
    CHECK((fit.beta_hat - beta_ref).norm() < 1e-10);
    CHECK((fit.mu_hat - Z * beta_ref).norm() < 1e-10);
    CHECK(fit.rank == 12);
  }
}

TEST_CASE("hat matrix invariants hold, including rank-deficient designs") {
  Eigen::MatrixXd Z = random_matrix(50, 8, 4);
  SUBCASE("full rank") {}
  SUBCASE("duplicated column") { Z.col(7) = 3.0 * Z.col(2); }
  SUBCASE("zero column") { Z.col(5).setZero(); }

  const FirstStepFit fit = fit_least_squares(Z, random_vector(50, 9));
  const Eigen::MatrixXd H = fit.Q * fit.Q.transpose();
  const Eigen::MatrixXd H_ref = reference::hat_matrix(Z);
  CHECK((H - H_ref).cwiseAbs().maxCoeff() < 1e-10);

  // Projection: symmetric, idempotent, trace equal to the rank.
  CHECK((H - H.transpose()).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((H * H - H).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(H.trace() == doctest::Approx(double(fit.rank)).epsilon(1e-12));

  // Row sum of squares of an idempotent symmetric matrix is its diagonal.
  for (Eigen::Index i = 0; i < 50; ++i) {
    CHECK(H.row(i).squaredNorm() ==
          doctest::Approx(fit.leverage(i)).epsilon(1e-10));
    CHECK((hat_column(fit, i) - H.col(i)).norm() < 1e-12);
  }
}

TEST_CASE("leave-one-out update equals a genuine refit") {
  const Eigen::MatrixXd Z = random_matrix(40, 6, 11);
  const Eigen::VectorXd r = random_vector(40, 12);
  const FirstStepFit fit = fit_least_squares(Z, r);
  for (Eigen::Index ell : {0, 7, 39}) {
    const Eigen::VectorXd fast = loo_mu(fit, r, ell);
    const Eigen::VectorXd slow = reference::loo_refit_mu(Z, r, ell);
    CHECK((fast - slow).cwiseAbs().maxCoeff() < 1e-8);
  }
}

TEST_CASE("intercept-only design averages and spreads leverage evenly") {
  const Eigen::Index n = 25;
  const Eigen::MatrixXd Z = Eigen::MatrixXd::Ones(n, 1);
  const Eigen::VectorXd r = random_vector(n, 5);
  const FirstStepFit fit = fit_least_squares(Z, r);
  CHECK(fit.beta_hat(0) == doctest::Approx(r.mean()).epsilon(1e-14));
  for (Eigen::Index i = 0; i < n; ++i)
    CHECK(fit.leverage(i) == doctest::Approx(1.0 / n).epsilon(1e-12));
}

TEST_CASE("saturated design reproduces r and blocks deletion") {
  const Eigen::Index n = 6;
  const Eigen::MatrixXd Z = Eigen::MatrixXd::Identity(n, n);
  const Eigen::VectorXd r = random_vector(n, 3);
  const FirstStepFit fit = fit_least_squares(Z, r);
  CHECK((fit.mu_hat - r).cwiseAbs().maxCoeff() < 1e-14);
  CHECK(balance_diagnostics(fit).has_saturated);
  CHECK_THROWS_AS(loo_mu(fit, r, 2), numerical_error);
}

TEST_CASE("fitted values ignore the column order of Z") {
  const Eigen::MatrixXd Z = random_matrix(30, 5, 21);
  const Eigen::VectorXd r = random_vector(30, 22);
  Eigen::MatrixXd Zp(30, 5);
  Zp << Z.col(4), Z.col(2), Z.col(0), Z.col(1), Z.col(3);
  const FirstStepFit a = fit_least_squares(Z, r);
  const FirstStepFit b = fit_least_squares(Zp, r);
  CHECK((a.mu_hat - b.mu_hat).cwiseAbs().maxCoeff() < 1e-10);
  CHECK((a.leverage - b.leverage).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("rank-deficient fit takes the minimum-norm coefficients") {
  Eigen::MatrixXd Z = random_matrix(30, 6, 31);
  Z.col(5) = Z.col(1);  // exact collinearity
  const Eigen::VectorXd r = random_vector(30, 32);
  const FirstStepFit fit = fit_least_squares(Z, r);
  CHECK(fit.rank == 5);
  const Eigen::VectorXd beta_ref = reference::fit_normal_equations(Z, r);
  CHECK((fit.beta_hat - beta_ref).norm() < 1e-8);
  // Any least-squares solution gives these fitted values.
  CHECK((fit.mu_hat - Z * beta_ref).norm() < 1e-8);
}

TEST_CASE("hat cache changes access, not values") {
  const Eigen::MatrixXd Z = random_matrix(35, 7, 41);
  const Eigen::VectorXd r = random_vector(35, 42);
  FirstStepFit fit = fit_least_squares(Z, r);
  const Eigen::VectorXd col3 = hat_column(fit, 3);
  build_hat_cache(fit);
  CHECK(fit.hat.rows() == 35);
  CHECK((hat_column(fit, 3) - col3).cwiseAbs().maxCoeff() == 0.0);
  const Eigen::VectorXd v = random_vector(35, 43);
  CHECK((project(fit, v) - fit.hat * v).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("balance diagnostics summarize the leverage profile") {
  const Eigen::MatrixXd Z = random_matrix(40, 10, 51);
  const FirstStepFit fit = fit_least_squares(Z, random_vector(40, 52));
  const BalanceDiagnostics d = balance_diagnostics(fit);
  CHECK(d.k_ratio == doctest::Approx(10.0 / 40.0));
  CHECK(d.max_leverage == fit.leverage.maxCoeff());
  CHECK(d.sum_sq_leverage ==
        doctest::Approx(fit.leverage.squaredNorm()).epsilon(1e-12));
  CHECK(d.max_inv_gap == doctest::Approx(1.0 / (1.0 - d.max_leverage)));
  CHECK_FALSE(d.has_saturated);
}

TEST_CASE("degenerate inputs are rejected") {
  // All-zero design has rank zero.
  CHECK_THROWS_AS(
      fit_least_squares(Eigen::MatrixXd::Zero(5, 2), Eigen::VectorXd::Ones(5)),
      numerical_error);
  // Cache guard protects against an accidental huge allocation.
  FirstStepFit fit = fit_least_squares(random_matrix(20, 3, 61),
                                       random_vector(20, 62));
  CHECK_NOTHROW(build_hat_cache(fit));
  CHECK_THROWS_AS(hat_column(fit, 20), config_error);
}

}  // TEST_SUITE
