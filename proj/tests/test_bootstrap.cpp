#include <Eigen/Dense>
#include <cmath>
#include <string>

#include "doctest.h"
#include "manycov/bootstrap.hpp"
#include "manycov/mte.hpp"
#include "manycov/philox.hpp"
#include "manycov/simulate.hpp"
#include "naive_variant.hpp"

using namespace manycov;

namespace {

struct Fixture {
  Dataset data;
  MteModel model{2};
  MteEstimate est;
  GmmConfig cfg;

  explicit Fixture(Eigen::Index n, Eigen::Index k, uint64_t seed) {
    const DgpDraw draw = generate_dgp(n, std::max<Eigen::Index>(k, 5), seed, 0);
    data = Dataset{draw.data.y, draw.data.r, draw.data.Z.leftCols(k)};
    est = estimate_mte(data, model);
    build_hat_cache(est.first_step);
  }
};

double phi_tau(const Eigen::VectorXd& th) { return mte_tau(th, 0.5); }
Eigen::VectorXd dphi_tau(const Eigen::VectorXd& th) {
  return monomials_d1(0.5, th.size());
}

}  // namespace

TEST_SUITE("bootstrap") {

TEST_CASE("multiplier distributions have the required moments") {
  for (const auto& dist :
       {WeightDistribution::rademacher(), WeightDistribution::webb6()}) {
    double mean = 0.0, var = 0.0, third = 0.0, total = 0.0;
    for (size_t j = 0; j < dist.points().size(); ++j) {
      total += dist.probs()[j];
      mean += dist.probs()[j] * dist.points()[j];
    }
    for (size_t j = 0; j < dist.points().size(); ++j) {
      const double c = dist.points()[j] - mean;
      var += dist.probs()[j] * c * c;
      third += dist.probs()[j] * c * c * c;
    }
    CHECK(total == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(mean == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(var == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(std::abs(third) < 1e-13);
  }
}

TEST_CASE("a skewed two-point multiplier law is rejected by moment name") {
  // Two-point law with mean 1 and variance 1 but third central moment 1.
  const double s5 = std::sqrt(5.0);
  const std::vector<double> pts = {(3.0 - s5) / 2.0, (3.0 + s5) / 2.0};
  const std::vector<double> pr = {(s5 + 1.0) / (2.0 * s5),
                                  (s5 - 1.0) / (2.0 * s5)};
  try {
    WeightDistribution::custom("skewed", pts, pr);
    FAIL("expected config_error");
  } catch (const config_error& e) {
    CHECK(std::string(e.what()).find("third central moment") !=
          std::string::npos);
  }
}

TEST_CASE("name lookup") {
  CHECK(WeightDistribution::by_name("rademacher").points().size() == 2);
  CHECK(WeightDistribution::by_name("webb6").points().size() == 6);
  CHECK(WeightDistribution::by_name("webb").points().size() == 6);
  CHECK_THROWS_AS(WeightDistribution::by_name("mammen"), config_error);
}

TEST_CASE("sampling follows the quantile transform") {
  const WeightDistribution rad = WeightDistribution::rademacher();
  CHECK(rad.sample(0.0) == 0.0);
  CHECK(rad.sample(0.499) == 0.0);
  CHECK(rad.sample(0.5) == 2.0);
  CHECK(rad.sample(0.999999) == 2.0);

  const WeightDistribution webb = WeightDistribution::webb6();
  RngStream s(3, 4);
  double mean = 0.0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) mean += webb.sample(s.uniform(uint64_t(i)));
  mean /= n;
  CHECK(mean == doctest::Approx(1.0).epsilon(0.02));
}

TEST_CASE("unit multipliers reproduce the sample bit for bit") {
  Fixture fx(200, 10, 51);
  const Eigen::VectorXd ones = Eigen::VectorXd::Ones(200);
  const WildFirstStep wf = wild_first_step(fx.est.first_step, fx.data.r, ones);
  // Unit multipliers zero out the residual perturbation, so the wild
  // response collapses onto the fitted values exactly.
  CHECK((wf.r_star - fx.est.first_step.mu_hat).cwiseAbs().maxCoeff() == 0.0);
  CHECK((wf.mu_star - fx.est.first_step.mu_hat).cwiseAbs().maxCoeff() == 0.0);

  const BootstrapDraw draw = detail::bootstrap_one_draw(
      fx.model, fx.data, fx.est.first_step, fx.est.second_step.theta_hat,
      fx.cfg, ones, phi_tau, dphi_tau);
  CHECK((draw.theta_star - fx.est.second_step.theta_hat)
            .cwiseAbs()
            .maxCoeff() == 0.0);
  // With theta* equal to theta-hat the studentized statistic reduces to
  // minus the standardized bias estimate.
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(draw.var_star);
  const Eigen::VectorXd expect =
      -(es.operatorInverseSqrt() * draw.bias_star);
  CHECK((draw.t_star - expect).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("doubled multipliers keep the fitted propensity") {
  Fixture fx(150, 8, 53);
  const Eigen::VectorXd twos = Eigen::VectorXd::Constant(150, 2.0);
  const WildFirstStep wf = wild_first_step(fx.est.first_step, fx.data.r, twos);
  // Perturbation equals the residual: the response is recovered and the
  // residual's projection is zero, so the fitted values never move.
  CHECK((wf.r_star - fx.data.r).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((wf.mu_star - fx.est.first_step.mu_hat).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("draws agree with from-scratch refits on the perturbed sample") {
  Fixture fx(200, 12, 57);
  RngStream ws(57, 4, 0, 1);
  const WeightDistribution rad = WeightDistribution::rademacher();
  Eigen::VectorXd w(200);
  for (Eigen::Index i = 0; i < 200; ++i)
    w(i) = rad.sample(ws.uniform(uint64_t(i)));

  const WildFirstStep wf = wild_first_step(fx.est.first_step, fx.data.r, w);
  // The projected perturbed response equals a fresh least-squares fit.
  const FirstStepFit refit = fit_least_squares(fx.data.Z, wf.r_star);
  CHECK((wf.mu_star - refit.mu_hat).cwiseAbs().maxCoeff() < 1e-9);

  const BootstrapDraw draw = detail::bootstrap_one_draw(
      fx.model, fx.data, fx.est.first_step, fx.est.second_step.theta_hat,
      fx.cfg, w, phi_tau, dphi_tau);
  GmmConfig warm = fx.cfg;
  warm.theta_init = fx.est.second_step.theta_hat;
  const GmmSolution scratch =
      run_second_step(fx.model, fx.data, wf.mu_star, warm, w);
  CHECK((draw.theta_star - scratch.theta_hat).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("studentized draws are centered and scaled sanely") {
  Fixture fx(1000, 80, 61);
  BootstrapConfig bcfg;
  bcfg.n_draws = 300;
  bcfg.seed = 61;
  const BootstrapResult res =
      bootstrap_statistic(fx.model, fx.data, fx.est.first_step,
                          fx.est.second_step.theta_hat, fx.cfg, bcfg,
                          phi_tau, dphi_tau);
  CHECK(res.failed_draws.empty());
  REQUIRE(res.t_scalars.size() == 300);
  const double mean = res.t_scalars.mean();
  const double var =
      (res.t_scalars.array() - mean).square().sum() / (300.0 - 1.0);
  // The draws deliberately mirror the second-order bias of the real
  // statistic, so with 80 covariates the mean sits well off zero; only
  // gross miscentering or a broken scale should trip these bounds.
  CHECK(std::abs(mean) < 1.0);
  CHECK(var > 0.5);
  CHECK(var < 3.0);
}

TEST_CASE("draws are reproducible and indexed by draw, not order") {
  Fixture fx(120, 8, 63);
  BootstrapConfig bcfg;
  bcfg.n_draws = 60;
  bcfg.seed = 5;
  const BootstrapResult a =
      bootstrap_statistic(fx.model, fx.data, fx.est.first_step,
                          fx.est.second_step.theta_hat, fx.cfg, bcfg,
                          phi_tau, dphi_tau);
  const BootstrapResult b =
      bootstrap_statistic(fx.model, fx.data, fx.est.first_step,
                          fx.est.second_step.theta_hat, fx.cfg, bcfg,
                          phi_tau, dphi_tau);
  CHECK((a.t_scalars - b.t_scalars).cwiseAbs().maxCoeff() == 0.0);

  bcfg.rep = 1;  // a different study repetition gets fresh weights
  const BootstrapResult c =
      bootstrap_statistic(fx.model, fx.data, fx.est.first_step,
                          fx.est.second_step.theta_hat, fx.cfg, bcfg,
                          phi_tau, dphi_tau);
  CHECK((a.t_scalars - c.t_scalars).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("stored weights come from the declared support") {
  Fixture fx(80, 6, 67);
  BootstrapConfig bcfg;
  bcfg.n_draws = 50;
  bcfg.seed = 7;
  bcfg.store_weights = true;
  bcfg.dist = WeightDistribution::webb6();
  const BootstrapResult res =
      bootstrap_statistic(fx.model, fx.data, fx.est.first_step,
                          fx.est.second_step.theta_hat, fx.cfg, bcfg,
                          phi_tau, dphi_tau);
  REQUIRE(res.draws.size() == 50);
  const auto& pts = bcfg.dist.points();
  for (const auto& d : res.draws) {
    REQUIRE(d.weights.size() == 80);
    for (Eigen::Index i = 0; i < 80; ++i) {
      bool found = false;
      for (double p : pts)
        if (d.weights(i) == doctest::Approx(p).epsilon(1e-12)) found = true;
      CHECK(found);
    }
  }
}

TEST_CASE("quantile uses the lowest order statistic covering alpha") {
  Eigen::VectorXd t(4);
  t << 3, 1, 4, 2;
  CHECK(bootstrap_quantile(t, 0.5) == 2.0);
  CHECK(bootstrap_quantile(t, 0.25) == 1.0);
  CHECK(bootstrap_quantile(t, 0.251) == 2.0);
  CHECK(bootstrap_quantile(t, 1.0) == 4.0);
  CHECK(bootstrap_quantile(t, 0.0) == 1.0);
}

TEST_CASE("percentile-t interval arithmetic") {
  Eigen::VectorXd t(5);
  t << -2, -1, 0, 1, 2;
  const PercentileTInterval ci =
      percentile_t_interval(1.0, 0.25, 0.5, t, 0.2);
  // center 0.75, q_0.1 = t_(1) = -2, q_0.9 = t_(5) = 2
  CHECK(ci.q_lower == -2.0);
  CHECK(ci.q_upper == 2.0);
  CHECK(ci.lower == doctest::Approx(0.75 - 2.0 * 0.5));
  CHECK(ci.upper == doctest::Approx(0.75 + 2.0 * 0.5));
}

TEST_CASE("too few draws and degenerate weights are rejected") {
  Fixture fx(80, 6, 71);
  BootstrapConfig bcfg;
  bcfg.n_draws = 10;
  CHECK_THROWS_AS(
      bootstrap_statistic(fx.model, fx.data, fx.est.first_step,
                          fx.est.second_step.theta_hat, fx.cfg, bcfg,
                          phi_tau, dphi_tau),
      config_error);
  CHECK_THROWS_AS(
      detail::bootstrap_one_draw(fx.model, fx.data, fx.est.first_step,
                                 fx.est.second_step.theta_hat, fx.cfg,
                                 Eigen::VectorXd::Zero(80), phi_tau,
                                 dphi_tau),
      numerical_error);
}

TEST_CASE("zeroing a whole multiplier is not the same as deleting one unit") {
  // The correct deletion removes one unit of weight; the foil removes
  // the whole doubled observation. With unit weights the two coincide
  // exactly; with genuine multiplier weights they must not.
  Fixture fx(300, 40, 73);
  const Eigen::Index n = 300;

  const Eigen::VectorXd ones = Eigen::VectorXd::Ones(n);
  const JackknifeResult correct_ones = weighted_jackknife(
      fx.model, fx.data, fx.est.first_step, fx.est.first_step.mu_hat,
      fx.data.r, ones, fx.est.second_step.theta_hat, fx.cfg);
  const JackknifeResult naive_ones = naive::jackknife_zero_out(
      fx.model, fx.data, fx.est.first_step, fx.est.first_step.mu_hat,
      fx.data.r, ones, fx.est.second_step.theta_hat, fx.cfg);
  CHECK((correct_ones.var_hat - naive_ones.var_hat).cwiseAbs().maxCoeff() <
        1e-10);

  RngStream ws(73, 4, 0, 2);
  const WeightDistribution rad = WeightDistribution::rademacher();
  Eigen::VectorXd w(n);
  for (Eigen::Index i = 0; i < n; ++i)
    w(i) = rad.sample(ws.uniform(uint64_t(i)));
  const WildFirstStep wf = wild_first_step(fx.est.first_step, fx.data.r, w);
  GmmConfig warm = fx.cfg;
  warm.theta_init = fx.est.second_step.theta_hat;
  const GmmSolution star =
      run_second_step(fx.model, fx.data, wf.mu_star, warm, w);

  const JackknifeResult correct = weighted_jackknife(
      fx.model, fx.data, fx.est.first_step, wf.mu_star, wf.r_star, w,
      star.theta_hat, fx.cfg);
  const JackknifeResult naive = naive::jackknife_zero_out(
      fx.model, fx.data, fx.est.first_step, wf.mu_star, wf.r_star, w,
      star.theta_hat, fx.cfg);
  const Eigen::VectorXd g = dphi_tau(star.theta_hat);
  const double v_correct = g.dot(correct.var_hat * g);
  const double v_naive = g.dot(naive.var_hat * g);
  CHECK(std::abs(v_naive - v_correct) / v_correct > 1e-3);
}

}  // TEST_SUITE
