#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "manycov/firststep.hpp"
#include "manycov/gmm.hpp"
#include "manycov/jackknife.hpp"
#include "manycov/philox.hpp"

namespace manycov {

// Discrete multiplier-weight distribution with mean 1, variance 1 and
// zero third central moment, validated exactly on construction.
// Distributions violating a moment (Mammen's two-point law, say) are
// rejected naming the moment that failed.
class WeightDistribution {
 public:
  static WeightDistribution rademacher();  // {0, 2} with prob 1/2
  static WeightDistribution webb6();       // 1 +- sqrt(3/2), 1 +- 1, 1 +- sqrt(1/2)
  static WeightDistribution custom(std::string name, std::vector<double> points,
                                   std::vector<double> probs);
  static WeightDistribution by_name(const std::string& name);

  // Quantile transform of u in [0,1).
  double sample(double u) const;

  const std::string& name() const { return name_; }
  const std::vector<double>& points() const { return points_; }
  const std::vector<double>& probs() const { return probs_; }

 private:
  WeightDistribution(std::string name, std::vector<double> points,
                     std::vector<double> probs);
  std::string name_;
  std::vector<double> points_;
  std::vector<double> probs_;
  std::vector<double> cum_;
};

// Wild first step: r* = mu + (w - 1) eps and its projection
// mu* = mu + P [(w - 1) eps]. With w identically 1 the perturbation is
// exactly the zero vector, so mu* equals mu bit for bit.
struct WildFirstStep {
  Eigen::VectorXd r_star;
  Eigen::VectorXd mu_star;
};
WildFirstStep wild_first_step(const FirstStepFit& fit, const Eigen::VectorXd& r,
                              const Eigen::VectorXd& weights);

struct BootstrapDraw {
  Eigen::VectorXd theta_star;
  Eigen::VectorXd bias_star;
  Eigen::MatrixXd var_star;
  Eigen::VectorXd t_star;    // var_star^{-1/2} (theta* - theta - bias*)
  double t_scalar = 0.0;     // studentized scalar functional
  Eigen::VectorXd weights;   // stored only when requested
  int floored_eigs = 0;
};

struct BootstrapConfig {
  int n_draws = 500;
  WeightDistribution dist = WeightDistribution::rademacher();
  uint64_t seed = 0;
  uint32_t rep = 0;          // stream coordinate when embedded in a study
  bool store_weights = false;
};

struct BootstrapResult {
  std::vector<BootstrapDraw> draws;    // successful draws, in draw order
  std::vector<int> failed_draws;
  Eigen::VectorXd t_scalars;           // gathered from draws, draw order
};

namespace detail {

// One multiplier-bootstrap draw with explicit weights. The public entry
// samples the weights per draw and loops this; exposed so tests can pin
// degenerate weight patterns.
BootstrapDraw bootstrap_one_draw(
    const MomentModel& model, const Dataset& data, const FirstStepFit& fit,
    const Eigen::VectorXd& theta_hat, const GmmConfig& cfg,
    const Eigen::VectorXd& w,
    const std::function<double(const Eigen::VectorXd&)>& phi,
    const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& dphi);

}  // namespace detail

// Multiplier bootstrap with the jackknife run inside every draw:
// weights enter the first step through the wild residuals and the
// second step as multipliers, and each draw's bias/variance come from
// the weighted delete-one engine. Requires n_draws >= 50; more than 1%
// failed draws fails the whole call.
BootstrapResult bootstrap_statistic(
    const MomentModel& model, const Dataset& data, const FirstStepFit& fit,
    const Eigen::VectorXd& theta_hat, const GmmConfig& cfg,
    const BootstrapConfig& bcfg,
    const std::function<double(const Eigen::VectorXd&)>& phi,
    const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& dphi);

// Lowest sorted value t_(ceil(alpha B)): the smallest t with empirical
// CDF at least alpha.
double bootstrap_quantile(Eigen::VectorXd t_draws, double alpha);

// Percentile-t interval for a scalar functional: the bias-corrected
// estimate minus (upper/lower) bootstrap quantiles of the studentized
// statistic times the jackknife standard error.
struct PercentileTInterval {
  double lower = 0.0;
  double upper = 0.0;
  double q_lower = 0.0;
  double q_upper = 0.0;
};
PercentileTInterval percentile_t_interval(double phi_hat, double bias_phi,
                                          double se_phi,
                                          const Eigen::VectorXd& t_draws,
                                          double alpha);

// Everything the estimate command reports. Serialized to JSON by
// report_to_json with a fixed field set; see docs/schemas.md.
struct InferenceReport {
  Eigen::VectorXd theta_hat;
  Eigen::VectorXd bias_hat;
  Eigen::MatrixXd var_hat;
  std::string functional_name;
  double eval_a = 0.0;
  double phi_hat = 0.0;
  double phi_corrected = 0.0;
  double phi_se = 0.0;
  Eigen::VectorXd t_draws;
  double q_lower = 0.0;
  double q_upper = 0.0;
  std::string interval_method;  // "percentile-t" or "normal"
  double ci_lower = 0.0;
  double ci_upper = 0.0;
  double alpha = 0.05;
  uint64_t seed = 0;
  int n_draws = 0;
  int failures = 0;
};

struct InferenceOptions {
  int n_draws = 500;  // 0 switches to the normal approximation
  WeightDistribution dist = WeightDistribution::rademacher();
  uint64_t seed = 0;
  double alpha = 0.05;
  double eval_a = 0.5;
};

// Full pipeline behind the estimate command: two-step fit is supplied,
// jackknife correction plus percentile-t (or normal) interval for the
// scalar functional phi.
InferenceReport run_inference(
    const MomentModel& model, const Dataset& data, const FirstStepFit& fit,
    const GmmSolution& base, const GmmConfig& cfg,
    const std::function<double(const Eigen::VectorXd&)>& phi,
    const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& dphi,
    const std::string& functional_name, const InferenceOptions& opts);

}  // namespace manycov
