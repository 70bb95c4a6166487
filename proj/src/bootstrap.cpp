#include "manycov/bootstrap.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "manycov/normal.hpp"

namespace manycov {

namespace {

void check_moment(const std::string& name, const std::string& which,
                  double got, double want) {
  if (std::abs(got - want) > 1e-12) {
    std::ostringstream msg;
    msg << "weight distribution '" << name << "': " << which << " must be "
        << want << ", got " << got;
    throw config_error(msg.str());
  }
}

}  // namespace

WeightDistribution::WeightDistribution(std::string name,
                                       std::vector<double> points,
                                       std::vector<double> probs)
    : name_(std::move(name)), points_(std::move(points)), probs_(std::move(probs)) {
  if (points_.empty() || points_.size() != probs_.size())
    throw config_error("weight distribution '" + name_ +
                       "': points and probabilities must match and be non-empty");
  double psum = 0.0, mean = 0.0;
  for (size_t j = 0; j < points_.size(); ++j) {
    if (probs_[j] <= 0.0)
      throw config_error("weight distribution '" + name_ +
                         "': probabilities must be positive");
    psum += probs_[j];
    mean += probs_[j] * points_[j];
  }
  check_moment(name_, "total probability", psum, 1.0);
  check_moment(name_, "mean", mean, 1.0);
  double var = 0.0, third = 0.0;
  for (size_t j = 0; j < points_.size(); ++j) {
    const double e = points_[j] - 1.0;
    var += probs_[j] * e * e;
    third += probs_[j] * e * e * e;
  }
  check_moment(name_, "variance", var, 1.0);
  check_moment(name_, "third central moment", third, 0.0);
  cum_.resize(probs_.size());
  double acc = 0.0;
  for (size_t j = 0; j < probs_.size(); ++j) {
    acc += probs_[j];
    cum_[j] = acc;
  }
  cum_.back() = 1.0;
}

WeightDistribution WeightDistribution::rademacher() {
  return WeightDistribution("rademacher", {0.0, 2.0}, {0.5, 0.5});
}

WeightDistribution WeightDistribution::webb6() {
  const double s15 = std::sqrt(1.5), s05 = std::sqrt(0.5);
  const double p = 1.0 / 6.0;
  return WeightDistribution("webb6",
                            {1.0 - s15, 0.0, 1.0 - s05, 1.0 + s05, 2.0, 1.0 + s15},
                            {p, p, p, p, p, p});
}

WeightDistribution WeightDistribution::custom(std::string name,
                                              std::vector<double> points,
                                              std::vector<double> probs) {
  return WeightDistribution(std::move(name), std::move(points), std::move(probs));
}

WeightDistribution WeightDistribution::by_name(const std::string& name) {
  if (name == "rademacher") return rademacher();
  if (name == "webb" || name == "webb6") return webb6();
  throw config_error("unknown weight distribution '" + name +
                     "' (available: rademacher, webb6)");
}

double WeightDistribution::sample(double u) const {
  for (size_t j = 0; j + 1 < cum_.size(); ++j)
    if (u < cum_[j]) return points_[j];
  return points_.back();
}

WildFirstStep wild_first_step(const FirstStepFit& fit, const Eigen::VectorXd& r,
                              const Eigen::VectorXd& weights) {
  if (r.size() != fit.n() || weights.size() != fit.n())
    throw config_error("wild_first_step: length mismatch");
  const Eigen::VectorXd pert =
      (weights.array() - 1.0).matrix().cwiseProduct(r - fit.mu_hat);
  WildFirstStep out;
  out.r_star = fit.mu_hat + pert;
  out.mu_star = fit.mu_hat + project(fit, pert);
  return out;
}

namespace detail {

BootstrapDraw bootstrap_one_draw(
    const MomentModel& model, const Dataset& data, const FirstStepFit& fit,
    const Eigen::VectorXd& theta_hat, const GmmConfig& cfg,
    const Eigen::VectorXd& w,
    const std::function<double(const Eigen::VectorXd&)>& phi,
    const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& dphi) {
  const WildFirstStep wfs = wild_first_step(fit, data.r, w);
  GmmConfig warm = cfg;
  warm.theta_init = theta_hat;
  const GmmSolution star = run_second_step(model, data, wfs.mu_star, warm, w);
  const JackknifeResult jk = weighted_jackknife(
      model, data, fit, wfs.mu_star, wfs.r_star, w, star.theta_hat, cfg);

  BootstrapDraw d;
  d.theta_star = star.theta_hat;
  d.bias_star = jk.bias_hat;
  d.var_star = jk.var_hat;

  // Inverse square root through the eigendecomposition, flooring
  // eigenvalues at 1e-12 * trace; multiplier weights can be negative,
  // so the raw matrix is not always positive semidefinite.
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(jk.var_hat);
  const double tr = jk.var_hat.trace();
  const double floor_val = std::max(1e-12 * std::max(tr, 0.0), 1e-300);
  Eigen::VectorXd lam = es.eigenvalues();
  for (Eigen::Index j = 0; j < lam.size(); ++j) {
    if (lam(j) < floor_val) {
      lam(j) = floor_val;
      ++d.floored_eigs;
    }
  }
  const Eigen::VectorXd dev = star.theta_hat - theta_hat - jk.bias_hat;
  const Eigen::MatrixXd& U = es.eigenvectors();
  d.t_star = U * lam.cwiseSqrt().cwiseInverse().asDiagonal() *
             (U.transpose() * dev);

  const Eigen::VectorXd g = dphi(theta_hat);
  const Eigen::VectorXd Ug = U.transpose() * g;
  const double var_phi = (lam.array() * Ug.array().square()).sum();
  d.t_scalar = (phi(star.theta_hat) - phi(theta_hat) - g.dot(jk.bias_hat)) /
               std::sqrt(var_phi);
  return d;
}

}  // namespace detail

BootstrapResult bootstrap_statistic(
    const MomentModel& model, const Dataset& data, const FirstStepFit& fit,
    const Eigen::VectorXd& theta_hat, const GmmConfig& cfg,
    const BootstrapConfig& bcfg,
    const std::function<double(const Eigen::VectorXd&)>& phi,
    const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& dphi) {
  const Eigen::Index n = data.n();
  const int B = bcfg.n_draws;
  if (B < 50) throw config_error("bootstrap needs at least 50 draws");
  if (fit.n() != n) throw config_error("fit and data sizes differ");

  std::vector<BootstrapDraw> slots(static_cast<size_t>(B));
  std::vector<char> ok(size_t(B), 0);

#pragma omp parallel for schedule(static)
  for (int b = 0; b < B; ++b) {
    const RngStream ws(bcfg.seed, 4, bcfg.rep, uint32_t(b));
    Eigen::VectorXd w(n);
    for (Eigen::Index i = 0; i < n; ++i)
      w(i) = bcfg.dist.sample(ws.uniform(uint64_t(i)));
    try {
      slots[size_t(b)] = detail::bootstrap_one_draw(model, data, fit, theta_hat,
                                                    cfg, w, phi, dphi);
      if (bcfg.store_weights) slots[size_t(b)].weights = w;
      ok[size_t(b)] = 1;
    } catch (const error&) {
      ok[size_t(b)] = 0;
    }
  }

  BootstrapResult res;
  for (int b = 0; b < B; ++b)
    if (!ok[size_t(b)]) res.failed_draws.push_back(b);
  if (double(res.failed_draws.size()) > 0.01 * double(B)) {
    std::ostringstream msg;
    msg << res.failed_draws.size() << " of " << B
        << " bootstrap draws failed (more than 1%)";
    throw numerical_error(msg.str());
  }
  res.draws.reserve(size_t(B) - res.failed_draws.size());
  for (int b = 0; b < B; ++b)
    if (ok[size_t(b)]) res.draws.push_back(std::move(slots[size_t(b)]));
  res.t_scalars.resize(Eigen::Index(res.draws.size()));
  for (size_t j = 0; j < res.draws.size(); ++j)
    res.t_scalars(Eigen::Index(j)) = res.draws[j].t_scalar;
  return res;
}

double bootstrap_quantile(Eigen::VectorXd t_draws, double alpha) {
  const Eigen::Index B = t_draws.size();
  if (B == 0) throw config_error("quantile of an empty sample");
  if (!(alpha >= 0.0 && alpha <= 1.0))
    throw config_error("quantile level must be in [0,1]");
  std::sort(t_draws.data(), t_draws.data() + B);
  Eigen::Index idx = Eigen::Index(std::ceil(alpha * double(B)));
  idx = std::max<Eigen::Index>(1, std::min(idx, B));
  return t_draws(idx - 1);
}

PercentileTInterval percentile_t_interval(double phi_hat, double bias_phi,
                                          double se_phi,
                                          const Eigen::VectorXd& t_draws,
                                          double alpha) {
  PercentileTInterval out;
  out.q_lower = bootstrap_quantile(t_draws, alpha / 2.0);
  out.q_upper = bootstrap_quantile(t_draws, 1.0 - alpha / 2.0);
  const double center = phi_hat - bias_phi;
  out.lower = center - out.q_upper * se_phi;
  out.upper = center - out.q_lower * se_phi;
  return out;
}

InferenceReport run_inference(
    const MomentModel& model, const Dataset& data, const FirstStepFit& fit,
    const GmmSolution& base, const GmmConfig& cfg,
    const std::function<double(const Eigen::VectorXd&)>& phi,
    const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& dphi,
    const std::string& functional_name, const InferenceOptions& opts) {
  if (!(opts.alpha > 0.0 && opts.alpha < 1.0))
    throw config_error("alpha must be in (0,1)");

  const JackknifeResult jk =
      jackknife_two_step(model, data, fit, base.theta_hat, cfg);
  const Eigen::VectorXd g = dphi(base.theta_hat);

  InferenceReport rep;
  rep.theta_hat = base.theta_hat;
  rep.bias_hat = jk.bias_hat;
  rep.var_hat = jk.var_hat;
  rep.functional_name = functional_name;
  rep.eval_a = opts.eval_a;
  rep.phi_hat = phi(base.theta_hat);
  rep.phi_corrected = rep.phi_hat - g.dot(jk.bias_hat);
  rep.phi_se = std::sqrt(std::max(0.0, g.dot(jk.var_hat * g)));
  rep.alpha = opts.alpha;
  rep.seed = opts.seed;
  rep.n_draws = opts.n_draws;

  if (opts.n_draws == 0) {
    const double z = normal_quantile(1.0 - opts.alpha / 2.0);
    rep.interval_method = "normal";
    rep.q_lower = -z;
    rep.q_upper = z;
    rep.ci_lower = rep.phi_corrected - z * rep.phi_se;
    rep.ci_upper = rep.phi_corrected + z * rep.phi_se;
    return rep;
  }

  BootstrapConfig bcfg;
  bcfg.n_draws = opts.n_draws;
  bcfg.dist = opts.dist;
  bcfg.seed = opts.seed;
  const BootstrapResult boot = bootstrap_statistic(
      model, data, fit, base.theta_hat, cfg, bcfg, phi, dphi);
  const PercentileTInterval ci = percentile_t_interval(
      rep.phi_hat, g.dot(jk.bias_hat), rep.phi_se, boot.t_scalars, opts.alpha);

  rep.t_draws = boot.t_scalars;
  rep.interval_method = "percentile-t";
  rep.q_lower = ci.q_lower;
  rep.q_upper = ci.q_upper;
  rep.ci_lower = ci.lower;
  rep.ci_upper = ci.upper;
  rep.failures = int(boot.failed_draws.size());
  return rep;
}

}  // namespace manycov
