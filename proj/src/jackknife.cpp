#include "manycov/jackknife.hpp"

#include <cmath>
#include <sstream>
#include <vector>

namespace manycov {

namespace {

bool monomial_fast_path(const MomentModel& model, const GmmConfig& cfg) {
  // Degrees above 4 fall back to the generic refit path; the fixed
  // sweep buffers below cover powers up to 2*4.
  return model.poly_degree() >= 0 && model.poly_degree() <= 4 &&
         cfg.omega.size() == 0 &&
         model.dim_moment() == model.dim_theta() &&
         model.dim_theta() == model.poly_degree() + 1;
}

std::vector<std::vector<double>> pascal(int pmax) {
  std::vector<std::vector<double>> C(size_t(pmax) + 1);
  for (int p = 0; p <= pmax; ++p) {
    C[size_t(p)].assign(size_t(p) + 1, 1.0);
    for (int t = 1; t < p; ++t)
      C[size_t(p)][size_t(t)] =
          C[size_t(p) - 1][size_t(t) - 1] + C[size_t(p) - 1][size_t(t)];
  }
  return C;
}

// Monomial models admit closed-form delete-one solves: the deleted
// fitted values are mu + c_l pi_.l, so every power sum the normal
// equations need expands binomially into hat-column moments. One pass
// over each hat column then serves the whole deletion.
void fast_loo_fill(const MomentModel& model, const Dataset& data,
                   const FirstStepFit& design, const Eigen::VectorXd& mu,
                   const Eigen::VectorXd& r, const Eigen::VectorXd& w,
                   Eigen::MatrixXd& theta_loo, std::vector<char>& failed,
                   std::vector<char>& skipped) {
  const Eigen::Index n = data.n();
  const int q = model.poly_degree();
  const Eigen::Index d = q + 1;
  const int p2 = 2 * q;
  const auto C = pascal(p2);

  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) y(i) = model.response(data, i);

  // Weighted monomial columns w mu^u and w y mu^u.
  Eigen::MatrixXd wmu(n, p2 + 1);
  wmu.col(0) = w;
  for (int u = 1; u <= p2; ++u)
    wmu.col(u) = wmu.col(u - 1).cwiseProduct(mu);
  Eigen::MatrixXd wymu(n, q + 1);
  wymu.col(0) = w.cwiseProduct(y);
  for (int u = 1; u <= q; ++u)
    wymu.col(u) = wymu.col(u - 1).cwiseProduct(mu);

  // Hat-power moments: t = 0 is a plain sum, t = 1 a projection, and
  // t >= 2 come from the per-column sweep inside the deletion loop.
  Eigen::VectorXd T0(p2 + 1), U0(q + 1);
  for (int u = 0; u <= p2; ++u) T0(u) = wmu.col(u).sum();
  for (int u = 0; u <= q; ++u) U0(u) = wymu.col(u).sum();
  Eigen::MatrixXd projT(n, p2);  // column u = Pi (w mu^u)
  for (int u = 0; u < p2; ++u) projT.col(u) = project(design, wmu.col(u));
  Eigen::MatrixXd projU(n, q);
  for (int u = 0; u < q; ++u) projU.col(u) = project(design, wymu.col(u));

  const bool cached = design.hat.size() > 0;

#pragma omp parallel for schedule(static)
  for (Eigen::Index ell = 0; ell < n; ++ell) {
    if (w(ell) == 0.0) {
      skipped[size_t(ell)] = 1;
      continue;
    }
    const double pll = design.leverage(ell);
    if (pll > 1.0 - 1e-10) {
      failed[size_t(ell)] = 1;
      continue;
    }
    const double c = (mu(ell) - r(ell)) / (1.0 - pll);

    Eigen::VectorXd hbuf;
    const double* h;
    if (cached) {
      h = design.hat.data() + size_t(ell) * size_t(n);
    } else {
      hbuf = design.Q * design.Q.row(ell).transpose();
      h = hbuf.data();
    }

    // sweepT[t-2][u] = sum_i w_i mu_i^u h_i^t, same with y for sweepU.
    double sweepT[7][7] = {};
    double sweepU[7][7] = {};
    for (Eigen::Index i = 0; i < n; ++i) {
      const double hi = h[i];
      double ht = hi * hi;
      for (int t = 2; t <= p2; ++t) {
        for (int u = 0; u <= p2 - t; ++u)
          sweepT[t - 2][u] += wmu(i, u) * ht;
        if (t <= q)
          for (int u = 0; u <= q - t; ++u)
            sweepU[t - 2][u] += wymu(i, u) * ht;
        ht *= hi;
      }
    }

    double cpow[9];
    cpow[0] = 1.0;
    for (int t = 1; t <= p2; ++t) cpow[t] = cpow[t - 1] * c;
    const double mudel = mu(ell) + c * pll;
    double mudelp[9];
    mudelp[0] = 1.0;
    for (int p = 1; p <= p2; ++p) mudelp[p] = mudelp[p - 1] * mudel;

    // Power sums over the deleted fit, own term removed with weight 1.
    double S[9], R[5];
    for (int p = 0; p <= p2; ++p) {
      double acc = 0.0;
      for (int t = 0; t <= p; ++t) {
        const int u = p - t;
        double Ttu;
        if (t == 0)
          Ttu = T0(u);
        else if (t == 1)
          Ttu = projT(ell, u);
        else
          Ttu = sweepT[t - 2][u];
        acc += C[size_t(p)][size_t(t)] * cpow[t] * Ttu;
      }
      S[p] = acc - mudelp[p];
    }
    for (int p = 0; p <= q; ++p) {
      double acc = 0.0;
      for (int t = 0; t <= p; ++t) {
        const int u = p - t;
        double Utu;
        if (t == 0)
          Utu = U0(u);
        else if (t == 1)
          Utu = projU(ell, u);
        else
          Utu = sweepU[t - 2][u];
        acc += C[size_t(p)][size_t(t)] * cpow[t] * Utu;
      }
      R[p] = acc - y(ell) * mudelp[p];
    }

    Eigen::MatrixXd A(d, d);
    Eigen::VectorXd b(d);
    for (Eigen::Index a = 0; a < d; ++a) {
      b(a) = R[a];
      for (Eigen::Index bcol = 0; bcol < d; ++bcol) A(a, bcol) = S[a + bcol];
    }
    Eigen::FullPivLU<Eigen::MatrixXd> lu(A);
    if (!lu.isInvertible()) {
      failed[size_t(ell)] = 1;
      continue;
    }
    theta_loo.row(ell) = lu.solve(b).transpose();
  }
}

void generic_loo_fill(const MomentModel& model, const Dataset& data,
                      const FirstStepFit& design, const Eigen::VectorXd& mu,
                      const Eigen::VectorXd& r, const Eigen::VectorXd& w,
                      const Eigen::VectorXd& theta_hat, const GmmConfig& cfg,
                      Eigen::MatrixXd& theta_loo, std::vector<char>& failed,
                      std::vector<char>& skipped) {
  const Eigen::Index n = data.n();
  GmmConfig warm = cfg;
  warm.theta_init = theta_hat;

#pragma omp parallel for schedule(static)
  for (Eigen::Index ell = 0; ell < n; ++ell) {
    if (w(ell) == 0.0) {
      skipped[size_t(ell)] = 1;
      continue;
    }
    const double pll = design.leverage(ell);
    if (pll > 1.0 - 1e-10) {
      failed[size_t(ell)] = 1;
      continue;
    }
    try {
      const double c = (mu(ell) - r(ell)) / (1.0 - pll);
      const Eigen::VectorXd mu_del = mu + c * hat_column(design, ell);
      Eigen::VectorXd w_del = w;
      w_del(ell) -= 1.0;
      // run_second_step so linear-in-theta models get the exact normal
      // equations; only genuinely nonlinear models iterate here.
      const GmmSolution sol = run_second_step(model, data, mu_del, warm, w_del);
      theta_loo.row(ell) = sol.theta_hat.transpose();
    } catch (const error&) {
      failed[size_t(ell)] = 1;
    }
  }
}

}  // namespace

JackknifeResult weighted_jackknife(const MomentModel& model,
                                   const Dataset& data,
                                   const FirstStepFit& design,
                                   const Eigen::VectorXd& mu,
                                   const Eigen::VectorXd& r,
                                   const Eigen::VectorXd& w,
                                   const Eigen::VectorXd& theta_hat,
                                   const GmmConfig& cfg) {
  const Eigen::Index n = data.n();
  const Eigen::Index d = model.dim_theta();
  if (design.n() != n || mu.size() != n || r.size() != n)
    throw config_error("jackknife inputs must share the dataset size");
  if (w.size() && w.size() != n)
    throw config_error("weights length mismatch");
  if (theta_hat.size() != d)
    throw config_error("theta_hat length mismatch");
  if (n < d + 2)
    throw config_error("jackknife needs n >= dim_theta + 2");

  const Eigen::VectorXd wvec =
      w.size() ? w : Eigen::VectorXd::Ones(n);

  JackknifeResult res;
  res.theta_loo = Eigen::MatrixXd::Zero(n, d);
  std::vector<char> failed(size_t(n), 0), skipped(size_t(n), 0);

  if (monomial_fast_path(model, cfg))
    fast_loo_fill(model, data, design, mu, r, wvec, res.theta_loo, failed,
                  skipped);
  else
    generic_loo_fill(model, data, design, mu, r, wvec, theta_hat, cfg,
                     res.theta_loo, failed, skipped);

  std::vector<Eigen::Index> bad;
  for (Eigen::Index ell = 0; ell < n; ++ell)
    if (failed[size_t(ell)]) bad.push_back(ell);
  if (!bad.empty()) {
    std::ostringstream msg;
    msg << bad.size() << " deletion(s) failed:";
    for (size_t j = 0; j < bad.size() && j < 10; ++j) msg << " " << bad[j];
    if (bad.size() > 10) msg << " ...";
    throw numerical_error(msg.str());
  }

  // Serial index-order reductions keep the result identical for any
  // worker count.
  double wsum = 0.0;
  Eigen::VectorXd dot = Eigen::VectorXd::Zero(d);
  for (Eigen::Index ell = 0; ell < n; ++ell) {
    if (skipped[size_t(ell)]) continue;
    wsum += wvec(ell);
    dot += wvec(ell) * res.theta_loo.row(ell).transpose();
  }
  if (wsum == 0.0)
    throw numerical_error("all jackknife weights are zero");
  dot /= wsum;

  Eigen::MatrixXd V = Eigen::MatrixXd::Zero(d, d);
  for (Eigen::Index ell = 0; ell < n; ++ell) {
    if (skipped[size_t(ell)]) continue;
    const Eigen::VectorXd dev = res.theta_loo.row(ell).transpose() - dot;
    V.noalias() += wvec(ell) * dev * dev.transpose();
  }
  V *= double(n - 1) / double(n);

  res.theta_dot = dot;
  res.bias_hat = double(n - 1) * (dot - theta_hat);
  res.var_hat = V;
  return res;
}

JackknifeResult jackknife_two_step(const MomentModel& model,
                                   const Dataset& data,
                                   const FirstStepFit& fit,
                                   const Eigen::VectorXd& theta_hat,
                                   const GmmConfig& cfg) {
  return weighted_jackknife(model, data, fit, fit.mu_hat, data.r,
                            Eigen::VectorXd(), theta_hat, cfg);
}

FunctionalCorrection bias_correct_functional(
    const std::function<double(const Eigen::VectorXd&)>& phi,
    const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& dphi,
    const Eigen::VectorXd& theta_hat, const JackknifeResult& jk,
    CorrectionMode mode) {
  FunctionalCorrection out;
  out.estimate = phi(theta_hat);
  const Eigen::Index n = jk.theta_loo.rows();

  switch (mode) {
    case CorrectionMode::plug_in: {
      out.corrected = phi(theta_hat - jk.bias_hat);
      out.bias = out.estimate - out.corrected;
      const Eigen::VectorXd g = dphi(theta_hat);
      out.variance = g.dot(jk.var_hat * g);
      break;
    }
    case CorrectionMode::linearized: {
      const Eigen::VectorXd g = dphi(theta_hat);
      out.bias = g.dot(jk.bias_hat);
      out.corrected = out.estimate - out.bias;
      out.variance = g.dot(jk.var_hat * g);
      break;
    }
    case CorrectionMode::direct: {
      Eigen::VectorXd phis(n);
      for (Eigen::Index ell = 0; ell < n; ++ell)
        phis(ell) = phi(jk.theta_loo.row(ell).transpose());
      const double phidot = phis.mean();
      out.bias = double(n - 1) * (phidot - out.estimate);
      out.corrected = out.estimate - out.bias;
      out.variance =
          (phis.array() - phidot).square().sum() * double(n - 1) / double(n);
      break;
    }
  }
  return out;
}

}  // namespace manycov
