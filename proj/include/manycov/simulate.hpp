#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "manycov/bootstrap.hpp"
#include "manycov/dataset.hpp"
#include "manycov/mte.hpp"

namespace manycov {

// Synthetic design for the coverage studies. Instruments are iid
// uniform, the propensity is linear in the first four of them,
//   P(T=1|Z) = 0.1 + 0.205 (Z1 + Z2 + Z3 + Z4)  in [0.1, 0.92],
// and the outcome is Y = T (0.5 + U1) + (1-T) U0 with
// U0 ~ U[-1,1] and 0.5 + U1 = 2 u (1 - V), u ~ U[0,1], where V is the
// uniform that selects treatment (T = 1{V < P}). This makes
// E[Y | P = a] = a - a^2/2 exactly, so the true second-step
// coefficients are (0, 1, -1/2) and tau(a) = 1 - a.
struct DgpTruth {
  Eigen::VectorXd propensity;
  Eigen::VectorXd theta0;

  double tau_at(double a) const { return 1.0 - a; }
  // Conditional-moment closures for the bias/variance oracle.
  DgpMoments moments() const;
};

struct DgpDraw {
  Dataset data;   // y = outcome (1 column), r = treatment, Z = [1, Z1..Z_{k-1}]
  DgpTruth truth;
};

// Draws one dataset from indexed streams (seed, rep): kinds 0..3 hold
// instruments, selection uniform, control outcome and treated outcome.
// Needs k_max in [5, 200]: four instruments drive the propensity and
// the leading column is the intercept.
DgpDraw generate_dgp(Eigen::Index n, Eigen::Index k_max, uint64_t seed,
                     uint32_t rep);

enum class SimMode { oracle_normal, bootstrap_percentile_t };

struct SimulationSpec {
  Eigen::Index n = 2000;
  std::vector<Eigen::Index> k_grid = {5, 40, 80};
  int reps = 2000;
  int bootstrap_B = 500;
  WeightDistribution weights = WeightDistribution::rademacher();
  uint64_t seed = 1;
  double eval_a = 0.5;
  SimMode mode = SimMode::oracle_normal;
};

struct SimulationRow {
  Eigen::Index k = 0;
  std::string estimator;  // "uncorrected" or "corrected"
  double bias = 0.0;      // mean of sqrt(n) (tau_hat - tau0)
  double sd = 0.0;        // sqrt(n)-scaled sd across repetitions
  double rmse = 0.0;      // sqrt(bias^2 + sd^2)
  double coverage = 0.0;
  double length = 0.0;    // sqrt(n)-scaled mean interval length
  int failures = 0;
  bool flagged = false;   // more than 2% of repetitions failed
};

struct SimulationResult {
  SimulationSpec spec;
  double tau0 = 0.0;
  std::vector<SimulationRow> rows;
  // Raw per-repetition estimates (reps x k_grid size), NaN on failure.
  // Kept so downstream checks can recompute the table exactly.
  Eigen::MatrixXd tau_raw;
  Eigen::MatrixXd tau_bc_raw;
  Eigen::MatrixXd ci_lo_raw;   // bootstrap mode only, else empty
  Eigen::MatrixXd ci_hi_raw;
};

// Monte Carlo study of the tau(eval_a) estimator across the k grid.
// Every repetition draws a fresh dataset at max(k_grid) columns and
// reuses its leading columns for the smaller k values. Uncorrected
// rows always use oracle-normal coverage (the +-1.96 sd band across
// repetitions); corrected rows follow the requested mode.
SimulationResult run_monte_carlo(const SimulationSpec& spec);

}  // namespace manycov
