#include <omp.h>

#include <cctype>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "CLI11.hpp"
#include "manycov/bootstrap.hpp"
#include "manycov/format.hpp"
#include "manycov/mte.hpp"
#include "manycov/simulate.hpp"

namespace {

using namespace manycov;

// Expands "z1..z5" style ranges inside a comma-separated column list.
std::vector<std::string> expand_columns(const std::string& raw) {
  std::vector<std::string> out;
  std::stringstream ss(raw);
  std::string part;
  while (std::getline(ss, part, ',')) {
    if (part.empty()) continue;
    const auto dots = part.find("..");
    if (dots == std::string::npos) {
      out.push_back(part);
      continue;
    }
    const std::string left = part.substr(0, dots);
    std::string right = part.substr(dots + 2);
    auto split_suffix = [](const std::string& s) {
      size_t cut = s.size();
      while (cut > 0 && std::isdigit(static_cast<unsigned char>(s[cut - 1])))
        --cut;
      return std::pair<std::string, std::string>(s.substr(0, cut),
                                                 s.substr(cut));
    };
    const auto [lpre, lnum] = split_suffix(left);
    auto [rpre, rnum] = split_suffix(right);
    if (lnum.empty() || rnum.empty() || (!rpre.empty() && rpre != lpre))
      throw config_error("cannot expand column range '" + part + "'");
    const long lo = std::stol(lnum), hi = std::stol(rnum);
    if (lo > hi)
      throw config_error("empty column range '" + part + "'");
    const bool pad = lnum.size() > 1 && lnum[0] == '0';
    for (long v = lo; v <= hi; ++v) {
      std::string num = std::to_string(v);
      if (pad && num.size() < lnum.size())
        num = std::string(lnum.size() - num.size(), '0') + num;
      out.push_back(lpre + num);
    }
  }
  return out;
}

struct DataArgs {
  std::string path;
  std::string y_cols = "Y";
  std::string r_col;
  std::string z_cols;
};

void add_data_options(CLI::App* cmd, DataArgs& a) {
  cmd->add_option("--data", a.path, "CSV file with a header row")->required();
  cmd->add_option("--y-cols", a.y_cols,
                  "outcome column(s), comma separated (default Y)");
  cmd->add_option("--r-col", a.r_col, "first-step response column")->required();
  cmd->add_option("--z-cols", a.z_cols,
                  "first-step covariate columns; ranges like z1..z5 expand")
      ->required();
}

Dataset load_from(const DataArgs& a) {
  return load_csv(a.path, expand_columns(a.y_cols), a.r_col,
                  expand_columns(a.z_cols));
}

void write_output(const std::string& path, const std::string& content) {
  if (path.empty()) {
    std::cout << content;
    return;
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw config_error("cannot write to '" + path + "'");
  out << content;
}

int main_guarded(int argc, char** argv) {
  CLI::App app{"two-step estimation with many first-step covariates"};
  app.require_subcommand(1);
  app.fallthrough();
  int workers = 0;
  app.add_option("--workers", workers,
                 "worker threads (default: all available cores)");

  // ---- estimate ----
  auto* est = app.add_subcommand(
      "estimate", "two-step fit with jackknife correction and bootstrap CI");
  DataArgs est_data;
  add_data_options(est, est_data);
  std::string moment = "mte";
  int degree = 2;
  int n_boot = 500;
  std::string weights_name = "rademacher";
  uint64_t seed = 1;
  double alpha = 0.05;
  double eval_a = 0.5;
  std::string est_out;
  est->add_option("--moment", moment, "moment function (mte)");
  est->add_option("--degree", degree, "propensity polynomial degree");
  est->add_option("--bootstrap", n_boot,
                  "bootstrap draws; 0 uses the normal approximation");
  est->add_option("--weights", weights_name,
                  "multiplier distribution: rademacher or webb6");
  est->add_option("--seed", seed, "random seed");
  est->add_option("--alpha", alpha, "interval level alpha");
  est->add_option("--eval-a", eval_a, "evaluation point for tau");
  est->add_option("--out", est_out, "write the JSON report here (default stdout)");

  // ---- mte-curve ----
  auto* curve = app.add_subcommand(
      "mte-curve", "tau(a) over a grid with corrected confidence band");
  DataArgs curve_data;
  add_data_options(curve, curve_data);
  int curve_degree = 2;
  double curve_alpha = 0.05;
  std::string curve_out, curve_svg;
  curve->add_option("--degree", curve_degree, "propensity polynomial degree");
  curve->add_option("--alpha", curve_alpha, "band level alpha");
  curve->add_option("--out", curve_out, "write the CSV here (default stdout)");
  curve->add_option("--svg", curve_svg, "also render an SVG plot to this path");

  // ---- simulate ----
  auto* sim = app.add_subcommand("simulate", "Monte Carlo coverage study");
  std::string preset, config_path, k_grid_raw, mode_raw, sim_weights;
  std::string sim_csv, sim_out;
  long long sim_n = -1, sim_reps = -1, sim_boot = -1, sim_seed = -1;
  double sim_eval_a = -1.0;
  sim->add_option("--preset", preset, "repro or smoke");
  sim->add_option("--config", config_path, "key=value configuration file");
  sim->add_option("--n", sim_n, "sample size");
  sim->add_option("--k-grid", k_grid_raw, "covariate counts, e.g. 5,40,80");
  sim->add_option("--reps", sim_reps, "Monte Carlo repetitions");
  sim->add_option("--bootstrap", sim_boot, "bootstrap draws per repetition");
  sim->add_option("--weights", sim_weights, "multiplier distribution");
  sim->add_option("--seed", sim_seed, "random seed");
  sim->add_option("--eval-a", sim_eval_a, "evaluation point for tau");
  sim->add_option("--mode", mode_raw,
                  "oracle-normal or bootstrap-percentile-t");
  sim->add_option("--csv", sim_csv, "write the CSV table to this path");
  sim->add_option("--out", sim_out, "write the text table here (default stdout)");

  // ---- diagnostics ----
  auto* diag = app.add_subcommand(
      "diagnostics", "first-step leverage and balance summary");
  DataArgs diag_data;
  add_data_options(diag, diag_data);
  std::string diag_out;
  diag->add_option("--out", diag_out, "write the report here (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    // Fold CLI11's fine-grained exit codes into the documented 0/1 split.
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }
  if (workers > 0) omp_set_num_threads(workers);

  if (est->parsed()) {
    if (moment != "mte")
      throw config_error("unknown moment '" + moment + "' (available: mte)");
    const Dataset data = load_from(est_data);
    const MteModel model(degree);
    const MteEstimate fit = estimate_mte(data, model);
    InferenceOptions opts;
    opts.n_draws = n_boot;
    opts.dist = WeightDistribution::by_name(weights_name);
    opts.seed = seed;
    opts.alpha = alpha;
    opts.eval_a = eval_a;
    const double a = eval_a;
    const Eigen::VectorXd g = monomials_d1(a, model.dim_theta());
    const InferenceReport rep = run_inference(
        model, data, fit.first_step, fit.second_step, GmmConfig(),
        [a](const Eigen::VectorXd& th) { return mte_tau(th, a); },
        [&g](const Eigen::VectorXd&) { return g; }, "tau", opts);
    write_output(est_out, report_to_json(rep));
    return 0;
  }

  if (curve->parsed()) {
    const Dataset data = load_from(curve_data);
    const MteModel model(curve_degree);
    const MteEstimate fit = estimate_mte(data, model);
    const JackknifeResult jk =
        jackknife_two_step(model, data, fit.first_step,
                           fit.second_step.theta_hat, GmmConfig());
    const auto pts = mte_curve(fit.second_step.theta_hat, jk.bias_hat,
                               jk.var_hat, curve_alpha, default_mte_grid());
    write_output(curve_out, mte_curve_csv(pts));
    if (!curve_svg.empty()) write_output(curve_svg, mte_curve_svg(pts));
    return 0;
  }

  if (sim->parsed()) {
    SimulationSpec spec;
    if (!preset.empty() && !config_path.empty())
      throw config_error("--preset and --config cannot be combined");
    if (!preset.empty()) {
      if (preset == "repro") {
        spec.n = 2000;
        spec.k_grid = {5, 40, 80};
        spec.reps = 2000;
        spec.mode = SimMode::oracle_normal;
        spec.seed = 1;
      } else if (preset == "smoke") {
        spec.n = 200;
        spec.k_grid = {5};
        spec.reps = 50;
        spec.mode = SimMode::oracle_normal;
        spec.seed = 1;
      } else {
        throw config_error("unknown preset '" + preset +
                           "' (available: repro, smoke)");
      }
    }
    if (!config_path.empty()) {
      const SimulationSpec from_file = parse_sim_config(config_path);
      spec = from_file;
    }
    if (sim_n >= 0) spec.n = Eigen::Index(sim_n);
    if (!k_grid_raw.empty()) apply_sim_option(spec, "k_grid", k_grid_raw);
    if (sim_reps >= 0) spec.reps = int(sim_reps);
    if (sim_boot >= 0) spec.bootstrap_B = int(sim_boot);
    if (!sim_weights.empty())
      spec.weights = WeightDistribution::by_name(sim_weights);
    if (sim_seed >= 0) spec.seed = uint64_t(sim_seed);
    if (sim_eval_a >= 0.0) spec.eval_a = sim_eval_a;
    if (!mode_raw.empty()) apply_sim_option(spec, "mode", mode_raw);

    const SimulationResult res = run_monte_carlo(spec);
    if (!sim_csv.empty()) write_output(sim_csv, simulation_csv(res));
    write_output(sim_out, simulation_text(res));
    return 0;
  }

  if (diag->parsed()) {
    const Dataset data = load_from(diag_data);
    const FirstStepFit fit = fit_least_squares(data.Z, data.r);
    const BalanceDiagnostics d = balance_diagnostics(fit);
    std::ostringstream out;
    out << "n                " << fit.n() << "\n";
    out << "columns          " << data.k() << "\n";
    out << "rank             " << fit.rank << "\n";
    out << "k_ratio          " << format_double(d.k_ratio) << "\n";
    out << "max_leverage     " << format_double(d.max_leverage) << "\n";
    out << "sum_sq_leverage  " << format_double(d.sum_sq_leverage) << "\n";
    out << "max_inv_gap      "
        << (d.has_saturated ? std::string("inf (saturated observation)")
                            : format_double(d.max_inv_gap))
        << "\n";
    write_output(diag_out, out.str());
    return 0;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return main_guarded(argc, argv);
  } catch (const manycov::config_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const manycov::data_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const manycov::numerical_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
}
