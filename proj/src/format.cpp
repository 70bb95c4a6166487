#include "manycov/format.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace manycov {

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::string format_fixed(double v, int precision) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v,
                                 std::chars_format::fixed, precision);
  return std::string(buf, res.ptr);
}

namespace {

nlohmann::ordered_json vec_to_json(const Eigen::VectorXd& v) {
  nlohmann::ordered_json a = nlohmann::ordered_json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

nlohmann::ordered_json mat_to_json(const Eigen::MatrixXd& m) {
  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    nlohmann::ordered_json row = nlohmann::ordered_json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(row);
  }
  return rows;
}

std::string pad_left(const std::string& s, size_t width) {
  return s.size() >= width ? s : std::string(width - s.size(), ' ') + s;
}

}  // namespace

std::string report_to_json(const InferenceReport& rep) {
  nlohmann::ordered_json j;
  j["schema"] = "inference-report/1";
  j["theta_hat"] = vec_to_json(rep.theta_hat);
  j["bias_hat"] = vec_to_json(rep.bias_hat);
  j["var_hat"] = mat_to_json(rep.var_hat);
  j["functional"] = {{"name", rep.functional_name},
                     {"eval_a", rep.eval_a},
                     {"estimate", rep.phi_hat},
                     {"corrected", rep.phi_corrected},
                     {"se", rep.phi_se}};
  j["t_draws"] = vec_to_json(rep.t_draws);
  j["quantiles"] = {rep.q_lower, rep.q_upper};
  j["intervals"] = {{"method", rep.interval_method},
                    {"lower", rep.ci_lower},
                    {"upper", rep.ci_upper}};
  j["alpha"] = rep.alpha;
  j["seed"] = rep.seed;
  j["n_draws"] = rep.n_draws;
  j["failures"] = rep.failures;
  return j.dump(2) + "\n";
}

std::string simulation_csv(const SimulationResult& res) {
  std::string out = "k,estimator,bias,sd,rmse,coverage,length,failures,flagged\n";
  for (const SimulationRow& r : res.rows) {
    out += std::to_string(r.k) + "," + r.estimator + "," +
           format_double(r.bias) + "," + format_double(r.sd) + "," +
           format_double(r.rmse) + "," + format_double(r.coverage) + "," +
           format_double(r.length) + "," + std::to_string(r.failures) + "," +
           (r.flagged ? "1" : "0") + "\n";
  }
  return out;
}

std::string simulation_text(const SimulationResult& res) {
  std::ostringstream out;
  out << "n=" << res.spec.n << " reps=" << res.spec.reps << " seed="
      << res.spec.seed << " eval_a=" << format_double(res.spec.eval_a)
      << " mode="
      << (res.spec.mode == SimMode::oracle_normal ? "oracle-normal"
                                                  : "bootstrap-percentile-t")
      << "\n";
  out << "stats are sqrt(n)-scaled; true tau = " << format_double(res.tau0)
      << "\n\n";
  out << pad_left("k", 5) << pad_left("estimator", 13) << pad_left("bias", 10)
      << pad_left("sd", 10) << pad_left("rmse", 10) << pad_left("coverage", 10)
      << pad_left("length", 10) << pad_left("failures", 10) << "\n";
  for (const SimulationRow& r : res.rows) {
    out << pad_left(std::to_string(r.k), 5) << pad_left(r.estimator, 13)
        << pad_left(format_fixed(r.bias, 4), 10)
        << pad_left(format_fixed(r.sd, 4), 10)
        << pad_left(format_fixed(r.rmse, 4), 10)
        << pad_left(format_fixed(r.coverage, 4), 10)
        << pad_left(format_fixed(r.length, 4), 10)
        << pad_left(std::to_string(r.failures) + (r.flagged ? "!" : ""), 10)
        << "\n";
  }
  return out.str();
}

std::string mte_curve_csv(const std::vector<MteCurvePoint>& curve) {
  std::string out = "a,tau_hat,tau_bc,ci_lo,ci_hi\n";
  for (const MteCurvePoint& p : curve) {
    out += format_double(p.a) + "," + format_double(p.tau_hat) + "," +
           format_double(p.tau_bc) + "," + format_double(p.ci_lo) + "," +
           format_double(p.ci_hi) + "\n";
  }
  return out;
}

std::string mte_curve_svg(const std::vector<MteCurvePoint>& curve) {
  if (curve.empty()) throw config_error("cannot plot an empty curve");
  const double W = 800.0, H = 500.0, ml = 70.0, mr = 20.0, mt = 20.0,
               mb = 50.0;
  double ymin = curve.front().ci_lo, ymax = curve.front().ci_hi;
  double xmin = curve.front().a, xmax = curve.front().a;
  for (const MteCurvePoint& p : curve) {
    ymin = std::min({ymin, p.ci_lo, p.tau_hat, p.tau_bc});
    ymax = std::max({ymax, p.ci_hi, p.tau_hat, p.tau_bc});
    xmin = std::min(xmin, p.a);
    xmax = std::max(xmax, p.a);
  }
  const double ypad = 0.05 * std::max(ymax - ymin, 1e-12);
  ymin -= ypad;
  ymax += ypad;
  const auto X = [&](double a) {
    return ml + (a - xmin) / (xmax - xmin) * (W - ml - mr);
  };
  const auto Y = [&](double y) {
    return H - mb - (y - ymin) / (ymax - ymin) * (H - mt - mb);
  };
  const auto pt = [&](double x, double y) {
    return format_fixed(x, 2) + "," + format_fixed(y, 2);
  };

  std::string band;
  for (const MteCurvePoint& p : curve) band += pt(X(p.a), Y(p.ci_hi)) + " ";
  for (auto it = curve.rbegin(); it != curve.rend(); ++it)
    band += pt(X(it->a), Y(it->ci_lo)) + " ";
  std::string raw, bc;
  for (const MteCurvePoint& p : curve) {
    raw += pt(X(p.a), Y(p.tau_hat)) + " ";
    bc += pt(X(p.a), Y(p.tau_bc)) + " ";
  }

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 800 500\">\n";
  svg << "<rect width=\"800\" height=\"500\" fill=\"white\"/>\n";
  svg << "<polygon points=\"" << band
      << "\" fill=\"#c8d8f0\" stroke=\"none\"/>\n";
  svg << "<polyline points=\"" << raw
      << "\" fill=\"none\" stroke=\"#888888\" stroke-width=\"1.5\" "
         "stroke-dasharray=\"6 4\"/>\n";
  svg << "<polyline points=\"" << bc
      << "\" fill=\"none\" stroke=\"#1a4a9c\" stroke-width=\"2\"/>\n";
  // axes
  svg << "<line x1=\"" << format_fixed(ml, 2) << "\" y1=\""
      << format_fixed(H - mb, 2) << "\" x2=\"" << format_fixed(W - mr, 2)
      << "\" y2=\"" << format_fixed(H - mb, 2)
      << "\" stroke=\"black\" stroke-width=\"1\"/>\n";
  svg << "<line x1=\"" << format_fixed(ml, 2) << "\" y1=\""
      << format_fixed(mt, 2) << "\" x2=\"" << format_fixed(ml, 2)
      << "\" y2=\"" << format_fixed(H - mb, 2)
      << "\" stroke=\"black\" stroke-width=\"1\"/>\n";
  for (int t = 0; t <= 5; ++t) {
    const double av = xmin + (xmax - xmin) * t / 5.0;
    const double yv = ymin + (ymax - ymin) * t / 5.0;
    svg << "<text x=\"" << format_fixed(X(av), 2) << "\" y=\""
        << format_fixed(H - mb + 20.0, 2)
        << "\" font-size=\"12\" text-anchor=\"middle\">"
        << format_fixed(av, 2) << "</text>\n";
    svg << "<text x=\"" << format_fixed(ml - 8.0, 2) << "\" y=\""
        << format_fixed(Y(yv) + 4.0, 2)
        << "\" font-size=\"12\" text-anchor=\"end\">" << format_fixed(yv, 2)
        << "</text>\n";
  }
  svg << "<text x=\"" << format_fixed((ml + W - mr) / 2.0, 2) << "\" y=\""
      << format_fixed(H - 10.0, 2)
      << "\" font-size=\"14\" text-anchor=\"middle\">evaluation point a"
         "</text>\n";
  svg << "</svg>\n";
  return svg.str();
}

void apply_sim_option(SimulationSpec& spec, const std::string& key,
                      const std::string& value) {
  const auto parse_ll = [&](const std::string& v) {
    long long out = 0;
    const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
    if (res.ec != std::errc{} || res.ptr != v.data() + v.size())
      throw config_error("cannot parse '" + v + "' for key '" + key + "'");
    return out;
  };
  if (key == "n") {
    spec.n = Eigen::Index(parse_ll(value));
  } else if (key == "k_grid") {
    spec.k_grid.clear();
    std::stringstream ss(value);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      const auto a = cell.find_first_not_of(" \t");
      const auto b = cell.find_last_not_of(" \t");
      if (a == std::string::npos)
        throw config_error("empty entry in k_grid '" + value + "'");
      spec.k_grid.push_back(Eigen::Index(parse_ll(cell.substr(a, b - a + 1))));
    }
  } else if (key == "reps") {
    spec.reps = int(parse_ll(value));
  } else if (key == "bootstrap_B") {
    spec.bootstrap_B = int(parse_ll(value));
  } else if (key == "weights") {
    spec.weights = WeightDistribution::by_name(value);
  } else if (key == "seed") {
    spec.seed = uint64_t(parse_ll(value));
  } else if (key == "eval_a") {
    double a = 0.0;
    const auto res = std::from_chars(value.data(), value.data() + value.size(), a);
    if (res.ec != std::errc{} || res.ptr != value.data() + value.size())
      throw config_error("cannot parse '" + value + "' for key 'eval_a'");
    spec.eval_a = a;
  } else if (key == "mode") {
    if (value == "oracle-normal")
      spec.mode = SimMode::oracle_normal;
    else if (value == "bootstrap-percentile-t")
      spec.mode = SimMode::bootstrap_percentile_t;
    else
      throw config_error("unknown mode '" + value +
                         "' (oracle-normal or bootstrap-percentile-t)");
  } else {
    throw config_error("unknown configuration key '" + key + "'");
  }
}

SimulationSpec parse_sim_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw config_error("cannot open config file '" + path + "'");
  SimulationSpec spec;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    const auto strip = [](std::string s) {
      const auto a = s.find_first_not_of(" \t\r");
      if (a == std::string::npos) return std::string();
      const auto b = s.find_last_not_of(" \t\r");
      return s.substr(a, b - a + 1);
    };
    line = strip(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw config_error("config line " + std::to_string(lineno) +
                         " is not key=value");
    apply_sim_option(spec, strip(line.substr(0, eq)),
                     strip(line.substr(eq + 1)));
  }
  return spec;
}

}  // namespace manycov
