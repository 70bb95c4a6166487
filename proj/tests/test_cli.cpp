#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>

#include "doctest.h"
#include "json.hpp"
#include "manycov/format.hpp"
#include "manycov/simulate.hpp"

// Path of the command-line binary, injected by the build.
#ifndef MANYCOV_CLI_PATH
#error "MANYCOV_CLI_PATH must point at the built binary"
#endif

namespace {

struct CliRun {
  int code = -1;
  std::string out;
  std::string err;
};

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

CliRun run_cli(const std::string& args) {
  const std::string out_path = "cli_stdout.tmp";
  const std::string err_path = "cli_stderr.tmp";
  const std::string cmd = std::string(MANYCOV_CLI_PATH) + " " + args + " >" +
                          out_path + " 2>" + err_path;
  const int status = std::system(cmd.c_str());
  CliRun r;
  r.code = (status >= 0) ? ((status >> 8) & 0xff) : -1;
  r.out = slurp(out_path);
  r.err = slurp(err_path);
  std::remove(out_path.c_str());
  std::remove(err_path.c_str());
  return r;
}

// Deterministic CSV with outcome, binary treatment, intercept column and
// four covariates, written at full precision.
std::string write_toy_csv(const std::string& path, Eigen::Index n) {
  using namespace manycov;
  const DgpDraw draw = generate_dgp(n, 5, 12345, 0);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << "Y,T,one,z1,z2,z3,z4\n";
  for (Eigen::Index i = 0; i < n; ++i) {
    out << format_double(draw.data.y(i, 0)) << "," << format_double(draw.data.r(i));
    for (Eigen::Index j = 0; j < 5; ++j)
      out << "," << format_double(draw.data.Z(i, j));
    out << "\n";
  }
  return path;
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("estimate emits a valid report and is idempotent") {
  write_toy_csv("cli_toy.csv", 120);
  const std::string args =
      "estimate --data cli_toy.csv --r-col T --z-cols one,z1..z4 "
      "--bootstrap 60 --seed 3 --eval-a 0.5";
  const CliRun a = run_cli(args);
  REQUIRE(a.code == 0);
  const nlohmann::json j = nlohmann::json::parse(a.out);
  CHECK(j["schema"] == "inference-report/1");
  CHECK(j["theta_hat"].size() == 3);
  CHECK(j["intervals"]["method"] == "percentile-t");
  CHECK(j["n_draws"].get<int>() == 60);
  CHECK(j["t_draws"].size() == 60);
  CHECK(j["intervals"]["lower"].get<double>() <
        j["intervals"]["upper"].get<double>());

  const CliRun b = run_cli(args);
  CHECK(a.out == b.out);

  // The worker count must not leak into the numbers.
  const CliRun c = run_cli(args + " --workers 4");
  CHECK(a.out == c.out);
  const CliRun d = run_cli(args + " --workers 1");
  CHECK(a.out == d.out);
  std::remove("cli_toy.csv");
}

TEST_CASE("estimate without bootstrap reports a normal interval") {
  write_toy_csv("cli_toy_n.csv", 100);
  const CliRun r = run_cli(
      "estimate --data cli_toy_n.csv --r-col T --z-cols one,z1..z4 "
      "--bootstrap 0");
  REQUIRE(r.code == 0);
  const nlohmann::json j = nlohmann::json::parse(r.out);
  CHECK(j["intervals"]["method"] == "normal");
  CHECK(j["t_draws"].size() == 0);
  std::remove("cli_toy_n.csv");
}

TEST_CASE("estimate writes to a file when asked") {
  write_toy_csv("cli_toy_f.csv", 100);
  const CliRun r = run_cli(
      "estimate --data cli_toy_f.csv --r-col T --z-cols one,z1..z4 "
      "--bootstrap 0 --out cli_report.json");
  REQUIRE(r.code == 0);
  CHECK(r.out.empty());
  const std::string body = slurp("cli_report.json");
  CHECK(nlohmann::json::parse(body)["schema"] == "inference-report/1");
  std::remove("cli_toy_f.csv");
  std::remove("cli_report.json");
}

TEST_CASE("exit codes separate usage, data and numerical failures") {
  write_toy_csv("cli_codes.csv", 80);

  // Usage: unknown flag and unknown subcommand.
  CHECK(run_cli("estimate --data cli_codes.csv --r-col T --z-cols one "
                "--frobnicate").code == 1);
  CHECK(run_cli("estimat").code == 1);
  // Usage: unknown weights name.
  CHECK(run_cli("estimate --data cli_codes.csv --r-col T --z-cols "
                "one,z1..z4 --weights mammen").code == 1);

  // Data: missing file, missing column, non-binary treatment.
  CHECK(run_cli("estimate --data nope.csv --r-col T --z-cols one").code == 2);
  const CliRun badcol = run_cli(
      "estimate --data cli_codes.csv --r-col T --z-cols one,z9");
  CHECK(badcol.code == 2);
  CHECK(badcol.err.find("z9") != std::string::npos);
  CHECK(run_cli("estimate --data cli_codes.csv --r-col z1 --z-cols one,z2")
            .code == 2);

  // Numerical: a design of rank zero cannot be fit.
  {
    std::ofstream out("cli_rank0.csv", std::ios::binary | std::ios::trunc);
    out << "Y,T,z1\n";
    for (int i = 0; i < 30; ++i)
      out << (i % 3) * 0.5 << "," << (i % 2) << ",0\n";
  }
  CHECK(run_cli("estimate --data cli_rank0.csv --r-col T --z-cols z1").code ==
        3);
  std::remove("cli_rank0.csv");
  std::remove("cli_codes.csv");
}

TEST_CASE("help returns success") {
  CHECK(run_cli("--help").code == 0);
  CHECK(run_cli("estimate --help").code == 0);
}

TEST_CASE("simulate smoke preset runs fast and reproducibly") {
  const std::string args = "simulate --preset smoke --csv cli_sim.csv";
  const CliRun a = run_cli(args);
  REQUIRE(a.code == 0);
  CHECK(a.out.find("n=200") != std::string::npos);
  CHECK(a.out.find("uncorrected") != std::string::npos);
  CHECK(a.out.find("corrected") != std::string::npos);
  const std::string csv1 = slurp("cli_sim.csv");
  CHECK(csv1.find("k,estimator,") == 0);

  const CliRun b = run_cli(args);
  CHECK(a.out == b.out);
  CHECK(slurp("cli_sim.csv") == csv1);
  std::remove("cli_sim.csv");
}

TEST_CASE("simulate flags override the preset and config files work") {
  const CliRun a = run_cli("simulate --preset smoke --reps 20 --seed 5");
  REQUIRE(a.code == 0);
  CHECK(a.out.find("reps=20") != std::string::npos);
  CHECK(a.out.find("seed=5") != std::string::npos);

  {
    std::ofstream out("cli_study.cfg", std::ios::binary | std::ios::trunc);
    out << "# smoke-sized study\nn = 200\nk_grid = 5\nreps = 20\nseed = 5\n";
  }
  const CliRun b = run_cli("simulate --config cli_study.cfg");
  REQUIRE(b.code == 0);
  CHECK(b.out == a.out);

  CHECK(run_cli("simulate --preset smoke --config cli_study.cfg").code == 1);
  CHECK(run_cli("simulate --preset nosuch").code == 1);
  {
    std::ofstream out("cli_bad.cfg", std::ios::binary | std::ios::trunc);
    out << "repz = 5\n";
  }
  CHECK(run_cli("simulate --config cli_bad.cfg").code == 1);
  std::remove("cli_bad.cfg");
  std::remove("cli_study.cfg");
}

TEST_CASE("mte-curve writes CSV and SVG deterministically") {
  write_toy_csv("cli_curve.csv", 150);
  const std::string args =
      "mte-curve --data cli_curve.csv --r-col T --z-cols one,z1..z4 "
      "--out cli_curve_out.csv --svg cli_curve_out.svg";
  const CliRun a = run_cli(args);
  REQUIRE(a.code == 0);
  const std::string csv = slurp("cli_curve_out.csv");
  const std::string svg = slurp("cli_curve_out.svg");
  CHECK(csv.find("a,tau_hat,tau_bc,ci_lo,ci_hi\n") == 0);
  size_t rows = 0;
  for (char ch : csv)
    if (ch == '\n') ++rows;
  CHECK(rows == 100);  // header + 99 grid points
  CHECK(svg.find("<svg") == 0);

  const CliRun b = run_cli(args);
  REQUIRE(b.code == 0);
  CHECK(slurp("cli_curve_out.csv") == csv);
  CHECK(slurp("cli_curve_out.svg") == svg);
  std::remove("cli_curve_out.csv");
  std::remove("cli_curve_out.svg");
  std::remove("cli_curve.csv");
}

TEST_CASE("diagnostics summarizes the design") {
  write_toy_csv("cli_diag.csv", 100);
  const CliRun r = run_cli(
      "diagnostics --data cli_diag.csv --r-col T --z-cols one,z1..z4");
  REQUIRE(r.code == 0);
  CHECK(r.out.find("max_leverage") != std::string::npos);
  CHECK(r.out.find("k_ratio") != std::string::npos);
  CHECK(r.out.find("rank") != std::string::npos);
  std::remove("cli_diag.csv");
}

}  // TEST_SUITE
