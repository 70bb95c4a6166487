#include <omp.h>

#include <algorithm>
#include <functional>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "manycov/jackknife.hpp"
#include "manycov/mte.hpp"
#include "manycov/reference.hpp"
#include "manycov/simulate.hpp"

namespace {

using namespace manycov;

double time_best_ms(int reps, const std::function<void()>& f) {
  double best = 1e300;
  for (int i = 0; i < reps; ++i) {
    const double t0 = omp_get_wtime();
    f();
    best = std::min(best, (omp_get_wtime() - t0) * 1e3);
  }
  return best;
}

void print_row(const std::string& label, double ms, double base_ms) {
  std::cout << "  " << label;
  for (size_t p = label.size(); p < 44; ++p) std::cout << ' ';
  printf("%10.2f ms", ms);
  if (base_ms > 0.0) printf("   %8.1fx", base_ms / ms);
  std::cout << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"delete-one benchmark: updating engine vs full refits"};
  long long n = 1000, k = 80;
  int reps = 3;
  bool with_reference = false;
  app.add_option("--n", n, "sample size");
  app.add_option("--k", k, "first-step covariate count");
  app.add_option("--reps", reps, "timing repetitions (best is kept)");
  app.add_flag("--with-reference", with_reference,
               "also run the serial full-refit baseline (slow for large n)");
  CLI11_PARSE(app, argc, argv);

  const int max_workers = omp_get_max_threads();
  const DgpDraw draw = generate_dgp(n, std::max<long long>(k, 5), 7, 0);
  Dataset data{draw.data.y, draw.data.r, draw.data.Z.leftCols(k)};
  const MteModel model(2);
  const MteEstimate est = estimate_mte(data, model);
  const GmmConfig cfg;

  std::cout << "delete-one jackknife, n=" << n << " k=" << k
            << " (best of " << reps << ")\n";

  FirstStepFit cached = est.first_step;
  build_hat_cache(cached);

  JackknifeResult fast;
  const double t_fast = time_best_ms(reps, [&] {
    omp_set_num_threads(1);
    fast = jackknife_two_step(model, data, cached, est.second_step.theta_hat,
                              cfg);
  });

  const double t_nocache = time_best_ms(reps, [&] {
    omp_set_num_threads(1);
    (void)jackknife_two_step(model, data, est.first_step,
                             est.second_step.theta_hat, cfg);
  });

  double t_par = t_fast;
  if (max_workers > 1) {
    t_par = time_best_ms(reps, [&] {
      omp_set_num_threads(max_workers);
      (void)jackknife_two_step(model, data, cached,
                               est.second_step.theta_hat, cfg);
    });
  }

  double t_ref = -1.0;
  JackknifeResult ref;
  if (with_reference) {
    omp_set_num_threads(1);
    t_ref = time_best_ms(1, [&] {
      ref = reference::jackknife_refit(model, data, cfg,
                                       est.second_step.theta_hat);
    });
  }

  if (t_ref > 0.0) print_row("serial full refits (reference)", t_ref, 0.0);
  print_row("updating engine, 1 worker, hat cache", t_fast, t_ref);
  print_row("updating engine, 1 worker, no cache", t_nocache, t_ref);
  if (max_workers > 1)
    print_row("updating engine, " + std::to_string(max_workers) +
                  " workers, hat cache",
              t_par, t_ref);
  else
    std::cout << "  (single hardware thread: no scaling row)\n";

  if (t_ref > 0.0) {
    const double gap = (fast.bias_hat - ref.bias_hat).cwiseAbs().maxCoeff();
    std::cout << "  max |bias difference| vs reference: " << gap << "\n";
    if (!(gap < 1e-7)) {
      std::cerr << "MISMATCH between engines\n";
      return 1;
    }
  }
  return 0;
}
