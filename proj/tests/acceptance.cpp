// Acceptance runner: one PASS/FAIL line per criterion, non-zero exit when any
// criterion fails. Pass --skip-aging to leave out the 2-cell aging run.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "checks.hpp"
#include "gpecm/config.hpp"
#include "gpecm/pipeline.hpp"
#include "test_util.hpp"

using namespace gpecm;
using Clock = std::chrono::steady_clock;

namespace {

std::map<int, std::string> results;
int failures = 0;

// Progress goes to stderr as results arrive; the summary is printed in order.
void line(int id, bool pass, const std::string& what) {
  if (!pass) ++failures;
  results[id] = std::string(pass ? "PASS" : "FAIL") + "  criterion " + std::to_string(id) + ": " + what;
  std::fprintf(stderr, "%s\n", results[id].c_str());
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

checks::HealthTally tally;

void criterion1() {
  const auto t0 = Clock::now();
  checks::BatchEquivalence worst;
  for (int n : {3, 10, 50}) {
    const auto r = checks::batch_equivalence(n, 100 + n, &tally);
    worst.mean_rel = std::max(worst.mean_rel, r.mean_rel);
    worst.var_rel = std::max(worst.var_rel, r.var_rel);
    worst.phi_rel = std::max(worst.phi_rel, r.phi_rel);
  }
  const double dt = seconds_since(t0);
  line(1, worst.mean_rel <= 1e-6 && worst.var_rel <= 1e-6 && worst.phi_rel <= 1e-6 && dt < 1.0,
       fmt("batch vs recursive GP, n in {3,10,50}: mean %.2e, var %.2e, phi %.2e (rel, limit 1e-6), %.3f s (limit 1 s)",
           worst.mean_rel, worst.var_rel, worst.phi_rel, dt));
}

void criteria2and3() {
  const auto t0 = Clock::now();
  const GroundTruth truth = table1_truth();
  // Charge-direction excitation from low SOC.
  const CurrentProfile prof = synth_profile(1, 1800, 5.0, 1.0);
  const SimulationOutput sim = simulate(truth, prof, 0.3, 25.0, 7);
  const std::vector<CellData> cells{{sim.segment}};
  ModelSetup setup;
  auto_ranges(cells, setup);
  Stage1Options opt;
  opt.n_random = 40;
  opt.n_refine = 1;
  const Stage1Result fit = fit_stage1(cells, setup, opt);
  tally.add(fit.health);
  const BatteryFilterModel model = build_model(fit.theta, setup);
  const LifetimeResult res = run_lifetime(cells[0], model);
  tally.add(res.health);
  const SmoothedPosterior post = rts_smooth(model.gp, res.checkpoints);
  for (const auto& p : post.covs()) tally.add_matrix(p);
  const checks::RecoveryErrors e = checks::recovery_errors(post, truth, sim);
  const double dt = seconds_since(t0);
  const bool ok = e.alpha <= 0.06 && e.beta <= 0.02 && e.r0 <= 0.02 && e.q_inv <= 0.005 && dt < 300.0;
  line(2, ok,
       fmt("one-cycle recovery, normalised RMSE: alpha %.2f%% (<=6), beta %.2f%% (<=2), R0 %.2f%% (<=2), "
           "Q^-1 %.3f%% (<=0.5); %.0f s (limit 300 s)",
           100 * e.alpha, 100 * e.beta, 100 * e.r0, 100 * e.q_inv, dt));
  const double sv = fit.theta[kSigmaNV] / 0.005, st = fit.theta[kSigmaNT] / 0.1;
  line(3, sv >= 0.6 && sv <= 1.4 && st >= 0.5 && st <= 2.0,
       fmt("noise recovery: sigma_nV %.5f V (%.2fx, band 0.6-1.4), sigma_nT %.4f K (%.2fx, band 0.5-2)",
           fit.theta[kSigmaNV], sv, fit.theta[kSigmaNT], st));
}

void criterion4() {
  const auto exact = checks::uncertain_input_exact(10000, 4);
  const auto quad = checks::uncertain_input_quadrature(2000, 44);
  line(4, exact.mean_abs <= 1e-10 && exact.var_abs <= 1e-10 && quad.mean_rel <= 1e-6 && quad.var_rel <= 1e-6,
       fmt("uncertain-input prediction: var_z=0 vs plain over 1e4 cases mean %.1e var %.1e (abs, limit 1e-10); "
           "var_z>0 vs Gauss-Hermite mean %.1e var %.1e (rel, limit 1e-6)",
           exact.mean_abs, exact.var_abs, quad.mean_rel, quad.var_rel));
}

void criterion5() {
  const auto j = checks::jacobians_vs_fd(100, 5);
  line(5, j.g_rel <= 1e-5 && j.h_rel <= 1e-5,
       fmt("Jacobians vs central differences over 100 joint states: G %.1e, H %.1e (rel, limit 1e-5)", j.g_rel,
           j.h_rel));
}

void criterion6() {
  const double e = checks::bol_variance_error(500, 6);
  line(6, e <= 1e-10, fmt("beginning-of-life variance vs sigma_x^2 over 500 draws: %.1e (rel, limit 1e-10)", e));
}

struct AgingOutcome {
  bool ran = false;
  std::vector<SmoothedPosterior> posteriors;
  HyperParams theta;
};

AgingOutcome criterion8() {
  AgingOutcome out;
  const auto t0 = Clock::now();
  testutil::TempDir dir("gpecm_accept");
  const int holdout = 8;
  const std::vector<std::string> ov = {
      "simulate.out_dir=\"" + dir.str("data") + "\"",
      "simulate.cells=2",
      "simulate.n_cycles=27",
      "simulate.duration_s=900",
      "simulate.z_init=0.8",
      "model.n_i_r0=7",
      "fit.out_dir=\"" + dir.str("fit") + "\"",
      "fit.n_random=20",
      "fit.n_refine=1",
      "fit.holdout=" + std::to_string(holdout),
      "fit.max_iterations=15",
      "fit.stage2_grid.sigma0_zeta=[1e-3,1e-2]",
      "fit.stage2_grid.sigma1_zeta=[1e-3,1e-2]",
      "fit.stage2_grid.sigma_zeta_r=[1e-2,1e-1]",
      "fit.stage2_grid.gamma_zeta_r=[1e-1,1]",
      "estimate.out_dir=\"" + dir.str("results") + "\""};
  const RunConfig cfg = load_config("", ov);
  cmd_simulate(cfg);
  cmd_fit(cfg, 1);
  cmd_fit(cfg, 2);
  const FitArtifact fit = best_fit(cfg);
  const GroundTruth truth = truth_from_config(cfg.simulate);
  const std::vector<CellData> cells = load_cells(cfg);

  const double pulse = cfg.estimate.r0_pulse_current;
  const std::vector<double> z_eval{0.5, 0.8};
  double q_in = 0, q_out = 0, r_in = 0, r_out = 0;
  int n_in = 0, n_out = 0, m_in = 0, m_out = 0;
  for (const CellData& cell : cells) {
    const CellData fitted(cell.begin(), cell.end() - holdout);
    const CellPosterior cp = estimate_cell(fitted, fit.theta, fit.setup);
    tally.add(cp.filter.health);
    for (const auto& p : cp.smoothed.covs()) tally.add_matrix(p);
    for (size_t k = 0; k < cell.size(); ++k) {
      const double zeta = cell[k].zeta;
      const bool extrap = k >= fitted.size();
      const FieldState block = cp.smoothed.state_at(zeta);
      const double q_est = 1.0 / cp.smoothed.query(block, {FieldId::kQInv, 0.5, 0.0}).smooth_mean;
      const double q_err = std::pow(q_est - 1.0 / truth.q_inv_at(zeta), 2);
      (extrap ? q_out : q_in) += q_err;
      ++(extrap ? n_out : n_in);
      for (double z : z_eval)
        for (double i : {-pulse, pulse}) {
          const double r = cp.smoothed.query(block, {FieldId::kR0, z, i}).smooth_mean;
          (extrap ? r_out : r_in) += std::pow(r - truth.r0_at(z, i, zeta), 2);
          ++(extrap ? m_out : m_in);
        }
    }
    out.posteriors.push_back(cp.smoothed);
  }
  out.theta = fit.theta;
  out.ran = true;
  const double qi = std::sqrt(q_in / n_in), qo = std::sqrt(q_out / n_out);
  const double ri = 1e3 * std::sqrt(r_in / m_in), ro = 1e3 * std::sqrt(r_out / m_out);
  const double dt = seconds_since(t0);
  line(8, qo <= 2 * qi && ro <= 2 * ri && dt < 900.0,
       fmt("2 cells x 27 cycles, last %d held out: Q RMSE interp %.4f / forecast %.4f Ah; R0(z,+-%.0f A) RMSE "
           "interp %.3f / forecast %.3f mOhm (forecast <= 2x interp); %.0f s (limit 900 s)",
           holdout, qi, qo, pulse, ri, ro, dt));
  return out;
}

void criterion7(const AgingOutcome& aging) {
  // Lifetime hyperparameters for the scalar check.
  HyperParams h = HyperParams::defaults();
  h[kSigma0Zeta] = 3e-2;
  h[kSigmaZetaR] = 5e-2;
  h[kGammaZetaR] = 0.05;
  checks::ForecastGeometry g = checks::forecast_geometry(checks::direct_posterior(h, 20, 7, &tally), h,
                                                         {{FieldId::kQInv, 0.5, 0.0}});
  std::string src = "scalar lifetime GP";
  if (aging.ran) {
    std::vector<ParameterQuery> qs;
    for (int f = 0; f < 4; ++f)
      for (double z : {0.3, 0.6, 0.9})
        for (double i : {-2.0, 0.0, 2.0}) qs.push_back({static_cast<FieldId>(f), z, i});
    for (const auto& post : aging.posteriors) {
      const auto r = checks::forecast_geometry(post, aging.theta, qs);
      g.collinearity = std::max(g.collinearity, r.collinearity);
      g.exp_ratio = std::max(g.exp_ratio, r.exp_ratio);
    }
    src += " and both aged cells";
  }
  line(7, g.collinearity < 1e-9 && g.exp_ratio < 1e-4,
       fmt("forecast geometry (%s): collinearity residual %.1e (limit 1e-9), exponential channel at 10/gamma "
           "%.1e sigma (limit 1e-4)",
           src.c_str(), g.collinearity, g.exp_ratio));
}

}  // namespace

int main(int argc, char** argv) {
  bool skip_aging = false;
  for (int k = 1; k < argc; ++k)
    if (std::strcmp(argv[k], "--skip-aging") == 0) skip_aging = true;

  const auto guard = [](int id, const std::function<void()>& f) {
    try {
      f();
    } catch (const std::exception& e) {
      line(id, false, std::string("error: ") + e.what());
    }
  };
  guard(1, criterion1);
  guard(2, criteria2and3);
  guard(4, criterion4);
  guard(5, criterion5);
  guard(6, criterion6);
  AgingOutcome aging;
  if (skip_aging) {
    line(8, false, "skipped (--skip-aging)");
  } else {
    guard(8, [&] { aging = criterion8(); });
  }
  guard(7, [&] { criterion7(aging); });
  line(9, tally.max_asymmetry <= 1e-9 && tally.min_diag_ratio >= -1e-10,
       fmt("covariance health across runs: max asymmetry %.1e (limit 1e-9), min diag/trace %.1e (limit -1e-10)",
           tally.max_asymmetry, tally.min_diag_ratio));
  for (const auto& [id, text] : results) std::printf("%s\n", text.c_str());
  std::printf("%d of %zu criteria failed\n", failures, results.size());
  return failures == 0 ? 0 : 1;
}
