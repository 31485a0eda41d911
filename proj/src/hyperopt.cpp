#include "gpecm/hyperopt.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "gpecm/error.hpp"

namespace gpecm {

namespace {

constexpr std::array<const char*, kHyperCount> kNames{
    "sigma_q_inv", "sigma_alpha_beta", "sigma_r0", "gamma_alpha_beta_z", "gamma_r0_z", "gamma_r0_i",
    "sigma0_zeta", "sigma1_zeta",      "sigma_zeta_r", "gamma_zeta_r",    "sigma_n_v",  "sigma_n_t"};

constexpr double kInf = std::numeric_limits<double>::infinity();

}  // namespace

const char* hyper_name(int index) {
  if (index < 0 || index >= kHyperCount) throw InvalidArgument("hyperparameter index out of range");
  return kNames[static_cast<size_t>(index)];
}

int hyper_index(const std::string& name) {
  for (int i = 0; i < kHyperCount; ++i)
    if (name == kNames[static_cast<size_t>(i)]) return i;
  return -1;
}

Eigen::VectorXd HyperParams::to_log() const {
  Eigen::VectorXd v(kHyperCount);
  for (int i = 0; i < kHyperCount; ++i) v(i) = std::log((*this)[i]);
  return v;
}

HyperParams HyperParams::from_log(const Eigen::VectorXd& v) {
  if (v.size() != kHyperCount) throw InvalidArgument("expected 12 log hyperparameters");
  HyperParams h;
  for (int i = 0; i < kHyperCount; ++i) h[i] = std::exp(v(i));
  return h;
}

HyperParams HyperParams::defaults() {
  HyperParams h;
  h[kSigmaQInv] = 0.1;
  h[kSigmaAlphaBeta] = 1.0;
  h[kSigmaR0] = 0.5;
  h[kGammaAlphaBetaZ] = 10.0;
  h[kGammaR0Z] = 5.0;
  h[kGammaR0I] = 0.5;
  h[kSigma0Zeta] = 1e-3;
  h[kSigma1Zeta] = 1e-3;
  h[kSigmaZetaR] = 0.01;
  h[kGammaZetaR] = 1.0;
  h[kSigmaNV] = 0.01;
  h[kSigmaNT] = 0.2;
  return h;
}

void HyperParams::validate() const {
  for (int i = 0; i < kHyperCount; ++i)
    if (!(value[static_cast<size_t>(i)] > 0.0) || !std::isfinite(value[static_cast<size_t>(i)]))
      throw InvalidArgument(std::string("hyperparameter ") + kNames[static_cast<size_t>(i)] + " must be positive");
}

Box Box::defaults() {
  Box b;
  for (int i : {kSigmaQInv, kSigmaAlphaBeta, kSigmaR0, kSigmaZetaR}) {
    b.lower[i] = 1e-3;
    b.upper[i] = 10.0;
  }
  for (int i : {kGammaAlphaBetaZ, kGammaR0Z, kGammaR0I, kGammaZetaR}) {
    b.lower[i] = 1e-2;
    b.upper[i] = 1e3;
  }
  // A longer noise memory than ~one checkpoint spacing lets the noise channel
  // stand in for the trend.
  b.lower[kGammaZetaR] = 0.1;
  for (int i : {kSigma0Zeta, kSigma1Zeta}) {
    b.lower[i] = 1e-6;
    b.upper[i] = 1.0;
  }
  b.lower[kSigmaNV] = 1e-4;
  b.upper[kSigmaNV] = 0.1;
  b.lower[kSigmaNT] = 0.01;
  b.upper[kSigmaNT] = 1.0;
  return b;
}

void Box::validate() const {
  for (int i = 0; i < kHyperCount; ++i) {
    const double lo = lower[static_cast<size_t>(i)], hi = upper[static_cast<size_t>(i)];
    if (!(lo > 0.0) || !(hi > lo) || !std::isfinite(hi))
      throw InvalidArgument(std::string("box for ") + kNames[static_cast<size_t>(i)] + " must satisfy 0 < lower < upper");
  }
}

bool Box::contains(const HyperParams& h) const {
  for (int i = 0; i < kHyperCount; ++i)
    if (h[i] < lower[static_cast<size_t>(i)] || h[i] > upper[static_cast<size_t>(i)]) return false;
  return true;
}

Eigen::VectorXd Box::log_lower(std::span<const int> idx) const {
  Eigen::VectorXd v(static_cast<Eigen::Index>(idx.size()));
  for (size_t k = 0; k < idx.size(); ++k) v(static_cast<Eigen::Index>(k)) = std::log(lower[static_cast<size_t>(idx[k])]);
  return v;
}

Eigen::VectorXd Box::log_upper(std::span<const int> idx) const {
  Eigen::VectorXd v(static_cast<Eigen::Index>(idx.size()));
  for (size_t k = 0; k < idx.size(); ++k) v(static_cast<Eigen::Index>(k)) = std::log(upper[static_cast<size_t>(idx[k])]);
  return v;
}

void ModelSetup::validate() const {
  if (!(z_hi > z_lo)) throw InvalidArgument("SOC grid range must be increasing");
  if (!(i_hi > i_lo)) throw InvalidArgument("current grid range must be increasing");
  if (n_z < 2 || n_z_r0 < 2 || n_i_r0 < 2) throw InvalidArgument("grid sizes must be at least 2 per dimension");
  for (double c : {c_q_inv, c_alpha, c_beta, c_r0})
    if (!(c > 0.0)) throw InvalidArgument("affine constants must be positive");
  if (!(thermal.r_c > 0.0) || !(thermal.c_c > 0.0)) throw InvalidArgument("thermal parameters must be positive");
  if ((q_batt.array() < 0.0).any() || (p_batt0.array() <= 0.0).any())
    throw InvalidArgument("battery covariances must be non-negative (initial: positive)");
}

BatteryFilterModel build_model(const HyperParams& h, const ModelSetup& s) {
  h.validate();
  s.validate();
  const ExpKernelParams ex{h[kSigmaZetaR] * h[kSigmaZetaR], h[kGammaZetaR]};
  const double wv0 = h[kSigma0Zeta] * h[kSigma0Zeta];
  const double wv1 = h[kSigma1Zeta] * h[kSigma1Zeta];

  std::vector<FieldSpec> fields;
  fields.push_back({"q_inv", Grid::constant(),
                    make_field_kernel({h[kSigmaQInv] * h[kSigmaQInv], std::nullopt, std::nullopt}, wv0, ex), s.c_q_inv});
  const SeKernelParams se_ab{h[kSigmaAlphaBeta] * h[kSigmaAlphaBeta], h[kGammaAlphaBetaZ], std::nullopt};
  const Grid soc = Grid::soc(s.z_lo, s.z_hi, s.n_z);
  fields.push_back({"alpha", soc, make_field_kernel(se_ab, wv1, ex), s.c_alpha});
  fields.push_back({"beta", soc, make_field_kernel(se_ab, wv1, ex), s.c_beta});
  const SeKernelParams se_r0{h[kSigmaR0] * h[kSigmaR0], h[kGammaR0Z], h[kGammaR0I]};
  fields.push_back({"r0", Grid::soc_current(s.z_lo, s.z_hi, s.n_z_r0, s.i_lo, s.i_hi, s.n_i_r0),
                    make_field_kernel(se_r0, wv1, ex), s.c_r0});

  BatteryFilterModel m;
  m.gp = GpSystem(std::move(fields));
  m.ocv = s.ocv;
  m.thermal = s.thermal;
  m.q_batt = s.q_batt;
  m.p_batt0 = s.p_batt0;
  m.sigma_v = h[kSigmaNV];
  m.sigma_t = h[kSigmaNT];
  return m;
}

double nlml(const HyperParams& h, std::span<const CellData> cells, const ModelSetup& setup, NlmlDiagnostics* diag) {
  try {
    const BatteryFilterModel model = build_model(h, setup);
    double total = 0.0;
    CovarianceHealth health;
    for (const CellData& cell : cells) {
      const LifetimeResult r = run_lifetime(cell, model);
      total += r.phi_total;
      health.merge(r.health);
    }
    if (diag) diag->health = health;
    if (!std::isfinite(total)) {
      if (diag) {
        diag->finite = false;
        diag->failure = "non-finite NLML";
      }
      return kInf;
    }
    return total;
  } catch (const NumericalError& e) {
    if (diag) {
      diag->finite = false;
      diag->failure = e.what();
    }
    return kInf;
  }
}

namespace {

HyperParams with_sub(const HyperParams& base, std::span<const int> idx, const Eigen::VectorXd& log_sub) {
  HyperParams h = base;
  for (size_t k = 0; k < idx.size(); ++k) h[idx[k]] = std::exp(log_sub(static_cast<Eigen::Index>(k)));
  return h;
}

Eigen::VectorXd sub_log(const HyperParams& h, std::span<const int> idx) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(idx.size()));
  for (size_t k = 0; k < idx.size(); ++k) v(static_cast<Eigen::Index>(k)) = std::log(h[idx[k]]);
  return v;
}

std::vector<int> all_indices() {
  std::vector<int> v(kHyperCount);
  std::iota(v.begin(), v.end(), 0);
  return v;
}

}  // namespace

Eigen::VectorXd nlml_gradient(const HyperParams& h, std::span<const CellData> cells, const ModelSetup& setup,
                              std::span<const int> idx_in, double step) {
  const std::vector<int> all = all_indices();
  const std::span<const int> idx = idx_in.empty() ? std::span<const int>(all) : idx_in;
  const Objective f = [&](const Eigen::VectorXd& x) { return nlml(with_sub(h, idx, x), cells, setup); };
  const Eigen::VectorXd x = sub_log(h, idx);
  const double fx = f(x);
  if (!std::isfinite(fx)) throw NumericalError("NLML not finite at the gradient point");
  const Eigen::VectorXd inf = Eigen::VectorXd::Constant(x.size(), kInf);
  return fd_gradient(f, x, fx, -inf, inf, step);
}

Stage1Result fit_stage1(std::span<const CellData> first_cycles, const ModelSetup& setup, const Stage1Options& opt,
                        const HyperParams& fixed, const FitLogger& log) {
  opt.box.validate();
  if (first_cycles.empty()) throw InvalidArgument("stage 1 needs at least one cell");
  if (opt.n_random < 1 || opt.n_refine < 1) throw InvalidArgument("stage 1 needs at least one start");
  const std::span<const int> idx(kStage1Indices);
  const Eigen::VectorXd lo = opt.box.log_lower(idx);
  const Eigen::VectorXd hi = opt.box.log_upper(idx);

  std::mt19937_64 rng(opt.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  struct Start {
    double phi;
    Eigen::VectorXd x;
  };
  std::vector<Start> starts;
  std::vector<std::string> failures;
  for (int k = 0; k < opt.n_random; ++k) {
    Eigen::VectorXd x(lo.size());
    for (Eigen::Index d = 0; d < x.size(); ++d) x(d) = lo(d) + (hi(d) - lo(d)) * unit(rng);
    NlmlDiagnostics diag;
    const HyperParams h = with_sub(fixed, idx, x);
    const double phi = nlml(h, first_cycles, setup, &diag);
    if (log) log({"1", "random", k, 0, phi, h});
    if (std::isfinite(phi)) starts.push_back({phi, x});
    else failures.push_back(diag.failure);
  }
  Stage1Result res;
  res.failed_starts = static_cast<int>(failures.size());
  if (starts.empty()) {
    std::string msg = "stage 1: all " + std::to_string(opt.n_random) + " starts failed";
    for (size_t k = 0; k < std::min<size_t>(failures.size(), 5); ++k) msg += "; " + failures[k];
    throw NumericalError(msg);
  }
  std::stable_sort(starts.begin(), starts.end(), [](const Start& a, const Start& b) { return a.phi < b.phi; });
  res.best_random_phi = starts.front().phi;

  const Objective f = [&](const Eigen::VectorXd& x) { return nlml(with_sub(fixed, idx, x), first_cycles, setup); };
  double best = kInf;
  Eigen::VectorXd best_x = starts.front().x;
  const int n_ref = std::min<int>(opt.n_refine, static_cast<int>(starts.size()));
  for (int k = 0; k < n_ref; ++k) {
    OptimizerResult r;
    try {
      r = minimize_box(f, starts[static_cast<size_t>(k)].x, lo, hi, opt.optimizer, [&](const OptimizerTrace& t) {
        if (log) log({"1", "refine", k, t.iteration, t.f, with_sub(fixed, idx, t.x)});
      });
    } catch (const NumericalError&) {
      r.x = starts[static_cast<size_t>(k)].x;
      r.f = starts[static_cast<size_t>(k)].phi;
    }
    res.refined_phi.push_back(r.f);
    if (r.f < best) {
      best = r.f;
      best_x = r.x;
    }
  }
  res.theta = with_sub(fixed, idx, best_x);
  NlmlDiagnostics diag;
  res.phi = nlml(res.theta, first_cycles, setup, &diag);
  res.health = diag.health;
  if (log) log({"1", "final", 0, 0, res.phi, res.theta});
  return res;
}

Stage2Result fit_stage2(std::span<const CellData> cells, const HyperParams& theta_x, const ModelSetup& setup,
                        const Stage2Options& opt, const FitLogger& log) {
  opt.box.validate();
  if (cells.empty()) throw InvalidArgument("stage 2 needs at least one cell");
  const std::span<const int> idx(kStage2Indices);
  const Eigen::VectorXd lo = opt.box.log_lower(idx);
  const Eigen::VectorXd hi = opt.box.log_upper(idx);
  Stage2Result res;

  bool informative = false;
  for (const CellData& c : cells)
    if (c.size() >= 2 && c.back().zeta > c.front().zeta) informative = true;
  if (!informative) {
    res.theta = theta_x;
    res.theta[kSigma0Zeta] = opt.box.lower[kSigma0Zeta];
    res.theta[kSigma1Zeta] = opt.box.lower[kSigma1Zeta];
    res.unidentifiable = true;
    NlmlDiagnostics diag;
    res.phi = res.grid_phi = nlml(res.theta, cells, setup, &diag);
    res.health = diag.health;
    if (log) log({"2", "final", 0, 0, res.phi, res.theta});
    return res;
  }

  for (const auto& axis : opt.grid)
    if (axis.empty()) throw InvalidArgument("stage 2 grid axes must be non-empty");
  double best = kInf;
  Eigen::VectorXd best_x = sub_log(theta_x, idx).cwiseMax(lo).cwiseMin(hi);
  int k = 0;
  for (double a : opt.grid[0])
    for (double b : opt.grid[1])
      for (double c : opt.grid[2])
        for (double d : opt.grid[3]) {
          Eigen::VectorXd x(4);
          x << std::log(a), std::log(b), std::log(c), std::log(d);
          x = x.cwiseMax(lo).cwiseMin(hi);
          const HyperParams h = with_sub(theta_x, idx, x);
          const double phi = nlml(h, cells, setup);
          if (log) log({"2", "grid", k++, 0, phi, h});
          if (phi < best) {
            best = phi;
            best_x = x;
          }
        }
  if (!std::isfinite(best)) throw NumericalError("stage 2: every grid point failed");
  res.grid_phi = best;

  const Objective f = [&](const Eigen::VectorXd& x) { return nlml(with_sub(theta_x, idx, x), cells, setup); };
  const OptimizerResult r = minimize_box(f, best_x, lo, hi, opt.optimizer, [&](const OptimizerTrace& t) {
    if (log) log({"2", "refine", 0, t.iteration, t.f, with_sub(theta_x, idx, t.x)});
  });
  res.theta = with_sub(theta_x, idx, r.x);
  NlmlDiagnostics diag;
  res.phi = nlml(res.theta, cells, setup, &diag);
  res.health = diag.health;
  if (log) log({"2", "final", 0, 0, res.phi, res.theta});
  return res;
}

}  // namespace gpecm
