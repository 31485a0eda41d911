#include "checks.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include "gpecm/gp_field.hpp"
#include "gpecm/kernels.hpp"

using namespace gpecm;

namespace checks {

namespace {

double rel(double a, double b, double floor) { return std::abs(a - b) / std::max(std::abs(b), floor); }

double log_uniform(std::mt19937_64& rng, double lo, double hi) {
  std::uniform_real_distribution<double> u(std::log(lo), std::log(hi));
  return std::exp(u(rng));
}

std::pair<VectorXd, VectorXd> hermite(int n) {
  MatrixXd j = MatrixXd::Zero(n, n);
  for (int k = 1; k < n; ++k) j(k, k - 1) = j(k - 1, k) = std::sqrt(static_cast<double>(k));
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(j);
  VectorXd w = es.eigenvectors().row(0).transpose().array().square();
  return {es.eigenvalues(), w};
}

struct RandomField {
  Grid grid;
  SeKernelParams se;
  VectorXd values;
  VectorXd vars;
};

RandomField random_field(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> g(0.0, 1.0);
  RandomField f;
  const double z_lo = 0.3 * u(rng);
  const double z_hi = 0.7 + 0.3 * u(rng);
  const int nz = 2 + static_cast<int>(u(rng) * 6);
  f.se.magnitude_sq = log_uniform(rng, 1e-2, 2.0);
  f.se.gamma_z = log_uniform(rng, 1.0, 50.0);
  if (u(rng) < 0.5) {
    const int ni = 2 + static_cast<int>(u(rng) * 8);
    f.se.gamma_i = log_uniform(rng, 0.05, 2.0);
    f.grid = Grid::soc_current(z_lo, z_hi, nz, -5.0, 5.0, ni);
  } else {
    f.grid = Grid::soc(z_lo, z_hi, nz);
  }
  const Index n = f.grid.size();
  f.values.resize(n);
  f.vars.resize(n);
  const double sd = std::sqrt(f.se.magnitude_sq);
  for (Index j = 0; j < n; ++j) {
    f.values(j) = sd * g(rng);
    f.vars(j) = f.se.magnitude_sq * log_uniform(rng, 1e-4, 1.0);
  }
  return f;
}

// Plain GP prediction at a known input, computed independently of the library
// predictor (same Gram matrix and jitter, different factorisation).
struct Plain {
  double mean;
  double var;
};

class PlainPredictor {
 public:
  explicit PlainPredictor(const RandomField& f) : f_(f) {
    MatrixXd k = se_gram(f.grid, f.se);
    k.diagonal() += f.vars;
    add_jitter(k);
    ldlt_.compute(k);
    alpha_ = ldlt_.solve(f.values);
  }
  Plain at(double z, std::optional<double> current) const {
    OperatingPoint x;
    x.z = z;
    x.current = current;
    const Index n = f_.grid.size();
    VectorXd ks(n);
    for (Index j = 0; j < n; ++j) ks(j) = se_cov(x, f_.grid.coords[j], f_.se);
    return {ks.dot(alpha_), f_.se.magnitude_sq - ks.dot(ldlt_.solve(ks))};
  }

 private:
  const RandomField& f_;
  Eigen::LDLT<MatrixXd> ldlt_;
  VectorXd alpha_;
};

GpSystem scalar_lifetime_gp(double sigma_x_sq, double wv_sq, double exp_sq, double gamma) {
  FieldSpec spec;
  spec.name = "f";
  spec.grid = Grid::constant();
  SeKernelParams se;
  se.magnitude_sq = sigma_x_sq;
  spec.kernel = make_field_kernel(se, wv_sq, ExpKernelParams{exp_sq, gamma});
  spec.prior_mean = 1.0;
  return GpSystem({spec});
}

}  // namespace

void HealthTally::add(const CovarianceHealth& h) {
  max_asymmetry = std::max(max_asymmetry, h.max_asymmetry);
  min_diag_ratio = std::min(min_diag_ratio, h.min_diag_ratio);
}

void HealthTally::add_matrix(const Eigen::MatrixXd& p) {
  const double scale = p.cwiseAbs().rowwise().sum().maxCoeff();
  if (scale > 0) max_asymmetry = std::max(max_asymmetry, (p - p.transpose()).cwiseAbs().rowwise().sum().maxCoeff() / scale);
  const double tr = p.trace();
  if (tr > 0) min_diag_ratio = std::min(min_diag_ratio, p.diagonal().minCoeff() / tr);
}

BatchEquivalence batch_equivalence(int n, std::uint64_t seed, HealthTally* health) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> g(0.0, 1.0);
  const double sx2 = 0.3, wv2 = 0.01, e2 = 0.02, gamma = 0.1, noise = 0.01;
  const GpSystem gp = scalar_lifetime_gp(sx2, wv2, e2, gamma);
  const double zeta0 = gp.field(0).kernel.wv.zeta0;

  std::vector<double> zs(static_cast<size_t>(n));
  for (double& z : zs) z = 40.0 * u(rng);
  std::sort(zs.begin(), zs.end());
  std::vector<DirectObservation> obs;
  for (double z : zs) obs.push_back({z, 0.5 * std::sin(0.2 * z) + 0.1 * g(rng)});

  const double origin = zs.front() - zeta0;
  BatchGp b;
  b.x = zs;
  for (const auto& o : obs) b.y.push_back(o.y);
  b.noise_sq = noise;
  b.kernel = [=](double a, double c) {
    return wv_cov(a - origin, c - origin, WvKernelParams{wv2, zeta0}) + exp_cov(a, c, ExpKernelParams{e2, gamma});
  };

  const LifetimeResult res = run_lifetime_direct(obs, gp, noise);
  const SmoothedPosterior post = rts_smooth(gp, res.checkpoints);
  if (health) {
    health->add(res.health);
    for (const auto& p : post.covs()) health->add_matrix(p);
  }

  VectorXd sel = VectorXd::Zero(gp.size());
  sel(gp.smooth_offset(0)) = 1.0;
  sel(gp.noise_index(0)) = 1.0;
  BatchEquivalence out;
  std::vector<double> targets = zs;
  for (size_t k = 0; k + 1 < zs.size(); ++k) targets.push_back(0.5 * (zs[k] + zs[k + 1]));
  targets.push_back(zs.back() + 3.0);
  for (double z : targets) {
    const FieldState st = post.state_at(z);
    const BatchPrediction ref = batch_gp_posterior(b, z);
    out.mean_rel = std::max(out.mean_rel, rel(sel.dot(st.mean), ref.mean, 1e-3));
    out.var_rel = std::max(out.var_rel, rel(sel.dot(st.cov * sel), ref.variance, 1e-12));
  }
  out.phi_rel = rel(res.phi_total, batch_nlml(b), 1e-12);
  return out;
}

ExactInputCheck uncertain_input_exact(int cases, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  ExactInputCheck out;
  for (int c = 0; c < cases;) {
    const RandomField f = random_field(rng);
    const FieldPredictor pred(f.grid, f.se);
    const FieldPredictor::Factor fac = pred.factor(f.vars);
    const PlainPredictor plain(f);
    // Several query points per random field.
    for (int q = 0; q < 10 && c < cases; ++q, ++c) {
      const double z = -0.1 + 1.2 * u(rng);
      std::optional<double> cur;
      if (f.se.gamma_i) cur = -6.0 + 12.0 * u(rng);
      const UncertainPrediction p = pred.predict(fac, z, 0.0, cur, f.values);
      const Plain ref = plain.at(z, cur);
      out.mean_abs = std::max(out.mean_abs, std::abs(p.smooth_mean - ref.mean));
      out.var_abs = std::max(out.var_abs, std::abs(p.smooth_var - std::max(ref.var, 0.0)));
    }
  }
  return out;
}

QuadratureCheck uncertain_input_quadrature(int cases, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const auto [nodes, weights] = hermite(160);
  QuadratureCheck out;
  for (int c = 0; c < cases;) {
    const RandomField f = random_field(rng);
    const FieldPredictor pred(f.grid, f.se);
    const FieldPredictor::Factor fac = pred.factor(f.vars);
    const PlainPredictor plain(f);
    for (int q = 0; q < 5 && c < cases; ++q, ++c) {
      const double mu = u(rng);
      const double var_z = log_uniform(rng, 1e-4, 1.0 / *f.se.gamma_z);
      std::optional<double> cur;
      if (f.se.gamma_i) cur = -5.0 + 10.0 * u(rng);
      const UncertainPrediction p = pred.predict(fac, mu, var_z, cur, f.values);
      double m1 = 0.0, m2 = 0.0, ev = 0.0;
      for (Index k = 0; k < nodes.size(); ++k) {
        const Plain r = plain.at(mu + std::sqrt(var_z) * nodes(k), cur);
        m1 += weights(k) * r.mean;
        m2 += weights(k) * r.mean * r.mean;
        ev += weights(k) * r.var;
      }
      const double ref_var = ev + m2 - m1 * m1;
      out.mean_rel = std::max(out.mean_rel, rel(p.smooth_mean, m1, 1e-2 * std::sqrt(f.se.magnitude_sq)));
      out.var_rel = std::max(out.var_rel, rel(p.smooth_var, ref_var, 1e-12));
    }
  }
  return out;
}

namespace {

Eigen::Vector3d dynamics_map(const JointEkf& ekf, const JointState& s, double i, double t_amb, double dt) {
  const EcmParamSnapshot snap = ekf.evaluate_params(s, i).snapshot();
  const BatteryState nx = step_dynamics(s.battery(), i, t_amb, dt, snap, ekf.model().thermal).next;
  return {nx.z, nx.v1, nx.tc};
}

Eigen::Vector2d output_map(const JointEkf& ekf, const JointState& s, double i) {
  const EcmParamSnapshot snap = ekf.evaluate_params(s, i).snapshot();
  const BatteryOutput y = output(s.battery(), i, snap, ekf.model().ocv);
  return {y.v_terminal, y.temperature};
}

double rowwise_rel(const MatrixXd& a, const MatrixXd& fd) {
  double worst = 0.0;
  for (Index r = 0; r < a.rows(); ++r) {
    const double scale = a.row(r).cwiseAbs().maxCoeff();
    worst = std::max(worst, (a.row(r) - fd.row(r)).cwiseAbs().maxCoeff() / std::max(scale, 1e-300));
  }
  return worst;
}

}  // namespace

JacobianCheck jacobians_vs_fd(int states, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> g(0.0, 1.0);
  JacobianCheck out;
  const ModelSetup setup;
  for (int c = 0; c < states; ++c) {
    HyperParams h = HyperParams::defaults();
    h[kGammaAlphaBetaZ] = log_uniform(rng, 1.0, 30.0);
    h[kGammaR0Z] = log_uniform(rng, 1.0, 30.0);
    h[kGammaR0I] = log_uniform(rng, 0.05, 1.0);
    const BatteryFilterModel model = build_model(h, setup);
    const JointEkf ekf(model);
    JointState s = ekf.init_joint(3.6 + 0.5 * u(rng), 15.0 + 20.0 * u(rng));
    s.mean(kSocIndex) = 0.1 + 0.8 * u(rng);
    s.mean(kV1Index) = 0.02 * g(rng);
    s.mean(kTempIndex) += 5.0 * u(rng);
    s.cov(kSocIndex, kSocIndex) = log_uniform(rng, 1e-6, 1e-2);
    for (Index k = s.gp_offset(); k < s.mean.size(); ++k) s.mean(k) = 0.15 * g(rng);
    const double i = -5.0 + 10.0 * u(rng);
    const double dt = 1.0;
    const double t_amb = 25.0;
    const Index n = s.mean.size();

    const ParamSet p = ekf.evaluate_params(s, i);
    const MatrixXd ga = dynamics_jacobian(s.battery(), i, dt, p, model.thermal, n);
    const MatrixXd ha = observation_jacobian(s.battery(), i, p, model.ocv, n);
    MatrixXd gf(3, n), hf(2, n);
    for (Index k = 0; k < n; ++k) {
      const double step = 1e-6 * std::max(1.0, std::abs(s.mean(k)));
      JointState sp = s, sm = s;
      sp.mean(k) += step;
      sm.mean(k) -= step;
      gf.col(k) = (dynamics_map(ekf, sp, i, t_amb, dt) - dynamics_map(ekf, sm, i, t_amb, dt)) / (2 * step);
      hf.col(k) = (output_map(ekf, sp, i) - output_map(ekf, sm, i)) / (2 * step);
    }
    out.g_rel = std::max(out.g_rel, rowwise_rel(ga, gf));
    out.h_rel = std::max(out.h_rel, rowwise_rel(ha, hf));
  }
  return out;
}

double bol_variance_error(int draws, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const Box box = Box::defaults();
  std::uniform_real_distribution<double> u(0.0, 1.0);
  ModelSetup setup;
  setup.n_i_r0 = 5;
  double worst = 0.0;
  for (int d = 0; d < draws; ++d) {
    HyperParams h;
    for (int k = 0; k < kHyperCount; ++k)
      h[k] = std::exp(std::log(box.lower[k]) + u(rng) * (std::log(box.upper[k]) - std::log(box.lower[k])));
    const BatteryFilterModel model = build_model(h, setup);
    const MatrixXd p0 = model.gp.initial_cov();
    const double sigma[4] = {h[kSigmaQInv], h[kSigmaAlphaBeta], h[kSigmaAlphaBeta], h[kSigmaR0]};
    for (Index f = 0; f < 4; ++f) {
      const Index off = model.gp.smooth_offset(f);
      const double target = sigma[f] * sigma[f];
      for (Index j = 0; j < model.gp.field(f).grid.size(); ++j)
        worst = std::max(worst, std::abs(p0(off + 2 * j, off + 2 * j) - target) / target);
    }
  }
  return worst;
}

ForecastGeometry forecast_geometry(const SmoothedPosterior& post, const HyperParams& h,
                                   const std::vector<ParameterQuery>& queries) {
  ForecastGeometry out;
  const double last = post.last_zeta();
  const double span = 2.0 / h[kGammaZetaR];
  constexpr int kSteps = 6;
  for (const ParameterQuery& q : queries) {
    std::vector<double> d(kSteps), m(kSteps);
    for (int k = 0; k < kSteps; ++k) {
      d[k] = span * k;
      m[k] = post.query(last + d[k], q).smooth_mean;
    }
    // Least-squares line, then the worst residual.
    double sd = 0, sm = 0, sdd = 0, sdm = 0;
    for (int k = 0; k < kSteps; ++k) {
      sd += d[k];
      sm += m[k];
      sdd += d[k] * d[k];
      sdm += d[k] * m[k];
    }
    const double slope = (kSteps * sdm - sd * sm) / (kSteps * sdd - sd * sd);
    const double icpt = (sm - slope * sd) / kSteps;
    double scale = 0.0, resid = 0.0;
    for (int k = 0; k < kSteps; ++k) {
      scale = std::max(scale, std::abs(m[k]));
      resid = std::max(resid, std::abs(m[k] - (icpt + slope * d[k])));
    }
    out.collinearity = std::max(out.collinearity, resid / std::max(scale, 1e-300));
  }
  const FieldState far = post.state_at(last + 10.0 / h[kGammaZetaR]);
  for (Index f = 0; f < post.gp().field_count(); ++f)
    out.exp_ratio = std::max(out.exp_ratio, std::abs(far.mean(post.gp().noise_index(f))) / h[kSigmaZetaR]);
  return out;
}

SmoothedPosterior direct_posterior(const HyperParams& h, int n, std::uint64_t seed, HealthTally* health) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  const GpSystem gp = scalar_lifetime_gp(h[kSigmaQInv] * h[kSigmaQInv], h[kSigma0Zeta] * h[kSigma0Zeta],
                                         h[kSigmaZetaR] * h[kSigmaZetaR], h[kGammaZetaR]);
  std::vector<DirectObservation> obs;
  for (int k = 0; k < n; ++k) {
    const double z = 10.0 * k;
    obs.push_back({z, 0.002 * z + h[kSigmaZetaR] * g(rng) + 1e-3 * g(rng)});
  }
  const LifetimeResult res = run_lifetime_direct(obs, gp, 1e-6);
  SmoothedPosterior post = rts_smooth(gp, res.checkpoints);
  if (health) {
    health->add(res.health);
    for (const auto& p : post.covs()) health->add_matrix(p);
  }
  return post;
}

RecoveryErrors recovery_errors(const SmoothedPosterior& post, const GroundTruth& truth, const SimulationOutput& sim) {
  const double zeta = sim.segment.zeta;
  const FieldState block = post.state_at(zeta);
  double ea = 0, eb = 0, er = 0, na = 0, nb = 0, nr = 0;
  const size_t n = sim.latent.z.size();
  for (size_t k = 0; k < n; ++k) {
    const double z = sim.latent.z[k];
    const double i = sim.segment.i[k];
    const double ta = truth.alpha_at(z, zeta), tb = truth.beta_at(z, zeta), tr = truth.r0_at(z, i, zeta);
    ea += std::pow(post.query(block, {FieldId::kAlpha, z, i}).smooth_mean - ta, 2);
    eb += std::pow(post.query(block, {FieldId::kBeta, z, i}).smooth_mean - tb, 2);
    er += std::pow(post.query(block, {FieldId::kR0, z, i}).smooth_mean - tr, 2);
    na += std::abs(ta);
    nb += std::abs(tb);
    nr += std::abs(tr);
  }
  const double dn = static_cast<double>(n);
  RecoveryErrors out;
  out.alpha = std::sqrt(ea / dn) / (na / dn);
  out.beta = std::sqrt(eb / dn) / (nb / dn);
  out.r0 = std::sqrt(er / dn) / (nr / dn);
  const double tq = truth.q_inv_at(zeta);
  out.q_inv = std::abs(post.query(block, {FieldId::kQInv, 0.5, 0.0}).smooth_mean - tq) / tq;
  return out;
}

}  // namespace checks
