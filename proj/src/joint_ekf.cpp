#include "gpecm/joint_ekf.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include "gpecm/error.hpp"

namespace gpecm {

const char* field_name(FieldId f) {
  switch (f) {
    case FieldId::kQInv: return "q_inv";
    case FieldId::kAlpha: return "alpha";
    case FieldId::kBeta: return "beta";
    case FieldId::kR0: return "r0";
  }
  return "?";
}

GpSystem::GpSystem(std::vector<FieldSpec> fields) : fields_(std::move(fields)) {
  Index off = 0;
  for (const FieldSpec& f : fields_) {
    if (!(f.prior_mean > 0.0)) throw InvalidArgument("field " + f.name + ": prior mean must be positive");
    validate(f.kernel.wv);
    validate(f.kernel.exp);
    smooth_offset_.push_back(off);
    correlation_.push_back(se_correlation(f.grid, f.kernel.se));
    off += f.grid.state_size();
  }
  smooth_size_ = off;
  size_ = off + static_cast<Index>(fields_.size());
}

VectorXd GpSystem::initial_mean() const { return VectorXd::Zero(size_); }

MatrixXd GpSystem::initial_cov() const {
  MatrixXd p = MatrixXd::Zero(size_, size_);
  for (Index f = 0; f < field_count(); ++f) {
    const FieldCovariance c = init_field_cov(field(f).grid, field(f).kernel);
    const Index o = smooth_offset(f);
    p.block(o, o, c.smooth.rows(), c.smooth.cols()) = c.smooth;
    p(noise_index(f), noise_index(f)) = c.noise;
  }
  return p;
}

MatrixXd GpSystem::transition(double delta_zeta) const {
  MatrixXd a = MatrixXd::Zero(size_, size_);
  for (Index f = 0; f < field_count(); ++f) {
    const WvDiscrete wv = wv_discrete(delta_zeta, field(f).kernel.wv);
    const Index o = smooth_offset(f);
    for (Index j = 0; j < field(f).grid.size(); ++j) a.block<2, 2>(o + 2 * j, o + 2 * j) = wv.transition;
    a(noise_index(f), noise_index(f)) = exp_discrete(delta_zeta, field(f).kernel.exp).transition;
  }
  return a;
}

MatrixXd GpSystem::process_noise(double delta_zeta) const {
  MatrixXd q = MatrixXd::Zero(size_, size_);
  for (Index f = 0; f < field_count(); ++f) {
    const WvDiscrete wv = wv_discrete(delta_zeta, field(f).kernel.wv);
    const MatrixXd& corr = correlation_[static_cast<size_t>(f)];
    const Index o = smooth_offset(f);
    const Index n = field(f).grid.size();
    for (Index i = 0; i < n; ++i)
      for (Index j = 0; j < n; ++j) q.block<2, 2>(o + 2 * i, o + 2 * j) = corr(i, j) * wv.process_noise;
    q(noise_index(f), noise_index(f)) = exp_discrete(delta_zeta, field(f).kernel.exp).process_noise;
  }
  return q;
}

BatteryState JointState::battery() const {
  if (battery_size < kBatteryStates) throw InvalidArgument("joint state has no battery block");
  return {mean(kSocIndex), mean(kV1Index), mean(kTempIndex)};
}

void CovarianceHealth::merge(const CovarianceHealth& o) {
  max_asymmetry = std::max(max_asymmetry, o.max_asymmetry);
  min_diag_ratio = std::min(min_diag_ratio, o.min_diag_ratio);
  steps += o.steps;
  alpha_floor_hits += o.alpha_floor_hits;
  q_inv_floor_hits += o.q_inv_floor_hits;
  soc_clamps += o.soc_clamps;
}

MatrixXd joseph_update(const MatrixXd& p, const MatrixXd& h, const MatrixXd& k, const MatrixXd& r) {
  const MatrixXd pht = p * h.transpose();
  const MatrixXd s = h * pht + r;
  const MatrixXd kpht = k * pht.transpose();
  MatrixXd out = p - kpht - kpht.transpose() + k * s * k.transpose();
  return 0.5 * (out + out.transpose());
}

namespace {

// Records the relative asymmetry and smallest diagonal, then re-symmetrises
// in place, all in one pass over the upper triangle.
void symmetrize_and_check(MatrixXd& p, CovarianceHealth& health) {
  const Index n = p.rows();
  VectorXd row_abs = VectorXd::Zero(n), row_diff = VectorXd::Zero(n);
  for (Index j = 0; j < n; ++j) {
    for (Index i = 0; i < j; ++i) {
      const double a = p(i, j), b = p(j, i);
      const double d = std::abs(a - b);
      row_diff(i) += d;
      row_diff(j) += d;
      row_abs(i) += std::abs(a);
      row_abs(j) += std::abs(b);
      p(i, j) = p(j, i) = 0.5 * (a + b);
    }
    row_abs(j) += std::abs(p(j, j));
  }
  const double norm = row_abs.maxCoeff();
  if (norm > 0.0) health.max_asymmetry = std::max(health.max_asymmetry, row_diff.maxCoeff() / norm);
  const double tr = p.trace();
  if (tr > 0.0) health.min_diag_ratio = std::min(health.min_diag_ratio, p.diagonal().minCoeff() / tr);
  ++health.steps;
}

// P * M^T for symmetric P and a short, sparse M (rows x n).
MatrixXd sym_times_sparse_t(const MatrixXd& p, const MatrixXd& m) {
  MatrixXd out = MatrixXd::Zero(p.rows(), m.rows());
  for (Index c = 0; c < m.cols(); ++c)
    for (Index r = 0; r < m.rows(); ++r)
      if (m(r, c) != 0.0) out.col(r) += m(r, c) * p.col(c);
  return out;
}

// Kalman update with the covariance in expanded Joseph form. h is m x n,
// innovation e, noise r.
double kalman_update(VectorXd& mean, MatrixXd& cov, const MatrixXd& h, const VectorXd& e, const MatrixXd& r,
                     MatrixXd& s_out, CovarianceHealth& health) {
  const MatrixXd pht = sym_times_sparse_t(cov, h);
  const MatrixXd s = h * pht + r;
  Eigen::LLT<MatrixXd> llt(s);
  if (llt.info() != Eigen::Success || !s.allFinite())
    throw NumericalError("innovation covariance is not positive definite");
  const MatrixXd k = llt.solve(pht.transpose()).transpose();
  mean += k * e;
  // P - K M^T - M K^T + K S K^T with M = P H^T, as one rank-2m product:
  // [K S - M, -K] [K, M]^T.
  const Index m = h.rows();
  MatrixXd left(cov.rows(), 2 * m), right(cov.rows(), 2 * m);
  left << k * s - pht, -k;
  right << k, pht;
  cov.noalias() += left * right.transpose();
  symmetrize_and_check(cov, health);
  s_out = s;
  const double quad = e.dot(llt.solve(e));
  const double logdet = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
  return 0.5 * quad + 0.5 * logdet + 0.5 * static_cast<double>(e.size()) * std::log(2.0 * std::numbers::pi);
}

void propagate_gp_block(VectorXd& mean, MatrixXd& cov, Index off, const GpSystem& gp, const MatrixXd& a,
                        double delta_zeta) {
  const Index m = gp.size();
  mean.segment(off, m) = a * mean.segment(off, m);
  MatrixXd block = a * cov.block(off, off, m, m) * a.transpose() + gp.process_noise(delta_zeta);
  cov.block(off, off, m, m) = 0.5 * (block + block.transpose());
}

}  // namespace

JointEkf::JointEkf(BatteryFilterModel model) : model_(std::move(model)) {
  if (model_.gp.field_count() != 4) throw InvalidArgument("battery filter needs four parameter fields");
  if (model_.gp.field(0).grid.inputs != FieldInputs::kNone)
    throw InvalidArgument("inverse-capacity field must be constant over the operating point");
  if (!(model_.sigma_v > 0.0) || !(model_.sigma_t > 0.0))
    throw InvalidArgument("measurement noise must be positive");
  for (const FieldSpec& f : model_.gp.fields()) predictors_.emplace_back(f.grid, f.kernel.se);
}

JointState JointEkf::init_joint(double v_rest, double t_amb) const {
  JointState s;
  s.battery_size = kBatteryStates;
  const Index n = kBatteryStates + model_.gp.size();
  s.mean = VectorXd::Zero(n);
  s.cov = MatrixXd::Zero(n, n);
  s.cov.bottomRightCorner(model_.gp.size(), model_.gp.size()) = model_.gp.initial_cov();
  begin_segment(s, 0.0, v_rest, t_amb);
  return s;
}

void JointEkf::begin_segment(JointState& s, double delta_zeta, double v_rest, double t_amb) const {
  if (!(delta_zeta >= 0.0)) throw InvalidArgument("segment lifetime step must be non-negative");
  if (!std::isfinite(v_rest) || !std::isfinite(t_amb)) throw DataError("non-finite initial sample");
  const OcvCurve::Inverse inv = model_.ocv.inverse(v_rest);
  s.mean(kSocIndex) = inv.z;
  s.mean(kV1Index) = 0.0;
  s.mean(kTempIndex) = t_amb;
  if (delta_zeta > 0.0)
    propagate_gp_block(s.mean, s.cov, kBatteryStates, model_.gp, model_.gp.transition(delta_zeta), delta_zeta);
  s.cov.topRows(kBatteryStates).setZero();
  s.cov.leftCols(kBatteryStates).setZero();
  s.cov.topLeftCorner(kBatteryStates, kBatteryStates).diagonal() = model_.p_batt0;
}

std::vector<FieldPredictor::Factor> JointEkf::factors(const JointState& s) const {
  std::vector<FieldPredictor::Factor> out(predictors_.size());
  for (Index f = 0; f < model_.gp.field_count(); ++f) {
    const FieldSpec& spec = model_.gp.field(f);
    if (spec.grid.inputs == FieldInputs::kNone) continue;
    const Index n = spec.grid.size();
    const Index off = s.gp_offset() + model_.gp.smooth_offset(f);
    VectorXd vars(n);
    for (Index j = 0; j < n; ++j) vars(j) = s.cov(off + 2 * j, off + 2 * j);
    out[static_cast<size_t>(f)] = predictors_[static_cast<size_t>(f)].factor(vars);
  }
  return out;
}

ParamLinearization JointEkf::linearize_field(const JointState& s, FieldId id, double current, bool floor,
                                             const FieldPredictor::Factor& factor) const {
  const Index f = static_cast<Index>(id);
  const FieldSpec& spec = model_.gp.field(f);
  const Index n = spec.grid.size();
  const Index off = s.gp_offset() + model_.gp.smooth_offset(f);
  VectorXd values(n);
  for (Index j = 0; j < n; ++j) values(j) = s.mean(off + 2 * j);
  const std::optional<double> cur =
      spec.grid.inputs == FieldInputs::kSocCurrent ? std::optional<double>(current) : std::nullopt;
  const double var_z = std::max(s.cov(kSocIndex, kSocIndex), 0.0);
  const UncertainPrediction p =
      predictors_[static_cast<size_t>(f)].predict(factor, s.mean(kSocIndex), var_z, cur, values);
  const Index noise = s.gp_offset() + model_.gp.noise_index(f);
  const double c = spec.prior_mean;

  ParamLinearization out;
  out.mean = c * (1.0 + p.smooth_mean + s.mean(noise));
  out.variance = c * c * p.smooth_var;
  if (floor && out.mean < 0.01 * c) {
    out.mean = 0.01 * c;
    return out;
  }
  out.d_dz = c * p.dmean_dz;
  out.d_dstate.reserve(static_cast<size_t>(n) + 1);
  for (Index j = 0; j < n; ++j) out.d_dstate.emplace_back(off + 2 * j, c * p.weights(j));
  out.d_dstate.emplace_back(noise, c);
  return out;
}

ParamSet JointEkf::evaluate_params(const JointState& s, double current) const {
  return evaluate_params(s, current, factors(s));
}

ParamSet JointEkf::evaluate_params(const JointState& s, double current,
                                   const std::vector<FieldPredictor::Factor>& fac) const {
  ParamSet p;
  p.q_inv = linearize_field(s, FieldId::kQInv, current, true, fac[0]);
  p.alpha = linearize_field(s, FieldId::kAlpha, current, true, fac[1]);
  p.beta = linearize_field(s, FieldId::kBeta, current, false, fac[2]);
  p.r0 = linearize_field(s, FieldId::kR0, current, false, fac[3]);
  return p;
}

StepOutput JointEkf::step(JointState& s, double i_prev, double t_amb_prev, double dt, double i_now, double v_obs,
                          double temp_obs, bool propagate) {
  const Index n = s.mean.size();
  const Index nb = kBatteryStates;
  // The GP block is frozen within a segment, so one factor per field serves
  // both the propagation and the observation.
  const std::vector<FieldPredictor::Factor> fac = factors(s);
  if (propagate) {
    const BatteryState b = s.battery();
    const ParamSet p = evaluate_params(s, i_prev, fac);
    if (p.alpha.d_dstate.empty()) ++health_.alpha_floor_hits;
    if (p.q_inv.d_dstate.empty()) ++health_.q_inv_floor_hits;
    const EcmParamSnapshot snap = p.snapshot();
    const MatrixXd g = dynamics_jacobian(b, i_prev, dt, p, model_.thermal, n);
    const LambdaTerms lam = lambda_terms(b, i_prev, dt, snap.alpha.mean, p.alpha.variance, p.beta.variance,
                                         p.r0.variance, model_.thermal);
    BatteryState next = step_dynamics(b, i_prev, t_amb_prev, dt, snap, model_.thermal).next;
    if (next.z < -0.05 || next.z > 1.05) {
      next.z = std::clamp(next.z, -0.05, 1.05);
      ++health_.soc_clamps;
    }
    // GP rows of the full transition are identity, so only the battery rows change.
    const MatrixXd t = sym_times_sparse_t(s.cov, g).transpose();
    Eigen::Matrix3d pbb = t * g.transpose();
    pbb += model_.q_batt.asDiagonal();
    pbb += lam.lambda_g;
    s.cov.topRows(nb) = t;
    s.cov.leftCols(nb) = t.transpose();
    s.cov.topLeftCorner(nb, nb) = 0.5 * (pbb + pbb.transpose());
    s.mean(kSocIndex) = next.z;
    s.mean(kV1Index) = next.v1;
    s.mean(kTempIndex) = next.tc;
  }

  const BatteryState b = s.battery();
  const ParamSet p = evaluate_params(s, i_now, fac);
  const EcmParamSnapshot snap = p.snapshot();
  const BatteryOutput y = output(b, i_now, snap, model_.ocv);
  const MatrixXd h = observation_jacobian(b, i_now, p, model_.ocv, n);
  const double lam_h = p.r0.variance * i_now * i_now;
  Eigen::Matrix2d r = Eigen::Matrix2d::Zero();
  r(0, 0) = model_.sigma_v * model_.sigma_v + lam_h;
  r(1, 1) = model_.sigma_t * model_.sigma_t;
  const Eigen::Vector2d e(v_obs - y.v_terminal, temp_obs - y.temperature);

  MatrixXd s_mat;
  StepOutput out;
  out.phi_increment = kalman_update(s.mean, s.cov, h, e, r, s_mat, health_);
  out.residual = e;
  out.s = s_mat;
  return out;
}

SegmentResult JointEkf::run_segment(JointState& s, const CycleSegment& seg) {
  const size_t n = seg.size();
  if (n == 0) throw DataError("empty segment");
  if (seg.v.size() != n || seg.temp.size() != n || seg.t_amb.size() != n)
    throw DataError("segment columns have different lengths");
  SegmentResult out;
  out.residuals.reserve(n);
  out.innovation_cov.reserve(n);
  out.filtered.reserve(n);
  for (size_t t = 0; t < n; ++t) {
    const bool prop = t > 0;
    const StepOutput o = prop ? step(s, seg.i[t - 1], seg.t_amb[t - 1], seg.dt, seg.i[t], seg.v[t], seg.temp[t])
                              : step(s, 0.0, seg.t_amb[0], seg.dt, seg.i[0], seg.v[0], seg.temp[0], false);
    out.residuals.push_back(o.residual);
    out.innovation_cov.push_back(o.s);
    out.filtered.push_back(s.battery());
    out.phi += o.phi_increment;
  }
  return out;
}

LifetimeResult run_lifetime(std::span<const CycleSegment> segments, const BatteryFilterModel& model) {
  LifetimeResult out;
  if (segments.empty()) return out;
  JointEkf ekf(model);
  const GpSystem& gp = model.gp;
  const Index m = gp.size();
  JointState s;
  double prev_zeta = segments.front().zeta;
  for (size_t k = 0; k < segments.size(); ++k) {
    const CycleSegment& seg = segments[k];
    if (seg.size() == 0) throw DataError("segment " + std::to_string(k) + " is empty");
    if (seg.zeta < prev_zeta) throw DataError("segments must be sorted by lifetime coordinate");
    const double dz = k == 0 ? 0.0 : seg.zeta - prev_zeta;
    if (k == 0) s = ekf.init_joint(seg.v[0], seg.t_amb[0]);
    else ekf.begin_segment(s, dz, seg.v[0], seg.t_amb[0]);
    FilterCheckpoint cp;
    cp.zeta = seg.zeta;
    cp.delta_zeta = dz;
    cp.transition = gp.transition(dz);
    cp.pre_mean = s.mean.tail(m);
    cp.pre_cov = s.cov.bottomRightCorner(m, m);
    try {
      out.segments.push_back(ekf.run_segment(s, seg));
    } catch (const NumericalError& e) {
      throw NumericalError("segment " + std::to_string(k) + " (cycle " + std::to_string(seg.cycle_index) +
                           "): " + e.what());
    }
    cp.post_mean = s.mean.tail(m);
    cp.post_cov = s.cov.bottomRightCorner(m, m);
    out.checkpoints.push_back(std::move(cp));
    out.phi_total += out.segments.back().phi;
    prev_zeta = seg.zeta;
  }
  out.health = ekf.health();
  return out;
}

LifetimeResult run_lifetime_direct(std::span<const DirectObservation> obs, const GpSystem& gp, double noise_sq) {
  if (gp.field_count() != 1) throw InvalidArgument("direct observation needs exactly one field");
  if (!(noise_sq >= 0.0)) throw InvalidArgument("noise variance must be non-negative");
  LifetimeResult out;
  if (obs.empty()) return out;
  JointState s;
  s.battery_size = 0;
  s.mean = gp.initial_mean();
  s.cov = gp.initial_cov();
  const Index m = gp.size();
  MatrixXd h = MatrixXd::Zero(1, m);
  h(0, gp.smooth_offset(0)) = 1.0;
  h(0, gp.noise_index(0)) = 1.0;
  const MatrixXd r = MatrixXd::Constant(1, 1, noise_sq);
  double prev = obs.front().zeta;
  for (size_t k = 0; k < obs.size(); ++k) {
    const double dz = k == 0 ? 0.0 : obs[k].zeta - prev;
    if (dz < 0.0) throw DataError("observations must be sorted by lifetime coordinate");
    FilterCheckpoint cp;
    cp.zeta = obs[k].zeta;
    cp.delta_zeta = dz;
    cp.transition = gp.transition(dz);
    if (dz > 0.0) propagate_gp_block(s.mean, s.cov, 0, gp, cp.transition, dz);
    cp.pre_mean = s.mean;
    cp.pre_cov = s.cov;
    VectorXd e(1);
    e(0) = obs[k].y - (h * s.mean)(0);
    MatrixXd s_mat;
    SegmentResult seg;
    seg.phi = kalman_update(s.mean, s.cov, h, e, r, s_mat, out.health);
    seg.residuals.emplace_back(e(0), 0.0);
    seg.innovation_cov.push_back(Eigen::Matrix2d::Zero());
    seg.innovation_cov.back()(0, 0) = s_mat(0, 0);
    out.phi_total += seg.phi;
    out.segments.push_back(std::move(seg));
    cp.post_mean = s.mean;
    cp.post_cov = s.cov;
    out.checkpoints.push_back(std::move(cp));
    prev = obs[k].zeta;
  }
  return out;
}

MatrixXd psd_pinv(const MatrixXd& m) {
  const MatrixXd sym = 0.5 * (m + m.transpose());
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(sym);
  if (es.info() != Eigen::Success) throw NumericalError("eigendecomposition failed");
  const VectorXd& ev = es.eigenvalues();
  const double cut = 1e-12 * std::max(ev.cwiseAbs().maxCoeff(), 1e-300);
  VectorXd inv(ev.size());
  for (Index i = 0; i < ev.size(); ++i) inv(i) = ev(i) > cut ? 1.0 / ev(i) : 0.0;
  return es.eigenvectors() * inv.asDiagonal() * es.eigenvectors().transpose();
}

namespace {

// One backward step: smooth (mean_f, cov_f) given the next filtered
// prediction (pre) and its smoothed value, linked by transition a.
void rts_step(const VectorXd& mean_f, const MatrixXd& cov_f, const MatrixXd& a, const VectorXd& pre_mean,
              const MatrixXd& pre_cov, const VectorXd& next_mean, const MatrixXd& next_cov, VectorXd& out_mean,
              MatrixXd& out_cov) {
  const MatrixXd c = cov_f * a.transpose() * psd_pinv(pre_cov);
  out_mean = mean_f + c * (next_mean - pre_mean);
  out_cov = cov_f + c * (next_cov - pre_cov) * c.transpose();
  out_cov = 0.5 * (out_cov + out_cov.transpose()).eval();
}

}  // namespace

SmoothedPosterior rts_smooth(const GpSystem& gp, const std::vector<FilterCheckpoint>& cps) {
  if (cps.empty()) throw InvalidArgument("smoothing needs at least one checkpoint");
  const size_t n = cps.size();
  std::vector<VectorXd> means(n);
  std::vector<MatrixXd> covs(n);
  means[n - 1] = cps[n - 1].post_mean;
  covs[n - 1] = cps[n - 1].post_cov;
  for (size_t k = n - 1; k-- > 0;) {
    rts_step(cps[k].post_mean, cps[k].post_cov, cps[k + 1].transition, cps[k + 1].pre_mean, cps[k + 1].pre_cov,
             means[k + 1], covs[k + 1], means[k], covs[k]);
  }
  return SmoothedPosterior(gp, cps, std::move(means), std::move(covs));
}

SmoothedPosterior::SmoothedPosterior(GpSystem gp, std::vector<FilterCheckpoint> checkpoints,
                                     std::vector<VectorXd> means, std::vector<MatrixXd> covs)
    : gp_(std::move(gp)), checkpoints_(std::move(checkpoints)), means_(std::move(means)), covs_(std::move(covs)) {
  if (checkpoints_.empty() || means_.size() != checkpoints_.size() || covs_.size() != checkpoints_.size())
    throw InvalidArgument("smoothed posterior needs one mean and covariance per checkpoint");
}

FieldState SmoothedPosterior::state_at(double zeta) const {
  const double first = first_zeta();
  const double last = last_zeta();
  if (!std::isfinite(zeta)) throw InvalidArgument("lifetime coordinate must be finite");
  if (zeta < first) throw InvalidArgument("lifetime coordinate precedes the first checkpoint");
  if (zeta >= last) {
    const double dz = zeta - last;
    if (dz == 0.0) return {means_.back(), covs_.back()};
    const MatrixXd a = gp_.transition(dz);
    MatrixXd p = a * covs_.back() * a.transpose() + gp_.process_noise(dz);
    return {a * means_.back(), 0.5 * (p + p.transpose())};
  }
  // Smallest k with zeta_k > zeta; the point lies in [zeta_{k-1}, zeta_k).
  size_t k = 1;
  while (checkpoints_[k].zeta <= zeta) ++k;
  const FilterCheckpoint& lo = checkpoints_[k - 1];
  const FilterCheckpoint& hi = checkpoints_[k];
  const double d1 = zeta - lo.zeta;
  if (d1 == 0.0) return {means_[k - 1], covs_[k - 1]};
  const double d2 = hi.zeta - zeta;
  const MatrixXd a1 = gp_.transition(d1);
  const VectorXd m_pred = a1 * lo.post_mean;
  MatrixXd p_pred = a1 * lo.post_cov * a1.transpose() + gp_.process_noise(d1);
  p_pred = 0.5 * (p_pred + p_pred.transpose()).eval();
  FieldState out;
  rts_step(m_pred, p_pred, gp_.transition(d2), hi.pre_mean, hi.pre_cov, means_[k], covs_[k], out.mean, out.cov);
  return out;
}

ParameterEstimate SmoothedPosterior::query(const FieldState& block, const ParameterQuery& q) const {
  const Index f = static_cast<Index>(q.field);
  if (f < 0 || f >= gp_.field_count()) throw InvalidArgument("unknown parameter field");
  const FieldSpec& spec = gp_.field(f);
  const Index n = spec.grid.size();
  const Index off = gp_.smooth_offset(f);
  const Index noise = gp_.noise_index(f);

  VectorXd w(n);
  if (spec.grid.inputs == FieldInputs::kNone) {
    w(0) = 1.0;
  } else {
    OperatingPoint x;
    x.z = q.z;
    if (spec.grid.inputs == FieldInputs::kSocCurrent) x.current = q.current;
    MatrixXd kuu = se_gram(spec.grid, spec.kernel.se);
    add_jitter(kuu);
    VectorXd ks(n);
    for (Index j = 0; j < n; ++j) ks(j) = se_cov(x, spec.grid.coords[j], spec.kernel.se);
    Eigen::LDLT<MatrixXd> ldlt(kuu);
    w = ldlt.solve(ks);
  }
  // Selector over [value states | noise] of this field.
  VectorXd a = VectorXd::Zero(block.mean.size());
  for (Index j = 0; j < n; ++j) a(off + 2 * j) = w(j);
  VectorXd an = VectorXd::Zero(block.mean.size());
  an(noise) = 1.0;

  const double c = spec.prior_mean;
  ParameterEstimate out;
  out.smooth_mean = c * (1.0 + a.dot(block.mean));
  out.smooth_sd = c * std::sqrt(std::max(a.dot(block.cov * a), 0.0));
  out.noise_mean = c * block.mean(noise);
  out.noise_sd = c * std::sqrt(std::max(block.cov(noise, noise), 0.0));
  const VectorXd t = a + an;
  out.mean = c * (1.0 + t.dot(block.mean));
  out.sd = c * std::sqrt(std::max(t.dot(block.cov * t), 0.0));
  return out;
}

std::vector<ParameterEstimate> forecast(const SmoothedPosterior& smoothed, double zeta_star,
                                        std::span<const ParameterQuery> queries) {
  if (zeta_star < smoothed.last_zeta())
    throw InvalidArgument("forecast target precedes the last checkpoint");
  const FieldState block = smoothed.state_at(zeta_star);
  std::vector<ParameterEstimate> out;
  out.reserve(queries.size());
  for (const ParameterQuery& q : queries) out.push_back(smoothed.query(block, q));
  return out;
}

}  // namespace gpecm
