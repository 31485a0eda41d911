#include "gpecm/gp_field.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "gpecm/error.hpp"

namespace gpecm {

namespace {

std::vector<double> linspace(double lo, double hi, Index n) {
  if (n < 1) throw InvalidArgument("grid needs at least one point");
  if (n == 1) return {0.5 * (lo + hi)};
  if (!(hi > lo)) throw InvalidArgument("grid range must be increasing");
  std::vector<double> out(static_cast<size_t>(n));
  for (Index k = 0; k < n; ++k) out[k] = lo + (hi - lo) * static_cast<double>(k) / static_cast<double>(n - 1);
  return out;
}

double i_factor(const SeKernelParams& se, std::optional<double> current, const OperatingPoint& knot) {
  if (!se.gamma_i) return 1.0;
  const double d = *current - *knot.current;
  return std::exp(-0.5 * *se.gamma_i * d * d);
}

void check_grid_params(const Grid& grid, const SeKernelParams& se) {
  const bool want_z = grid.inputs != FieldInputs::kNone;
  const bool want_i = grid.inputs == FieldInputs::kSocCurrent;
  if (want_z != se.gamma_z.has_value() || want_i != se.gamma_i.has_value())
    throw InvalidArgument("grid inputs do not match SE kernel dimensions");
}

}  // namespace

Grid Grid::constant() {
  Grid g;
  g.inputs = FieldInputs::kNone;
  g.coords.push_back({});
  g.z_slot.push_back(0);
  return g;
}

Grid Grid::soc(double z_lo, double z_hi, Index n) {
  Grid g;
  g.inputs = FieldInputs::kSoc;
  g.z_axis = linspace(z_lo, z_hi, n);
  for (Index k = 0; k < n; ++k) {
    g.coords.push_back({g.z_axis[k], std::nullopt});
    g.z_slot.push_back(k);
  }
  return g;
}

Grid Grid::soc_current(double z_lo, double z_hi, Index n_z, double i_lo, double i_hi, Index n_i) {
  Grid g;
  g.inputs = FieldInputs::kSocCurrent;
  g.z_axis = linspace(z_lo, z_hi, n_z);
  g.i_axis = linspace(i_lo, i_hi, n_i);
  for (Index a = 0; a < n_z; ++a) {
    for (Index b = 0; b < n_i; ++b) {
      g.coords.push_back({g.z_axis[a], g.i_axis[b]});
      g.z_slot.push_back(a);
    }
  }
  return g;
}

FieldKernel make_field_kernel(const SeKernelParams& se, double wv_magnitude_sq, const ExpKernelParams& exp) {
  validate(se);
  validate(exp);
  FieldKernel k;
  k.se = se;
  k.exp = exp;
  k.wv.magnitude_sq = wv_magnitude_sq;
  k.wv.zeta0 = solve_zeta0(se.magnitude_sq, wv_magnitude_sq);
  return k;
}

MatrixXd se_correlation(const Grid& grid, const SeKernelParams& se) {
  SeKernelParams unit = se;
  unit.magnitude_sq = 1.0;
  return se_gram(grid, unit);
}

MatrixXd se_gram(const Grid& grid, const SeKernelParams& se) {
  check_grid_params(grid, se);
  const Index n = grid.size();
  MatrixXd k(n, n);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j <= i; ++j) k(i, j) = k(j, i) = se_cov(grid.coords[i], grid.coords[j], se);
  return k;
}

MatrixXd FieldCovariance::dense() const {
  const Index m = smooth.rows();
  MatrixXd out = MatrixXd::Zero(m + 1, m + 1);
  out.topLeftCorner(m, m) = smooth;
  out(m, m) = noise;
  return out;
}

FieldCovariance init_field_cov(const Grid& grid, const FieldKernel& kernel) {
  validate(kernel.wv);
  const MatrixXd corr = se_correlation(grid, kernel.se);
  const Eigen::Matrix2d p0 = wv_discrete(kernel.wv.zeta0, kernel.wv).process_noise;
  const Index n = grid.size();
  FieldCovariance out;
  out.smooth.resize(2 * n, 2 * n);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j) out.smooth.block<2, 2>(2 * i, 2 * j) = corr(i, j) * p0;
  out.noise = kernel.exp.magnitude_sq;
  return out;
}

FieldState propagate_field(const FieldState& state, const Grid& grid, const FieldKernel& kernel,
                           double delta_zeta) {
  const Index n = grid.size();
  const Index m = 2 * n + 1;
  if (state.mean.size() != m || state.cov.rows() != m || state.cov.cols() != m)
    throw InvalidArgument("field state size does not match grid");
  const WvDiscrete wv = wv_discrete(delta_zeta, kernel.wv);
  const ExpDiscrete ex = exp_discrete(delta_zeta, kernel.exp);

  MatrixXd a = MatrixXd::Zero(m, m);
  for (Index i = 0; i < n; ++i) a.block<2, 2>(2 * i, 2 * i) = wv.transition;
  a(m - 1, m - 1) = ex.transition;

  const MatrixXd corr = se_correlation(grid, kernel.se);
  MatrixXd q = MatrixXd::Zero(m, m);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j) q.block<2, 2>(2 * i, 2 * j) = corr(i, j) * wv.process_noise;
  q(m - 1, m - 1) = ex.process_noise;

  FieldState out;
  out.mean = a * state.mean;
  out.cov = a * state.cov * a.transpose() + q;
  out.cov = 0.5 * (out.cov + out.cov.transpose()).eval();
  return out;
}

void add_jitter(MatrixXd& m) {
  if (m.rows() == 0) return;
  const double mean_diag = m.diagonal().mean();
  const double j = 1e-10 * (mean_diag > 0.0 ? mean_diag : 1.0);
  m.diagonal().array() += j;
}

VectorXd regression_weights(const Grid& grid, const SeKernelParams& se, const OperatingPoint& x_star,
                            const VectorXd& value_state_var) {
  const Index n = grid.size();
  if (value_state_var.size() != n) throw InvalidArgument("state variance length does not match grid");
  MatrixXd k = se_gram(grid, se);
  k.diagonal() += value_state_var;
  add_jitter(k);
  VectorXd ks(n);
  for (Index j = 0; j < n; ++j) ks(j) = se_cov(x_star, grid.coords[j], se);
  Eigen::LLT<MatrixXd> llt(k);
  if (llt.info() != Eigen::Success) throw NumericalError("regression weights: Gram matrix not positive definite");
  return llt.solve(ks);
}

FieldPredictor::FieldPredictor(const Grid& grid, const SeKernelParams& se) : grid_(grid), se_(se) {
  validate(se);
  check_grid_params(grid, se);
  k_uu_ = se_gram(grid, se);
  if (se.gamma_z) {
    const Index nz = static_cast<Index>(grid.z_axis.size());
    pair_decay_.resize(nz, nz);
    for (Index a = 0; a < nz; ++a)
      for (Index b = 0; b < nz; ++b) {
        const double d = grid.z_axis[a] - grid.z_axis[b];
        pair_decay_(a, b) = std::exp(-0.25 * *se.gamma_z * d * d);
      }
  }
}

FieldPredictor::Factor FieldPredictor::factor(const VectorXd& value_var) const {
  if (value_var.size() != grid_.size()) throw InvalidArgument("field state does not match grid");
  MatrixXd kk = k_uu_;
  kk.diagonal() += value_var.cwiseMax(0.0);
  add_jitter(kk);
  Factor llt(kk);
  if (llt.info() != Eigen::Success) throw NumericalError("field prediction: Gram matrix not positive definite");
  return llt;
}

UncertainPrediction FieldPredictor::predict(double mu_z, double var_z, std::optional<double> current,
                                            const VectorXd& values, const VectorXd& value_var) const {
  if (grid_.inputs == FieldInputs::kNone) return predict(Factor(), mu_z, var_z, current, values);
  return predict(factor(value_var), mu_z, var_z, current, values);
}

UncertainPrediction FieldPredictor::predict(const Factor& llt, double mu_z, double var_z,
                                            std::optional<double> current, const VectorXd& values) const {
  if (!(var_z >= 0.0)) throw InvalidArgument("SOC variance must be non-negative");
  const Index n = grid_.size();
  if (values.size() != n) throw InvalidArgument("field state does not match grid");

  UncertainPrediction out;
  if (grid_.inputs == FieldInputs::kNone) {
    // The state is the function itself.
    out.smooth_mean = values(0);
    out.weights = VectorXd::Ones(1);
    return out;
  }
  if (se_.gamma_i.has_value() != current.has_value())
    throw InvalidArgument("current input required exactly when the field depends on I");
  if (llt.rows() != n) throw InvalidArgument("factor does not match grid");

  const double s2 = se_.magnitude_sq;
  const double gz = *se_.gamma_z;

  VectorXd c(n), k(n), l(n), dl(n);
  const double spread = 1.0 + gz * var_z;
  const double l_scale = 1.0 / std::sqrt(spread);
  const double l_denom = 1.0 / gz + var_z;
  for (Index j = 0; j < n; ++j) {
    const OperatingPoint& u = grid_.coords[j];
    c(j) = i_factor(se_, current, u);
    const double d = mu_z - *u.z;
    k(j) = s2 * c(j) * std::exp(-0.5 * gz * d * d);
    l(j) = s2 * c(j) * l_scale * std::exp(-0.5 * d * d / l_denom);
    dl(j) = -l(j) * d / l_denom;
  }

  const VectorXd delta = llt.solve(values);
  out.weights = llt.solve(l);
  out.smooth_mean = l.dot(delta);
  out.dmean_dz = dl.dot(delta);

  const double gp_var = s2 - k.dot(llt.solve(k));
  double var = gp_var;
  if (var_z > 0.0) {
    // E[k(z,u_i) k(z,u_j)] over z ~ N(mu, var_z) factors as B Z B^T with B
    // mapping knots to their z-slot scaled by the exact current factor, so
    // the trace terms need only n_z solves.
    const Index nz = pair_decay_.rows();
    const double spread2 = 1.0 + 2.0 * gz * var_z;
    MatrixXd zpair(nz, nz);
    for (Index a = 0; a < nz; ++a)
      for (Index b = 0; b < nz; ++b) {
        const double mid = 0.5 * (grid_.z_axis[a] + grid_.z_axis[b]);
        const double d = mu_z - mid;
        zpair(a, b) = s2 * s2 * pair_decay_(a, b) / std::sqrt(spread2) * std::exp(-gz * d * d / spread2);
      }
    MatrixXd b = MatrixXd::Zero(n, nz);
    for (Index i = 0; i < n; ++i) b(i, grid_.z_slot[i]) = c(i);
    const MatrixXd kib = llt.solve(b);
    const double trace_l = zpair.cwiseProduct(b.transpose() * kib).sum();
    // Var_z of the mean as bd^T C bd with C = E[kk^T] - E[k]E[k]^T per z-slot.
    // Forming C by subtraction loses everything when bd is large, so each
    // entry is lz_a lz_b expm1(D_ab) with the log-ratio D_ab in closed form.
    const double x = gz * var_z;
    const double log_ratio0 = std::log1p(x) - 0.5 * std::log1p(2.0 * x);
    VectorXd lz(nz);
    for (Index a = 0; a < nz; ++a) {
      const double d = mu_z - grid_.z_axis[a];
      lz(a) = s2 * l_scale * std::exp(-0.5 * d * d / l_denom);
    }
    MatrixXd cz(nz, nz);
    for (Index a = 0; a < nz; ++a)
      for (Index b2 = 0; b2 < nz; ++b2) {
        const double gap = grid_.z_axis[a] - grid_.z_axis[b2];
        const double d = mu_z - 0.5 * (grid_.z_axis[a] + grid_.z_axis[b2]);
        const double dlog = x * (-0.25 * gz * gap * gap / spread + gz * d * d / (spread * spread2)) + log_ratio0;
        cz(a, b2) = lz(a) * lz(b2) * std::expm1(dlog);
      }
    const VectorXd bd = b.transpose() * delta;
    var = s2 - trace_l + bd.dot(cz * bd);
  }
  out.smooth_var = std::max(var, 0.0);
  return out;
}

UncertainPrediction predict_uncertain_input(const Grid& grid, const SeKernelParams& se, double mu_z,
                                            double var_z, std::optional<double> current,
                                            const FieldState& state) {
  const Index n = grid.size();
  if (state.mean.size() != 2 * n + 1) throw InvalidArgument("field state size does not match grid");
  VectorXd values(n), vars(n);
  for (Index j = 0; j < n; ++j) {
    values(j) = state.mean(2 * j);
    vars(j) = state.cov(2 * j, 2 * j);
  }
  FieldPredictor pred(grid, se);
  UncertainPrediction out = pred.predict(mu_z, var_z, current, values, vars);
  out.noise_mean = state.mean(2 * n);
  out.noise_var = std::max(state.cov(2 * n, 2 * n), 0.0);
  return out;
}

namespace {

MatrixXd batch_system(const BatchGp& b) {
  if (b.x.size() != b.y.size()) throw InvalidArgument("batch GP: |X| != |y|");
  const Index n = static_cast<Index>(b.x.size());
  MatrixXd k(n, n);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j <= i; ++j) k(i, j) = k(j, i) = b.kernel(b.x[i], b.x[j]);
  k.diagonal().array() += b.noise_sq;
  if (b.noise_sq == 0.0) add_jitter(k);
  return k;
}

}  // namespace

BatchPrediction batch_gp_posterior(const BatchGp& b, double x_star) {
  const double kss = b.kernel(x_star, x_star);
  if (b.x.empty()) return {0.0, kss};
  const MatrixXd k = batch_system(b);
  Eigen::LLT<MatrixXd> llt(k);
  if (llt.info() != Eigen::Success) throw NumericalError("batch GP: system not positive definite");
  const Index n = k.rows();
  VectorXd ks(n);
  for (Index i = 0; i < n; ++i) ks(i) = b.kernel(x_star, b.x[i]);
  const VectorXd y = Eigen::Map<const VectorXd>(b.y.data(), n);
  return {ks.dot(llt.solve(y)), kss - ks.dot(llt.solve(ks))};
}

double batch_nlml(const BatchGp& b) {
  if (b.x.empty()) return 0.0;
  const MatrixXd k = batch_system(b);
  Eigen::LLT<MatrixXd> llt(k);
  if (llt.info() != Eigen::Success) throw NumericalError("batch GP: system not positive definite");
  const Index n = k.rows();
  const VectorXd y = Eigen::Map<const VectorXd>(b.y.data(), n);
  const double quad = y.dot(llt.solve(y));
  const double logdet = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
  return 0.5 * quad + 0.5 * logdet + 0.5 * static_cast<double>(n) * std::log(2.0 * std::numbers::pi);
}

}  // namespace gpecm
