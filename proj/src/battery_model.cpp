#include "gpecm/battery_model.hpp"

#include <cmath>

#include "csv.hpp"
#include "gpecm/error.hpp"

namespace gpecm {

OcvCurve OcvCurve::polynomial(std::vector<double> coeffs_ascending) {
  if (coeffs_ascending.empty()) throw InvalidArgument("OCV polynomial needs coefficients");
  OcvCurve c;
  c.coeffs_ = std::move(coeffs_ascending);
  for (int k = 0; k <= 200; ++k) {
    if (!(c.slope(k / 200.0) > 0.0)) throw InvalidArgument("OCV polynomial must be increasing on [0, 1]");
  }
  return c;
}

OcvCurve OcvCurve::table(std::vector<double> z, std::vector<double> volts) {
  for (size_t k = 1; k < volts.size(); ++k)
    if (!(volts[k] > volts[k - 1])) throw InvalidArgument("OCV table must be strictly increasing");
  OcvCurve c;
  c.z_min_ = z.front();
  c.z_max_ = z.back();
  c.table_ = Pchip(std::move(z), std::move(volts));
  return c;
}

OcvCurve OcvCurve::load_csv(const std::string& path) {
  const csv::Table t = csv::read(path);
  if (t.header.size() != 2) throw DataError(path + ": OCV table must have two columns (z, volts)");
  std::vector<double> z, v;
  for (const auto& row : t.rows) {
    z.push_back(row[0]);
    v.push_back(row[1]);
  }
  try {
    return table(std::move(z), std::move(v));
  } catch (const InvalidArgument& e) {
    throw DataError(path + ": " + e.what());
  }
}

double OcvCurve::value(double z) const {
  if (!coeffs_.empty()) {
    double acc = 0.0;
    for (auto it = coeffs_.rbegin(); it != coeffs_.rend(); ++it) acc = acc * z + *it;
    return acc;
  }
  return table_(z);
}

double OcvCurve::slope(double z) const {
  if (!coeffs_.empty()) {
    double acc = 0.0;
    for (size_t k = coeffs_.size() - 1; k >= 1; --k) acc = acc * z + static_cast<double>(k) * coeffs_[k];
    return acc;
  }
  return table_.derivative(z);
}

OcvCurve::Inverse OcvCurve::inverse(double volts) const {
  const double v_lo = value(z_min_);
  const double v_hi = value(z_max_);
  if (volts <= v_lo) return {z_min_, volts < v_lo};
  if (volts >= v_hi) return {z_max_, volts > v_hi};
  double lo = z_min_, hi = z_max_;
  double z = lo + (hi - lo) * (volts - v_lo) / (v_hi - v_lo);
  // Safeguarded Newton: fall back to bisection whenever the step leaves the bracket.
  for (int it = 0; it < 200; ++it) {
    const double f = value(z) - volts;
    if (f > 0.0) hi = z;
    else lo = z;
    const double d = slope(z);
    double next = d > 0.0 ? z - f / d : 0.5 * (lo + hi);
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (std::abs(next - z) < 1e-15 || hi - lo < 1e-15) {
      z = next;
      break;
    }
    z = next;
  }
  return {z, false};
}

ParamEstimate affine(double c_f, const ParamEstimate& gp) {
  return {c_f * (1.0 + gp.mean), c_f * c_f * gp.variance};
}

namespace {

// (1 - exp(-a dt)) / a, continuous at a = 0.
double rc_gain(double alpha, double dt) {
  if (std::abs(alpha * dt) < 1e-12) return dt;
  return -std::expm1(-alpha * dt) / alpha;
}

}  // namespace

StepOutcome step_dynamics(const BatteryState& s, double i_app, double t_amb, double dt,
                          const EcmParamSnapshot& p, const ThermalParams& th) {
  if (!(dt > 0.0)) throw InvalidArgument("step_dynamics: dt must be positive");
  StepOutcome out;
  out.next.z = s.z + i_app * dt * p.q_inv.mean / 3600.0;

  const double alpha = p.alpha.mean;
  if (alpha > 0.0) {
    out.next.v1 = std::exp(-alpha * dt) * s.v1 + p.beta.mean * rc_gain(alpha, dt) * i_app;
  } else {
    out.degenerate_alpha = true;
    out.next.v1 = s.v1 + p.beta.mean * i_app * dt;
  }

  const double heat = s.v1 * i_app + p.r0.mean * i_app * i_app;
  const double decay = std::exp(-dt / (th.r_c * th.c_c));
  out.next.tc = t_amb + heat * th.r_c + (s.tc - t_amb - heat * th.r_c) * decay;
  return out;
}

StepSensitivity step_sensitivity(const BatteryState& s, double i_app, double dt, const EcmParamSnapshot& p,
                                 const ThermalParams& th) {
  StepSensitivity d;
  d.dz_dqinv = i_app * dt / 3600.0;
  const double alpha = p.alpha.mean;
  if (alpha > 0.0) {
    const double e = std::exp(-alpha * dt);
    const double gain = rc_gain(alpha, dt);
    d.dv1_dv1 = e;
    d.dv1_dbeta = gain * i_app;
    // d/dalpha of (1 - e^{-a dt}) / a = (dt e^{-a dt} - gain) / a
    const double dgain = std::abs(alpha * dt) < 1e-12 ? -0.5 * dt * dt : (dt * e - gain) / alpha;
    d.dv1_dalpha = -dt * e * s.v1 + p.beta.mean * i_app * dgain;
  } else {
    d.dv1_dv1 = 1.0;
    d.dv1_dbeta = i_app * dt;
  }
  const double decay = std::exp(-dt / (th.r_c * th.c_c));
  d.dtc_dtc = decay;
  d.dtc_dv1 = i_app * th.r_c * (1.0 - decay);
  d.dtc_dr0 = i_app * i_app * th.r_c * (1.0 - decay);
  return d;
}

BatteryOutput output(const BatteryState& s, double i_app, const EcmParamSnapshot& p, const OcvCurve& ocv) {
  return {ocv.value(s.z) + s.v1 + p.r0.mean * i_app, s.tc};
}

EcmParamSnapshot ParamSet::snapshot() const {
  return {{q_inv.mean, q_inv.variance}, {alpha.mean, alpha.variance}, {beta.mean, beta.variance},
          {r0.mean, r0.variance}};
}

namespace {

void scatter(Eigen::MatrixXd& m, Eigen::Index row, double scale, const ParamLinearization& p) {
  if (scale == 0.0) return;
  m(row, kSocIndex) += scale * p.d_dz;
  for (const auto& [idx, v] : p.d_dstate) m(row, idx) += scale * v;
}

}  // namespace

Eigen::MatrixXd dynamics_jacobian(const BatteryState& s, double i_app, double dt, const ParamSet& p,
                                  const ThermalParams& th, Eigen::Index state_size) {
  const StepSensitivity d = step_sensitivity(s, i_app, dt, p.snapshot(), th);
  Eigen::MatrixXd g = Eigen::MatrixXd::Zero(kBatteryStates, state_size);
  g(kSocIndex, kSocIndex) = 1.0;
  scatter(g, kSocIndex, d.dz_dqinv, p.q_inv);
  g(kV1Index, kV1Index) = d.dv1_dv1;
  scatter(g, kV1Index, d.dv1_dalpha, p.alpha);
  scatter(g, kV1Index, d.dv1_dbeta, p.beta);
  g(kTempIndex, kTempIndex) = d.dtc_dtc;
  g(kTempIndex, kV1Index) += d.dtc_dv1;
  scatter(g, kTempIndex, d.dtc_dr0, p.r0);
  return g;
}

Eigen::MatrixXd observation_jacobian(const BatteryState& s, double i_app, const ParamSet& p,
                                     const OcvCurve& ocv, Eigen::Index state_size) {
  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(2, state_size);
  h(0, kSocIndex) = ocv.slope(s.z);
  h(0, kV1Index) = 1.0;
  scatter(h, 0, i_app, p.r0);
  h(1, kTempIndex) = 1.0;
  return h;
}

Linearization linearize(const BatteryState& s, double i_app, double dt, const ParamSet& p,
                        const ThermalParams& th, const OcvCurve& ocv, Eigen::Index state_size) {
  return {dynamics_jacobian(s, i_app, dt, p, th, state_size), observation_jacobian(s, i_app, p, ocv, state_size)};
}

LambdaTerms lambda_terms(const BatteryState& s, double i_app, double dt, double alpha_mean, double var_alpha,
                         double var_beta, double var_r0, const ThermalParams& th) {
  if (var_alpha < 0.0 || var_beta < 0.0 || var_r0 < 0.0)
    throw InvalidArgument("lambda_terms: variances must be non-negative");
  LambdaTerms out;
  const double gain = i_app * rc_gain(alpha_mean, dt);
  out.lambda_g(kV1Index, kV1Index) = var_beta * gain * gain + var_alpha * s.v1 * s.v1;
  const double tdecay = 1.0 - std::exp(-dt / (th.r_c * th.c_c));
  const double i2 = i_app * i_app;
  out.lambda_g(kTempIndex, kTempIndex) = var_r0 * i2 * i2 * tdecay * tdecay;
  out.lambda_h = var_r0 * i2;
  return out;
}

}  // namespace gpecm
