#pragma once

#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "gpecm/pchip.hpp"

namespace gpecm {

/// Electro-thermal battery states: SOC, RC-pair voltage, lumped cell temperature.
struct BatteryState {
  double z = 0.0;
  double v1 = 0.0;
  double tc = 0.0;
};

inline constexpr Eigen::Index kSocIndex = 0;
inline constexpr Eigen::Index kV1Index = 1;
inline constexpr Eigen::Index kTempIndex = 2;
inline constexpr Eigen::Index kBatteryStates = 3;

struct ParamEstimate {
  double mean = 0.0;
  double variance = 0.0;
};

/// Circuit parameters at one operating point. q_inv in 1/Ah, alpha in 1/s,
/// beta in 1/F, r0 in ohm.
struct EcmParamSnapshot {
  ParamEstimate q_inv;
  ParamEstimate alpha;
  ParamEstimate beta;
  ParamEstimate r0;
};

struct ThermalParams {
  double r_c = 5.5;   ///< K/W
  double c_c = 15.7;  ///< J/K
};

/// Open-circuit voltage V0(z), either a polynomial (ascending coefficients) or
/// a monotone PCHIP table. Must be strictly increasing over its domain.
class OcvCurve {
 public:
  static OcvCurve polynomial(std::vector<double> coeffs_ascending);
  static OcvCurve table(std::vector<double> z, std::vector<double> volts);
  /// Two-column CSV (z, volts) with a header row.
  static OcvCurve load_csv(const std::string& path);

  double value(double z) const;
  double slope(double z) const;

  struct Inverse {
    double z;
    bool clamped;  ///< voltage was outside [V0(z_min), V0(z_max)]
  };
  Inverse inverse(double volts) const;

  double z_min() const { return z_min_; }
  double z_max() const { return z_max_; }
  bool is_polynomial() const { return !coeffs_.empty(); }
  const std::vector<double>& coefficients() const { return coeffs_; }
  const Pchip& tabulated() const { return table_; }

 private:
  std::vector<double> coeffs_;
  Pchip table_;
  double z_min_ = 0.0;
  double z_max_ = 1.0;
};

/// c_f (1 + gp): mean c_f (1 + mu), variance c_f^2 sigma^2.
ParamEstimate affine(double c_f, const ParamEstimate& gp);

struct StepOutcome {
  BatteryState next;
  bool degenerate_alpha = false;  ///< alpha <= 0, RC pair integrated by forward Euler
};

/// Exact zero-order-hold step of the battery dynamics over dt seconds with
/// the heat input held at its start-of-step value.
StepOutcome step_dynamics(const BatteryState& s, double i_app, double t_amb, double dt,
                          const EcmParamSnapshot& p, const ThermalParams& th);

/// Partial derivatives of step_dynamics w.r.t. the battery states and the
/// physical parameter means.
struct StepSensitivity {
  double dz_dqinv = 0.0;
  double dv1_dv1 = 0.0;
  double dv1_dalpha = 0.0;
  double dv1_dbeta = 0.0;
  double dtc_dtc = 0.0;
  double dtc_dv1 = 0.0;
  double dtc_dr0 = 0.0;
};

StepSensitivity step_sensitivity(const BatteryState& s, double i_app, double dt, const EcmParamSnapshot& p,
                                 const ThermalParams& th);

struct BatteryOutput {
  double v_terminal;
  double temperature;
};

/// V = V0(z) + v1 + r0 i, T = tc.
BatteryOutput output(const BatteryState& s, double i_app, const EcmParamSnapshot& p, const OcvCurve& ocv);

/// Dependence of one physical parameter on the joint state: its mean, its
/// derivative w.r.t. the SOC estimate, and sparse derivatives w.r.t. GP states.
struct ParamLinearization {
  double mean = 0.0;
  double variance = 0.0;
  double d_dz = 0.0;
  std::vector<std::pair<Eigen::Index, double>> d_dstate;
};

struct ParamSet {
  ParamLinearization q_inv;
  ParamLinearization alpha;
  ParamLinearization beta;
  ParamLinearization r0;

  EcmParamSnapshot snapshot() const;
};

/// Rows of the dynamics Jacobian for the battery states (3 x n). GP states
/// are frozen within a cycle, so their rows are identity and not returned.
Eigen::MatrixXd dynamics_jacobian(const BatteryState& s, double i_app, double dt, const ParamSet& p,
                                  const ThermalParams& th, Eigen::Index state_size);

/// Observation Jacobian (2 x n) for [V, T].
Eigen::MatrixXd observation_jacobian(const BatteryState& s, double i_app, const ParamSet& p,
                                     const OcvCurve& ocv, Eigen::Index state_size);

struct Linearization {
  Eigen::MatrixXd g;
  Eigen::MatrixXd h;
};

Linearization linearize(const BatteryState& s, double i_app, double dt, const ParamSet& p,
                        const ThermalParams& th, const OcvCurve& ocv, Eigen::Index state_size);

/// Extra variance from GP predictive uncertainty of the circuit parameters.
struct LambdaTerms {
  Eigen::Matrix3d lambda_g = Eigen::Matrix3d::Zero();
  double lambda_h = 0.0;  ///< on the voltage channel
};

/// Variances are in physical units (already scaled by c_f^2).
LambdaTerms lambda_terms(const BatteryState& s, double i_app, double dt, double alpha_mean, double var_alpha,
                         double var_beta, double var_r0, const ThermalParams& th);

}  // namespace gpecm
