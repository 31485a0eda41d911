#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "gpecm/battery_model.hpp"
#include "gpecm/gp_field.hpp"
#include "gpecm/segment.hpp"

namespace gpecm {

/// Circuit parameter fields in joint-state order.
enum class FieldId : int { kQInv = 0, kAlpha = 1, kBeta = 2, kR0 = 3 };

const char* field_name(FieldId f);

struct FieldSpec {
  std::string name;
  Grid grid;
  FieldKernel kernel;
  double prior_mean = 1.0;  ///< c_f of the affine transform
};

/// The linear GP subsystem: each field's interleaved smooth states
/// concatenated in order, followed by one exponential noise state per field.
class GpSystem {
 public:
  GpSystem() = default;
  explicit GpSystem(std::vector<FieldSpec> fields);

  Index size() const { return size_; }
  Index field_count() const { return static_cast<Index>(fields_.size()); }
  const FieldSpec& field(Index f) const { return fields_[static_cast<size_t>(f)]; }
  const std::vector<FieldSpec>& fields() const { return fields_; }

  /// Offsets relative to the start of the GP block.
  Index smooth_offset(Index f) const { return smooth_offset_[static_cast<size_t>(f)]; }
  Index noise_index(Index f) const { return smooth_size_ + f; }

  VectorXd initial_mean() const;
  MatrixXd initial_cov() const;
  MatrixXd transition(double delta_zeta) const;
  MatrixXd process_noise(double delta_zeta) const;

 private:
  std::vector<FieldSpec> fields_;
  std::vector<Index> smooth_offset_;
  std::vector<MatrixXd> correlation_;
  Index smooth_size_ = 0;
  Index size_ = 0;
};

/// Mean and full covariance of [battery | GP]. The battery block is empty in
/// the direct-observation configuration.
struct JointState {
  VectorXd mean;
  MatrixXd cov;
  Index battery_size = kBatteryStates;

  Index gp_offset() const { return battery_size; }
  Index gp_size() const { return mean.size() - battery_size; }
  BatteryState battery() const;
};

/// Running health measures of the joint covariance.
struct CovarianceHealth {
  double max_asymmetry = 0.0;     ///< max ||P - P^T||_inf / ||P||_inf before re-symmetrisation
  double min_diag_ratio = 1.0;    ///< min diag(P) / trace(P)
  long long steps = 0;
  long long alpha_floor_hits = 0;
  long long q_inv_floor_hits = 0;
  long long soc_clamps = 0;

  void merge(const CovarianceHealth& other);
};

struct FilterCheckpoint {
  double zeta = 0.0;
  VectorXd pre_mean;   ///< GP block after propagation, before the segment's updates
  MatrixXd pre_cov;
  VectorXd post_mean;  ///< GP block after the segment
  MatrixXd post_cov;
  MatrixXd transition;  ///< A(delta zeta) applied at segment start
  double delta_zeta = 0.0;
};

struct SegmentResult {
  std::vector<Eigen::Vector2d> residuals;
  std::vector<Eigen::Matrix2d> innovation_cov;
  std::vector<BatteryState> filtered;
  double phi = 0.0;
};

struct LifetimeResult {
  double phi_total = 0.0;
  std::vector<FilterCheckpoint> checkpoints;
  std::vector<SegmentResult> segments;
  CovarianceHealth health;
};

/// Everything the joint filter needs besides data.
struct BatteryFilterModel {
  GpSystem gp;  ///< fields ordered q_inv, alpha, beta, r0
  OcvCurve ocv = OcvCurve::polynomial({3.64, 0.55, -0.72, 0.75});
  ThermalParams thermal;
  Eigen::Vector3d q_batt{1e-12, 1e-6, 1e-4};
  Eigen::Vector3d p_batt0{1e-4, 1e-6, 1e-2};
  double sigma_v = 0.005;  ///< voltage measurement noise std, V
  double sigma_t = 0.1;    ///< temperature measurement noise std, K
};

/// Joseph-form covariance update (I-KH) P (I-KH)^T + K R K^T, evaluated in its
/// expanded O(n^2 m) form. Valid for any gain K.
MatrixXd joseph_update(const MatrixXd& p, const MatrixXd& h, const MatrixXd& k, const MatrixXd& r);

struct StepOutput {
  Eigen::Vector2d residual;
  Eigen::Matrix2d s;
  double phi_increment = 0.0;
};

/// Extended Kalman filter over the joint battery/GP state.
class JointEkf {
 public:
  explicit JointEkf(BatteryFilterModel model);

  const BatteryFilterModel& model() const { return model_; }

  /// Battery block from the resting voltage and ambient temperature; GP block
  /// at its beginning-of-life prior; block-diagonal covariance.
  JointState init_joint(double v_rest, double t_amb) const;

  /// Re-initialises the battery block, propagates the GP block by delta_zeta
  /// and zeroes the battery/GP cross-covariance.
  void begin_segment(JointState& state, double delta_zeta, double v_rest, double t_amb) const;

  /// Circuit parameters and their linearisation at the current estimate.
  ParamSet evaluate_params(const JointState& state, double current) const;

  /// One propagate+update cycle. The state is propagated with the previous
  /// sample's current over dt, then updated with the observation. With
  /// propagate=false only the update runs.
  StepOutput step(JointState& state, double i_prev, double t_amb_prev, double dt, double i_now, double v_obs,
                  double temp_obs, bool propagate = true);

  SegmentResult run_segment(JointState& state, const CycleSegment& seg);

  const CovarianceHealth& health() const { return health_; }
  void reset_health() { health_ = CovarianceHealth{}; }

 private:
  std::vector<FieldPredictor::Factor> factors(const JointState& state) const;
  ParamSet evaluate_params(const JointState& state, double current,
                           const std::vector<FieldPredictor::Factor>& factors) const;
  ParamLinearization linearize_field(const JointState& state, FieldId f, double current, bool floor,
                                     const FieldPredictor::Factor& factor) const;

  BatteryFilterModel model_;
  std::vector<FieldPredictor> predictors_;
  CovarianceHealth health_;
};

/// Runs the filter over the ordered segments of one cell.
LifetimeResult run_lifetime(std::span<const CycleSegment> segments, const BatteryFilterModel& model);

/// Scalar observation of a single field's value (smooth + noise channel) at a
/// lifetime coordinate. Used for pure-GP regression over lifetime.
struct DirectObservation {
  double zeta;
  double y;
};

/// Pure-GP configuration: no battery states, one field, observations
/// y = f(zeta) + eps with eps ~ N(0, noise_sq). Each observation is a segment.
LifetimeResult run_lifetime_direct(std::span<const DirectObservation> obs, const GpSystem& gp, double noise_sq);

/// Posterior estimate of one circuit parameter in physical units.
struct ParameterEstimate {
  double smooth_mean = 0.0;
  double smooth_sd = 0.0;
  double noise_mean = 0.0;
  double noise_sd = 0.0;
  double mean = 0.0;
  double sd = 0.0;
};

struct ParameterQuery {
  FieldId field;
  double z = 0.5;
  double current = 0.0;
};

/// RTS-smoothed GP block over lifetime, queryable at any (z, I, zeta).
class SmoothedPosterior {
 public:
  SmoothedPosterior() = default;
  SmoothedPosterior(GpSystem gp, std::vector<FilterCheckpoint> checkpoints, std::vector<VectorXd> means,
                    std::vector<MatrixXd> covs);

  const GpSystem& gp() const { return gp_; }
  const std::vector<FilterCheckpoint>& checkpoints() const { return checkpoints_; }
  const std::vector<VectorXd>& means() const { return means_; }
  const std::vector<MatrixXd>& covs() const { return covs_; }
  size_t size() const { return means_.size(); }
  double first_zeta() const { return checkpoints_.front().zeta; }
  double last_zeta() const { return checkpoints_.back().zeta; }

  /// GP block conditioned on all data at an arbitrary lifetime coordinate:
  /// exact insertion between checkpoints, linear-Gaussian extrapolation past
  /// the last one.
  FieldState state_at(double zeta) const;

  /// Parameter estimate from a GP block via noise-free interpolation of the
  /// knot value states.
  ParameterEstimate query(const FieldState& block, const ParameterQuery& q) const;
  ParameterEstimate query(double zeta, const ParameterQuery& q) const { return query(state_at(zeta), q); }

 private:
  GpSystem gp_;
  std::vector<FilterCheckpoint> checkpoints_;
  std::vector<VectorXd> means_;
  std::vector<MatrixXd> covs_;
};

/// Fixed-interval RTS smoother over the checkpoints of the GP subsystem.
SmoothedPosterior rts_smooth(const GpSystem& gp, const std::vector<FilterCheckpoint>& checkpoints);

/// Extrapolates the smoothed posterior to zeta_star >= last checkpoint and
/// evaluates the queries there.
std::vector<ParameterEstimate> forecast(const SmoothedPosterior& smoothed, double zeta_star,
                                        std::span<const ParameterQuery> queries);

/// Pseudo-inverse of a symmetric PSD matrix (eigenvalues below 1e-12 of the
/// largest are dropped).
MatrixXd psd_pinv(const MatrixXd& m);

}  // namespace gpecm
