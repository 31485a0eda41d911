#pragma once

#include <functional>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include "gpecm/kernels.hpp"

namespace gpecm {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

enum class FieldInputs { kNone, kSoc, kSocCurrent };

/// Discretisation knots of one parameter field.
///
/// For the (z, I) case the knots enumerate the Cartesian product z-major: all
/// current values for the first z, then all current values for the second z,
/// and so on. The field's smooth state interleaves (value, d/dzeta) per knot,
/// so knot j owns state entries 2j and 2j+1.
struct Grid {
  FieldInputs inputs = FieldInputs::kNone;
  std::vector<OperatingPoint> coords;
  std::vector<double> z_axis;      ///< distinct z values, ascending
  std::vector<double> i_axis;      ///< distinct current values, ascending
  std::vector<Index> z_slot;       ///< per knot: index into z_axis

  static Grid constant();
  static Grid soc(double z_lo, double z_hi, Index n);
  static Grid soc_current(double z_lo, double z_hi, Index n_z, double i_lo, double i_hi, Index n_i);

  Index size() const { return static_cast<Index>(coords.size()); }
  Index state_size() const { return 2 * size(); }
};

/// Hyperparameters for one field: k = k_WV(zeta) * k_SE(x) + k_E(zeta).
struct FieldKernel {
  SeKernelParams se;
  WvKernelParams wv;
  ExpKernelParams exp;
};

/// Builds a FieldKernel with zeta0 re-solved so the beginning-of-life prior
/// variance of every knot equals se.magnitude_sq.
FieldKernel make_field_kernel(const SeKernelParams& se, double wv_magnitude_sq, const ExpKernelParams& exp);

/// Unit-magnitude SE correlation between knots.
MatrixXd se_correlation(const Grid& grid, const SeKernelParams& se);
/// SE Gram matrix between knots (includes the magnitude).
MatrixXd se_gram(const Grid& grid, const SeKernelParams& se);

struct FieldCovariance {
  MatrixXd smooth;  ///< 2n x 2n, interleaved (value, derivative)
  double noise;     ///< exponential channel variance

  /// (2n+1) x (2n+1) direct sum with the noise channel last.
  MatrixXd dense() const;
};

/// Beginning-of-life covariance: C_se(U,U) kron P_WV(zeta0) plus the stationary
/// exponential variance. The Kronecker factor is the unit-magnitude SE
/// correlation; the magnitude enters through zeta0.
FieldCovariance init_field_cov(const Grid& grid, const FieldKernel& kernel);

/// Mean and covariance of a single field laid out as [smooth(2n) | noise].
struct FieldState {
  VectorXd mean;
  MatrixXd cov;
};

FieldState propagate_field(const FieldState& state, const Grid& grid, const FieldKernel& kernel,
                           double delta_zeta);

/// w = k(x*, U) (K_uu + diag(P))^-1.
VectorXd regression_weights(const Grid& grid, const SeKernelParams& se, const OperatingPoint& x_star,
                            const VectorXd& value_state_var);

struct UncertainPrediction {
  double smooth_mean = 0.0;
  double smooth_var = 0.0;
  double noise_mean = 0.0;
  double noise_var = 0.0;
  double dmean_dz = 0.0;  ///< derivative of smooth_mean w.r.t. the SOC mean
  VectorXd weights;       ///< derivative of smooth_mean w.r.t. the value states

  double mean() const { return smooth_mean + noise_mean; }
  double variance() const { return smooth_var + noise_var; }
};

/// Cached per-field quantities for repeated predictions under fixed
/// hyperparameters. Evaluates the GP prediction marginalised over a Gaussian
/// SOC input; the current input is treated as exactly known.
class FieldPredictor {
 public:
  FieldPredictor(const Grid& grid, const SeKernelParams& se);

  /// Cholesky factor of K_uu + diag(value_var) with jitter.
  using Factor = Eigen::LLT<MatrixXd>;
  Factor factor(const VectorXd& value_var) const;

  /// values and value_var are the knot value-state means and variances.
  UncertainPrediction predict(double mu_z, double var_z, std::optional<double> current,
                              const VectorXd& values, const VectorXd& value_var) const;
  /// Same, reusing a factor of the knot Gram matrix.
  UncertainPrediction predict(const Factor& k, double mu_z, double var_z, std::optional<double> current,
                              const VectorXd& values) const;

  const Grid& grid() const { return grid_; }
  const SeKernelParams& se() const { return se_; }

 private:
  Grid grid_;
  SeKernelParams se_;
  MatrixXd k_uu_;
  MatrixXd pair_decay_;  ///< exp(-gamma_z (z_a - z_b)^2 / 4) over z_axis pairs
};

/// Convenience wrapper: values/value_var taken from the interleaved field
/// state, the noise channel added on top.
UncertainPrediction predict_uncertain_input(const Grid& grid, const SeKernelParams& se, double mu_z,
                                            double var_z, std::optional<double> current,
                                            const FieldState& state);

/// Batch (dense) GP regression on scalar inputs. Used as the reference for the
/// recursive formulation.
struct BatchGp {
  std::vector<double> x;
  std::vector<double> y;
  std::function<double(double, double)> kernel;
  double noise_sq = 0.0;
};

struct BatchPrediction {
  double mean;
  double variance;
};

BatchPrediction batch_gp_posterior(const BatchGp& b, double x_star);
double batch_nlml(const BatchGp& b);

/// Adds 1e-10 * mean(diag) to the diagonal.
void add_jitter(MatrixXd& m);

}  // namespace gpecm
