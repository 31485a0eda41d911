#pragma once

#include <optional>

#include <Eigen/Core>

namespace gpecm {

/// A point in the operating-condition input space. Absent coordinates mean the
/// kernel does not depend on that input.
struct OperatingPoint {
  std::optional<double> z;        ///< state of charge
  std::optional<double> current;  ///< applied current, A
};

/// Squared-exponential kernel over (z, I). The constant kernel is the special
/// case where neither inverse length scale is set.
struct SeKernelParams {
  double magnitude_sq = 1.0;
  std::optional<double> gamma_z;  ///< inverse squared length scale over z
  std::optional<double> gamma_i;  ///< inverse squared length scale over I
};

/// Wiener-velocity kernel over lifetime.
struct WvKernelParams {
  double magnitude_sq = 1.0;  ///< spectral density scale
  double zeta0 = 1.0;         ///< truncation offset, Ah
};

/// Exponential (Ornstein-Uhlenbeck) kernel over lifetime.
struct ExpKernelParams {
  double magnitude_sq = 1.0;
  double inv_lengthscale = 1.0;
};

struct WvDiscrete {
  Eigen::Matrix2d transition;
  Eigen::Matrix2d process_noise;
};

struct ExpDiscrete {
  double transition;
  double process_noise;
};

void validate(const SeKernelParams& p);
void validate(const WvKernelParams& p);
void validate(const ExpKernelParams& p);

/// sigma^2 exp(-1/2 sum gamma (x - x')^2). Throws InvalidArgument when the
/// inputs carry a different set of dimensions than the parameters.
double se_cov(const OperatingPoint& x, const OperatingPoint& x_prime, const SeKernelParams& p);

/// sigma^2 (min^3/3 + |a-b| min^2/2). Inputs must be non-negative.
double wv_cov(double zeta, double zeta_prime, const WvKernelParams& p);

double exp_cov(double zeta, double zeta_prime, const ExpKernelParams& p);

/// Exact discretisation of the Wiener-velocity SDE over a step. F is nilpotent
/// so the transition is [[1, d], [0, 1]] in closed form.
WvDiscrete wv_discrete(double delta_zeta, const WvKernelParams& p);

ExpDiscrete exp_discrete(double delta_zeta, const ExpKernelParams& p);

/// Offset zeta0 at which the Wiener-velocity variance equals sigma_x_sq:
/// sigma_zeta_sq * zeta0^3 / 3 = sigma_x_sq.
double solve_zeta0(double sigma_x_sq, double sigma_zeta_sq);

}  // namespace gpecm
