#include "gpecm/kernels.hpp"

#include <algorithm>
#include <cmath>

#include "gpecm/error.hpp"

namespace gpecm {

namespace {

bool positive_finite(double v) { return std::isfinite(v) && v > 0.0; }

}  // namespace

void validate(const SeKernelParams& p) {
  if (!positive_finite(p.magnitude_sq)) throw InvalidArgument("SE magnitude must be positive");
  if (p.gamma_z && !positive_finite(*p.gamma_z))
    throw InvalidArgument("SE inverse length scale over z must be positive");
  if (p.gamma_i && !positive_finite(*p.gamma_i))
    throw InvalidArgument("SE inverse length scale over I must be positive");
}

void validate(const WvKernelParams& p) {
  if (!positive_finite(p.magnitude_sq)) throw InvalidArgument("WV magnitude must be positive");
  if (!positive_finite(p.zeta0)) throw InvalidArgument("WV zeta0 must be positive");
}

void validate(const ExpKernelParams& p) {
  if (!positive_finite(p.magnitude_sq)) throw InvalidArgument("exponential magnitude must be positive");
  if (!positive_finite(p.inv_lengthscale))
    throw InvalidArgument("exponential inverse length scale must be positive");
}

double se_cov(const OperatingPoint& x, const OperatingPoint& x_prime, const SeKernelParams& p) {
  auto check = [](bool has_param, const std::optional<double>& a, const std::optional<double>& b,
                  const char* name) {
    if (has_param != a.has_value() || has_param != b.has_value())
      throw InvalidArgument(std::string("operating point dimension mismatch on input ") + name);
  };
  check(p.gamma_z.has_value(), x.z, x_prime.z, "z");
  check(p.gamma_i.has_value(), x.current, x_prime.current, "I");

  double r2 = 0.0;
  if (p.gamma_z) {
    const double d = *x.z - *x_prime.z;
    r2 += *p.gamma_z * d * d;
  }
  if (p.gamma_i) {
    const double d = *x.current - *x_prime.current;
    r2 += *p.gamma_i * d * d;
  }
  return p.magnitude_sq * std::exp(-0.5 * r2);
}

double wv_cov(double zeta, double zeta_prime, const WvKernelParams& p) {
  if (zeta < 0.0 || zeta_prime < 0.0) throw InvalidArgument("WV kernel inputs must be non-negative");
  const double m = std::min(zeta, zeta_prime);
  return p.magnitude_sq * (m * m * m / 3.0 + std::abs(zeta - zeta_prime) * m * m / 2.0);
}

double exp_cov(double zeta, double zeta_prime, const ExpKernelParams& p) {
  return p.magnitude_sq * std::exp(-p.inv_lengthscale * std::abs(zeta - zeta_prime));
}

WvDiscrete wv_discrete(double delta_zeta, const WvKernelParams& p) {
  if (!(delta_zeta >= 0.0)) throw InvalidArgument("WV step must be non-negative");
  const double d = delta_zeta;
  WvDiscrete out;
  out.transition << 1.0, d, 0.0, 1.0;
  const double s = p.magnitude_sq;
  out.process_noise << s * d * d * d / 3.0, s * d * d / 2.0, s * d * d / 2.0, s * d;
  return out;
}

ExpDiscrete exp_discrete(double delta_zeta, const ExpKernelParams& p) {
  if (!(delta_zeta >= 0.0)) throw InvalidArgument("exponential step must be non-negative");
  const double a = std::exp(-p.inv_lengthscale * delta_zeta);
  // 1 - exp(-2 gamma d) without cancellation for small steps
  const double q = -p.magnitude_sq * std::expm1(-2.0 * p.inv_lengthscale * delta_zeta);
  return {a, q};
}

double solve_zeta0(double sigma_x_sq, double sigma_zeta_sq) {
  if (!positive_finite(sigma_x_sq) || !positive_finite(sigma_zeta_sq))
    throw InvalidArgument("solve_zeta0 requires positive variances");
  return std::cbrt(3.0 * sigma_x_sq / sigma_zeta_sq);
}

}  // namespace gpecm
