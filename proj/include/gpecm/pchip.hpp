#pragma once

#include <span>
#include <vector>

namespace gpecm {

/// Monotone piecewise-cubic Hermite interpolant (Fritsch-Carlson slopes with
/// the non-centred shape-preserving end conditions). Knots must be strictly
/// increasing. Evaluation outside the knot range extrapolates with the end
/// cubic.
class Pchip {
 public:
  Pchip() = default;
  Pchip(std::vector<double> x, std::vector<double> y);

  double operator()(double x) const;
  double derivative(double x) const;

  const std::vector<double>& knots() const { return x_; }
  const std::vector<double>& values() const { return y_; }
  bool empty() const { return x_.empty(); }

 private:
  size_t interval(double x) const;

  std::vector<double> x_;
  std::vector<double> y_;
  std::vector<double> d_;
};

/// Interpolates (x, y) onto the query points.
std::vector<double> pchip_interpolate(std::span<const double> x, std::span<const double> y,
                                      std::span<const double> xq);

}  // namespace gpecm
