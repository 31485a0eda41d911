#include "gpecm/pchip.hpp"

#include <algorithm>
#include <cmath>

#include "gpecm/error.hpp"

namespace gpecm {

namespace {

double end_slope(double h0, double h1, double del0, double del1) {
  double d = ((2.0 * h0 + h1) * del0 - h0 * del1) / (h0 + h1);
  if (d * del0 <= 0.0) {
    d = 0.0;
  } else if (del0 * del1 < 0.0 && std::abs(d) > std::abs(3.0 * del0)) {
    d = 3.0 * del0;
  }
  return d;
}

}  // namespace

Pchip::Pchip(std::vector<double> x, std::vector<double> y) : x_(std::move(x)), y_(std::move(y)) {
  const size_t n = x_.size();
  if (n != y_.size()) throw InvalidArgument("pchip: x and y lengths differ");
  if (n < 2) throw InvalidArgument("pchip: need at least two knots");
  for (size_t k = 1; k < n; ++k)
    if (!(x_[k] > x_[k - 1])) throw InvalidArgument("pchip: knots must be strictly increasing");

  std::vector<double> h(n - 1), del(n - 1);
  for (size_t k = 0; k + 1 < n; ++k) {
    h[k] = x_[k + 1] - x_[k];
    del[k] = (y_[k + 1] - y_[k]) / h[k];
  }
  d_.assign(n, 0.0);
  if (n == 2) {
    d_[0] = d_[1] = del[0];
    return;
  }
  for (size_t k = 1; k + 1 < n; ++k) {
    if (del[k - 1] * del[k] > 0.0) {
      const double w1 = 2.0 * h[k] + h[k - 1];
      const double w2 = h[k] + 2.0 * h[k - 1];
      d_[k] = (w1 + w2) / (w1 / del[k - 1] + w2 / del[k]);
    }
  }
  d_[0] = end_slope(h[0], h[1], del[0], del[1]);
  d_[n - 1] = end_slope(h[n - 2], h[n - 3], del[n - 2], del[n - 3]);
}

size_t Pchip::interval(double x) const {
  auto it = std::upper_bound(x_.begin(), x_.end(), x);
  size_t k = it == x_.begin() ? 0 : static_cast<size_t>(it - x_.begin()) - 1;
  return std::min(k, x_.size() - 2);
}

double Pchip::operator()(double x) const {
  const size_t k = interval(x);
  const double h = x_[k + 1] - x_[k];
  const double t = (x - x_[k]) / h;
  const double t2 = t * t, t3 = t2 * t;
  const double h00 = 2 * t3 - 3 * t2 + 1;
  const double h10 = t3 - 2 * t2 + t;
  const double h01 = -2 * t3 + 3 * t2;
  const double h11 = t3 - t2;
  return h00 * y_[k] + h10 * h * d_[k] + h01 * y_[k + 1] + h11 * h * d_[k + 1];
}

double Pchip::derivative(double x) const {
  const size_t k = interval(x);
  const double h = x_[k + 1] - x_[k];
  const double t = (x - x_[k]) / h;
  const double t2 = t * t;
  const double dh00 = (6 * t2 - 6 * t) / h;
  const double dh10 = 3 * t2 - 4 * t + 1;
  const double dh01 = (-6 * t2 + 6 * t) / h;
  const double dh11 = 3 * t2 - 2 * t;
  return dh00 * y_[k] + dh10 * d_[k] + dh01 * y_[k + 1] + dh11 * d_[k + 1];
}

std::vector<double> pchip_interpolate(std::span<const double> x, std::span<const double> y,
                                      std::span<const double> xq) {
  Pchip p(std::vector<double>(x.begin(), x.end()), std::vector<double>(y.begin(), y.end()));
  std::vector<double> out(xq.size());
  std::transform(xq.begin(), xq.end(), out.begin(), [&](double v) { return p(v); });
  return out;
}

}  // namespace gpecm
