#include "gpecm/optimizer.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "gpecm/error.hpp"

namespace gpecm {

using Eigen::VectorXd;

const char* stop_reason_name(StopReason r) {
  switch (r) {
    case StopReason::kGradient: return "gradient";
    case StopReason::kObjective: return "objective";
    case StopReason::kMaxIterations: return "max_iterations";
    case StopReason::kLineSearch: return "line_search";
    case StopReason::kNonFinite: return "non_finite";
  }
  return "?";
}

namespace {

class BoxedObjective {
 public:
  BoxedObjective(const Objective& f, const VectorXd& lo, const VectorXd& hi) : f_(f), lo_(lo), hi_(hi) {}

  double operator()(const VectorXd& x) {
    for (Eigen::Index i = 0; i < x.size(); ++i)
      if (!(x(i) >= lo_(i) && x(i) <= hi_(i))) throw std::logic_error("optimizer evaluated outside the box");
    ++count;
    return f_(x);
  }

  long count = 0;

 private:
  const Objective& f_;
  const VectorXd& lo_;
  const VectorXd& hi_;
};

VectorXd project(const VectorXd& x, const VectorXd& lo, const VectorXd& hi) { return x.cwiseMax(lo).cwiseMin(hi); }

}  // namespace

VectorXd fd_gradient(const Objective& f, const VectorXd& x, double fx, const VectorXd& lo, const VectorXd& hi,
                     double h, long* evaluations) {
  VectorXd g(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    VectorXd xp = x, xm = x;
    const bool up = x(i) + h <= hi(i);
    const bool down = x(i) - h >= lo(i);
    double fp = fx, fm = fx, span = 0.0;
    if (up && down) {
      xp(i) += h;
      xm(i) -= h;
      fp = f(xp);
      fm = f(xm);
      span = 2.0 * h;
      if (evaluations) *evaluations += 2;
    } else if (up) {
      xp(i) += h;
      fp = f(xp);
      span = h;
      if (evaluations) ++*evaluations;
    } else if (down) {
      xm(i) -= h;
      fm = f(xm);
      span = h;
      if (evaluations) ++*evaluations;
    } else {
      g(i) = 0.0;
      continue;
    }
    if (!std::isfinite(fp) || !std::isfinite(fm))
      throw NumericalError("objective not finite at a finite-difference stencil point");
    g(i) = (fp - fm) / span;
  }
  return g;
}

VectorXd fd_gradient_forward(const Objective& f, const VectorXd& x, double fx, double h) {
  VectorXd g(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    VectorXd xp = x;
    xp(i) += h;
    const double fp = f(xp);
    if (!std::isfinite(fp)) throw NumericalError("objective not finite at a finite-difference stencil point");
    g(i) = (fp - fx) / h;
  }
  return g;
}

OptimizerResult minimize_box(const Objective& objective, const VectorXd& x0, const VectorXd& lo, const VectorXd& hi,
                             const OptimizerOptions& opt, const std::function<void(const OptimizerTrace&)>& on_iter) {
  const Eigen::Index n = x0.size();
  if (lo.size() != n || hi.size() != n) throw InvalidArgument("bounds do not match the start point");
  for (Eigen::Index i = 0; i < n; ++i)
    if (!(lo(i) < hi(i))) throw InvalidArgument("lower bound must be below upper bound");

  BoxedObjective f(objective, lo, hi);
  Objective fn = [&f](const VectorXd& x) { return f(x); };
  OptimizerResult res;
  VectorXd x = project(x0, lo, hi);
  double fx = f(x);
  auto finish = [&](StopReason r, const VectorXd& g) {
    res.x = x;
    res.f = fx;
    res.gradient = g;
    res.reason = r;
    res.evaluations = f.count;
    return res;
  };
  if (!std::isfinite(fx)) return finish(StopReason::kNonFinite, VectorXd::Zero(n));

  VectorXd g = fd_gradient(fn, x, fx, lo, hi, opt.fd_step);
  Eigen::MatrixXd hinv = Eigen::MatrixXd::Identity(n, n);
  const double edge = 1e-12;

  for (int it = 1; it <= opt.max_iterations; ++it) {
    res.iterations = it;
    VectorXd pg = g;
    std::vector<bool> active(static_cast<size_t>(n), false);
    for (Eigen::Index i = 0; i < n; ++i) {
      if ((x(i) <= lo(i) + edge && g(i) > 0.0) || (x(i) >= hi(i) - edge && g(i) < 0.0)) {
        active[static_cast<size_t>(i)] = true;
        pg(i) = 0.0;
      }
    }
    if (pg.cwiseAbs().maxCoeff() < opt.g_inf_tol) return finish(StopReason::kGradient, g);

    VectorXd d = -(hinv * pg);
    for (Eigen::Index i = 0; i < n; ++i)
      if (active[static_cast<size_t>(i)]) d(i) = 0.0;
    if (!(d.dot(pg) < 0.0)) {
      hinv.setIdentity();
      d = -pg;
    }

    bool accepted = false;
    VectorXd x_new;
    double f_new = 0.0;
    for (int attempt = 0; attempt < 2 && !accepted; ++attempt) {
      double t = 1.0;
      for (int k = 0; k < 40; ++k, t *= 0.5) {
        x_new = project(x + t * d, lo, hi);
        if ((x_new - x).cwiseAbs().maxCoeff() < 1e-14) break;
        f_new = f(x_new);
        if (std::isfinite(f_new) && f_new <= fx + 1e-4 * g.dot(x_new - x)) {
          accepted = true;
          break;
        }
      }
      if (!accepted) {
        if (hinv.isIdentity()) break;
        hinv.setIdentity();
        d = -pg;
      }
    }
    if (!accepted) return finish(StopReason::kLineSearch, g);

    const VectorXd g_new = fd_gradient(fn, x_new, f_new, lo, hi, opt.fd_step);
    const VectorXd s = x_new - x;
    const VectorXd y = g_new - g;
    const double sy = s.dot(y);
    if (sy > 1e-12 * s.norm() * y.norm()) {
      const double rho = 1.0 / sy;
      const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(n, n);
      hinv = (eye - rho * s * y.transpose()) * hinv * (eye - rho * y * s.transpose()) + rho * s * s.transpose();
    }
    const double df = std::abs(fx - f_new);
    const double scale = std::abs(fx);
    x = x_new;
    fx = f_new;
    g = g_new;
    OptimizerTrace tr{it, fx, x};
    res.trace.push_back(tr);
    if (on_iter) on_iter(tr);
    if (df < opt.f_rel_tol * scale) return finish(StopReason::kObjective, g);
  }
  return finish(StopReason::kMaxIterations, g);
}

}  // namespace gpecm
