#pragma once

#include <functional>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace gpecm {

struct OptimizerOptions {
  int max_iterations = 500;
  double f_rel_tol = 1e-6;   ///< stop when |df| < tol * |f|
  double g_inf_tol = 1e-4;   ///< stop when the projected gradient inf-norm falls below
  double fd_step = 1e-4;     ///< finite-difference step in the optimisation variables
};

enum class StopReason { kGradient, kObjective, kMaxIterations, kLineSearch, kNonFinite };

const char* stop_reason_name(StopReason r);

struct OptimizerTrace {
  int iteration;
  double f;
  Eigen::VectorXd x;
};

struct OptimizerResult {
  Eigen::VectorXd x;
  double f = 0.0;
  Eigen::VectorXd gradient;
  int iterations = 0;
  long evaluations = 0;
  StopReason reason = StopReason::kMaxIterations;
  std::vector<OptimizerTrace> trace;
};

using Objective = std::function<double(const Eigen::VectorXd&)>;

/// Gradient by central differences, one-sided where a bound is within the
/// step. Throws NumericalError when a stencil value is not finite.
Eigen::VectorXd fd_gradient(const Objective& f, const Eigen::VectorXd& x, double fx, const Eigen::VectorXd& lower,
                            const Eigen::VectorXd& upper, double step, long* evaluations = nullptr);

/// Forward-difference gradient (cross-check stencil).
Eigen::VectorXd fd_gradient_forward(const Objective& f, const Eigen::VectorXd& x, double fx, double step);

/// Box-constrained quasi-Newton minimisation: BFGS on the free variables with
/// an active set at the bounds and projected Armijo backtracking. The
/// objective is never evaluated outside [lower, upper].
OptimizerResult minimize_box(const Objective& f, const Eigen::VectorXd& x0, const Eigen::VectorXd& lower,
                             const Eigen::VectorXd& upper, const OptimizerOptions& options = {},
                             const std::function<void(const OptimizerTrace&)>& on_iteration = {});

}  // namespace gpecm
