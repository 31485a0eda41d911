#include <cmath>
#include <random>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <gtest/gtest.h>

#include "gpecm/error.hpp"
#include "gpecm/kernels.hpp"

using namespace gpecm;

namespace {

Eigen::Matrix2d wv_marginal(double zeta, double s2) {
  Eigen::Matrix2d p;
  p << zeta * zeta * zeta / 3.0, zeta * zeta / 2.0, zeta * zeta / 2.0, zeta;
  return s2 * p;
}

}  // namespace

TEST(Kernels, WienerVelocityHandValue) {
  // min = 2, |a-b| = 1: 2 * (8/3 + 4/2)
  EXPECT_NEAR(wv_cov(2.0, 3.0, {2.0, 1.0}), 2.0 * (8.0 / 3.0 + 2.0), 1e-14);
  EXPECT_NEAR(wv_cov(3.0, 2.0, {2.0, 1.0}), wv_cov(2.0, 3.0, {2.0, 1.0}), 1e-14);
  EXPECT_DOUBLE_EQ(wv_cov(0.0, 5.0, {1.0, 1.0}), 0.0);
}

TEST(Kernels, WienerVelocityGramIsPsd) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.0, 50.0);
  const int n = 40;
  std::vector<double> x(n);
  for (double& v : x) v = u(rng);
  Eigen::MatrixXd k(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) k(i, j) = wv_cov(x[i], x[j], {0.5, 1.0});
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(k);
  EXPECT_GE(es.eigenvalues().minCoeff(), -1e-10 * es.eigenvalues().maxCoeff());
}

TEST(Kernels, WienerVelocityDiscreteHandValue) {
  const WvDiscrete d = wv_discrete(2.0, {3.0, 1.0});
  EXPECT_DOUBLE_EQ(d.transition(0, 0), 1.0);
  EXPECT_DOUBLE_EQ(d.transition(0, 1), 2.0);
  EXPECT_DOUBLE_EQ(d.transition(1, 0), 0.0);
  EXPECT_DOUBLE_EQ(d.transition(1, 1), 1.0);
  // 3 * [[8/3, 2], [2, 2]]
  EXPECT_NEAR(d.process_noise(0, 0), 8.0, 1e-13);
  EXPECT_NEAR(d.process_noise(0, 1), 6.0, 1e-13);
  EXPECT_NEAR(d.process_noise(1, 0), 6.0, 1e-13);
  EXPECT_NEAR(d.process_noise(1, 1), 6.0, 1e-13);
}

TEST(Kernels, WienerVelocityDiscretisationReproducesMarginals) {
  for (double zeta : {0.1, 1.0, 7.5})
    for (double delta : {0.01, 0.5, 3.0, 20.0}) {
      const double s2 = 0.37;
      const WvDiscrete d = wv_discrete(delta, {s2, 1.0});
      const Eigen::Matrix2d next = d.transition * wv_marginal(zeta, s2) * d.transition.transpose() + d.process_noise;
      EXPECT_LE((next - wv_marginal(zeta + delta, s2)).cwiseAbs().maxCoeff(),
                1e-12 * wv_marginal(zeta + delta, s2).cwiseAbs().maxCoeff());
    }
}

TEST(Kernels, WienerVelocityMonteCarlo) {
  // Sample paths via the discrete steps; empirical moments against the kernel.
  const WvKernelParams p{0.2, 2.0};
  const std::vector<double> steps{0.5, 1.0, 2.5};
  std::mt19937_64 rng(7);
  std::normal_distribution<double> g(0.0, 1.0);
  const Eigen::Matrix2d l0 = wv_marginal(p.zeta0, p.magnitude_sq).llt().matrixL();
  std::vector<Eigen::Matrix2d> lq;
  for (double d : steps) lq.push_back(wv_discrete(d, p).process_noise.llt().matrixL());
  const int n = 40000;
  double s00 = 0, s0e = 0, see = 0;
  for (int k = 0; k < n; ++k) {
    Eigen::Vector2d x = l0 * Eigen::Vector2d(g(rng), g(rng));
    const double x0 = x(0);
    for (size_t s = 0; s < steps.size(); ++s)
      x = wv_discrete(steps[s], p).transition * x + lq[s] * Eigen::Vector2d(g(rng), g(rng));
    s00 += x0 * x0;
    s0e += x0 * x(0);
    see += x(0) * x(0);
  }
  const double end = p.zeta0 + 4.0;
  EXPECT_NEAR(s00 / n, wv_cov(p.zeta0, p.zeta0, p), 0.03 * wv_cov(p.zeta0, p.zeta0, p));
  EXPECT_NEAR(s0e / n, wv_cov(p.zeta0, end, p), 0.03 * wv_cov(p.zeta0, end, p));
  EXPECT_NEAR(see / n, wv_cov(end, end, p), 0.03 * wv_cov(end, end, p));
}

TEST(Kernels, ExponentialHandValues) {
  const ExpKernelParams p{0.8, 0.25};
  EXPECT_NEAR(exp_cov(1.0, 5.0, p), 0.8 * std::exp(-1.0), 1e-15);
  const ExpDiscrete d = exp_discrete(std::log(2.0) / 0.25, p);
  EXPECT_NEAR(d.transition, 0.5, 1e-15);
  EXPECT_NEAR(d.process_noise, 0.8 * 0.75, 1e-15);
}

TEST(Kernels, ExponentialStationaryUnderSteps) {
  const ExpKernelParams p{1.3, 0.07};
  double var = p.magnitude_sq;
  for (double d : {0.1, 3.0, 50.0}) {
    const ExpDiscrete e = exp_discrete(d, p);
    var = e.transition * e.transition * var + e.process_noise;
    EXPECT_NEAR(var, p.magnitude_sq, 1e-14);
  }
}

TEST(Kernels, SquaredExponentialHandValue) {
  SeKernelParams p;
  p.magnitude_sq = 2.0;
  p.gamma_z = 4.0;
  OperatingPoint a, b;
  a.z = 0.2;
  b.z = 0.7;
  EXPECT_NEAR(se_cov(a, b, p), 2.0 * std::exp(-0.5), 1e-15);
  p.gamma_i = 0.5;
  a.current = 1.0;
  b.current = -1.0;
  EXPECT_NEAR(se_cov(a, b, p), 2.0 * std::exp(-0.5 - 1.0), 1e-15);
}

TEST(Kernels, SquaredExponentialDimensionMismatchThrows) {
  SeKernelParams p;
  p.gamma_z = 1.0;
  OperatingPoint a, b;
  a.z = 0.5;
  EXPECT_THROW(se_cov(a, b, p), InvalidArgument);
  SeKernelParams c;
  EXPECT_DOUBLE_EQ(se_cov(OperatingPoint{}, OperatingPoint{}, c), 1.0);
}

TEST(Kernels, ZetaZeroSolve) {
  // 0.01 * z0^3 / 3 = 0.3
  EXPECT_NEAR(solve_zeta0(0.3, 0.01), std::cbrt(90.0), 1e-12);
  const double z0 = solve_zeta0(0.02, 5e-5);
  EXPECT_NEAR(wv_cov(z0, z0, {5e-5, z0}), 0.02, 1e-15);
}

TEST(Kernels, ValidationRejectsBadParameters) {
  EXPECT_THROW(validate(WvKernelParams{-1.0, 1.0}), InvalidArgument);
  EXPECT_THROW(validate(ExpKernelParams{1.0, 0.0}), InvalidArgument);
  SeKernelParams se;
  se.magnitude_sq = 0.0;
  EXPECT_THROW(validate(se), InvalidArgument);
  EXPECT_THROW(wv_cov(-1.0, 1.0, {1.0, 1.0}), InvalidArgument);
}
