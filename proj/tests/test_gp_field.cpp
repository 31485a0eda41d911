#include <cmath>
#include <random>

#include <Eigen/Eigenvalues>
#include <gtest/gtest.h>

#include "checks.hpp"
#include "gpecm/gp_field.hpp"

using namespace gpecm;

TEST(Grid, SocCurrentIsZMajor) {
  const Grid g = Grid::soc_current(0.0, 1.0, 3, -1.0, 1.0, 2);
  ASSERT_EQ(g.size(), 6);
  EXPECT_EQ(g.state_size(), 12);
  EXPECT_DOUBLE_EQ(*g.coords[0].z, 0.0);
  EXPECT_DOUBLE_EQ(*g.coords[0].current, -1.0);
  EXPECT_DOUBLE_EQ(*g.coords[1].z, 0.0);
  EXPECT_DOUBLE_EQ(*g.coords[1].current, 1.0);
  EXPECT_DOUBLE_EQ(*g.coords[2].z, 0.5);
  EXPECT_EQ(g.z_slot[5], 2);
  EXPECT_EQ(Grid::constant().size(), 1);
}

TEST(GpField, GramIsMagnitudeTimesCorrelation) {
  const Grid g = Grid::soc_current(0.1, 0.9, 4, -3.0, 3.0, 3);
  SeKernelParams se;
  se.magnitude_sq = 0.7;
  se.gamma_z = 9.0;
  se.gamma_i = 0.3;
  const MatrixXd c = se_correlation(g, se);
  EXPECT_LE((c.diagonal().array() - 1.0).abs().maxCoeff(), 1e-15);
  EXPECT_LE((se_gram(g, se) - 0.7 * c).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(GpField, InitialCovarianceIsPsdWithTargetDiagonal) {
  const Grid g = Grid::soc(0.0, 1.0, 6);
  SeKernelParams se;
  se.magnitude_sq = 0.09;
  se.gamma_z = 4.0;
  const FieldKernel k = make_field_kernel(se, 1e-4, {2e-3, 0.05});
  const FieldCovariance c = init_field_cov(g, k);
  for (Index j = 0; j < g.size(); ++j) EXPECT_NEAR(c.smooth(2 * j, 2 * j), 0.09, 1e-12);
  EXPECT_NEAR(c.noise, 2e-3, 1e-18);
  const MatrixXd d = c.dense();
  ASSERT_EQ(d.rows(), 13);
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(d);
  EXPECT_GE(es.eigenvalues().minCoeff(), -1e-12 * d.trace());
}

TEST(GpField, BolVarianceMatchesMagnitudeAfterReassignment) {
  EXPECT_LE(checks::bol_variance_error(40, 11), 1e-10);
}

TEST(GpField, PropagationMatchesKernelMarginals) {
  const Grid g = Grid::constant();
  SeKernelParams se;
  se.magnitude_sq = 0.2;
  const FieldKernel k = make_field_kernel(se, 3e-3, {0.01, 0.1});
  const FieldCovariance c0 = init_field_cov(g, k);
  FieldState s{VectorXd::Zero(3), c0.dense()};
  const double delta = 12.0;
  const FieldState p = propagate_field(s, g, k, delta);
  const double z0 = k.wv.zeta0;
  EXPECT_NEAR(p.cov(0, 0), wv_cov(z0 + delta, z0 + delta, k.wv), 1e-12);
  EXPECT_NEAR(p.cov(2, 2), 0.01, 1e-15);
}

TEST(GpField, BatchAndRecursiveAgree) {
  for (int n : {3, 10, 50}) {
    const auto r = checks::batch_equivalence(n, 900 + n);
    EXPECT_LE(r.mean_rel, 1e-6) << "n=" << n;
    EXPECT_LE(r.var_rel, 1e-6) << "n=" << n;
    EXPECT_LE(r.phi_rel, 1e-6) << "n=" << n;
  }
}

TEST(GpField, UncertainInputReducesToPlainPrediction) {
  const auto r = checks::uncertain_input_exact(1000, 3);
  EXPECT_LE(r.mean_abs, 1e-10);
  EXPECT_LE(r.var_abs, 1e-10);
}

TEST(GpField, UncertainInputMatchesQuadrature) {
  const auto r = checks::uncertain_input_quadrature(200, 33);
  EXPECT_LE(r.mean_rel, 1e-6);
  EXPECT_LE(r.var_rel, 1e-6);
}

TEST(GpField, SocDerivativeMatchesFiniteDifference) {
  const Grid g = Grid::soc_current(0.2, 0.9, 5, -4.0, 4.0, 4);
  SeKernelParams se;
  se.magnitude_sq = 0.5;
  se.gamma_z = 12.0;
  se.gamma_i = 0.2;
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n01(0.0, 1.0);
  VectorXd v(g.size()), var(g.size());
  for (Index j = 0; j < g.size(); ++j) {
    v(j) = n01(rng);
    var(j) = 0.01 + 0.1 * std::abs(n01(rng));
  }
  const FieldPredictor pred(g, se);
  for (double vz : {0.0, 1e-3}) {
    const double mu = 0.47, h = 1e-6;
    const UncertainPrediction p = pred.predict(mu, vz, 1.5, v, var);
    const double fd =
        (pred.predict(mu + h, vz, 1.5, v, var).smooth_mean - pred.predict(mu - h, vz, 1.5, v, var).smooth_mean) /
        (2 * h);
    EXPECT_NEAR(p.dmean_dz, fd, 1e-6 * std::max(1.0, std::abs(fd)));
    // The mean is linear in the knot values with the reported weights.
    EXPECT_NEAR(p.weights.dot(v), p.smooth_mean, 1e-12);
  }
}

TEST(GpField, RegressionWeightsInterpolateAtKnots) {
  const Grid g = Grid::soc(0.0, 1.0, 5);
  SeKernelParams se;
  se.gamma_z = 10.0;
  const VectorXd w = regression_weights(g, se, g.coords[2], VectorXd::Zero(5));
  EXPECT_NEAR(w(2), 1.0, 1e-6);
  EXPECT_NEAR(w.cwiseAbs().sum(), 1.0, 1e-5);
}

TEST(GpField, ConstantFieldPredictionIsTheState) {
  const Grid g = Grid::constant();
  FieldState s{VectorXd::Zero(3), MatrixXd::Identity(3, 3)};
  s.mean << 0.3, -0.1, 0.05;
  const UncertainPrediction p = predict_uncertain_input(g, SeKernelParams{}, 0.5, 0.01, std::nullopt, s);
  EXPECT_DOUBLE_EQ(p.smooth_mean, 0.3);
  EXPECT_DOUBLE_EQ(p.noise_mean, 0.05);
  EXPECT_DOUBLE_EQ(p.mean(), 0.35);
}
