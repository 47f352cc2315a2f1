#include "test_util.hpp"
#include "tricue/errors.hpp"
#include "tricue/gaussian.hpp"

#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <cmath>

using namespace tricue;
using tricue::test::TempDir;

namespace {

// Naive two-pass covariance with explicit loops.
Eigen::MatrixXd covariance_oracle(const RowMatrixD& X) {
  const Index k = X.rows(), d = X.cols();
  std::vector<double> mean(static_cast<std::size_t>(d), 0.0);
  for (Index i = 0; i < k; ++i)
    for (Index j = 0; j < d; ++j) mean[static_cast<std::size_t>(j)] += X(i, j);
  for (auto& m : mean) m /= static_cast<double>(k);
  Eigen::MatrixXd c = Eigen::MatrixXd::Zero(d, d);
  for (Index a = 0; a < d; ++a)
    for (Index b = 0; b < d; ++b) {
      double s = 0.0;
      for (Index i = 0; i < k; ++i)
        s += (X(i, a) - mean[static_cast<std::size_t>(a)]) * (X(i, b) - mean[static_cast<std::size_t>(b)]);
      c(a, b) = s / static_cast<double>(k - 1);
    }
  return c;
}

double explicit_inverse_distance(const GaussianModel& g, const VectorD& x) {
  Eigen::MatrixXd m = g.covariance();
  m.diagonal().array() += g.reg_epsilon();
  const VectorD diff = x - g.mean();
  return std::sqrt(diff.dot(m.inverse() * diff));
}

// Well-conditioned samples: standard normal mixed by a random matrix near identity.
RowMatrixD correlated_samples(Rng& rng, Index k, Index d) {
  RowMatrixD mix = RowMatrixD::Identity(d, d) + 0.3 * test::random_matrix(rng, d, d);
  return test::random_matrix(rng, k, d) * mix + RowMatrixD::Constant(k, d, 2.0);
}

}  // namespace

TEST(Gaussian, TwoPointHandExample) {
  RowMatrixD X(2, 2);
  X << 0, 0, 2, 0;
  const auto g = GaussianModel::fit(X);
  EXPECT_EQ(g.mean(), VectorD((VectorD(2) << 1, 0).finished()));
  Eigen::MatrixXd expected(2, 2);
  expected << 2, 0, 0, 0;
  EXPECT_EQ(g.covariance(), expected);
  EXPECT_DOUBLE_EQ(g.reg_epsilon(), 1e-3 * 2.0 / 2.0);
  EXPECT_EQ(g.sample_count(), 2);
}

TEST(Gaussian, IdenticalSamplesNeedRegularization) {
  RowMatrixD X = RowMatrixD::Constant(5, 3, 1.5);
  const auto g = GaussianModel::fit(X);
  EXPECT_TRUE(g.covariance().isZero(0.0));
  EXPECT_GT(g.reg_epsilon(), 0.0);
  EXPECT_EQ(g.mahalanobis(g.mean()), 0.0);
  EXPECT_THROW(GaussianModel::fit(X, 0.0), FitError);
  try {
    GaussianModel::fit(X, 0.0);
  } catch (const FitError& e) {
    EXPECT_NE(std::string(e.what()).find("eps"), std::string::npos);
  }
}

TEST(Gaussian, CovarianceMatchesTwoPassOracle) {
  Rng rng(7);
  const RowMatrixD X = test::random_matrix(rng, 100, 8, 3.0) + RowMatrixD::Constant(100, 8, 1e3);
  const auto g = GaussianModel::fit(X);
  EXPECT_LT((g.covariance() - covariance_oracle(X)).cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_TRUE(g.covariance().isApprox(g.covariance().transpose(), 0.0));
}

TEST(Gaussian, DistanceAtMeanIsZero) {
  Rng rng(8);
  const auto g = GaussianModel::fit(correlated_samples(rng, 40, 6));
  EXPECT_EQ(g.mahalanobis(g.mean()), 0.0);
  const RowMatrixD rows = g.mean().transpose().replicate(4, 1);
  EXPECT_TRUE(g.mahalanobis_batch(rows).isZero(0.0));
}

TEST(Gaussian, IdentityMetricIsEuclidean) {
  // Four points at +/- e_i sqrt(3/2): covariance = I exactly; eps = 0.
  RowMatrixD X = RowMatrixD::Zero(4, 2);
  const double a = std::sqrt(1.5);
  X << a, 0, -a, 0, 0, a, 0, -a;
  const auto g = GaussianModel::fit(X, 0.0);
  ASSERT_TRUE(g.covariance().isApprox(Eigen::MatrixXd::Identity(2, 2), 1e-15));
  const VectorD x = (VectorD(2) << 3.0, -4.0).finished();
  EXPECT_NEAR(g.mahalanobis(x), 5.0, 1e-12);
}

TEST(Gaussian, MatchesExplicitInverseOracle) {
  Rng rng(9);
  for (int t = 0; t < 20; ++t) {
    const auto g = GaussianModel::fit(correlated_samples(rng, 50, 8));
    for (int q = 0; q < 5; ++q) {
      const VectorD x = test::random_matrix(rng, 8, 1, 2.0).col(0);
      const double want = explicit_inverse_distance(g, x);
      EXPECT_NEAR(g.mahalanobis(x), want, 1e-8 * want);
    }
  }
}

TEST(Gaussian, BatchEqualsScalarExactly) {
  Rng rng(10);
  const auto g = GaussianModel::fit(correlated_samples(rng, 60, 12));
  const RowMatrixD Q = test::random_matrix(rng, 50, 12);
  const VectorD batch = g.mahalanobis_batch(Q);
  for (Index i = 0; i < Q.rows(); ++i) EXPECT_EQ(batch(i), g.mahalanobis(Q.row(i).transpose()));
  const VectorD one = g.mahalanobis_batch(Q.topRows(1));
  EXPECT_EQ(one(0), g.mahalanobis(Q.row(0).transpose()));
}

TEST(Gaussian, DistancesAreNonnegative) {
  Rng rng(11);
  const auto g = GaussianModel::fit(test::random_matrix(rng, 5, 20));  // rank-deficient, regularized
  const VectorD d = g.mahalanobis_batch(test::random_matrix(rng, 100, 20));
  EXPECT_GE(d.minCoeff(), 0.0);
}

TEST(Gaussian, AffineEquivariance) {
  Rng rng(12);
  for (int t = 0; t < 10; ++t) {
    const Index d = 5;
    const RowMatrixD X = correlated_samples(rng, 80, d);
    Eigen::MatrixXd A = Eigen::MatrixXd::Identity(d, d) + 0.5 * test::random_matrix(rng, d, d);
    const VectorD b = test::random_matrix(rng, d, 1, 10.0).col(0);
    const RowMatrixD Y = (X * A.transpose()).rowwise() + b.transpose();
    const auto gx = GaussianModel::fit(X, 0.0);
    const auto gy = GaussianModel::fit(Y, 0.0);
    const VectorD x = test::random_matrix(rng, d, 1, 2.0).col(0);
    const double want = gx.mahalanobis(x);
    EXPECT_NEAR(gy.mahalanobis(A * x + b), want, 1e-6 * want);
  }
}

TEST(Gaussian, Preconditions) {
  Rng rng(13);
  EXPECT_THROW(GaussianModel::fit(test::random_matrix(rng, 1, 3)), FitError);
  RowMatrixD bad = test::random_matrix(rng, 4, 3);
  bad(2, 1) = std::nan("");
  EXPECT_THROW(GaussianModel::fit(bad), FitError);
  const auto g = GaussianModel::fit(test::random_matrix(rng, 4, 3));
  EXPECT_THROW((void)g.mahalanobis(VectorD::Zero(4)), DimensionError);
  EXPECT_THROW((void)g.mahalanobis_batch(RowMatrixD::Zero(2, 2)), DimensionError);
}

TEST(Gaussian, SaveLoadRoundTrip) {
  TempDir dir("gauss");
  Rng rng(14);
  const auto g = GaussianModel::fit(correlated_samples(rng, 30, 4));
  g.save(dir / "g");
  const auto h = GaussianModel::load(dir / "g");
  EXPECT_EQ(h.mean(), g.mean());
  EXPECT_EQ(h.covariance(), g.covariance());
  EXPECT_EQ(h.reg_epsilon(), g.reg_epsilon());
  EXPECT_EQ(h.sample_count(), g.sample_count());
  const VectorD x = test::random_matrix(rng, 4, 1).col(0);
  EXPECT_EQ(h.mahalanobis(x), g.mahalanobis(x));
}

TEST(Gaussian, FloatInputMatchesDouble) {
  Rng rng(15);
  const RowMatrixF Xf = test::random_matrix_f(rng, 20, 3);
  const RowMatrixD Xd = Xf.cast<double>();
  const auto a = GaussianModel::fit(Xf);
  const auto b = GaussianModel::fit(Xd);
  EXPECT_EQ(a.mean(), b.mean());
  EXPECT_EQ(a.covariance(), b.covariance());
}
