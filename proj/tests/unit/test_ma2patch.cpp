#include "test_util.hpp"
#include "tricue/errors.hpp"
#include "tricue/ma2patch.hpp"

#include <gtest/gtest.h>

#include <numeric>

using namespace tricue;

namespace {

FeatureBundle bundle_with(const RowMatrixF& patches, GridShape grid) {
  FeatureBundle b;
  b.image_id = "b";
  b.patches = patches;
  b.grid = grid;
  b.backbone_tag = "vit_b";
  b.input_resolution = 16 * grid.height;
  return b;
}

Ma2PatchModel random_model(Rng& rng, Index d, double reg = GaussianModel::kDefaultRegScale) {
  const RowMatrixD mix = RowMatrixD::Identity(d, d) + 0.3 * test::random_matrix(rng, d, d);
  return {GaussianModel::fit(test::random_matrix(rng, 4 * d + 8, d) * mix, reg)};
}

// Leave-one-out pooled mean rebuilt explicitly for each removed patch.
VectorD brute_contributions(const Ma2PatchModel& m, const RowMatrixF& p) {
  const Index n = p.rows();
  const VectorD g = p.cast<double>().colwise().mean().transpose();
  const double full = m.pooled_gaussian.mahalanobis(g);
  VectorD c(n);
  for (Index i = 0; i < n; ++i) {
    VectorD s = VectorD::Zero(p.cols());
    for (Index j = 0; j < n; ++j)
      if (j != i) s += p.row(j).cast<double>().transpose();
    c(i) = std::abs(full - m.pooled_gaussian.mahalanobis(s / static_cast<double>(n - 1)));
  }
  return c;
}

}  // namespace

TEST(MeanPool, SimpleCases) {
  RowMatrixF p(2, 2);
  p << 0, 0, 2, 4;
  EXPECT_EQ(mean_pool(p), (VectorD(2) << 1, 2).finished());
  const RowMatrixF same = RowMatrixF::Constant(7, 3, 0.25f);
  EXPECT_EQ(mean_pool(same), VectorD::Constant(3, 0.25));
  EXPECT_THROW(mean_pool(RowMatrixF(0, 3)), PreconditionError);
}

TEST(MeanPool, MatchesNaiveLoop) {
  Rng rng(1);
  const RowMatrixF p = test::random_matrix_f(rng, 625, 384);
  const VectorD g = mean_pool(p);
  for (Index j = 0; j < p.cols(); ++j) {
    double s = 0.0;
    for (Index i = 0; i < p.rows(); ++i) s += static_cast<double>(p(i, j));
    EXPECT_NEAR(g(j), s / 625.0, 1e-12);
  }
}

TEST(Ma2Patch, FitOnConstantBundles) {
  std::vector<FeatureBundle> corpus;
  VectorD mean_c = VectorD::Zero(2);
  for (int k = 0; k < 4; ++k) {
    RowMatrixF p = RowMatrixF::Constant(4, 2, static_cast<float>(k));
    p.col(1).setConstant(static_cast<float>(k * k));
    mean_c += p.row(0).cast<double>().transpose();
    corpus.push_back(bundle_with(p, {2, 2}));
  }
  const auto m = fit_ma2patch(corpus);
  EXPECT_LT((m.pooled_gaussian.mean() - mean_c / 4.0).norm(), 1e-12);
  EXPECT_THROW(fit_ma2patch(std::span(corpus).first(1)), FitError);
}

TEST(Ma2Patch, FittedMeanNearGenerator) {
  Rng rng(2);
  const Index d = 4;
  const VectorD mu = (VectorD(d) << 1, -2, 3, 0.5).finished();
  std::vector<FeatureBundle> corpus;
  for (int k = 0; k < 200; ++k) {
    RowMatrixF p = test::random_matrix_f(rng, 16, d);
    p.rowwise() += mu.cast<float>().transpose();
    corpus.push_back(bundle_with(p, {4, 4}));
  }
  const auto m = fit_ma2patch(corpus);
  const double se = 1.0 / std::sqrt(200.0 * 16.0);
  for (Index j = 0; j < d; ++j) EXPECT_NEAR(m.pooled_gaussian.mean()(j), mu(j), 3 * se);
}

TEST(Ma2Patch, ImageScore) {
  Rng rng(3);
  const auto m = random_model(rng, 6);
  RowMatrixF p = test::random_matrix_f(rng, 16, 6);
  p.rowwise() -= p.colwise().mean();
  p.rowwise() += m.pooled_gaussian.mean().cast<float>().transpose();
  EXPECT_NEAR(score_image_attr(m, bundle_with(p, {4, 4})), 0.0, 1e-5);

  const RowMatrixF q = test::random_matrix_f(rng, 16, 6, 0.3);
  const double base = score_image_attr(m, bundle_with(q, {4, 4}));
  RowMatrixF q2 = q;
  q2.row(5) += RowMatrixF::Constant(1, 6, 10.f);
  EXPECT_GT(score_image_attr(m, bundle_with(q2, {4, 4})), base);
}

TEST(Ma2Patch, DistanceIsHomogeneous) {
  // Zero-mean model, eps = 0: scaling every patch scales the distance.
  Rng rng(4);
  RowMatrixD X = test::random_matrix(rng, 50, 3);
  X.rowwise() -= X.colwise().mean();
  const Ma2PatchModel m{GaussianModel::fit(X, 0.0)};
  const RowMatrixF p = test::random_matrix_f(rng, 9, 3);
  const double d1 = score_image_attr(m, bundle_with(p, {3, 3}));
  const double d3 = score_image_attr(m, bundle_with((p * 3.0f).eval(), {3, 3}));
  EXPECT_NEAR(d3, 3.0 * d1, 1e-5 * d3);
}

TEST(Ma2Patch, AblatedRowsMatchDefinition) {
  Rng rng(5);
  const RowMatrixF p = test::random_matrix_f(rng, 20, 7);
  const VectorD g = mean_pool(p);
  const RowMatrixD G = ablated_pooled(p, g);
  for (Index i = 0; i < 20; ++i) {
    const VectorD want = (20.0 * g - p.row(i).cast<double>().transpose()) / 19.0;
    EXPECT_LT((G.row(i).transpose() - want).cwiseAbs().maxCoeff(), 1e-13);
  }
}

TEST(Ma2Patch, ClosedFormMatchesBruteForce) {
  Rng rng(6);
  for (int t = 0; t < 20; ++t) {
    const Index n = 2 + static_cast<Index>(rng.index(63));
    const Index d = 1 + static_cast<Index>(rng.index(32));
    const auto m = random_model(rng, d);
    const RowMatrixF p = test::random_matrix_f(rng, n, d);
    const VectorD c = attribute(m, bundle_with(p, {1, static_cast<int>(n)}));
    EXPECT_LT((c - brute_contributions(m, p)).cwiseAbs().maxCoeff(), 1e-8);
  }
}

TEST(Ma2Patch, HandInstanceThreePatches) {
  RowMatrixD X(4, 2);
  X << 1, 0, -1, 0, 0, 2, 0, -2;
  const Ma2PatchModel m{GaussianModel::fit(X, 0.0)};
  RowMatrixF p(3, 2);
  p << 1, 1, 2, 0, -1, 3;
  const auto det = attribute_detailed(m, bundle_with(p, {1, 3}));
  EXPECT_LT((det.contributions - brute_contributions(m, p)).cwiseAbs().maxCoeff(), 1e-10);
  for (Index i = 0; i < 3; ++i) {
    EXPECT_NEAR(det.signed_delta(i), det.full_distance - det.ablated_distances(i), 1e-15);
    EXPECT_NEAR(det.contributions(i), std::abs(det.signed_delta(i)), 1e-15);
  }
}

TEST(Ma2Patch, IdenticalPatchesGiveZeroAttribution) {
  Rng rng(7);
  const auto m = random_model(rng, 5);
  const RowMatrixF p = test::random_matrix_f(rng, 1, 5).replicate(12, 1);
  const VectorD c = attribute(m, bundle_with(p, {3, 4}));
  EXPECT_LT(c.cwiseAbs().maxCoeff(), 1e-10);
}

TEST(Ma2Patch, InjectedOutlierHasLargestContribution) {
  Rng rng(8);
  const Index d = 8;
  std::vector<FeatureBundle> corpus;
  for (int k = 0; k < 100; ++k) corpus.push_back(bundle_with(test::random_matrix_f(rng, 16, d), {4, 4}));
  const auto m = fit_ma2patch(corpus);
  for (int t = 0; t < 10; ++t) {
    RowMatrixF p = test::random_matrix_f(rng, 16, d);
    const Index hot = static_cast<Index>(rng.index(16));
    p.row(hot).array() += 10.f;
    const VectorD c = attribute(m, bundle_with(p, {4, 4}));
    Index arg = 0;
    c.maxCoeff(&arg);
    EXPECT_EQ(arg, hot);
  }
}

TEST(Ma2Patch, PermutationEquivariance) {
  Rng rng(9);
  const auto m = random_model(rng, 6);
  const RowMatrixF p = test::random_matrix_f(rng, 12, 6);
  std::vector<Index> perm(12);
  std::iota(perm.begin(), perm.end(), 0);
  for (Index i = 11; i > 0; --i) std::swap(perm[static_cast<std::size_t>(i)], perm[rng.index(static_cast<std::uint64_t>(i + 1))]);
  RowMatrixF q(12, 6);
  for (Index i = 0; i < 12; ++i) q.row(i) = p.row(perm[static_cast<std::size_t>(i)]);
  const VectorD cp = attribute(m, bundle_with(p, {3, 4}));
  const VectorD cq = attribute(m, bundle_with(q, {3, 4}));
  for (Index i = 0; i < 12; ++i) EXPECT_NEAR(cq(i), cp(perm[static_cast<std::size_t>(i)]), 1e-10);
}

TEST(Ma2Patch, Preconditions) {
  Rng rng(10);
  const auto m = random_model(rng, 3);
  EXPECT_THROW(attribute(m, bundle_with(test::random_matrix_f(rng, 1, 3), {1, 1})), PreconditionError);
  EXPECT_THROW(attribute(m, bundle_with(test::random_matrix_f(rng, 4, 5), {2, 2})), DimensionError);
}

TEST(Ma2Patch, LocalizationIsUnnormalized) {
  Rng rng(11);
  const auto m = random_model(rng, 4);
  RowMatrixF p = test::random_matrix_f(rng, 16, 4, 0.1);
  p.row(0).array() += 20.f;
  const auto map = localize_attr(m, bundle_with(p, {4, 4}), 32, 32, 1.0);
  EXPECT_FALSE(map.normalized);
  EXPECT_EQ(map.provenance, Provenance::attr);
  Index r = 0, c = 0;
  map.values.maxCoeff(&r, &c);
  EXPECT_LT(r, 16);
  EXPECT_LT(c, 16);

  const RowMatrixF flat = RowMatrixF::Constant(16, 4, 0.3f);
  const auto fm = localize_attr(m, bundle_with(flat, {4, 4}), 16, 16, 2.0);
  EXPECT_LT(fm.values.maxCoeff() - fm.values.minCoeff(), 1e-12);
}
