#include "test_util.hpp"
#include "tricue/errors.hpp"
#include "tricue/grid_ops.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace tricue;

namespace {

// Direct 2-D convolution with an unnormalized-then-normalized kernel and
// mirrored borders; independent of the separable implementation.
RowMatrixD smooth_oracle(const RowMatrixD& src, double sigma) {
  const int radius = static_cast<int>(std::ceil(4.0 * sigma));
  const int h = static_cast<int>(src.rows()), w = static_cast<int>(src.cols());
  auto mirror = [](int i, int n) {
    while (i < 0 || i >= n) i = i < 0 ? -i - 1 : 2 * n - i - 1;
    return i;
  };
  double norm = 0.0;
  for (int dy = -radius; dy <= radius; ++dy)
    for (int dx = -radius; dx <= radius; ++dx) norm += std::exp(-(dx * dx + dy * dy) / (2 * sigma * sigma));
  RowMatrixD out(h, w);
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) {
      double acc = 0.0;
      for (int dy = -radius; dy <= radius; ++dy)
        for (int dx = -radius; dx <= radius; ++dx)
          acc += std::exp(-(dx * dx + dy * dy) / (2 * sigma * sigma)) * src(mirror(r + dy, h), mirror(c + dx, w));
      out(r, c) = acc / norm;
    }
  return out;
}

double bilinear_oracle(const RowMatrixD& src, int out_h, int out_w, int r, int c) {
  auto coord = [](int i, int in, int out) {
    return std::clamp((i + 0.5) * in / out - 0.5, 0.0, static_cast<double>(in - 1));
  };
  const double y = coord(r, static_cast<int>(src.rows()), out_h);
  const double x = coord(c, static_cast<int>(src.cols()), out_w);
  double acc = 0.0;
  for (Index i = 0; i < src.rows(); ++i)
    for (Index j = 0; j < src.cols(); ++j) {
      const double wy = std::max(0.0, 1.0 - std::abs(y - static_cast<double>(i)));
      const double wx = std::max(0.0, 1.0 - std::abs(x - static_cast<double>(j)));
      acc += wy * wx * src(i, j);
    }
  return acc;
}

}  // namespace

TEST(GridOps, ReshapeIsRowMajor) {
  const std::vector<double> cells{1, 2, 3, 4, 5, 6};
  const RowMatrixD m = reshape_grid(cells, {2, 3});
  EXPECT_EQ(m(0, 2), 3);
  EXPECT_EQ(m(1, 0), 4);
  EXPECT_THROW(reshape_grid(cells, {2, 2}), DimensionError);
}

TEST(GridOps, BilinearMatchesTentOracle) {
  Rng rng(1);
  const RowMatrixD src = test::random_matrix(rng, 3, 5);
  for (auto [h, w] : {std::pair{7, 11}, std::pair{2, 3}, std::pair{12, 4}}) {
    const RowMatrixD out = resize_bilinear(src, h, w);
    for (int r = 0; r < h; ++r)
      for (int c = 0; c < w; ++c) EXPECT_NEAR(out(r, c), bilinear_oracle(src, h, w, r, c), 1e-12);
  }
}

TEST(GridOps, BilinearPreservesConstantsAndIdentity) {
  const RowMatrixD c = RowMatrixD::Constant(3, 4, 2.5);
  EXPECT_TRUE(resize_bilinear(c, 9, 17).isApproxToConstant(2.5, 1e-15));
  Rng rng(2);
  const RowMatrixD m = test::random_matrix(rng, 4, 4);
  EXPECT_EQ(resize_bilinear(m, 4, 4), m);
}

TEST(GridOps, KernelIsNormalizedAndSymmetric) {
  for (double s : {0.5, 1.0, 4.0}) {
    const auto k = gaussian_kernel(s);
    double sum = 0.0;
    for (double v : k) sum += v;
    EXPECT_NEAR(sum, 1.0, 1e-14);
    for (std::size_t i = 0; i < k.size(); ++i) EXPECT_DOUBLE_EQ(k[i], k[k.size() - 1 - i]);
  }
  EXPECT_EQ(gaussian_kernel(0.0), std::vector<double>{1.0});
}

TEST(GridOps, SmoothMatchesDirectConvolution) {
  Rng rng(3);
  const RowMatrixD src = test::random_matrix(rng, 9, 13);
  for (double s : {0.7, 1.5, 4.0}) {
    const RowMatrixD a = gaussian_smooth(src, s);
    const RowMatrixD b = smooth_oracle(src, s);
    EXPECT_LT((a - b).cwiseAbs().maxCoeff(), 1e-12) << "sigma " << s;
  }
}

TEST(GridOps, SmoothPreservesMassAndConstants) {
  Rng rng(4);
  EXPECT_TRUE(gaussian_smooth(RowMatrixD::Constant(6, 6, -1.0), 2.0).isApproxToConstant(-1.0, 1e-14));
  const RowMatrixD m = test::random_matrix(rng, 5, 5);
  EXPECT_EQ(gaussian_smooth(m, 0.0), m);
  EXPECT_EQ(gaussian_smooth(m, -1.0), m);
}

TEST(GridOps, LargerSigmaNeverRaisesMaximum) {
  Rng rng(5);
  for (int t = 0; t < 20; ++t) {
    const RowMatrixD m = test::random_matrix(rng, 16, 16).cwiseAbs();
    double prev = m.maxCoeff();
    for (double s : {0.5, 1.0, 2.0, 4.0, 8.0}) {
      const double cur = gaussian_smooth(m, s).maxCoeff();
      EXPECT_LE(cur, prev + 1e-12);
      prev = cur;
    }
  }
}

TEST(GridOps, RenderPeakFollowsHotCell) {
  const std::vector<double> cells{0, 0, 0, 1};
  const AnomalyMap m = render_map(cells, {2, 2}, 4, 4, 0.0, Provenance::obj);
  EXPECT_EQ(m.provenance, Provenance::obj);
  const double peak = m.max();
  EXPECT_DOUBLE_EQ(peak, 1.0);
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) {
      if (r >= 2 && c >= 2) {
        EXPECT_GT(m.values(r, c), m.values(0, 0));
      } else {
        EXPECT_LT(m.values(r, c), peak);
      }
    }
  EXPECT_DOUBLE_EQ(m.values(3, 3), 1.0);
}

TEST(GridOps, RenderPermutationConsistency) {
  // Cells laid out in row-major order must land at (i / w, i % w).
  Rng rng(6);
  std::vector<double> cells(12);
  for (auto& v : cells) v = rng.uniform();
  const RowMatrixD g = render_map(cells, {3, 4}, 3, 4, 0.0, Provenance::pc).values;
  for (int i = 0; i < 12; ++i) EXPECT_EQ(g(i / 4, i % 4), cells[static_cast<std::size_t>(i)]);
}
