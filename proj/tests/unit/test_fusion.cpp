#include "test_util.hpp"
#include "tricue/errors.hpp"
#include "tricue/fusion.hpp"

#include <gtest/gtest.h>

using namespace tricue;

namespace {

AnomalyMap map_of(const RowMatrixD& v, Provenance p = Provenance::obj) {
  AnomalyMap m;
  m.values = v;
  m.provenance = p;
  return m;
}

FusionConfig cfg_for(int h, int w, double sigma = 0.0) {
  FusionConfig c;
  c.out_h = h;
  c.out_w = w;
  c.final_sigma = sigma;
  return c;
}

RowMatrixD mat2(double a, double b, double c, double d) {
  RowMatrixD m(2, 2);
  m << a, b, c, d;
  return m;
}

}  // namespace

TEST(MinMax, LinearRescale) {
  RowMatrixD v(1, 3);
  v << 0, 5, 10;
  const auto n = minmax_normalize(map_of(v));
  EXPECT_TRUE(n.normalized);
  EXPECT_EQ(n.values(0, 0), 0.0);
  EXPECT_NEAR(n.values(0, 1), 0.5, 1e-9);
  EXPECT_NEAR(n.values(0, 2), 1.0, 1e-8);
  EXPECT_LT(n.values(0, 2), 1.0);
}

TEST(MinMax, ConstantMapGivesZeros) {
  const auto n = minmax_normalize(map_of(RowMatrixD::Constant(4, 5, 7.25)));
  EXPECT_TRUE(n.values.isZero(0.0));
}

TEST(MinMax, AffineInvariant) {
  Rng rng(1);
  for (int t = 0; t < 20; ++t) {
    const RowMatrixD v = test::random_matrix(rng, 6, 6);
    const double a = 0.1 + 10.0 * rng.uniform(), b = 5.0 * rng.normal();
    const RowMatrixD w = (a * v.array() + b).matrix();
    const auto nv = minmax_normalize(map_of(v));
    const auto nw = minmax_normalize(map_of(w));
    EXPECT_LT((nv.values - nw.values).cwiseAbs().maxCoeff(), 1e-6);
    EXPECT_GE(nv.values.minCoeff(), 0.0);
    EXPECT_LE(nv.values.maxCoeff(), 1.0);
  }
}

TEST(MinMax, RejectsNonFinite) {
  RowMatrixD v = RowMatrixD::Zero(2, 2);
  v(0, 1) = std::nan("");
  EXPECT_THROW(minmax_normalize(map_of(v)), InvariantError);
}

TEST(FusePixel, ZeroGateAnnihilates) {
  Rng rng(2);
  const auto attr = map_of(test::random_matrix(rng, 8, 8).cwiseAbs(), Provenance::attr);
  const auto pc = map_of(test::random_matrix(rng, 4, 4), Provenance::pc);
  const auto zero = map_of(RowMatrixD::Zero(6, 6));
  EXPECT_TRUE(fuse_pixel(zero, attr, pc, cfg_for(16, 16)).values.isZero(0.0));
  EXPECT_LE(fuse_pixel(zero, attr, pc, cfg_for(16, 16, 4.0)).values.cwiseAbs().maxCoeff(), 1e-12);
  const auto zero_attr = map_of(RowMatrixD::Zero(3, 3), Provenance::attr);
  EXPECT_TRUE(fuse_pixel(pc, zero_attr, pc, cfg_for(16, 16)).values.isZero(0.0));
}

TEST(FusePixel, ConstantGatesCarryNoConsensus) {
  Rng rng(3);
  const auto attr = map_of(test::random_matrix(rng, 8, 8).cwiseAbs(), Provenance::attr);
  const auto high = map_of(RowMatrixD::Constant(8, 8, 3.0));
  EXPECT_TRUE(fuse_pixel(high, attr, high, cfg_for(8, 8, 2.0)).values.isZero(0.0));
}

TEST(FusePixel, HandProduct) {
  const auto obj = map_of(mat2(0, 1, 2, 4));
  const auto pc = map_of(mat2(10, 20, 30, 50), Provenance::pc);
  const auto attr = map_of(mat2(0.5, 2, 3, 1), Provenance::attr);
  const auto f = fuse_pixel(obj, attr, pc, cfg_for(2, 2));
  const double e = 1e-8;
  const RowMatrixD no = mat2(0, 1 / (4 + e), 2 / (4 + e), 4 / (4 + e));
  const RowMatrixD np = mat2(0, 10 / (40 + e), 20 / (40 + e), 40 / (40 + e));
  const RowMatrixD want = no.cwiseProduct(np).cwiseProduct(attr.values);
  EXPECT_LT((f.values - want).cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_EQ(f.provenance, Provenance::fused);
  EXPECT_FALSE(f.normalized);
}

TEST(FusePixel, SingleModesMatchPipeline) {
  Rng rng(4);
  const auto obj = map_of(test::random_matrix(rng, 4, 4));
  const auto attr = map_of(test::random_matrix(rng, 4, 4).cwiseAbs(), Provenance::attr);
  const auto pc = map_of(test::random_matrix(rng, 4, 4), Provenance::pc);
  const auto cfg = cfg_for(4, 4);
  EXPECT_EQ(fuse_maps(PixelMode::attr, nullptr, &attr, nullptr, cfg).values, attr.values);
  EXPECT_EQ(fuse_maps(PixelMode::obj, &obj, nullptr, nullptr, cfg).values, minmax_normalize(obj).values);
  const auto op = fuse_maps(PixelMode::obj_pc, &obj, nullptr, &pc, cfg);
  EXPECT_LT((op.values - minmax_normalize(obj).values.cwiseProduct(minmax_normalize(pc).values)).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_THROW(fuse_maps(PixelMode::full, &obj, nullptr, &pc, cfg), PreconditionError);
}

TEST(FusePixel, MonotoneInEachInput) {
  // Inputs already in [0, 1] with a pinned min and max so normalization is the identity.
  Rng rng(5);
  for (int t = 0; t < 20; ++t) {
    auto unit = [&] {
      RowMatrixD m = (test::random_matrix(rng, 5, 5).array().abs() / 4.0).min(1.0).matrix();
      m(0, 0) = 0.0;
      m(4, 4) = 1.0;
      return m;
    };
    const RowMatrixD o = unit(), a = unit(), p = unit();
    const auto cfg = cfg_for(5, 5);
    const auto base = fuse_pixel(map_of(o), map_of(a), map_of(p), cfg);
    const int r = 1 + static_cast<int>(rng.index(3)), c = 1 + static_cast<int>(rng.index(3));
    for (int which = 0; which < 3; ++which) {
      RowMatrixD o2 = o, a2 = a, p2 = p;
      RowMatrixD& target = which == 0 ? o2 : which == 1 ? a2 : p2;
      target(r, c) = std::min(1.0, target(r, c) + 0.2);
      const auto bumped = fuse_pixel(map_of(o2), map_of(a2), map_of(p2), cfg);
      EXPECT_GE(bumped.values(r, c), base.values(r, c) - 1e-12);
    }
  }
}

TEST(FusePixel, ArgmaxStableUnderResolution) {
  // Piecewise-constant inputs: nearest-style upscaling by 2 before fusion.
  Rng rng(6);
  for (int t = 0; t < 10; ++t) {
    const RowMatrixD o = test::random_matrix(rng, 4, 4).cwiseAbs();
    const RowMatrixD a = test::random_matrix(rng, 4, 4).cwiseAbs();
    const RowMatrixD p = test::random_matrix(rng, 4, 4).cwiseAbs();
    auto up = [](const RowMatrixD& m) {
      RowMatrixD u(8, 8);
      for (int r = 0; r < 8; ++r)
        for (int c = 0; c < 8; ++c) u(r, c) = m(r / 2, c / 2);
      return u;
    };
    Index r1 = 0, c1 = 0, r2 = 0, c2 = 0;
    fuse_pixel(map_of(o), map_of(a), map_of(p), cfg_for(4, 4)).values.maxCoeff(&r1, &c1);
    fuse_pixel(map_of(up(o)), map_of(up(a)), map_of(up(p)), cfg_for(8, 8)).values.maxCoeff(&r2, &c2);
    EXPECT_EQ(r2 / 2, r1);
    EXPECT_EQ(c2 / 2, c1);
  }
}

TEST(FuseImage, Arithmetic) {
  FusionConfig c = cfg_for(1, 1);
  c.lambda_obj = 0.5;
  c.lambda_map = 0.1;
  const auto r = fuse_image(1.0, 2.0, map_of(RowMatrixD::Constant(1, 1, 3.0)), c);
  EXPECT_DOUBLE_EQ(r.s_base, 2.0);
  EXPECT_DOUBLE_EQ(r.s_fused, 2.3);
  EXPECT_EQ(r.s_map_peak, 3.0);
  EXPECT_EQ(r.s_fused, image_mode_score(ImageMode::full, 2.0, 1.0, 3.0, c));
}

TEST(FuseImage, ZeroWeightsGiveTextureScore) {
  FusionConfig c = cfg_for(1, 1);
  c.lambda_obj = 0.0;
  c.lambda_map = 0.0;
  EXPECT_EQ(fuse_image(1.7, 9.0, map_of(RowMatrixD::Constant(2, 2, 4.0)), c).s_fused, 1.7);
}

TEST(FuseImage, LinearInEachScore) {
  Rng rng(7);
  FusionConfig c = cfg_for(1, 1);
  c.lambda_obj = 0.37;
  c.lambda_map = 2.5;
  for (int t = 0; t < 10; ++t) {
    const double pc = rng.normal(), obj = rng.normal(), peak = rng.normal(), h = 0.125;
    auto f = [&](double a, double b, double p) {
      return fuse_image(a, b, map_of(RowMatrixD::Constant(1, 1, p)), c).s_fused;
    };
    const double base = f(pc, obj, peak);
    EXPECT_NEAR((f(pc + h, obj, peak) - base) / h, 1.0, 1e-9);
    EXPECT_NEAR((f(pc, obj + h, peak) - base) / h, c.lambda_obj, 1e-9);
    EXPECT_NEAR((f(pc, obj, peak + h) - base) / h, c.lambda_map, 1e-9);
  }
}

TEST(Calibration, MedianRatios) {
  const FusionConfig c = cfg_for(1, 1);
  const std::vector<double> pc{1, 2, 3}, obj{3, 4, 5}, peaks{0.5, 1, 2};
  const auto [lo, lm] = calibrate_lambdas(pc, obj, peaks, c);
  EXPECT_DOUBLE_EQ(lo, 0.5);
  // base = {2.5, 4, 5.5}, median 4, peak median 1.
  EXPECT_DOUBLE_EQ(lm, 4.0);
}

TEST(Calibration, ZeroPeaksFallBack) {
  const FusionConfig c = cfg_for(1, 1);
  const std::vector<double> pc{1, 2}, obj{0, 0}, peaks{0, 0};
  const auto [lo, lm] = calibrate_lambdas(pc, obj, peaks, c);
  EXPECT_EQ(lo, 1.0);
  EXPECT_EQ(lm, 1.0);
}

TEST(Calibration, BalancesScales) {
  Rng rng(8);
  std::vector<double> pc(101), obj(101), peaks(101);
  for (std::size_t i = 0; i < pc.size(); ++i) {
    pc[i] = 1.0 + 0.2 * rng.uniform();
    obj[i] = 100.0 * (1.0 + 0.2 * rng.uniform());
    peaks[i] = 0.01 * (1.0 + rng.uniform());
  }
  const auto [lo, lm] = calibrate_lambdas(pc, obj, peaks, cfg_for(1, 1));
  std::vector<double> weighted(obj.size());
  for (std::size_t i = 0; i < obj.size(); ++i) weighted[i] = lo * obj[i];
  const double ratio = median(weighted) / median(pc);
  EXPECT_GE(ratio, 0.5);
  EXPECT_LE(ratio, 2.0);
  EXPECT_GT(lm, 0.0);
}

TEST(Calibration, FixedModeReturnsConfigured) {
  FusionConfig c = cfg_for(1, 1);
  c.calibration = CalibrationMode::fixed;
  c.lambda_obj = 0.3;
  c.lambda_map = 7.0;
  const std::vector<double> v{1, 2};
  EXPECT_EQ(calibrate_lambdas(v, v, v, c), std::make_pair(0.3, 7.0));
  const std::vector<double> empty;
  EXPECT_THROW(calibrate_lambdas(empty, empty, empty, cfg_for(1, 1)), PreconditionError);
}

TEST(Modes, NamesRoundTrip) {
  for (auto m : kAllPixelModes) EXPECT_EQ(parse_pixel_mode(to_string(m)), m);
  for (auto m : kAllImageModes) EXPECT_EQ(parse_image_mode(to_string(m)), m);
  EXPECT_THROW(parse_pixel_mode("obj+pc"), ConfigError);
  EXPECT_THROW(parse_image_mode("bogus"), ConfigError);
}
