#include <gtest/gtest.h>

#include <random>

#include "ncutseg/refine.hpp"
#include "support/fixtures.hpp"

using namespace ncutseg;

namespace {

RgbImage random_image(std::size_t h, std::size_t w, std::mt19937_64& rng) {
  RgbImage img(h, w);
  std::uniform_int_distribution<int> byte(0, 255);
  for (auto& p : img.pixels) p = static_cast<std::uint8_t>(byte(rng));
  return img;
}

PixelMask random_mask(std::size_t h, std::size_t w, std::mt19937_64& rng, double lo = 0.0, double hi = 1.0) {
  PixelMask m(h, w);
  std::uniform_real_distribution<double> u(lo, hi);
  for (auto& v : m.values) v = u(rng);
  return m;
}

/// Two flat colour regions split at column `split`.
RgbImage two_tone(std::size_t h, std::size_t w, std::size_t split) {
  RgbImage img(h, w);
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t c = 0; c < w; ++c) {
      const std::uint8_t v = c < split ? 30 : 220;
      for (int ch = 0; ch < 3; ++ch) img.pixels[(r * w + c) * 3 + ch] = ch == 2 ? 255 - v : v;
    }
  }
  return img;
}

}  // namespace

TEST(Upsample, SinglePatch) {
  PatchMask m(GridGeometry{1, 1, 1});
  m.values[0] = 1;
  const PixelMask px = upsample_patch_mask(m, 0, 16, 16, 16);
  EXPECT_EQ(px, PixelMask(16, 16, 1.0));
}

TEST(Upsample, TwoByOne) {
  PatchMask m(GridGeometry{1, 2, 1});
  m.values = {1, 0};
  const PixelMask px = upsample_patch_mask(m, 0, 2, 4, 2);
  EXPECT_EQ(px.values, (std::vector<double>{1, 1, 1, 1, 0, 0, 0, 0}));
}

TEST(Upsample, RemainderColumnCopiesLastPatch) {
  PatchMask m(GridGeometry{1, 30, 30});
  for (std::size_t r = 0; r < 30; ++r) m.values[r * 30 + 29] = static_cast<std::uint8_t>(r % 2);
  const PixelMask px = upsample_patch_mask(m, 0, 16, 480, 481);
  ASSERT_EQ(px.width, 481u);
  for (std::size_t r = 0; r < 480; ++r) EXPECT_EQ(px(r, 480), px(r, 479)) << r;
  EXPECT_EQ(px(16, 480), 1.0);
  EXPECT_EQ(px(0, 480), 0.0);
}

TEST(Upsample, GeometryMismatchRejected) {
  PatchMask m(GridGeometry{1, 2, 2});
  EXPECT_THROW(upsample_patch_mask(m, 0, 16, 48, 32), ValidationError);
  EXPECT_THROW(upsample_patch_mask(m, 1, 16, 32, 32), ValidationError);
  std::vector<double> vals(3);
  EXPECT_THROW(upsample_patch_values(vals, m.geometry, 0, 16, 32, 32), ValidationError);
}

TEST(Upsample, ValuesPerFrame) {
  const GridGeometry g{2, 1, 2};
  const std::vector<double> vals{0.1, 0.2, 0.3, 0.4};
  const PixelMask px = upsample_patch_values(vals, g, 1, 2, 2, 4);
  EXPECT_EQ(px.values, (std::vector<double>{0.3, 0.3, 0.4, 0.4, 0.3, 0.3, 0.4, 0.4}));
}

TEST(Binarize, Rules) {
  PixelMask m(1, 3);
  m.values = {0.5, 0.4999, 1.0};
  EXPECT_EQ(binarize(m, 0.5).values, (std::vector<double>{1, 0, 1}));
  EXPECT_EQ(binarize(PixelMask(2, 2, 0.0), 0.5), PixelMask(2, 2, 0.0));
  std::mt19937_64 rng(1);
  const PixelMask r = random_mask(7, 9, rng);
  for (double thr : {0.1, 0.5, 0.9}) EXPECT_EQ(binarize(binarize(r, thr), thr), binarize(r, thr));
}

TEST(BilateralGrid, StructureAndAdjointness) {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> n;
  for (int trial = 0; trial < 20; ++trial) {
    const RgbImage img = random_image(32, 32, rng);
    const BilateralGrid grid(img, BilateralParams{});
    EXPECT_EQ(grid.pixels(), 32u * 32u);
    EXPECT_LE(grid.vertices(), grid.pixels());
    EXPECT_DOUBLE_EQ(grid.counts().sum(), 1024.0);
    Eigen::VectorXd u(static_cast<Eigen::Index>(grid.pixels())), v(static_cast<Eigen::Index>(grid.vertices()));
    for (auto& x : u) x = n(rng);
    for (auto& x : v) x = n(rng);
    const double lhs = grid.splat(u).dot(v), rhs = u.dot(grid.slice(v));
    EXPECT_NEAR(lhs, rhs, 1e-10 * std::max(1.0, std::abs(lhs)));
    // Blur symmetry.
    Eigen::VectorXd w(v.size());
    for (auto& x : w) x = n(rng);
    EXPECT_NEAR(grid.blur(v).dot(w), v.dot(grid.blur(w)), 1e-10 * std::max(1.0, v.norm() * w.norm()));
  }
}

TEST(BilateralGrid, HardSplatToNearestVertex) {
  const RgbImage img = two_tone(8, 8, 4);
  BilateralParams p;
  p.sigma_spatial = 100;
  const BilateralGrid grid(img, p);
  EXPECT_EQ(grid.vertices(), 2u);
  EXPECT_EQ(grid.vertex_of(0), grid.vertex_of(3));
  EXPECT_NE(grid.vertex_of(3), grid.vertex_of(4));
}

TEST(BilateralGrid, ConstantImageCollapsesToSpatialLattice) {
  RgbImage img(32, 32);
  std::fill(img.pixels.begin(), img.pixels.end(), 128);
  const BilateralGrid grid(img, BilateralParams{});
  // x/16 rounds to 0, 1 or 2.
  EXPECT_EQ(grid.vertices(), 9u);
}

TEST(BilateralRefine, LambdaZeroIsIdentity) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    const RgbImage img = random_image(32, 32, rng);
    const PixelMask target = random_mask(32, 32, rng);
    BilateralParams p;
    p.lambda_smooth = 0.0;
    EXPECT_EQ(bilateral_refine(img, target, PixelMask(32, 32, 1.0), p), target);
    EXPECT_EQ(bilateral_refine(img, target, random_mask(32, 32, rng, 0.01, 1.0), p), target);
  }
}

TEST(BilateralRefine, LargeLambdaOnFlatImageGivesWeightedMean) {
  RgbImage img(32, 32);
  std::fill(img.pixels.begin(), img.pixels.end(), 90);
  PixelMask target(32, 32);
  for (std::size_t r = 0; r < 32; ++r) {
    for (std::size_t c = 0; c < 32; ++c) target(r, c) = c < 12 ? 1.0 : 0.0;
  }
  BilateralParams p;
  p.lambda_smooth = 1e6;
  p.cg_tol = 1e-12;
  p.cg_max_iter = 500;
  const PixelMask out = bilateral_refine(img, target, PixelMask(32, 32, 1.0), p);
  const double mean = 12.0 / 32.0;
  for (double v : out.values) EXPECT_NEAR(v, mean, 1e-3);
}

TEST(BilateralRefine, OutputInUnitInterval) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 10; ++trial) {
    const RgbImage img = random_image(24, 20, rng);
    BilateralParams p;
    p.cg_max_iter = 200;
    const PixelMask out = bilateral_refine(img, random_mask(24, 20, rng), random_mask(24, 20, rng, 0.001, 1.0), p);
    EXPECT_NO_THROW(validate(out));
  }
}

TEST(BilateralRefine, ObjectiveNeverIncreases) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const RgbImage img = random_image(32, 32, rng);
    const PixelMask target = random_mask(32, 32, rng);
    const PixelMask conf = random_mask(32, 32, rng, 0.001, 1.0);
    BilateralParams p;
    p.sigma_spatial = 8;
    p.sigma_luma = 32;
    p.sigma_chroma = 32;
    p.cg_max_iter = 500;
    const BilateralGrid grid(img, p);
    const BilateralProblem problem(grid, target, conf, p);
    SolveTrace trace;
    const Eigen::VectorXd y = solve_bilateral(problem, p, &trace);
    ASSERT_GE(trace.objective.size(), 1u);
    for (std::size_t k = 1; k < trace.objective.size(); ++k) {
      EXPECT_LE(trace.objective[k], trace.objective[k - 1] + 1e-9 * std::abs(trace.objective[k - 1]));
    }
    EXPECT_LE(problem.objective(y), problem.objective(problem.initial_guess()));
    EXPECT_LE(trace.residual, p.cg_tol);
  }
}

TEST(BilateralRefine, ObjectiveMatchesPixelDataTerm) {
  std::mt19937_64 rng(6);
  const RgbImage img = random_image(16, 16, rng);
  const PixelMask target = random_mask(16, 16, rng), conf = random_mask(16, 16, rng);
  BilateralParams p;
  p.lambda_smooth = 0.0;  // grid problem without smoothness
  const BilateralGrid grid(img, BilateralParams{});
  const BilateralProblem problem(grid, target, conf, p);
  std::normal_distribution<double> n;
  Eigen::VectorXd y(static_cast<Eigen::Index>(grid.vertices()));
  for (auto& v : y) v = n(rng);
  const Eigen::VectorXd x = grid.slice(y);
  double direct = 0;
  for (std::size_t i = 0; i < target.size(); ++i) {
    const double d = x[static_cast<Eigen::Index>(i)] - target.values[i];
    direct += conf.values[i] * d * d;
  }
  EXPECT_NEAR(problem.objective(y), direct, 1e-9 * direct);
}

TEST(BilateralRefine, EdgeAwareOnTwoToneImage) {
  // Coarse mask stops 4 pixels short of the colour edge; refinement fills up to it.
  const RgbImage img = two_tone(32, 32, 16);
  PixelMask coarse(32, 32);
  for (std::size_t r = 0; r < 32; ++r) {
    for (std::size_t c = 0; c < 12; ++c) coarse(r, c) = 1.0;
  }
  BilateralParams p;
  p.cg_max_iter = 200;
  const PixelMask out = binarize(bilateral_refine(img, coarse, mask_confidence(coarse), p), 0.5);
  for (std::size_t r = 0; r < 32; ++r) {
    for (std::size_t c = 0; c < 32; ++c) EXPECT_EQ(out(r, c), c < 16 ? 1.0 : 0.0) << r << "," << c;
  }
}

TEST(BilateralRefine, NonConvergenceReported) {
  std::mt19937_64 rng(7);
  const RgbImage img = random_image(32, 32, rng);
  BilateralParams p;
  p.cg_max_iter = 1;
  p.cg_tol = 1e-14;
  EXPECT_THROW(bilateral_refine(img, random_mask(32, 32, rng), random_mask(32, 32, rng, 0.01, 1), p), ConvergenceError);
}

TEST(BilateralRefine, DimensionMismatchRejected) {
  std::mt19937_64 rng(8);
  const RgbImage img = random_image(8, 8, rng);
  EXPECT_THROW(bilateral_refine(img, PixelMask(8, 7), PixelMask(8, 8), BilateralParams{}), ValidationError);
  BilateralParams bad;
  bad.sigma_luma = 0;
  EXPECT_THROW(bilateral_refine(img, PixelMask(8, 8), PixelMask(8, 8), bad), ValidationError);
}

TEST(BilateralRefine, ConfidenceDefaults) {
  PixelMask coarse(1, 2);
  coarse.values = {1.0, 0.0};
  const PixelMask c = mask_confidence(coarse);
  EXPECT_EQ(c.values, (std::vector<double>{kConfidenceInside, kConfidenceOutside}));
}

TEST(BilateralRefine, RefinerInterface) {
  const RgbImage img = two_tone(16, 16, 8);
  const BilateralRefiner refiner(BilateralParams{});
  const Refiner& r = refiner;
  const PixelMask out = r.refine(img, PixelMask(16, 16, 1.0), PixelMask(16, 16, 1.0));
  for (double v : out.values) EXPECT_NEAR(v, 1.0, 1e-6);
}
