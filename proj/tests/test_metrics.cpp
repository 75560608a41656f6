#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "rafnl/metrics.hpp"
#include "test_util.hpp"

using namespace rafnl;

namespace {

// Same formula in the skimage script that produced the golden values below.
std::pair<Cube, Cube> golden_pair() {
  Cube x(20, 17, 3), y(20, 17, 3);
  for (Index r = 0; r < 20; ++r)
    for (Index c = 0; c < 17; ++c)
      for (Index b = 0; b < 3; ++b) {
        const double rr = static_cast<double>(r), cc = static_cast<double>(c), bb = static_cast<double>(b);
        x(r, c, b) = 0.5 + 0.3 * std::sin(0.3 * rr + 0.2 * cc + bb);
        y(r, c, b) = x(r, c, b) + 0.05 * std::cos(0.7 * rr * cc + bb);
      }
  return {x, y};
}

}  // namespace

TEST(Psnr, ConstantOffsetIsTwentyDb) {
  std::mt19937_64 rng(1);
  const Cube ref = rafnl::testing::random_cube(rng, 12, 12, 4, 0.0, 1.0);
  Cube x = ref;
  x.unfolded().array() += 0.1;
  EXPECT_NEAR(psnr(x, ref), 20.0, 1e-9);
  EXPECT_NEAR(psnr_uncapped(x, ref), 20.0, 1e-9);
}

TEST(Psnr, CapPerBand) {
  std::mt19937_64 rng(2);
  const Cube ref = rafnl::testing::random_cube(rng, 8, 8, 2, 0.0, 1.0);
  Cube x = ref;
  EXPECT_DOUBLE_EQ(psnr(x, ref), kPsnrCap);
  EXPECT_TRUE(std::isinf(psnr_uncapped(x, ref)));
  for (Index i = 0; i < 64; ++i) x.data()[64 + i] += 0.1;  // second band only
  EXPECT_NEAR(psnr(x, ref), 0.5 * (kPsnrCap + 20.0), 1e-9);
}

TEST(Ssim, MatchesSkimageGolden) {
  // skimage 0.25 structural_similarity(gaussian_weights=True, sigma=1.5,
  // use_sample_covariance=False, data_range=1, channel_axis=2)
  const auto [x, y] = golden_pair();
  EXPECT_NEAR(ssim(y, x), 0.9331438283602914, 1e-10);
  Cube xb(20, 17, 1), yb(20, 17, 1);
  xb.band(0) = x.band(1);
  yb.band(0) = y.band(1);
  EXPECT_NEAR(ssim(yb, xb), 0.9391576066255778, 1e-10);
}

TEST(Ssim, IdentityAndSizeGuard) {
  std::mt19937_64 rng(3);
  const Cube a = rafnl::testing::random_cube(rng, 16, 16, 2, 0.0, 1.0);
  EXPECT_NEAR(ssim(a, a), 1.0, 1e-12);
  EXPECT_THROW(ssim(Cube(10, 16, 1), Cube(10, 16, 1)), DimensionError);
}

TEST(Ergas, ClosedFormAndAsymmetry) {
  Cube ref(12, 12, 2), x(12, 12, 2);
  ref.unfolded().setConstant(0.5);
  x.unfolded().setConstant(0.6);
  // (100/2) sqrt(0.01 / 0.25)
  EXPECT_NEAR(ergas(x, ref, 2.0), 10.0, 1e-12);
  EXPECT_NEAR(ergas(ref, x, 2.0), 50.0 * std::sqrt(0.01 / 0.36), 1e-12);
  EXPECT_THROW(ergas(x, Cube(12, 12, 2), 2.0), DataError);
  EXPECT_THROW(ergas(x, ref, 0.0), ParameterError);
}

TEST(Sam, ScaleInvariantSymmetricAndGolden) {
  std::mt19937_64 rng(4);
  const Cube ref = rafnl::testing::random_cube(rng, 6, 6, 5, 0.1, 1.0);
  Cube twice = ref;
  twice *= 2.0;
  EXPECT_NEAR(sam(twice, ref), 0.0, 1e-6);
  const Cube other = rafnl::testing::random_cube(rng, 6, 6, 5, 0.1, 1.0);
  EXPECT_DOUBLE_EQ(sam(other, ref), sam(ref, other));

  Cube a(1, 1, 2), b(1, 1, 2);
  a(0, 0, 0) = 1.0;
  b(0, 0, 0) = 1.0;
  b(0, 0, 1) = 1.0;
  EXPECT_NEAR(sam(a, b), 45.0, 1e-12);
  EXPECT_DOUBLE_EQ(sam(Cube(1, 1, 2), b), 0.0);  // zero fibers skipped
}

TEST(Evaluate, BundlesAndRejectsNonFinite) {
  const auto [x, y] = golden_pair();
  const MetricReport m = evaluate(y, x, 2.0);
  EXPECT_DOUBLE_EQ(m.psnr, psnr(y, x));
  EXPECT_DOUBLE_EQ(m.ssim, ssim(y, x));
  EXPECT_DOUBLE_EQ(m.ergas, ergas(y, x, 2.0));
  EXPECT_DOUBLE_EQ(m.sam, sam(y, x));
  Cube bad = y;
  bad(0, 0, 0) = std::nan("");
  EXPECT_THROW(evaluate(bad, x, 2.0), DataError);
  EXPECT_THROW(evaluate(Cube(20, 17, 2), x, 2.0), DimensionError);
}
