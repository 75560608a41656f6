#include <gtest/gtest.h>

#include "rafnl/metrics.hpp"
#include "rafnl/simulate.hpp"
#include "test_util.hpp"

using namespace rafnl;

TEST(Simulate, IdentityDegradationReturnsGroundTruth) {
  SimSpec s;
  s.source = synthetic_scene(SceneSpec{32, 32, 5, 3, 4}, 3);
  s.kind = SimKind::NONE;
  s.model = DegradationModel{delta_kernel(), 1, Matrix::Identity(5, 5)};
  const SimOutput out = simulate(s);
  EXPECT_TRUE(out.y == s.source);
  EXPECT_TRUE(out.z == s.source);
}

TEST(Simulate, DeterministicUnderSeed) {
  SimSpec s = default_scenario(11);
  s.noise_snr = 30.0;
  const SimOutput a = simulate(s), b = simulate(s);
  EXPECT_TRUE(a.y == b.y);
  EXPECT_TRUE(a.z == b.z);
  s.seed = 12;
  EXPECT_FALSE(simulate(s).y == a.y);
}

TEST(Simulate, FactorFourShapes) {
  SimSpec s;
  s.source = synthetic_scene(SceneSpec{256, 256, 6, 3, 16}, 1);
  s.kind = SimKind::TRANSLATION;
  s.magnitude = 1.0;
  s.model = default_model(4, 3, 6);
  const SimOutput out = simulate(s);
  EXPECT_EQ(out.y.shape(), Cube(64, 64, 6).shape());
  EXPECT_EQ(out.z.shape(), Cube(256, 256, 3).shape());
}

TEST(Simulate, NoiseMatchesRequestedSnr) {
  SimSpec s = default_scenario(5);
  s.kind = SimKind::NONE;
  const SimOutput clean = simulate(s);
  s.noise_snr = 25.0;
  const SimOutput noisy = simulate(s);
  const double snr = 10.0 * std::log10(clean.z.squared_norm() / (noisy.z - clean.z).squared_norm());
  EXPECT_NEAR(snr, 25.0, 0.3);
}

TEST(Simulate, RejectsBadInputs) {
  SimSpec s = default_scenario(1);
  s.magnitude = -1.0;
  EXPECT_THROW(simulate(s), ParameterError);
  s = default_scenario(1);
  s.model = default_model(5, 4, 8);
  EXPECT_THROW(simulate(s), DimensionError);
  s = default_scenario(1);
  s.model = default_model(2, 4, 6);
  EXPECT_THROW(simulate(s), DimensionError);
  EXPECT_THROW(parse_sim_kind("shear"), ParameterError);
  EXPECT_EQ(parse_sim_kind("barrel"), SimKind::BARREL);
}

TEST(SpikedScene, StructureOfPlantedResidual) {
  const SpikedScene s = spiked_scene(32, 8, 0.05, 0.2, 4);
  const auto res = s.residual.unfolded();
  const auto low = s.low_rank.unfolded();
  Index nonzero = 0;
  for (Index p = 0; p < s.residual.pixels(); ++p)
    if (res.col(p).norm() > 0.0) {
      ++nonzero;
      EXPECT_NEAR(res.col(p).norm(), 0.2, 1e-12);
    }
  EXPECT_EQ(nonzero, s.spiked);
  EXPECT_GT(s.spiked, 20);
  EXPECT_LT(s.spiked, 80);
  // residual is orthogonal to the low-rank span, which has rank 3
  Eigen::JacobiSVD<Matrix> svd(Matrix(low), Eigen::ComputeThinU);
  EXPECT_LT((svd.matrixU().leftCols(3).transpose() * res).norm(), 1e-10);
  EXPECT_LT(svd.singularValues()[3], 1e-10 * svd.singularValues()[0]);
  EXPECT_GT(svd.singularValues()[2], 1e-2 * svd.singularValues()[0]);
  EXPECT_TRUE(spiked_scene(32, 8, 0.05, 0.2, 4).gt == s.gt);
  EXPECT_THROW(spiked_scene(32, 4, 0.05, 0.2, 4), ParameterError);
}

TEST(Simulate, KnownInverseRestoresAlignment) {
  for (double mag : {2.0, 3.0}) {
    SimSpec s = default_scenario(9);
    s.magnitude = mag;
    const SimOutput out = simulate(s);
    const Cube ref = apply_hspa(s.model, out.ground_truth);
    const Cube back = warp_cube(out.y, expected_lr_translation(out.true_tau, s.model.factor));
    EXPECT_GE(psnr(back, ref) - psnr(out.y, ref), 10.0) << "magnitude " << mag;
  }
}
