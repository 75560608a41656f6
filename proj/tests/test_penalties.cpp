#include <gtest/gtest.h>

#include "rafnl/penalties.hpp"
#include "test_util.hpp"

using namespace rafnl;
using rafnl::testing::random_cube;
using rafnl::testing::rel_diff;

namespace {

double prox_objective(const PenaltySpec& p, double alpha, double z, double x) {
  return alpha * psi_eval(p, x) + 0.5 * (x - z) * (x - z);
}

// Brute-force minimum over a 1e-4 grid covering [-|z|-1, |z|+1].
double grid_min(const PenaltySpec& p, double alpha, double z) {
  const double span = std::abs(z) + 1.0;
  double best = prox_objective(p, alpha, z, 0.0);
  for (double x = -span; x <= span; x += 1e-4) best = std::min(best, prox_objective(p, alpha, z, x));
  return best;
}

const PenaltySpec kL1{PenaltyKind::L1, 1.0};

}  // namespace

TEST(Psi, Values) {
  EXPECT_EQ(psi_eval({PenaltyKind::MCP, 8.0}, 0.0), 0.0);
  EXPECT_DOUBLE_EQ(psi_eval({PenaltyKind::MCP, 2.0}, 3.0), 1.0);
  EXPECT_EQ(psi_eval({PenaltyKind::LOG, 1.0}, 0.0), 0.0);
  EXPECT_DOUBLE_EQ(psi_eval(kL1, -2.5), 2.5);
  EXPECT_THROW((PenaltySpec{PenaltyKind::MCP, 0.0}.validate()), ParameterError);
}

TEST(Psi, MonotoneSymmetricSubadditive) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.0, 20.0), th(0.1, 10.0);
  for (auto kind : {PenaltyKind::L1, PenaltyKind::LOG, PenaltyKind::MCP}) {
    for (int t = 0; t < 500; ++t) {
      const PenaltySpec p{kind, th(rng)};
      const double a = u(rng), b = u(rng);
      EXPECT_EQ(psi_eval(p, a), psi_eval(p, -a));
      EXPECT_LE(psi_eval(p, std::min(a, b)), psi_eval(p, std::max(a, b)) + 1e-15);
      EXPECT_LE(psi_eval(p, a + b), psi_eval(p, a) + psi_eval(p, b) + 1e-12);
    }
  }
}

TEST(ProxScalar, L1) {
  EXPECT_EQ(prox_scalar(kL1, 1.0, 0.5), 0.0);
  EXPECT_DOUBLE_EQ(prox_scalar(kL1, 1.0, 3.0), 2.0);
  EXPECT_DOUBLE_EQ(prox_scalar(kL1, 1.0, -3.0), -2.0);
  EXPECT_THROW(prox_scalar(kL1, 0.0, 1.0), ParameterError);
}

TEST(ProxScalar, McpMatchesGrid) {
  const PenaltySpec p{PenaltyKind::MCP, 8.0};
  for (double z = -12.0; z <= 12.0; z += 0.37) {
    const double x = prox_scalar(p, 0.5, z);
    EXPECT_LE(prox_objective(p, 0.5, z, x), grid_min(p, 0.5, z) + 1e-6) << "z=" << z;
  }
}

TEST(ProxScalar, NonconvexBranches) {
  // alpha >= theta: hard threshold at sqrt(alpha*theta) with ties to zero
  const PenaltySpec p{PenaltyKind::MCP, 1.0};
  EXPECT_EQ(prox_scalar(p, 4.0, 2.0), 0.0);
  EXPECT_EQ(prox_scalar(p, 4.0, 2.0001), 2.0001);
  const PenaltySpec lg{PenaltyKind::LOG, 0.5};
  for (double z = -6.0; z <= 6.0; z += 0.13) {
    const double x = prox_scalar(lg, 2.0, z);
    EXPECT_LE(prox_objective(lg, 2.0, z, x), grid_min(lg, 2.0, z) + 1e-6) << "z=" << z;
  }
}

TEST(ProxScalar, RandomOracleAllKinds) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> al(0.05, 3.0), th(0.2, 10.0), zz(-10.0, 10.0);
  for (auto kind : {PenaltyKind::L1, PenaltyKind::LOG, PenaltyKind::MCP}) {
    for (int t = 0; t < 100; ++t) {
      const PenaltySpec p{kind, th(rng)};
      const double a = al(rng), z = zz(rng);
      const double x = prox_scalar(p, a, z);
      EXPECT_LE(prox_objective(p, a, z, x), grid_min(p, a, z) + 1e-6);
    }
  }
}

TEST(NormPsi, Reductions) {
  const PenaltySpec mcp{PenaltyKind::MCP, 8.0};
  EXPECT_EQ(norm_psi(mcp, Cube(3, 3, 2)), 0.0);
  std::mt19937_64 rng(3);
  const Cube x = random_cube(rng, 5, 4, 6);
  EXPECT_NEAR(norm_psi(kL1, x), tnn(x), 1e-10 * tnn(x));
  // theta large enough that every singular value is on the quadratic branch
  const Spectrum xh = mode3_fft(x);
  double smax = 0.0, direct = 0.0;
  for (const auto& s : xh) smax = std::max(smax, Eigen::JacobiSVD<ComplexMatrix>(s).singularValues().maxCoeff());
  const PenaltySpec big{PenaltyKind::MCP, 2.0 * smax};
  for (const auto& s : xh) {
    const Vector sv = Eigen::JacobiSVD<ComplexMatrix>(s).singularValues();
    direct += (sv.array() - sv.array().square() / (2.0 * big.theta)).sum();
  }
  EXPECT_NEAR(norm_psi(big, x), direct / 6.0, 1e-10 * direct);
}

TEST(ProxTnn, ZeroAndFullShrink) {
  std::mt19937_64 rng(4);
  EXPECT_EQ(prox_tnn_psi(kL1, 1.0, Cube(3, 4, 3)).norm(), 0.0);
  const Cube x = random_cube(rng, 4, 3, 5);
  double smax = 0.0;
  for (const auto& s : mode3_fft(x)) smax = std::max(smax, Eigen::JacobiSVD<ComplexMatrix>(s).singularValues().maxCoeff());
  EXPECT_LT(prox_tnn_psi(kL1, smax * 1.0001, x).norm(), 1e-12);
}

TEST(ProxTnn, MatrixSvtAtUnitTube) {
  std::mt19937_64 rng(5);
  const Cube x = random_cube(rng, 6, 4, 1);
  Eigen::JacobiSVD<Matrix> svd(Matrix(x.band(0)), Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vector d = (svd.singularValues().array() - 0.4).max(0.0);
  const Matrix ref = svd.matrixU() * d.asDiagonal() * svd.matrixV().transpose();
  const Cube got = prox_tnn_psi(kL1, 0.4, x);
  EXPECT_LT((Matrix(got.band(0)) - ref).norm(), 1e-10 * ref.norm());
}

TEST(ProxTnn, ShrinksSingularFibers) {
  std::mt19937_64 rng(6);
  const Cube x = random_cube(rng, 5, 5, 4);
  const auto before = detail::slice_singular_values(mode3_fft(x));
  const auto after = detail::slice_singular_values(mode3_fft(prox_tnn_psi(kL1, 0.3, x)));
  for (std::size_t k = 0; k < before.size(); ++k)
    for (Index i = 0; i < before[k].size(); ++i) EXPECT_LE(after[k][i], before[k][i] + 1e-12);
}

TEST(ProxTnn, SliceObjectiveIsMinimal) {
  // prox output must beat random perturbations of itself on the full objective
  std::mt19937_64 rng(7);
  const PenaltySpec mcp{PenaltyKind::MCP, 3.0};
  const Cube a = random_cube(rng, 4, 4, 3);
  const Cube x = prox_tnn_psi(mcp, 0.5, a);
  auto obj = [&](const Cube& c) { return 0.5 * norm_psi(mcp, c) + 0.5 * (c - a).squared_norm(); };
  const double f = obj(x);
  for (int t = 0; t < 50; ++t) EXPECT_GE(obj(x + random_cube(rng, 4, 4, 3, -1e-3, 1e-3)), f - 1e-12);
}

TEST(NormGroup, Values) {
  EXPECT_EQ(norm_group(kL1, Cube(3, 3, 2)), 0.0);
  Cube e(3, 3, 2);
  e(1, 2, 0) = 3.0;
  e(1, 2, 1) = 4.0;
  EXPECT_DOUBLE_EQ(norm_group(kL1, e), 5.0);
  std::mt19937_64 rng(8);
  const PenaltySpec mcp{PenaltyKind::MCP, 1.5};
  const Cube x = random_cube(rng, 4, 5, 3);
  double ref = 0.0;
  for (Index r = 0; r < 4; ++r)
    for (Index c = 0; c < 5; ++c) {
      double s = 0.0;
      for (Index b = 0; b < 3; ++b) s += x(r, c, b) * x(r, c, b);
      ref += psi_eval(mcp, std::sqrt(s));
    }
  EXPECT_NEAR(norm_group(mcp, x), ref, 1e-12);
  EXPECT_GE(norm_group(mcp, x) + 1e-12, psi_eval(mcp, x.norm()));
}

TEST(ProxGroup, Values) {
  EXPECT_EQ(prox_group(kL1, 1.0, Cube(2, 2, 3)).norm(), 0.0);
  Cube z(1, 1, 2);
  z(0, 0, 0) = 3.0 * 0.6;
  z(0, 0, 1) = 3.0 * 0.8;
  const Cube out = prox_group(kL1, 1.0, z);
  EXPECT_NEAR(out(0, 0, 0), z(0, 0, 0) * 2.0 / 3.0, 1e-14);
  EXPECT_NEAR(out(0, 0, 1), z(0, 0, 1) * 2.0 / 3.0, 1e-14);
}

TEST(ProxGroup, RadialGridAndDirection) {
  std::mt19937_64 rng(9);
  const PenaltySpec mcp{PenaltyKind::MCP, 2.0};
  const Cube z = random_cube(rng, 3, 3, 4, -2.0, 2.0);
  const Cube out = prox_group(mcp, 0.7, z);
  const RowMajorMatrix nz = fiber_norms(z), no = fiber_norms(out);
  for (Index r = 0; r < 3; ++r)
    for (Index c = 0; c < 3; ++c) {
      // radial 1-D problem: min 0.7*psi(t) + (t - |z|)^2/2 over t >= 0
      double best = 1e300;
      for (double t = 0.0; t <= nz(r, c) + 1.0; t += 1e-4)
        best = std::min(best, 0.7 * psi_eval(mcp, t) + 0.5 * (t - nz(r, c)) * (t - nz(r, c)));
      const double t = no(r, c);
      EXPECT_LE(0.7 * psi_eval(mcp, t) + 0.5 * (t - nz(r, c)) * (t - nz(r, c)), best + 1e-6);
      // nonnegative multiple of the input fiber
      double dotv = 0.0;
      for (Index b = 0; b < 4; ++b) dotv += out(r, c, b) * z(r, c, b);
      EXPECT_NEAR(dotv, no(r, c) * nz(r, c), 1e-12);
    }
}
