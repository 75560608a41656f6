#include <gtest/gtest.h>

#include "rafnl/degradation.hpp"
#include "test_util.hpp"

using namespace rafnl;
using rafnl::testing::random_cube;
using rafnl::testing::random_matrix;
using rafnl::testing::rel_diff;

namespace {

RowMajorMatrix random_kernel(std::mt19937_64& rng, Index size) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  RowMajorMatrix k(size, size);
  for (Index i = 0; i < k.size(); ++i) k.data()[i] = u(rng);
  return k / k.sum();
}

// Dense A (LR pixels x HR pixels) built from the convolution definition
// (k * x)(s) = sum_t k(t) x(s - t), kernel centred at size/2.
Matrix dense_spatial(const DegradationModel& m, Index rows, Index cols) {
  const Index d = m.factor, lr = rows / d, lc = cols / d;
  const Index ci = m.kernel.rows() / 2, cj = m.kernel.cols() / 2;
  Matrix a = Matrix::Zero(lr * lc, rows * cols);
  for (Index i = 0; i < lr; ++i)
    for (Index j = 0; j < lc; ++j)
      for (Index ki = 0; ki < m.kernel.rows(); ++ki)
        for (Index kj = 0; kj < m.kernel.cols(); ++kj) {
          const Index si = ((i * d - (ki - ci)) % rows + rows) % rows;
          const Index sj = ((j * d - (kj - cj)) % cols + cols) % cols;
          a(i * lc + j, si * cols + sj) += m.kernel(ki, kj);
        }
  return a;
}

Matrix random_spd(std::mt19937_64& rng, Index n) {
  const Matrix g = random_matrix(rng, n, n);
  return g * g.transpose() + 0.1 * Matrix::Identity(n, n);
}

}  // namespace

TEST(Hspa, DeltaKernelUnitFactorIsIdentity) {
  std::mt19937_64 rng(1);
  const Cube x = random_cube(rng, 6, 5, 3);
  const DegradationModel m{delta_kernel(), 1, Matrix::Identity(3, 3)};
  EXPECT_LT(rel_diff(apply_hspa(m, x), x), 1e-14);
}

TEST(Hspa, UniformKernelOnConstant) {
  const DegradationModel m{RowMajorMatrix::Constant(2, 2, 0.25), 2, Matrix::Identity(2, 2)};
  const Cube x(8, 6, 2, 0.7);
  const Cube y = apply_hspa(m, x);
  EXPECT_EQ(y.rows(), 4);
  EXPECT_EQ(y.cols(), 3);
  for (Index i = 0; i < y.size(); ++i) EXPECT_NEAR(y.data()[i], 0.7, 1e-14);
}

TEST(Hspa, MatchesDenseOperator) {
  std::mt19937_64 rng(2);
  for (Index d : {1, 2, 4}) {
    const DegradationModel m{random_kernel(rng, 5), d, Matrix::Identity(3, 3)};
    const Cube x = random_cube(rng, 8, 8, 3);
    const Matrix ref = unfold3(x) * dense_spatial(m, 8, 8).transpose();
    EXPECT_LT((unfold3(apply_hspa(m, x)) - ref).norm(), 1e-12 * ref.norm());
  }
}

TEST(Hspa, DivisibilityError) {
  const DegradationModel m{default_kernel(2), 2, Matrix::Identity(1, 1)};
  EXPECT_THROW(apply_hspa(m, Cube(5, 4, 1)), DimensionError);
}

TEST(Hspa, CommutesWithBandPermutationAndPreservesFlux) {
  std::mt19937_64 rng(3);
  const DegradationModel m{default_kernel(2), 2, Matrix::Identity(4, 4)};
  const Cube x = random_cube(rng, 8, 8, 4);
  Matrix perm = Matrix::Zero(4, 4);
  perm(0, 2) = perm(1, 0) = perm(2, 3) = perm(3, 1) = 1.0;
  EXPECT_LT(rel_diff(apply_hspa(m, mode3_product(x, perm)), mode3_product(apply_hspa(m, x), perm)), 1e-14);
  const Cube y = apply_hspa(m, Cube(8, 8, 2, 0.3));
  for (Index i = 0; i < y.size(); ++i) EXPECT_NEAR(y.data()[i], 0.3, 1e-14);
}

TEST(Hspec, Basics) {
  std::mt19937_64 rng(4);
  const Cube x = random_cube(rng, 3, 4, 5);
  EXPECT_TRUE(apply_hspec({delta_kernel(), 1, Matrix::Identity(5, 5)}, x) == x);
  const Cube mean = apply_hspec({delta_kernel(), 1, Matrix::Constant(1, 5, 0.2)}, x);
  for (Index r = 0; r < 3; ++r)
    for (Index c = 0; c < 4; ++c) EXPECT_NEAR(mean(r, c, 0), x.fiber(r, c).mean(), 1e-14);
  const Matrix resp = random_matrix(rng, 2, 5);
  EXPECT_TRUE(apply_hspec({delta_kernel(), 1, resp}, x) == mode3_product(x, resp));
  EXPECT_THROW(apply_hspec({delta_kernel(), 1, Matrix::Identity(4, 4)}, x), DimensionError);
}

TEST(Adjoint, IdentityAndZero) {
  std::mt19937_64 rng(5);
  const DegradationModel id{delta_kernel(), 1, Matrix::Identity(3, 3)};
  const Cube y = random_cube(rng, 4, 4, 3);
  EXPECT_LT(rel_diff(adjoint_hspa(id, y), y), 1e-14);
  EXPECT_TRUE(adjoint_hspec(id, y) == y);
  const DegradationModel m{default_kernel(2), 2, band_average_response(2, 3)};
  EXPECT_EQ(adjoint_hspa(m, Cube(4, 4, 3)).norm(), 0.0);
  EXPECT_EQ(adjoint_hspec(m, Cube(4, 4, 2)).norm(), 0.0);
}

TEST(Adjoint, InnerProductIdentity) {
  std::mt19937_64 rng(6);
  for (int t = 0; t < 20; ++t) {
    const Index factors[] = {1, 2, 4};
    const DegradationModel m{random_kernel(rng, 3 + 2 * (t % 3)), factors[t % 3], random_matrix(rng, 2, 4)};
    const Index n = 4 * m.factor * (1 + t % 2);
    const Cube x = random_cube(rng, n, n, 4);
    const Cube y = random_cube(rng, n / m.factor, n / m.factor, 4);
    const double lhs = dot(apply_hspa(m, x), y), rhs = dot(x, adjoint_hspa(m, y));
    EXPECT_NEAR(lhs, rhs, 1e-10 * std::abs(lhs) + 1e-14);
    const Cube z = random_cube(rng, n, n, 2);
    const double l2 = dot(apply_hspec(m, x), z), r2 = dot(x, adjoint_hspec(m, z));
    EXPECT_NEAR(l2, r2, 1e-10 * std::abs(l2) + 1e-14);
  }
}

TEST(Sylvester, DiagonalCase) {
  std::mt19937_64 rng(7);
  const DegradationModel m{delta_kernel(), 1, Matrix::Identity(1, 1)};
  const Matrix h1 = random_spd(rng, 3), h3 = random_matrix(rng, 3, 20);
  const Matrix l = sylvester_solve(h1, m, h3, 2.0, 4, 5);
  const Matrix ref = (h1 + 2.0 * Matrix::Identity(3, 3)).ldlt().solve(h3);
  EXPECT_LT((l - ref).norm(), 1e-12 * ref.norm());
}

TEST(Sylvester, MatchesKroneckerDenseSolve) {
  std::mt19937_64 rng(8);
  const DegradationModel m{random_kernel(rng, 3), 2, Matrix::Identity(1, 1)};
  const Index rows = 4, cols = 4, p = rows * cols, k = 2;
  const Matrix h1 = random_spd(rng, k), h3 = random_matrix(rng, k, p);
  const Matrix bs = dense_spatial(m, rows, cols).transpose();
  const Matrix h2 = 1.5 * bs * bs.transpose();
  // vec (column-major) of H1 L + L H2 = (I kron H1 + H2^T kron I) vec(L)
  Matrix big = Matrix::Zero(k * p, k * p);
  for (Index a = 0; a < p; ++a)
    for (Index b = 0; b < p; ++b) {
      if (a == b) big.block(a * k, b * k, k, k) += h1;
      big.block(a * k, b * k, k, k) += h2(b, a) * Matrix::Identity(k, k);
    }
  const Vector sol = big.fullPivLu().solve(Eigen::Map<const Vector>(h3.data(), k * p));
  const Matrix ref = Eigen::Map<const Matrix>(sol.data(), k, p);
  const Matrix l = sylvester_solve(h1, m, h3, 1.5, rows, cols);
  EXPECT_LT((l - ref).norm(), 1e-8 * ref.norm());
}

TEST(Sylvester, ResidualOnRandomInstances) {
  std::mt19937_64 rng(9);
  for (int t = 0; t < 20; ++t) {
    const Index d = 1 + t % 3, k = 1 + t % 4, rows = 4 * d * (1 + t % 2), cols = 4 * d;
    const DegradationModel m{random_kernel(rng, 1 + 2 * (t % 3)), d, Matrix::Identity(1, 1)};
    const SpatialOperator op(m, rows, cols);
    const Matrix h1 = random_spd(rng, k), h3 = random_matrix(rng, k, rows * cols);
    const double mu = 0.5 + t;
    const Matrix l = sylvester_solve(h1, op, h3, mu);
    const Matrix res = h1 * l + mu * op.adjoint_rows(op.apply_rows(l)) - h3;
    EXPECT_LT(res.norm(), 1e-8 * h3.norm());
  }
}

TEST(Sylvester, ZeroRhsAndNonSpd) {
  const DegradationModel m{default_kernel(2), 2, Matrix::Identity(1, 1)};
  EXPECT_EQ(sylvester_solve(Matrix::Identity(2, 2), m, Matrix::Zero(2, 16), 1.0, 4, 4).norm(), 0.0);
  Matrix bad = Matrix::Identity(2, 2);
  bad(1, 1) = -1.0;
  EXPECT_THROW(sylvester_solve(bad, m, Matrix::Zero(2, 16), 1.0, 4, 4), NumericalError);
  EXPECT_THROW(sylvester_solve(Matrix::Identity(2, 2), m, Matrix::Zero(2, 15), 1.0, 5, 3), DimensionError);
}

TEST(EstimateDegradation, RecoversSyntheticModel) {
  std::mt19937_64 rng(10);
  const Index hb = 10, h = 3, d = 4;
  const DegradationModel truth{gaussian_kernel(2.0, 9), d, band_average_response(h, hb)};
  const Cube x = random_cube(rng, 64, 64, hb, 0.0, 1.0);
  const Cube y = apply_hspa(truth, x), z = apply_hspec(truth, x);
  const auto est = estimate_degradation(y, z, 1e-8, 1e-8, 9);
  EXPECT_EQ(est.model.factor, d);
  EXPECT_LT((est.model.response - truth.response).cwiseAbs().maxCoeff(), 1e-3);
  const Eigen::Map<const Vector> ka(est.model.kernel.data(), 81), kb(truth.kernel.data(), 81);
  const Vector ca = ka.array() - ka.mean(), cb = kb.array() - kb.mean();
  EXPECT_GT(ca.dot(cb) / (ca.norm() * cb.norm()), 0.99);
  EXPECT_NEAR(est.model.kernel.sum(), 1.0, 1e-12);
}

TEST(EstimateDegradation, IdentityResponseFixedPoint) {
  std::mt19937_64 rng(11);
  const DegradationModel m{default_kernel(2), 2, Matrix::Identity(3, 3)};
  const Cube z = random_cube(rng, 32, 32, 3, 0.0, 1.0);
  const auto est = estimate_degradation(apply_hspa(m, z), z, 1e-8, 1e-8, 5);
  EXPECT_LT((est.model.response - Matrix::Identity(3, 3)).cwiseAbs().maxCoeff(), 1e-3);
}

TEST(EstimateDegradation, Errors) {
  EXPECT_THROW(estimate_degradation(Cube(4, 4, 3), Cube(8, 8, 2), 1e-3, 1e-3, 3), DataError);
  EXPECT_THROW(estimate_degradation(Cube(4, 4, 3, 1.0), Cube(9, 8, 2, 1.0), 1e-3, 1e-3, 3), DimensionError);
  EXPECT_THROW(estimate_degradation(Cube(4, 4, 3, 1.0), Cube(8, 8, 2, 1.0), 1e-3, 1e-3, 4), ParameterError);
}
