#pragma once

// Spatial (blur + decimation) and spectral (response matrix) degradation,
// their adjoints, the FFT Sylvester solver used by every least-squares step,
// and joint estimation of kernel and response from an image pair.

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <string>

#include "rafnl/cube.hpp"
#include "rafnl/fft2.hpp"
#include "rafnl/tensor_core.hpp"

namespace rafnl {

struct DegradationModel {
  RowMajorMatrix kernel;  // centred at (rows/2, cols/2), applied circularly
  Index factor = 1;
  Matrix response;        // h x H

  void validate() const {
    if (kernel.size() == 0) throw ParameterError("degradation: empty kernel");
    if (factor < 1) throw ParameterError("degradation: factor must be >= 1, got " + std::to_string(factor));
    if (std::abs(kernel.sum() - 1.0) > 1e-8)
      throw ParameterError("degradation: kernel must sum to 1, sums to " + std::to_string(kernel.sum()));
    if (!kernel.allFinite() || !response.allFinite()) throw ParameterError("degradation: non-finite entries");
  }

  // Estimated responses may dip below zero; callers report it, nothing fails.
  bool response_nonnegative() const { return (response.array() >= 0.0).all(); }
};

inline RowMajorMatrix gaussian_kernel(double sigma, Index size) {
  if (!(sigma > 0.0)) throw ParameterError("gaussian_kernel: sigma must be positive");
  if (size < 1) throw ParameterError("gaussian_kernel: size must be positive");
  RowMajorMatrix k(size, size);
  const double c = static_cast<double>(size - 1) / 2.0;
  for (Index i = 0; i < size; ++i)
    for (Index j = 0; j < size; ++j) {
      const double di = static_cast<double>(i) - c, dj = static_cast<double>(j) - c;
      k(i, j) = std::exp(-(di * di + dj * dj) / (2.0 * sigma * sigma));
    }
  return k / k.sum();
}

// Gaussian with sigma = d/2 on a (2*ceil(2*sigma)+1)^2 support.
inline RowMajorMatrix default_kernel(Index factor) {
  const double sigma = static_cast<double>(factor) / 2.0;
  return gaussian_kernel(sigma, 2 * static_cast<Index>(std::ceil(2.0 * sigma)) + 1);
}

inline RowMajorMatrix delta_kernel() { return RowMajorMatrix::Ones(1, 1); }

// h contiguous groups of bands, each averaged.
inline Matrix band_average_response(Index h, Index bands) {
  if (h < 1 || h > bands) throw ParameterError("band_average_response: need 1 <= h <= bands");
  Matrix r = Matrix::Zero(h, bands);
  for (Index g = 0; g < h; ++g) {
    const Index lo = g * bands / h, hi = (g + 1) * bands / h;
    r.row(g).segment(lo, hi - lo).setConstant(1.0 / static_cast<double>(hi - lo));
  }
  return r;
}

inline DegradationModel default_model(Index factor, Index msi_bands, Index hsi_bands) {
  return {default_kernel(factor), factor, band_average_response(msi_bands, hsi_bands)};
}

// Precomputed spatial operator for one HR grid size.
class SpatialOperator {
 public:
  SpatialOperator(const DegradationModel& m, Index rows, Index cols) : rows_(rows), cols_(cols), d_(m.factor) {
    if (d_ < 1) throw ParameterError("spatial operator: factor must be >= 1");
    if (rows % d_ != 0 || cols % d_ != 0)
      throw DimensionError("spatial size " + std::to_string(rows) + "x" + std::to_string(cols) +
                           " is not divisible by factor " + std::to_string(d_));
    RowMajorMatrix wrapped = RowMajorMatrix::Zero(rows, cols);
    const Index ci = m.kernel.rows() / 2, cj = m.kernel.cols() / 2;
    for (Index i = 0; i < m.kernel.rows(); ++i)
      for (Index j = 0; j < m.kernel.cols(); ++j) {
        const Index r = ((i - ci) % rows + rows) % rows, c = ((j - cj) % cols + cols) % cols;
        wrapped(r, c) += m.kernel(i, j);
      }
    delta_ = wrapped(0, 0) == 1.0 && wrapped.cwiseAbs().sum() == 1.0;
    khat_ = fft2(wrapped);
    // Spectrum of A A^T on the low-resolution grid: decimated autocorrelation.
    const RowMajorMatrix autocorr = ifft2_real(ComplexImage(khat_.cwiseAbs2().cast<std::complex<double>>()));
    RowMajorMatrix dec(lr_rows(), lr_cols());
    for (Index i = 0; i < lr_rows(); ++i)
      for (Index j = 0; j < lr_cols(); ++j) dec(i, j) = autocorr(i * d_, j * d_);
    aat_ = fft2(dec).real();
  }

  Index rows() const { return rows_; }
  Index cols() const { return cols_; }
  Index lr_rows() const { return rows_ / d_; }
  Index lr_cols() const { return cols_ / d_; }
  Index factor() const { return d_; }
  const ComplexImage& kernel_spectrum() const { return khat_; }
  const RowMajorMatrix& aat_spectrum() const { return aat_; }

  template <typename Derived>
  RowMajorMatrix apply_band(const Eigen::MatrixBase<Derived>& x) const {
    // a delta kernel skips the FFT round trip so the identity model is exact
    const RowMajorMatrix blurred = delta_ ? RowMajorMatrix(x) : ifft2_real(ComplexImage(fft2(x).cwiseProduct(khat_)));
    if (d_ == 1) return blurred;
    RowMajorMatrix out(lr_rows(), lr_cols());
    for (Index i = 0; i < lr_rows(); ++i)
      for (Index j = 0; j < lr_cols(); ++j) out(i, j) = blurred(i * d_, j * d_);
    return out;
  }

  template <typename Derived>
  RowMajorMatrix adjoint_band(const Eigen::MatrixBase<Derived>& y) const {
    RowMajorMatrix up = RowMajorMatrix::Zero(rows_, cols_);
    for (Index i = 0; i < lr_rows(); ++i)
      for (Index j = 0; j < lr_cols(); ++j) up(i * d_, j * d_) = y(i, j);
    if (delta_) return up;
    return ifft2_real(ComplexImage(fft2(up).cwiseProduct(khat_.conjugate())));
  }

  Cube apply(const Cube& x) const {
    check_hr(x, "apply_hspa");
    Cube out(lr_rows(), lr_cols(), x.bands());
    for (Index b = 0; b < x.bands(); ++b) out.band(b) = apply_band(x.band(b));
    return out;
  }

  Cube adjoint(const Cube& y) const {
    if (y.rows() != lr_rows() || y.cols() != lr_cols())
      throw DimensionError("adjoint_hspa: expected " + std::to_string(lr_rows()) + "x" + std::to_string(lr_cols()) +
                           " spatial size, got " + y.shape());
    Cube out(rows_, cols_, y.bands());
    for (Index b = 0; b < y.bands(); ++b) out.band(b) = adjoint_band(y.band(b));
    return out;
  }

  // Rows of a (k x rows*cols) unfolding treated as images.
  Matrix apply_rows(const Matrix& m) const {
    Matrix out(m.rows(), lr_rows() * lr_cols());
    for (Index i = 0; i < m.rows(); ++i) {
      const RowMajorMatrix img = Eigen::Map<const RowMajorMatrix>(row_copy(m, i).data(), rows_, cols_);
      const RowMajorMatrix lr = apply_band(img);
      out.row(i) = Eigen::Map<const Eigen::RowVectorXd>(lr.data(), lr.size());
    }
    return out;
  }

  Matrix adjoint_rows(const Matrix& m) const {
    Matrix out(m.rows(), rows_ * cols_);
    for (Index i = 0; i < m.rows(); ++i) {
      const RowMajorMatrix img = Eigen::Map<const RowMajorMatrix>(row_copy(m, i).data(), lr_rows(), lr_cols());
      const RowMajorMatrix hr = adjoint_band(img);
      out.row(i) = Eigen::Map<const Eigen::RowVectorXd>(hr.data(), hr.size());
    }
    return out;
  }

 private:
  static Eigen::RowVectorXd row_copy(const Matrix& m, Index i) { return m.row(i); }

  void check_hr(const Cube& x, const char* what) const {
    if (x.rows() != rows_ || x.cols() != cols_)
      throw DimensionError(std::string(what) + ": expected " + std::to_string(rows_) + "x" + std::to_string(cols_) +
                           " spatial size, got " + x.shape());
  }

  Index rows_, cols_, d_;
  bool delta_ = false;
  ComplexImage khat_;
  RowMajorMatrix aat_;
};

inline Cube apply_hspa(const DegradationModel& m, const Cube& x) {
  return SpatialOperator(m, x.rows(), x.cols()).apply(x);
}

inline Cube adjoint_hspa(const DegradationModel& m, const Cube& y) {
  return SpatialOperator(m, y.rows() * m.factor, y.cols() * m.factor).adjoint(y);
}

inline Cube apply_hspec(const DegradationModel& m, const Cube& x) { return mode3_product(x, m.response); }

inline Cube adjoint_hspec(const DegradationModel& m, const Cube& z) {
  if (m.response.rows() != z.bands())
    throw DimensionError("adjoint_hspec: response has " + std::to_string(m.response.rows()) + " rows, cube has " +
                         std::to_string(z.bands()) + " bands");
  return mode3_product(z, m.response.transpose());
}

// Solves H1 L + mu1 * L (BS)(BS)^T = H3 for L (k x rows*cols).
// H1 = Q diag(lambda) Q^T decouples the rows; each row then solves
// (lambda I + mu1 A^T A) l = h with A = decimate o blur, inverted by the
// Woodbury identity l = (h - mu1 A^T (lambda + mu1 A A^T)^{-1} A h) / lambda,
// where A A^T is circulant on the low-resolution grid.
inline Matrix sylvester_solve(const Matrix& h1, const SpatialOperator& op, const Matrix& h3, double mu1) {
  const Index k = h1.rows();
  if (h1.cols() != k || h3.rows() != k || h3.cols() != op.rows() * op.cols())
    throw DimensionError("sylvester_solve: h1 is " + std::to_string(h1.rows()) + "x" + std::to_string(h1.cols()) +
                         ", h3 is " + std::to_string(h3.rows()) + "x" + std::to_string(h3.cols()));
  if (!(mu1 >= 0.0)) throw ParameterError("sylvester_solve: mu1 must be nonnegative");
  if ((h1 - h1.transpose()).norm() > 1e-10 * std::max(1.0, h1.norm()))
    throw NumericalError("sylvester_solve: h1 is not symmetric");
  Eigen::SelfAdjointEigenSolver<Matrix> eig(h1);
  if (eig.info() != Eigen::Success) throw NumericalError("sylvester_solve: eigen-decomposition of h1 failed");
  const Vector lam = eig.eigenvalues();
  if (lam.minCoeff() <= 0.0)
    throw NumericalError("sylvester_solve: h1 is not positive definite (min eigenvalue " +
                         std::to_string(lam.minCoeff()) + ")");
  const Matrix& q = eig.eigenvectors();
  const Matrix h3t = q.transpose() * h3;
  Matrix lt(k, h3.cols());
  for (Index i = 0; i < k; ++i) {
    const Eigen::RowVectorXd hrow = h3t.row(i);
    const Eigen::Map<const RowMajorMatrix> h(hrow.data(), op.rows(), op.cols());
    RowMajorMatrix result = h;
    if (mu1 > 0.0) {
      const ComplexImage ah = fft2(op.apply_band(h));
      const ComplexImage scaled =
          ah.cwiseQuotient((lam[i] + mu1 * op.aat_spectrum().array()).matrix().cast<std::complex<double>>());
      const RowMajorMatrix w = ifft2_real(scaled);
      result -= mu1 * op.adjoint_band(w);
    }
    result /= lam[i];
    lt.row(i) = Eigen::Map<const Eigen::RowVectorXd>(result.data(), result.size());
  }
  return q * lt;
}

inline Matrix sylvester_solve(const Matrix& h1, const DegradationModel& m, const Matrix& h3, double mu1, Index rows,
                              Index cols) {
  return sylvester_solve(h1, SpatialOperator(m, rows, cols), h3, mu1);
}

struct DegradationEstimate {
  DegradationModel model;
  int iterations = 0;
  double objective = 0.0;
  bool converged = false;
};

namespace detail {

// First-difference operator along a length-n vector ((n-1) x n).
inline Matrix first_difference(Index n) {
  Matrix d = Matrix::Zero(std::max<Index>(n - 1, 0), n);
  for (Index i = 0; i + 1 < n; ++i) {
    d(i, i) = -1.0;
    d(i, i + 1) = 1.0;
  }
  return d;
}

// Horizontal and vertical first differences of a size x size kernel (row-major vec).
inline Matrix kernel_difference(Index size) {
  const Index n = size * size;
  Matrix g = Matrix::Zero(2 * size * (size - 1), n);
  Index row = 0;
  for (Index i = 0; i < size; ++i)
    for (Index j = 0; j + 1 < size; ++j, ++row) {
      g(row, i * size + j) = -1.0;
      g(row, i * size + j + 1) = 1.0;
    }
  for (Index i = 0; i + 1 < size; ++i)
    for (Index j = 0; j < size; ++j, ++row) {
      g(row, i * size + j) = -1.0;
      g(row, (i + 1) * size + j) = 1.0;
    }
  return g;
}

}  // namespace detail

// Fits R (h x H) and a kernel (kernel_size^2, summing to 1) to
//   min ||R Y - Hspa_k(Z)||^2 + lambda_r ||R Dr^T||^2 + lambda_b ||G k||^2
// by alternating exact block solves. Y is the low-resolution HSI, Z the MSI.
inline DegradationEstimate estimate_degradation(const Cube& y, const Cube& z, double lambda_r, double lambda_b,
                                                Index kernel_size, int max_iter = 50, double tol = 1e-6) {
  if (!(lambda_r > 0.0) || !(lambda_b > 0.0)) throw ParameterError("estimate_degradation: lambdas must be positive");
  if (kernel_size < 1 || kernel_size % 2 == 0) throw ParameterError("estimate_degradation: kernel_size must be odd");
  if (z.rows() % y.rows() != 0 || z.cols() % y.cols() != 0 || z.rows() / y.rows() != z.cols() / y.cols())
    throw DimensionError("estimate_degradation: MSI size " + z.shape() + " is not an integer multiple of HSI size " +
                         y.shape());
  if (y.norm() == 0.0 || z.norm() == 0.0) throw DataError("estimate_degradation: all-zero input, system is degenerate");
  const Index d = z.rows() / y.rows();
  const Index lr = y.rows(), lc = y.cols(), npx = lr * lc, h = z.bands(), hb = y.bands();
  const Index taps = kernel_size * kernel_size, c0 = kernel_size / 2;

  // Column t of M: decimated, shifted MSI for kernel tap t, all MSI bands stacked.
  Matrix mm(h * npx, taps);
  for (Index ti = 0; ti < kernel_size; ++ti)
    for (Index tj = 0; tj < kernel_size; ++tj) {
      const Index oi = ti - c0, oj = tj - c0;
      for (Index b = 0; b < h; ++b)
        for (Index i = 0; i < lr; ++i)
          for (Index j = 0; j < lc; ++j) {
            const Index si = ((i * d - oi) % z.rows() + z.rows()) % z.rows();
            const Index sj = ((j * d - oj) % z.cols() + z.cols()) % z.cols();
            mm(b * npx + i * lc + j, ti * kernel_size + tj) = z(si, sj, b);
          }
    }
  const Matrix yu = unfold3(y);
  const Matrix dr = detail::first_difference(hb);
  const Matrix yyt = yu * yu.transpose() + lambda_r * dr.transpose() * dr;
  const Eigen::LDLT<Matrix> yyt_fact(yyt);
  const Matrix g = detail::kernel_difference(kernel_size);
  const Matrix mtm = mm.transpose() * mm + lambda_b * g.transpose() * g;
  Matrix kkt = Matrix::Zero(taps + 1, taps + 1);
  kkt.topLeftCorner(taps, taps) = mtm;
  kkt.block(0, taps, taps, 1).setOnes();
  kkt.block(taps, 0, 1, taps).setOnes();
  const Eigen::FullPivLU<Matrix> kkt_fact(kkt);
  if (kkt_fact.rank() < taps + 1) throw DataError("estimate_degradation: kernel system is singular");

  const RowMajorMatrix k0 = gaussian_kernel(std::max(0.5, static_cast<double>(d) / 2.0), kernel_size);
  Vector k = Eigen::Map<const Vector>(k0.data(), taps);
  Matrix r(h, hb);
  auto blurred = [&](const Vector& kv) {
    const Vector w = mm * kv;
    return Matrix(Eigen::Map<const Matrix>(w.data(), npx, h).transpose());
  };
  auto objective = [&](const Matrix& rr, const Vector& kv) {
    return (rr * yu - blurred(kv)).squaredNorm() + lambda_r * (rr * dr.transpose()).squaredNorm() +
           lambda_b * (g * kv).squaredNorm();
  };

  DegradationEstimate est;
  double prev = std::numeric_limits<double>::infinity();
  for (int it = 1; it <= max_iter; ++it) {
    r = yyt_fact.solve(yu * blurred(k).transpose()).transpose();
    const Matrix ry = r * yu;
    Vector rhs(taps + 1);
    rhs.head(taps) = mm.transpose() * Eigen::Map<const Vector>(Matrix(ry.transpose()).data(), h * npx);
    rhs[taps] = 1.0;
    k = kkt_fact.solve(rhs).head(taps);
    const double obj = objective(r, k);
    est.iterations = it;
    est.objective = obj;
    if (!std::isfinite(obj)) throw NumericalError("estimate_degradation: objective is not finite");
    if (std::abs(prev - obj) <= tol * std::max(obj, 1e-300)) {
      est.converged = true;
      break;
    }
    prev = obj;
  }
  RowMajorMatrix kernel = Eigen::Map<const RowMajorMatrix>(k.data(), kernel_size, kernel_size);
  kernel /= kernel.sum();
  est.model = DegradationModel{kernel, d, r};
  return est;
}

}  // namespace rafnl
