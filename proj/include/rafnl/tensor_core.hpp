#pragma once

// t-product algebra on third-order tensors. Transform convention: the forward
// DFT along mode 3 is unnormalized, the inverse carries the 1/n3 factor, so
// tnn() is the mean nuclear norm of the transformed frontal slices.

#include <Eigen/Dense>

#include <complex>
#include <numbers>
#include <vector>

#include "rafnl/cube.hpp"

namespace rafnl {

using Complex = std::complex<double>;
using ComplexMatrix = Eigen::MatrixXcd;

// Frontal slices of fft(x, [], 3); slice k is rows x cols.
using Spectrum = std::vector<ComplexMatrix>;

namespace detail {

inline ComplexMatrix dft_matrix(Index n, bool inverse) {
  ComplexMatrix f(n, n);
  const double sign = inverse ? 1.0 : -1.0;
  for (Index k = 0; k < n; ++k)
    for (Index t = 0; t < n; ++t) {
      const double phase = sign * 2.0 * std::numbers::pi * static_cast<double>((k * t) % n) / static_cast<double>(n);
      f(k, t) = std::polar(1.0, phase);
    }
  return f;
}

// Number of leading slices that determine the rest by conjugate symmetry.
inline Index independent_slices(Index n3) { return n3 / 2 + 1; }

}  // namespace detail

inline Spectrum mode3_fft(const Cube& x) {
  const ComplexMatrix f = detail::dft_matrix(x.bands(), false);
  const ComplexMatrix hat = f * x.unfolded().cast<Complex>();
  Spectrum out(static_cast<std::size_t>(x.bands()));
  for (Index k = 0; k < x.bands(); ++k) {
    ComplexMatrix s(x.rows(), x.cols());
    for (Index r = 0; r < x.rows(); ++r)
      for (Index c = 0; c < x.cols(); ++c) s(r, c) = hat(k, r * x.cols() + c);
    out[static_cast<std::size_t>(k)] = std::move(s);
  }
  return out;
}

// Inverse of mode3_fft. The imaginary residue must vanish up to imag_tol
// relative to the result's magnitude; it is discarded afterwards.
inline Cube mode3_ifft(const Spectrum& slices, double imag_tol = 1e-10) {
  if (slices.empty()) throw DimensionError("mode3_ifft: empty spectrum");
  const Index n3 = static_cast<Index>(slices.size());
  const Index rows = slices[0].rows(), cols = slices[0].cols();
  ComplexMatrix hat(n3, rows * cols);
  for (Index k = 0; k < n3; ++k) {
    const auto& s = slices[static_cast<std::size_t>(k)];
    if (s.rows() != rows || s.cols() != cols) throw DimensionError("mode3_ifft: ragged slices");
    for (Index r = 0; r < rows; ++r)
      for (Index c = 0; c < cols; ++c) hat(k, r * cols + c) = s(r, c);
  }
  const ComplexMatrix back = detail::dft_matrix(n3, true) * hat / static_cast<double>(n3);
  const double re = back.real().norm();
  const double im = back.imag().norm();
  if (im > imag_tol * std::max(1.0, re))
    throw NumericalError("mode3_ifft: imaginary residue " + std::to_string(im) + " exceeds tolerance");
  Cube out(rows, cols, n3);
  out.unfolded() = back.real();
  return out;
}

// x ×₃ d: every spectral fiber is multiplied by d (K x bands).
inline Cube mode3_product(const Cube& x, const Eigen::Ref<const Matrix>& d) {
  if (d.cols() != x.bands())
    throw DimensionError("mode3_product: matrix has " + std::to_string(d.cols()) + " columns, cube has " +
                         std::to_string(x.bands()) + " bands");
  Cube out(x.rows(), x.cols(), d.rows());
  out.unfolded().noalias() = d * x.unfolded();
  return out;
}

inline Cube t_product(const Cube& a, const Cube& b) {
  if (a.cols() != b.rows() || a.bands() != b.bands())
    throw DimensionError("t_product: cannot multiply " + a.shape() + " by " + b.shape());
  const Spectrum ah = mode3_fft(a), bh = mode3_fft(b);
  Spectrum ch(ah.size());
  for (std::size_t k = 0; k < ah.size(); ++k) ch[k] = ah[k] * bh[k];
  return mode3_ifft(ch);
}

// Conjugate (t-)transpose: transpose every frontal slice and reverse slices 2..n3.
inline Cube t_transpose(const Cube& x) {
  const Index n3 = x.bands();
  Cube out(x.cols(), x.rows(), n3);
  for (Index b = 0; b < n3; ++b) {
    const Index src = b == 0 ? 0 : n3 - b;
    out.band(b) = x.band(src).transpose();
  }
  return out;
}

inline Cube t_identity(Index n, Index n3) {
  Cube out(n, n, n3);
  for (Index i = 0; i < n; ++i) out(i, i, 0) = 1.0;
  return out;
}

struct TSvdFactors {
  Cube u;  // n1 x n1 x n3
  Cube s;  // n1 x n2 x n3, f-diagonal
  Cube v;  // n2 x n2 x n3
};

namespace detail {

// Rotate the phase of each left singular vector so that its first entry with
// non-negligible magnitude is real and non-negative; V is rotated identically.
inline void normalize_phases(ComplexMatrix& u, ComplexMatrix& v) {
  for (Index j = 0; j < std::min(u.cols(), v.cols()); ++j) {
    const double scale = u.col(j).cwiseAbs().maxCoeff();
    for (Index i = 0; i < u.rows(); ++i) {
      if (std::abs(u(i, j)) > 1e-12 * scale) {
        const Complex phase = std::conj(u(i, j)) / std::abs(u(i, j));
        u.col(j) *= phase;
        v.col(j) *= phase;
        break;
      }
    }
  }
  for (Index j = v.cols(); j < u.cols(); ++j) {
    for (Index i = 0; i < u.rows(); ++i)
      if (std::abs(u(i, j)) > 1e-12) {
        u.col(j) *= std::conj(u(i, j)) / std::abs(u(i, j));
        break;
      }
  }
  for (Index j = u.cols(); j < v.cols(); ++j) {
    for (Index i = 0; i < v.rows(); ++i)
      if (std::abs(v(i, j)) > 1e-12) {
        v.col(j) *= std::conj(v(i, j)) / std::abs(v(i, j));
        break;
      }
  }
}

// DC slice and (for even n3) the Nyquist slice of a real tensor are real.
inline bool is_real_slice(Index k, Index n3) { return k == 0 || 2 * k == n3; }

struct SliceSvd {
  ComplexMatrix u;
  Vector s;
  ComplexMatrix v;
};

// SVD of one transformed slice. Real slices go through a real decomposition so
// their singular vectors stay real and the inverse transform stays real.
inline SliceSvd slice_svd(const ComplexMatrix& a, bool real, bool full) {
  const unsigned opts = full ? (Eigen::ComputeFullU | Eigen::ComputeFullV) : (Eigen::ComputeThinU | Eigen::ComputeThinV);
  if (real) {
    Eigen::BDCSVD<Matrix> svd(a.real(), opts);
    return {svd.matrixU().cast<Complex>(), svd.singularValues(), svd.matrixV().cast<Complex>()};
  }
  Eigen::BDCSVD<ComplexMatrix> svd(a, opts);
  return {svd.matrixU(), svd.singularValues(), svd.matrixV()};
}

// Singular values of every transformed slice (only the independent half is
// decomposed; the mirrored slices share singular values).
inline std::vector<Vector> slice_singular_values(const Spectrum& slices) {
  const Index n3 = static_cast<Index>(slices.size());
  std::vector<Vector> out(slices.size());
  for (Index k = 0; k < independent_slices(n3); ++k) {
    const auto& a = slices[static_cast<std::size_t>(k)];
    if (is_real_slice(k, n3))
      out[static_cast<std::size_t>(k)] = Eigen::BDCSVD<Matrix>(a.real()).singularValues();
    else
      out[static_cast<std::size_t>(k)] = Eigen::BDCSVD<ComplexMatrix>(a).singularValues();
  }
  for (Index k = independent_slices(n3); k < n3; ++k)
    out[static_cast<std::size_t>(k)] = out[static_cast<std::size_t>(n3 - k)];
  return out;
}

}  // namespace detail

inline TSvdFactors t_svd(const Cube& x) {
  const Index n1 = x.rows(), n2 = x.cols(), n3 = x.bands();
  const Spectrum xh = mode3_fft(x);
  Spectrum uh(xh.size()), sh(xh.size()), vh(xh.size());
  for (Index k = 0; k < detail::independent_slices(n3); ++k) {
    const auto kk = static_cast<std::size_t>(k);
    auto [u, sv, v] = detail::slice_svd(xh[kk], detail::is_real_slice(k, n3), true);
    detail::normalize_phases(u, v);
    ComplexMatrix s = ComplexMatrix::Zero(n1, n2);
    for (Index i = 0; i < sv.size(); ++i) s(i, i) = sv[i];
    uh[kk] = std::move(u);
    sh[kk] = std::move(s);
    vh[kk] = std::move(v);
  }
  for (Index k = detail::independent_slices(n3); k < n3; ++k) {
    const auto kk = static_cast<std::size_t>(k), mirror = static_cast<std::size_t>(n3 - k);
    uh[kk] = uh[mirror].conjugate();
    sh[kk] = sh[mirror];
    vh[kk] = vh[mirror].conjugate();
  }
  return {mode3_ifft(uh, 1e-8), mode3_ifft(sh, 1e-8), mode3_ifft(vh, 1e-8)};
}

inline double tnn(const Cube& x) {
  const auto sv = detail::slice_singular_values(mode3_fft(x));
  double total = 0.0;
  for (const auto& s : sv) total += s.sum();
  return total / static_cast<double>(x.bands());
}

// Mean rank of the transformed slices; a singular value counts when it
// exceeds tol times the largest singular value over all slices.
inline double average_rank(const Cube& x, double tol = 1e-10) {
  if (!(tol > 0.0)) throw ParameterError("average_rank: tol must be positive");
  const auto sv = detail::slice_singular_values(mode3_fft(x));
  double smax = 0.0;
  for (const auto& s : sv)
    if (s.size() > 0) smax = std::max(smax, s.maxCoeff());
  if (smax == 0.0) return 0.0;
  Index count = 0;
  for (const auto& s : sv) count += (s.array() > tol * smax).count();
  return static_cast<double>(count) / static_cast<double>(x.bands());
}

}  // namespace rafnl
