#pragma once

// Separable 2-D DFT on row-major images, built from Eigen's 1-D FFT.
// Forward is unnormalized, inverse carries 1/(rows*cols).

#include <unsupported/Eigen/FFT>

#include <complex>
#include <vector>

#include "rafnl/cube.hpp"

namespace rafnl {

using ComplexImage = Eigen::Matrix<std::complex<double>, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

namespace detail {

inline Eigen::FFT<double>& fft_engine() {
  thread_local Eigen::FFT<double> engine;
  return engine;
}

inline void fft2_inplace(ComplexImage& a, bool inverse) {
  auto& fft = fft_engine();
  std::vector<std::complex<double>> in, out;
  in.resize(static_cast<std::size_t>(a.cols()));
  for (Index r = 0; r < a.rows(); ++r) {
    for (Index c = 0; c < a.cols(); ++c) in[static_cast<std::size_t>(c)] = a(r, c);
    if (inverse) fft.inv(out, in); else fft.fwd(out, in);
    for (Index c = 0; c < a.cols(); ++c) a(r, c) = out[static_cast<std::size_t>(c)];
  }
  in.resize(static_cast<std::size_t>(a.rows()));
  for (Index c = 0; c < a.cols(); ++c) {
    for (Index r = 0; r < a.rows(); ++r) in[static_cast<std::size_t>(r)] = a(r, c);
    if (inverse) fft.inv(out, in); else fft.fwd(out, in);
    for (Index r = 0; r < a.rows(); ++r) a(r, c) = out[static_cast<std::size_t>(r)];
  }
}

}  // namespace detail

template <typename Derived>
ComplexImage fft2(const Eigen::MatrixBase<Derived>& x) {
  ComplexImage a = x.template cast<std::complex<double>>();
  detail::fft2_inplace(a, false);
  return a;
}

inline RowMajorMatrix ifft2_real(ComplexImage a) {
  detail::fft2_inplace(a, true);
  return a.real();
}

}  // namespace rafnl
