#pragma once

// Reconstruction quality: PSNR, SSIM, ERGAS, SAM. Data are taken as
// normalized, peak 1.

#include <algorithm>
#include <cmath>
#include <string>

#include "rafnl/cube.hpp"
#include "rafnl/error.hpp"

namespace rafnl {

inline constexpr double kPsnrCap = 99.0;

struct MetricReport {
  double psnr = 0.0;   // dB
  double ssim = 0.0;
  double ergas = 0.0;
  double sam = 0.0;    // degrees
};

// Mean over bands of 10 log10(1 / MSE_b); each band is capped at kPsnrCap.
inline double psnr(const Cube& x, const Cube& ref) {
  x.require_same_shape(ref, "psnr");
  double s = 0.0;
  for (Index b = 0; b < x.bands(); ++b) {
    const double mse = (x.band(b) - ref.band(b)).squaredNorm() / static_cast<double>(x.pixels());
    s += mse > 0.0 ? std::min(kPsnrCap, -10.0 * std::log10(mse)) : kPsnrCap;
  }
  return s / static_cast<double>(x.bands());
}

// Same, without the cap; identical bands give +inf.
inline double psnr_uncapped(const Cube& x, const Cube& ref) {
  x.require_same_shape(ref, "psnr");
  double s = 0.0;
  for (Index b = 0; b < x.bands(); ++b)
    s += -10.0 * std::log10((x.band(b) - ref.band(b)).squaredNorm() / static_cast<double>(x.pixels()));
  return s / static_cast<double>(x.bands());
}

namespace detail {

inline Vector gaussian_taps(double sigma, Index radius) {
  Vector w(2 * radius + 1);
  for (Index i = -radius; i <= radius; ++i)
    w[i + radius] = std::exp(-0.5 * static_cast<double>(i * i) / (sigma * sigma));
  return w / w.sum();
}

// Separable correlation keeping only positions where the window fits.
inline RowMajorMatrix filter_valid(const RowMajorMatrix& img, const Vector& w) {
  const Index k = w.size(), r = img.rows() - k + 1, c = img.cols() - k + 1;
  RowMajorMatrix tmp = RowMajorMatrix::Zero(img.rows(), c);
  for (Index j = 0; j < k; ++j) tmp += w[j] * img.middleCols(j, c);
  RowMajorMatrix out = RowMajorMatrix::Zero(r, c);
  for (Index i = 0; i < k; ++i) out += w[i] * tmp.middleRows(i, r);
  return out;
}

inline double ssim_band(const RowMajorMatrix& x, const RowMajorMatrix& y) {
  const Vector w = gaussian_taps(1.5, 5);
  const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;  // (K L)^2 with L = 1
  const RowMajorMatrix mx = filter_valid(x, w), my = filter_valid(y, w);
  const RowMajorMatrix sxx = filter_valid(x.cwiseProduct(x), w) - mx.cwiseProduct(mx);
  const RowMajorMatrix syy = filter_valid(y.cwiseProduct(y), w) - my.cwiseProduct(my);
  const RowMajorMatrix sxy = filter_valid(x.cwiseProduct(y), w) - mx.cwiseProduct(my);
  const auto num = (2.0 * mx.array() * my.array() + c1) * (2.0 * sxy.array() + c2);
  const auto den = (mx.array().square() + my.array().square() + c1) * (sxx.array() + syy.array() + c2);
  return (num / den).mean();
}

}  // namespace detail

// Mean over bands of SSIM with an 11-tap Gaussian window (sigma 1.5),
// K1 = 0.01, K2 = 0.03, averaged over the positions where the window fits.
inline double ssim(const Cube& x, const Cube& ref) {
  x.require_same_shape(ref, "ssim");
  if (x.rows() < 11 || x.cols() < 11) throw DimensionError("ssim: bands must be at least 11x11, got " + x.shape());
  double s = 0.0;
  for (Index b = 0; b < x.bands(); ++b) s += detail::ssim_band(x.band(b), ref.band(b));
  return s / static_cast<double>(x.bands());
}

// (100 / d) sqrt(mean_b (RMSE_b / mean(ref_b))^2), d the resolution ratio.
inline double ergas(const Cube& x, const Cube& ref, double d) {
  x.require_same_shape(ref, "ergas");
  if (!(d > 0.0)) throw ParameterError("ergas: resolution ratio must be positive");
  double s = 0.0;
  for (Index b = 0; b < x.bands(); ++b) {
    const double mean = ref.band(b).mean();
    if (mean == 0.0) throw DataError("ergas: reference band " + std::to_string(b) + " has zero mean");
    const double mse = (x.band(b) - ref.band(b)).squaredNorm() / static_cast<double>(x.pixels());
    s += mse / (mean * mean);
  }
  return 100.0 / d * std::sqrt(s / static_cast<double>(x.bands()));
}

// Mean spectral angle in degrees; pixels where either fiber is zero are skipped.
inline double sam(const Cube& x, const Cube& ref) {
  x.require_same_shape(ref, "sam");
  const double deg = 180.0 / std::acos(-1.0);
  const auto xu = x.unfolded();
  const auto ru = ref.unfolded();
  double s = 0.0;
  Index n = 0;
  for (Index p = 0; p < x.pixels(); ++p) {
    const double nx = xu.col(p).norm(), nr = ru.col(p).norm();
    if (nx == 0.0 || nr == 0.0) continue;
    const double c = std::clamp(xu.col(p).dot(ru.col(p)) / (nx * nr), -1.0, 1.0);
    s += std::acos(c);
    ++n;
  }
  return n > 0 ? deg * s / static_cast<double>(n) : 0.0;
}

inline MetricReport evaluate(const Cube& x, const Cube& ref, double d) {
  if (!x.all_finite() || !ref.all_finite()) throw DataError("metrics: cubes contain NaN or Inf");
  return MetricReport{psnr(x, ref), ssim(x, ref), ergas(x, ref, d), sam(x, ref)};
}

}  // namespace rafnl
