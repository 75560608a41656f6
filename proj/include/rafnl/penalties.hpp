#pragma once

// Sparsity penalties psi and their proximal maps: scalar, on the singular
// values of FFT-domain frontal slices, and on mode-3 fibers.

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>

#include "rafnl/cube.hpp"
#include "rafnl/tensor_core.hpp"

namespace rafnl {

enum class PenaltyKind { L1, LOG, MCP };

struct PenaltySpec {
  PenaltyKind kind = PenaltyKind::MCP;
  double theta = 8.0;  // ignored for L1

  void validate() const {
    if (kind != PenaltyKind::L1 && !(theta > 0.0 && std::isfinite(theta)))
      throw ParameterError("penalty theta must be positive, got " + std::to_string(theta));
  }
};

inline const char* penalty_name(PenaltyKind k) {
  switch (k) {
    case PenaltyKind::L1: return "l1";
    case PenaltyKind::LOG: return "log";
    case PenaltyKind::MCP: return "mcp";
  }
  return "?";
}

inline PenaltyKind parse_penalty_kind(const std::string& s) {
  if (s == "l1" || s == "L1") return PenaltyKind::L1;
  if (s == "log" || s == "LOG") return PenaltyKind::LOG;
  if (s == "mcp" || s == "MCP") return PenaltyKind::MCP;
  throw ParameterError("unknown penalty kind '" + s + "'");
}

// LOG is shifted by -log(theta) so that psi(0) = 0; the prox is unaffected.
inline double psi_eval(const PenaltySpec& p, double x) {
  const double a = std::abs(x);
  switch (p.kind) {
    case PenaltyKind::L1: return a;
    case PenaltyKind::LOG: return std::log1p(a / p.theta);
    case PenaltyKind::MCP: return a <= p.theta ? a - a * a / (2.0 * p.theta) : 0.5 * p.theta;
  }
  return a;
}

// argmin_x alpha*psi(x) + (x - z)^2 / 2. Ties go to 0.
inline double prox_scalar(const PenaltySpec& p, double alpha, double z) {
  if (!(alpha > 0.0)) throw ParameterError("prox_scalar: alpha must be positive, got " + std::to_string(alpha));
  const double a = std::abs(z);
  const double s = z < 0.0 ? -1.0 : 1.0;
  switch (p.kind) {
    case PenaltyKind::L1:
      return a > alpha ? s * (a - alpha) : 0.0;
    case PenaltyKind::MCP: {
      const double th = p.theta;
      if (alpha < th) {
        // strictly convex objective: firm thresholding
        if (a <= alpha) return 0.0;
        if (a <= th) return s * (a - alpha) / (1.0 - alpha / th);
        return z;
      }
      // alpha >= theta: only 0 and z are candidates, hard threshold at sqrt(alpha*theta)
      return a > std::sqrt(alpha * th) ? z : 0.0;
    }
    case PenaltyKind::LOG: {
      const double th = p.theta;
      const double ra = a - th;
      const double disc = ra * ra - 4.0 * (alpha - th * a);
      if (disc <= 0.0) return 0.0;
      const double x = 0.5 * (ra + std::sqrt(disc));
      if (x <= 0.0) return 0.0;
      const double fx = alpha * std::log1p(x / th) + 0.5 * (x - a) * (x - a);
      const double f0 = 0.5 * a * a;
      return fx < f0 ? s * x : 0.0;
    }
  }
  return 0.0;
}

namespace detail {

inline Cube shrink_slices(const Cube& a, const std::function<double(double)>& shrink) {
  const Index n3 = a.bands();
  Spectrum ah = mode3_fft(a);
  for (Index k = 0; k < independent_slices(n3); ++k) {
    auto& slice = ah[static_cast<std::size_t>(k)];
    auto [u, s, v] = slice_svd(slice, is_real_slice(k, n3), false);
    Vector d = s.unaryExpr(shrink);
    slice = u * d.cast<Complex>().asDiagonal() * v.adjoint();
    if (is_real_slice(k, n3)) slice = slice.real().cast<Complex>();
  }
  for (Index k = independent_slices(n3); k < n3; ++k)
    ah[static_cast<std::size_t>(k)] = ah[static_cast<std::size_t>(n3 - k)].conjugate();
  return mode3_ifft(ah, 1e-8);
}

}  // namespace detail

// (1/n3) * sum of psi over the singular values of every FFT-domain slice.
inline double norm_psi(const PenaltySpec& p, const Cube& x) {
  p.validate();
  const auto sv = detail::slice_singular_values(mode3_fft(x));
  double total = 0.0;
  for (const auto& s : sv)
    for (Index i = 0; i < s.size(); ++i) total += psi_eval(p, s[i]);
  return total / static_cast<double>(x.bands());
}

// argmin_X alpha*||X||_psi + ||X - A||_F^2 / 2 via slice-wise singular value prox.
// The 1/n3 weight in ||.||_psi and the 1/n3 Parseval factor cancel, so each
// FFT-domain singular value is shrunk with the same alpha.
inline Cube prox_tnn_psi(const PenaltySpec& p, double alpha, const Cube& a) {
  p.validate();
  if (!(alpha > 0.0)) throw ParameterError("prox_tnn_psi: alpha must be positive");
  return detail::shrink_slices(a, [&](double s) { return std::max(0.0, prox_scalar(p, alpha, s)); });
}

// Sum over pixels of psi(fiber norm).
inline double norm_group(const PenaltySpec& p, const Cube& e) {
  p.validate();
  const RowMajorMatrix n = fiber_norms(e);
  double total = 0.0;
  for (Index i = 0; i < n.size(); ++i) total += psi_eval(p, n.data()[i]);
  return total;
}

inline Cube prox_group(const PenaltySpec& p, double beta, const Cube& z) {
  p.validate();
  if (!(beta > 0.0)) throw ParameterError("prox_group: beta must be positive");
  const RowMajorMatrix n = fiber_norms(z);
  Cube out(z.rows(), z.cols(), z.bands());
  for (Index r = 0; r < z.rows(); ++r)
    for (Index c = 0; c < z.cols(); ++c) {
      const double nrm = n(r, c);
      if (nrm == 0.0) continue;
      const double scale = std::max(0.0, prox_scalar(p, beta, nrm)) / nrm;
      for (Index b = 0; b < z.bands(); ++b) out(r, c, b) = scale * z(r, c, b);
    }
  return out;
}

}  // namespace rafnl
