#pragma once

// Per-band parametric warps, Keys bicubic resampling with edge replication,
// parameter Jacobians of warped bands and the linearized warp operator.
//
// A transform maps output pixel (x, y) = (col, row) to the source location it
// samples: (Y o tau)(x, y) = Y(tau(x, y)). With u = x - cx, v = y - cy and
// (cx, cy) the image centre:
//   TRANSLATION (tx, ty)                    src = (x + tx, y + ty)
//   SIMILARITY  (a, b, tx, ty)              src = [a -b; b a](u, v) + c + t
//   AFFINE      (a11, a12, a21, a22, tx, ty) src = [a11 a12; a21 a22](u, v) + c + t
//   RADIAL      (k1)                        src = (u, v)(1 + k1 r^2) + c,
//                                           r^2 = (u/sx)^2 + (v/sy)^2, sx = (cols-1)/2, sy = (rows-1)/2

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <string>
#include <vector>

#include "rafnl/cube.hpp"

namespace rafnl {

enum class WarpKind { TRANSLATION, SIMILARITY, AFFINE, RADIAL };

inline Index param_count(WarpKind k) {
  switch (k) {
    case WarpKind::TRANSLATION: return 2;
    case WarpKind::SIMILARITY: return 4;
    case WarpKind::AFFINE: return 6;
    case WarpKind::RADIAL: return 1;
  }
  return 0;
}

inline const char* warp_name(WarpKind k) {
  switch (k) {
    case WarpKind::TRANSLATION: return "translation";
    case WarpKind::SIMILARITY: return "similarity";
    case WarpKind::AFFINE: return "affine";
    case WarpKind::RADIAL: return "radial";
  }
  return "?";
}

inline WarpKind parse_warp_kind(const std::string& s) {
  for (WarpKind k : {WarpKind::TRANSLATION, WarpKind::SIMILARITY, WarpKind::AFFINE, WarpKind::RADIAL})
    if (s == warp_name(k)) return k;
  throw ParameterError("unknown transform kind '" + s + "'");
}

inline Vector identity_params(WarpKind k) {
  switch (k) {
    case WarpKind::TRANSLATION: return Vector::Zero(2);
    case WarpKind::SIMILARITY: return (Vector(4) << 1, 0, 0, 0).finished();
    case WarpKind::AFFINE: return (Vector(6) << 1, 0, 0, 1, 0, 0).finished();
    case WarpKind::RADIAL: return Vector::Zero(1);
  }
  return {};
}

struct TransformStack {
  WarpKind kind = WarpKind::TRANSLATION;
  std::vector<Vector> params;  // one vector per band

  static TransformStack identity(WarpKind kind, Index bands) {
    return {kind, std::vector<Vector>(static_cast<std::size_t>(bands), identity_params(kind))};
  }
  static TransformStack zeros(WarpKind kind, Index bands) {
    return {kind, std::vector<Vector>(static_cast<std::size_t>(bands), Vector::Zero(param_count(kind)))};
  }

  Index bands() const { return static_cast<Index>(params.size()); }
  const Vector& operator[](Index b) const { return params[static_cast<std::size_t>(b)]; }
  Vector& operator[](Index b) { return params[static_cast<std::size_t>(b)]; }

  void validate() const {
    for (std::size_t b = 0; b < params.size(); ++b) {
      const Vector& p = params[b];
      const std::string where = "transform band " + std::to_string(b);
      if (p.size() != param_count(kind))
        throw ParameterError(where + ": expected " + std::to_string(param_count(kind)) + " parameters, got " +
                             std::to_string(p.size()));
      if (!p.allFinite()) throw ParameterError(where + ": non-finite parameter");
      if (kind == WarpKind::SIMILARITY && p[0] * p[0] + p[1] * p[1] <= 1e-8)
        throw ParameterError(where + ": singular similarity");
      if (kind == WarpKind::AFFINE && std::abs(p[0] * p[3] - p[1] * p[2]) <= 1e-8)
        throw ParameterError(where + ": singular affine part");
      if (kind == WarpKind::RADIAL && std::abs(p[0]) >= 0.5)
        throw ParameterError(where + ": |k1| must be < 0.5, got " + std::to_string(p[0]));
    }
  }

  TransformStack& operator+=(const TransformStack& d) {
    if (d.kind != kind || d.bands() != bands()) throw DimensionError("transform increment does not match stack");
    for (std::size_t b = 0; b < params.size(); ++b) params[b] += d.params[b];
    return *this;
  }

  // Root-sum-square of all parameters.
  double norm() const {
    double s = 0.0;
    for (const auto& p : params) s += p.squaredNorm();
    return std::sqrt(s);
  }
};

// One line per band: "<kind> p1 p2 ...", %.17g so values round-trip exactly.
inline std::string to_text(const TransformStack& t) {
  std::string out;
  char buf[64];
  for (const auto& p : t.params) {
    out += warp_name(t.kind);
    for (Index i = 0; i < p.size(); ++i) {
      std::snprintf(buf, sizeof buf, " %.17g", p[i]);
      out += buf;
    }
    out += '\n';
  }
  return out;
}

inline TransformStack parse_transform_stack(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  TransformStack t;
  bool first = true;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string kind;
    ls >> kind;
    const WarpKind k = parse_warp_kind(kind);
    if (first) t.kind = k;
    else if (k != t.kind) throw ParameterError("transform line " + std::to_string(lineno) + ": mixed kinds");
    first = false;
    Vector p(param_count(k));
    for (Index i = 0; i < p.size(); ++i)
      if (!(ls >> p[i])) throw ParameterError("transform line " + std::to_string(lineno) + ": missing parameter");
    std::string extra;
    if (ls >> extra) throw ParameterError("transform line " + std::to_string(lineno) + ": trailing tokens");
    t.params.push_back(p);
  }
  if (t.params.empty()) throw ParameterError("transform file has no bands");
  t.validate();
  return t;
}

namespace detail {

constexpr double kKeysA = -0.5;

inline double keys(double t) {
  t = std::abs(t);
  if (t <= 1.0) return ((kKeysA + 2.0) * t - (kKeysA + 3.0)) * t * t + 1.0;
  if (t < 2.0) return ((kKeysA * t - 5.0 * kKeysA) * t + 8.0 * kKeysA) * t - 4.0 * kKeysA;
  return 0.0;
}

inline double keys_deriv(double t) {
  const double s = t < 0.0 ? -1.0 : 1.0;
  t = std::abs(t);
  if (t <= 1.0) return s * (3.0 * (kKeysA + 2.0) * t - 2.0 * (kKeysA + 3.0)) * t;
  if (t < 2.0) return s * ((3.0 * kKeysA * t - 10.0 * kKeysA) * t + 8.0 * kKeysA);
  return 0.0;
}

struct Sample {
  double value, dx, dy;
};

// Bicubic value and analytic gradient at (sx, sy); indices clamp to the edge.
template <typename Img>
Sample bicubic(const Img& img, double sx, double sy) {
  const Index rows = img.rows(), cols = img.cols();
  const double fx0 = std::floor(sx), fy0 = std::floor(sy);
  const double fx = sx - fx0, fy = sy - fy0;
  const Index x0 = static_cast<Index>(fx0), y0 = static_cast<Index>(fy0);
  std::array<double, 4> wx, wy, dwx, dwy;
  std::array<Index, 4> ix, iy;
  for (int k = 0; k < 4; ++k) {
    const double tx = fx - (k - 1), ty = fy - (k - 1);
    wx[k] = keys(tx);
    wy[k] = keys(ty);
    dwx[k] = keys_deriv(tx);
    dwy[k] = keys_deriv(ty);
    ix[k] = std::clamp<Index>(x0 + k - 1, 0, cols - 1);
    iy[k] = std::clamp<Index>(y0 + k - 1, 0, rows - 1);
  }
  Sample s{0.0, 0.0, 0.0};
  for (int a = 0; a < 4; ++a) {
    double row_v = 0.0, row_d = 0.0;
    for (int b = 0; b < 4; ++b) {
      const double v = img(iy[a], ix[b]);
      row_v += wx[b] * v;
      row_d += dwx[b] * v;
    }
    s.value += wy[a] * row_v;
    s.dx += wy[a] * row_d;
    s.dy += dwy[a] * row_v;
  }
  return s;
}

struct Geometry {
  double cx, cy, sx, sy;
  explicit Geometry(Index rows, Index cols)
      : cx(static_cast<double>(cols - 1) / 2.0),
        cy(static_cast<double>(rows - 1) / 2.0),
        sx(std::max(1.0, static_cast<double>(cols - 1) / 2.0)),
        sy(std::max(1.0, static_cast<double>(rows - 1) / 2.0)) {}
};

// Source location of output pixel (x, y) and optionally d(src)/d(params) (2 x p).
inline Eigen::Vector2d map_point(WarpKind kind, const Vector& p, const Geometry& g, double x, double y,
                                 Eigen::Matrix<double, 2, Eigen::Dynamic>* jac = nullptr) {
  const double u = x - g.cx, v = y - g.cy;
  Eigen::Vector2d src;
  if (jac) jac->setZero(2, param_count(kind));
  switch (kind) {
    case WarpKind::TRANSLATION:
      src << x + p[0], y + p[1];
      if (jac) (*jac)(0, 0) = (*jac)(1, 1) = 1.0;
      break;
    case WarpKind::SIMILARITY:
      src << p[0] * u - p[1] * v + g.cx + p[2], p[1] * u + p[0] * v + g.cy + p[3];
      if (jac) {
        (*jac)(0, 0) = u;
        (*jac)(0, 1) = -v;
        (*jac)(0, 2) = 1.0;
        (*jac)(1, 0) = v;
        (*jac)(1, 1) = u;
        (*jac)(1, 3) = 1.0;
      }
      break;
    case WarpKind::AFFINE:
      src << p[0] * u + p[1] * v + g.cx + p[4], p[2] * u + p[3] * v + g.cy + p[5];
      if (jac) {
        (*jac)(0, 0) = u;
        (*jac)(0, 1) = v;
        (*jac)(0, 4) = 1.0;
        (*jac)(1, 2) = u;
        (*jac)(1, 3) = v;
        (*jac)(1, 5) = 1.0;
      }
      break;
    case WarpKind::RADIAL: {
      const double un = u / g.sx, vn = v / g.sy;
      const double r2 = un * un + vn * vn;
      src << u * (1.0 + p[0] * r2) + g.cx, v * (1.0 + p[0] * r2) + g.cy;
      if (jac) {
        (*jac)(0, 0) = u * r2;
        (*jac)(1, 0) = v * r2;
      }
      break;
    }
  }
  return src;
}

inline void check_stack(const Cube& y, const TransformStack& tau) {
  if (tau.bands() != y.bands())
    throw DimensionError("transform stack has " + std::to_string(tau.bands()) + " bands, cube has " +
                         std::to_string(y.bands()));
  tau.validate();
}

}  // namespace detail

inline Cube warp_cube(const Cube& y, const TransformStack& tau) {
  detail::check_stack(y, tau);
  const detail::Geometry g(y.rows(), y.cols());
  Cube out(y.rows(), y.cols(), y.bands());
  for (Index b = 0; b < y.bands(); ++b) {
    const auto img = y.band(b);
    auto dst = out.band(b);
    for (Index r = 0; r < y.rows(); ++r)
      for (Index c = 0; c < y.cols(); ++c) {
        const Eigen::Vector2d s =
            detail::map_point(tau.kind, tau[b], g, static_cast<double>(c), static_cast<double>(r));
        dst(r, c) = detail::bicubic(img, s[0], s[1]).value;
      }
  }
  return out;
}

enum class JacobianForm {
  Normalized,  // d/dtau of vec(Y_i o tau) / ||vec(Y_i o tau)||
  Projected,   // ||v|| times the normalized form: (I - u u^T) d vec(Y_i o tau)/dtau
  Raw,         // d vec(Y_i o tau)/dtau
};

struct WarpJacobians {
  WarpKind kind = WarpKind::TRANSLATION;
  Index rows = 0, cols = 0;
  std::vector<Matrix> j;  // per band, (rows*cols) x p

  Index bands() const { return static_cast<Index>(j.size()); }
};

inline WarpJacobians warp_jacobian(const Cube& y, const TransformStack& tau,
                                   JacobianForm form = JacobianForm::Normalized) {
  detail::check_stack(y, tau);
  const detail::Geometry g(y.rows(), y.cols());
  const Index np = param_count(tau.kind), px = y.pixels();
  WarpJacobians out{tau.kind, y.rows(), y.cols(), {}};
  out.j.reserve(static_cast<std::size_t>(y.bands()));
  Eigen::Matrix<double, 2, Eigen::Dynamic> dsrc(2, np);
  for (Index b = 0; b < y.bands(); ++b) {
    const auto img = y.band(b);
    Matrix jr(px, np);
    Vector v(px);
    for (Index r = 0; r < y.rows(); ++r)
      for (Index c = 0; c < y.cols(); ++c) {
        const Eigen::Vector2d s =
            detail::map_point(tau.kind, tau[b], g, static_cast<double>(c), static_cast<double>(r), &dsrc);
        const detail::Sample smp = detail::bicubic(img, s[0], s[1]);
        v[r * y.cols() + c] = smp.value;
        jr.row(r * y.cols() + c) = smp.dx * dsrc.row(0) + smp.dy * dsrc.row(1);
      }
    if (form != JacobianForm::Raw) {
      const double nv = v.norm();
      if (nv == 0.0) throw DataError("warp_jacobian: band " + std::to_string(b) + " has zero norm after warping");
      const Vector u = v / nv;
      jr -= u * (u.transpose() * jr);
      if (form == JacobianForm::Normalized) jr /= nv;
    }
    out.j.push_back(std::move(jr));
  }
  return out;
}

// Band i of the result is reshape(J_i * dtau_i).
inline Cube apply_j(const WarpJacobians& j, const TransformStack& dtau) {
  if (dtau.bands() != j.bands() || dtau.kind != j.kind)
    throw DimensionError("apply_j: increment does not match Jacobians");
  Cube out(j.rows, j.cols, j.bands());
  for (Index b = 0; b < j.bands(); ++b) {
    if (dtau[b].size() != param_count(j.kind)) throw DimensionError("apply_j: wrong parameter count");
    const Vector col = j.j[static_cast<std::size_t>(b)] * dtau[b];
    out.band(b) = Eigen::Map<const RowMajorMatrix>(col.data(), j.rows, j.cols);
  }
  return out;
}

namespace detail {

// Least-squares solve of J x = m; falls back to a ridge of 1e-8 ||J||^2 when
// J^T J is numerically singular.
inline Vector lsq_with_ridge(const Matrix& j, const Vector& m) {
  const Matrix jtj = j.transpose() * j;
  const double scale = jtj.trace();
  if (scale == 0.0) return Vector::Zero(j.cols());
  Eigen::SelfAdjointEigenSolver<Matrix> eig(jtj, Eigen::EigenvaluesOnly);
  if (eig.eigenvalues().minCoeff() > 1e-10 * eig.eigenvalues().maxCoeff())
    return j.colPivHouseholderQr().solve(m);
  const Matrix reg = jtj + 1e-8 * scale * Matrix::Identity(j.cols(), j.cols());
  return reg.ldlt().solve(j.transpose() * m);
}

}  // namespace detail

// Per band dtau_i = J_i^+ vec(m_i). With shared = true a single increment is
// fitted to all bands at once and replicated.
inline TransformStack delta_tau_solve(const WarpJacobians& j, const Cube& m, bool shared = false) {
  if (m.rows() != j.rows || m.cols() != j.cols || m.bands() != j.bands())
    throw DimensionError("delta_tau_solve: residual shape " + m.shape() + " does not match Jacobians");
  const Index np = param_count(j.kind), px = j.rows * j.cols;
  TransformStack out = TransformStack::zeros(j.kind, j.bands());
  if (shared) {
    Matrix big(px * j.bands(), np);
    Vector rhs(px * j.bands());
    for (Index b = 0; b < j.bands(); ++b) {
      big.middleRows(b * px, px) = j.j[static_cast<std::size_t>(b)];
      rhs.segment(b * px, px) = Eigen::Map<const Vector>(m.band(b).data(), px);
    }
    const Vector d = detail::lsq_with_ridge(big, rhs);
    for (Index b = 0; b < j.bands(); ++b) out[b] = d;
    return out;
  }
  for (Index b = 0; b < j.bands(); ++b)
    out[b] = detail::lsq_with_ridge(j.j[static_cast<std::size_t>(b)], Eigen::Map<const Vector>(m.band(b).data(), px));
  return out;
}

}  // namespace rafnl
