#pragma once

// Joint registration and fusion: an outer Gauss-Newton loop over the warp
// parameters, each step solving the linearized constrained model
//
//   min ||L||_TNN  s.t.  H_spa(L x3 D) = Y o tau + J(dtau),
//                        H_spec(L x3 D) = Z x3 A + B
//
// with a symmetric Gauss-Seidel ADMM sweep (dtau, L, dtau, (A,B), multipliers).
// B is a per-band offset.

#include <Eigen/Dense>

#include <chrono>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "rafnl/cube.hpp"
#include "rafnl/degradation.hpp"
#include "rafnl/error.hpp"
#include "rafnl/penalties.hpp"
#include "rafnl/tensor_core.hpp"
#include "rafnl/warp.hpp"

namespace rafnl {

// H x l, orthonormal columns.
using SpectralDict = Matrix;

struct RafConfig {
  double mu1 = 10.0, mu2 = 10.0, nu = 0.1;
  double rho = 1.618;
  Index subspace_dim = 3;
  double tol_outer = 1e-6;
  double tol_inner = 1e-5;
  int max_outer = 30;
  int max_inner = 300;   // sGS sweeps per Gauss-Newton step
  int max_l_admm = 5;    // L/G/O iterations inside one sweep
  bool shared_tau = false;
  bool init_backprojection = true;  // false: start from L = 0
  bool refresh_dict = true;         // re-estimate D from Y o tau at every Gauss-Newton step

  void validate(Index bands) const {
    if (!(mu1 > 0.0) || !(mu2 > 0.0) || !(nu > 0.0)) throw ParameterError("raf: mu1, mu2, nu must be positive");
    if (!(rho > 0.0 && rho < (1.0 + std::sqrt(5.0)) / 2.0))
      throw ParameterError("raf: rho must lie in (0, (1+sqrt5)/2), got " + std::to_string(rho));
    if (subspace_dim < 1 || subspace_dim > bands)
      throw ParameterError("raf: subspace_dim must be in [1, " + std::to_string(bands) + "], got " +
                           std::to_string(subspace_dim));
    if (!(tol_outer > 0.0) || !(tol_inner > 0.0)) throw ParameterError("raf: tolerances must be positive");
    if (max_outer < 1 || max_inner < 1 || max_l_admm < 1) throw ParameterError("raf: iteration caps must be >= 1");
  }
};

struct SweepStats {
  int sweeps = 0;
  double primal_spa = 0.0;   // ||c1|| / ||Y o tau||
  double primal_spec = 0.0;  // ||c2|| / ||Z||
  double split = 0.0;        // ||L - G|| / ||L||
  double change = 0.0;       // relative change of (L, dtau) over the last sweep
  bool converged = false;    // primal residuals and split below tolerance
  bool stalled = false;      // iterates stopped moving first (inconsistent linearization)
};

struct RafState {
  Cube coeff, aux;          // L, G
  TransformStack tau;       // current warp, LR pixel units
  TransformStack dtau;      // increment of the current linearization
  Matrix gain;              // A, h x h
  Vector offset;            // B, one value per MSI band
  Cube mult1, mult2, mult_g;
  SpectralDict dict;
  SweepStats stats;

  Cube fused() const { return mode3_product(coeff, dict); }
};

inline SpectralDict estimate_dict(const Cube& y, Index l) {
  if (l < 1 || l > y.bands())
    throw ParameterError("estimate_dict: l = " + std::to_string(l) + " outside [1, " + std::to_string(y.bands()) + "]");
  Eigen::BDCSVD<Matrix> svd(unfold3(y), Eigen::ComputeThinU);
  Matrix d = svd.matrixU().leftCols(l);
  // sign: the largest-magnitude entry of every column is positive
  for (Index j = 0; j < l; ++j) {
    Index i = 0;
    d.col(j).cwiseAbs().maxCoeff(&i);
    if (d(i, j) < 0.0) d.col(j) *= -1.0;
  }
  return d;
}

// Re-expresses the coefficient-space variables of s in the basis d.
inline void change_dict(RafState& s, const SpectralDict& d) {
  const Matrix t = d.transpose() * s.dict;
  s.coeff = mode3_product(s.coeff, t);
  s.aux = mode3_product(s.aux, t);
  s.mult_g = mode3_product(s.mult_g, t);
  s.dict = d;
}

inline double kappa_raf(const TransformStack& tau, const Matrix& gain, const Vector& offset, const Cube& y,
                        const Cube& z, const DegradationModel& model) {
  const SpatialOperator op(model, z.rows(), z.cols());
  const Cube lr_msi = op.apply(z);
  const double den = lr_msi.norm();
  if (den == 0.0) throw DataError("kappa_raf: H_spa(z) is zero");
  Cube zbar = mode3_product(z, gain);
  for (Index b = 0; b < zbar.bands(); ++b) zbar.band(b).array() += offset[b];
  const Cube num = apply_hspec(model, warp_cube(y, tau)) - op.apply(zbar);
  return num.norm() / den;
}

inline double kappa_raf(const RafState& s, const Cube& y, const Cube& z, const DegradationModel& model) {
  return kappa_raf(s.tau, s.gain, s.offset, y, z, model);
}

namespace detail {

inline void check_raf_shapes(const Cube& y, const Cube& z, const DegradationModel& model) {
  model.validate();
  if (!y.all_finite() || !z.all_finite()) throw DataError("raf: input cubes contain NaN or Inf");
  if (z.rows() != y.rows() * model.factor || z.cols() != y.cols() * model.factor)
    throw DimensionError("raf: HSI " + y.shape() + " and MSI " + z.shape() + " do not match factor " +
                         std::to_string(model.factor));
  if (model.response.rows() != z.bands() || model.response.cols() != y.bands())
    throw DimensionError("raf: response is " + std::to_string(model.response.rows()) + "x" +
                         std::to_string(model.response.cols()) + ", expected " + std::to_string(z.bands()) + "x" +
                         std::to_string(y.bands()));
}

// (h+1) x N design [Z_(3); 1] and its right pseudo-inverse W^T (W W^T + ridge)^-1.
inline Matrix gain_offset_pinv(const Cube& z) {
  const Index h = z.bands(), n = z.pixels();
  Matrix w(h + 1, n);
  w.topRows(h) = unfold3(z);
  w.row(h).setOnes();
  Matrix g = w * w.transpose();
  g.diagonal().array() += 1e-10 * g.trace() / static_cast<double>(h + 1);
  return w.transpose() * g.ldlt().solve(Matrix::Identity(h + 1, h + 1));
}

inline Cube apply_gain(const Cube& z, const Matrix& gain, const Vector& offset) {
  Cube out = mode3_product(z, gain);
  for (Index b = 0; b < out.bands(); ++b) out.band(b).array() += offset[b];
  return out;
}

inline void require_finite(const Cube& c, const char* what, int sweep, const SweepStats& s) {
  if (!c.all_finite())
    throw NumericalError(std::string("raf: non-finite ") + what + " at sweep " + std::to_string(sweep) +
                         " (primal_spa " + std::to_string(s.primal_spa) + ", primal_spec " +
                         std::to_string(s.primal_spec) + ")");
}

}  // namespace detail

// Starting point: tau = identity, A = I, B = 0, zero multipliers and
// L = (R D)^+ Z_(3) (or zero).
inline RafState raf_initial_state(const Cube& y, const Cube& z, const DegradationModel& model, const RafConfig& cfg,
                                  WarpKind kind) {
  detail::check_raf_shapes(y, z, model);
  cfg.validate(y.bands());
  RafState s;
  s.dict = estimate_dict(y, cfg.subspace_dim);
  const Index l = cfg.subspace_dim, h = z.bands();
  if (cfg.init_backprojection) {
    const Matrix rd = model.response * s.dict;
    s.coeff = fold3(rd.completeOrthogonalDecomposition().solve(unfold3(z)), z.rows(), z.cols());
  } else {
    s.coeff = Cube(z.rows(), z.cols(), l);
  }
  s.aux = s.coeff;
  s.tau = TransformStack::identity(kind, y.bands());
  s.dtau = TransformStack::zeros(kind, y.bands());
  s.gain = Matrix::Identity(h, h);
  s.offset = Vector::Zero(h);
  s.mult1 = Cube(y.rows(), y.cols(), y.bands());
  s.mult2 = Cube(z.rows(), z.cols(), h);
  s.mult_g = Cube(z.rows(), z.cols(), l);
  return s;
}

// One linearized subproblem. y_warped = Y o tau, j = Jacobians at tau.
// Returns the updated state; state.dtau holds the increment and state.tau is
// left untouched.
inline RafState sgs_admm_solve(const Cube& y_warped, const Cube& z, const WarpJacobians& j,
                               const DegradationModel& model, const RafConfig& cfg, const RafState& warm) {
  detail::check_raf_shapes(y_warped, z, model);
  cfg.validate(y_warped.bands());
  if (j.rows != y_warped.rows() || j.cols != y_warped.cols() || j.bands() != y_warped.bands())
    throw DimensionError("sgs_admm_solve: Jacobians do not match the HSI");
  const Index l = warm.dict.cols(), rows = z.rows(), cols = z.cols();
  if (warm.coeff.rows() != rows || warm.coeff.cols() != cols || warm.coeff.bands() != l ||
      warm.dict.rows() != y_warped.bands())
    throw DimensionError("sgs_admm_solve: warm state does not match inputs");

  const SpatialOperator op(model, rows, cols);
  const Matrix& d = warm.dict;
  const Matrix rd = model.response * d;
  Matrix h1 = cfg.mu2 * rd.transpose() * rd;
  h1.diagonal().array() += cfg.nu;
  h1 = 0.5 * (h1 + h1.transpose());
  const Matrix zpinv = detail::gain_offset_pinv(z);
  const Matrix z3 = unfold3(z);
  const PenaltySpec tnn_l1{PenaltyKind::L1, 1.0};
  const double ny = std::max(y_warped.norm(), std::numeric_limits<double>::min());
  const double nz = std::max(z.norm(), std::numeric_limits<double>::min());

  RafState s = warm;
  s.dtau = TransformStack::zeros(j.kind, j.bands());
  Cube zbar = detail::apply_gain(z, s.gain, s.offset);
  auto hspa_x = [&](const Cube& coeff) { return op.apply(mode3_product(coeff, d)); };

  s.stats = SweepStats{};
  for (int t = 1; t <= cfg.max_inner; ++t) {
    const Cube coeff_prev = s.coeff;
    const TransformStack dtau_prev = s.dtau;
    // dtau half-step
    Cube hx = hspa_x(s.coeff);
    s.dtau = delta_tau_solve(j, hx + (1.0 / cfg.mu1) * s.mult1 - y_warped, cfg.shared_tau);

    // L-step: inner ADMM on L = G
    const Cube p = y_warped + apply_j(j, s.dtau) - (1.0 / cfg.mu1) * s.mult1;
    const Cube q = zbar - (1.0 / cfg.mu2) * s.mult2;
    const Matrix base =
        cfg.mu1 * d.transpose() * op.adjoint_rows(unfold3(p)) + cfg.mu2 * rd.transpose() * unfold3(q);
    for (int it = 0; it < cfg.max_l_admm; ++it) {
      const Matrix h3 = base + cfg.nu * unfold3(s.aux) - unfold3(s.mult_g);
      s.coeff = fold3(sylvester_solve(h1, op, h3, cfg.mu1), rows, cols);
      s.aux = prox_tnn_psi(tnn_l1, 1.0 / cfg.nu, s.coeff + (1.0 / cfg.nu) * s.mult_g);
      const Cube gap = s.coeff - s.aux;
      s.mult_g += cfg.nu * gap;
      s.stats.split = gap.norm() / std::max(s.coeff.norm(), std::numeric_limits<double>::min());
      if (s.stats.split < cfg.tol_inner) break;
    }
    detail::require_finite(s.coeff, "coefficients", t, s.stats);

    // dtau full step
    hx = hspa_x(s.coeff);
    s.dtau = delta_tau_solve(j, hx + (1.0 / cfg.mu1) * s.mult1 - y_warped, cfg.shared_tau);

    // (A, B) by least squares against [Z; 1]
    const Matrix rdl = rd * unfold3(s.coeff);
    const Matrix ab = (rdl + (1.0 / cfg.mu2) * unfold3(s.mult2)) * zpinv;
    s.gain = ab.leftCols(z.bands());
    s.offset = ab.col(z.bands());
    zbar = detail::apply_gain(z, s.gain, s.offset);

    // multipliers
    const Cube c1 = hx - y_warped - apply_j(j, s.dtau);
    const Cube c2 = fold3(rdl, rows, cols) - zbar;
    s.mult1 += (cfg.rho * cfg.mu1) * c1;
    s.mult2 += (cfg.rho * cfg.mu2) * c2;

    s.stats.sweeps = t;
    s.stats.primal_spa = c1.norm() / ny;
    s.stats.primal_spec = c2.norm() / nz;
    detail::require_finite(s.mult1, "multiplier", t, s.stats);
    if (!s.dtau.params.empty() && !std::isfinite(s.dtau.norm()))
      throw NumericalError("raf: non-finite warp increment at sweep " + std::to_string(t));
    double dchange = 0.0;
    for (Index b = 0; b < s.dtau.bands(); ++b) dchange += (s.dtau[b] - dtau_prev[b]).squaredNorm();
    s.stats.change = std::max((s.coeff - coeff_prev).norm() / std::max(s.coeff.norm(), 1e-300),
                              std::sqrt(dchange) / (1.0 + s.dtau.norm()));
    s.stats.converged =
        s.stats.primal_spa < cfg.tol_inner && s.stats.primal_spec < cfg.tol_inner && s.stats.split < cfg.tol_inner;
    s.stats.stalled = t > 1 && s.stats.change < cfg.tol_inner;
    if (s.stats.converged || s.stats.stalled) break;
  }
  return s;
}

struct RafIterationLog {
  int iteration = 0;
  double kappa = 0.0;
  double tnn = 0.0;
  double dtau_norm = 0.0;
  int sweeps = 0;
  double wall_time = 0.0;  // seconds since start
};

struct RafResult {
  Cube x_fused, y_registered;
  TransformStack tau;
  Matrix gain;
  Vector offset;
  RafState state;
  std::vector<RafIterationLog> log;
  int iterations = 0;
  bool converged = false;
};

// With a warm state the dictionary and all variables are taken from it.
inline RafResult raf_run(const Cube& y, const Cube& z, const DegradationModel& model, const RafConfig& cfg,
                         WarpKind kind, const std::optional<RafState>& warm = std::nullopt) {
  using clock = std::chrono::steady_clock;
  const auto t0 = clock::now();
  RafState s = warm ? *warm : raf_initial_state(y, z, model, cfg, kind);
  if (warm) {
    detail::check_raf_shapes(y, z, model);
    cfg.validate(y.bands());
  }
  RafResult res;
  double kappa = kappa_raf(s, y, z, model);
  double best = std::numeric_limits<double>::infinity();
  RafState best_state = s;

  for (int k = 1; k <= cfg.max_outer; ++k) {
    const Cube yw = warp_cube(y, s.tau);
    if (cfg.refresh_dict) change_dict(s, estimate_dict(yw, cfg.subspace_dim));
    const WarpJacobians j = warp_jacobian(y, s.tau, JacobianForm::Projected);
    RafConfig step = cfg;
    step.tol_inner = std::max(cfg.tol_inner, 0.1 * kappa);
    s = sgs_admm_solve(yw, z, j, model, step, s);
    s.tau += s.dtau;
    s.tau.validate();
    kappa = kappa_raf(s, y, z, model);

    RafIterationLog entry;
    entry.iteration = k;
    entry.kappa = kappa;
    entry.tnn = tnn(s.coeff);
    entry.dtau_norm = s.dtau.norm();
    entry.sweeps = s.stats.sweeps;
    entry.wall_time = std::chrono::duration<double>(clock::now() - t0).count();
    res.log.push_back(entry);
    res.iterations = k;

    if (kappa < best) {
      best = kappa;
      best_state = s;
    }
    if (kappa < cfg.tol_outer) {
      res.converged = true;
      break;
    }
  }
  // non-converged runs hand back the best iterate seen
  if (!res.converged) s = best_state;
  res.state = s;
  res.tau = s.tau;
  res.gain = s.gain;
  res.offset = s.offset;
  res.x_fused = s.fused();
  res.y_registered = warp_cube(y, s.tau);
  return res;
}

}  // namespace rafnl
