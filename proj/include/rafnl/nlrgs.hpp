#pragma once

// Low-rank + group-sparse refinement. X = L x3 D_L + E x3 D_E with D_L, D_E
// consecutive left singular blocks of the registered HSI. PAO alternates a
// proximal L step (inner ADMM, clustered t-SVT with psi) and a proximal E step
// (block coordinate descent with fiberwise psi shrinkage) on
//
//   g(L, E) = q(L, E) + alpha * sum_i ||L_i||_psi + beta * ||E||_{F,psi}
//   q(L, E) = ||H_spa(X) - Y||^2 + ||H_spec(X) - Z||^2.
//
// L_i gathers the patches of cluster i into a (p*p) x n_i x l1 block.

#include <Eigen/Dense>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "rafnl/cube.hpp"
#include "rafnl/degradation.hpp"
#include "rafnl/error.hpp"
#include "rafnl/penalties.hpp"
#include "rafnl/raf.hpp"
#include "rafnl/tensor_core.hpp"

namespace rafnl {

struct PatchSpec {
  Index size = 6;
  Index overlap = 4;
};

struct NlrgsConfig {
  Index l1 = 3, l2 = 2;
  double alpha = 1e-4, beta = 1e-4;
  double lambda = 1e-4;
  double mu_l = 5e-3, mu_e = 5e-3;
  double theta = 8.0;
  Index n_clusters = 150;
  PatchSpec patch;
  double tol = 1e-4;
  int max_iter = 30;
  int max_admm = 20;
  int max_bcd = 20;
  std::uint64_t seed = 0;        // k-means
  bool use_corrected_z = false;  // pipeline: feed Z x3 A + B from the registration stage

  PenaltySpec penalty() const { return PenaltySpec{PenaltyKind::MCP, theta}; }

  void validate(Index bands) const {
    if (l1 < 1 || l2 < 0 || l1 + l2 > bands)
      throw ParameterError("nlrgs: need l1 >= 1, l2 >= 0, l1 + l2 <= " + std::to_string(bands) + ", got l1 = " +
                           std::to_string(l1) + ", l2 = " + std::to_string(l2));
    if (!(alpha >= 0.0) || !(beta >= 0.0) || !(mu_l >= 0.0) || !(mu_e >= 0.0))
      throw ParameterError("nlrgs: alpha, beta, mu_l, mu_e must be nonnegative");
    if (!(lambda > 0.0)) throw ParameterError("nlrgs: lambda must be positive");
    if (alpha > 0.0 && !(mu_l > 0.0)) throw ParameterError("nlrgs: alpha > 0 needs mu_l > 0");
    if (beta > 0.0 && !(mu_e > 0.0)) throw ParameterError("nlrgs: beta > 0 needs mu_e > 0");
    if (patch.size < 1 || patch.overlap < 0 || patch.overlap >= patch.size)
      throw ParameterError("nlrgs: patch overlap must lie in [0, size)");
    if (n_clusters < 1) throw ParameterError("nlrgs: n_clusters must be >= 1");
    if (!(tol > 0.0) || max_iter < 1 || max_admm < 1 || max_bcd < 1)
      throw ParameterError("nlrgs: tol and iteration caps must be positive");
    penalty().validate();
  }
};

// ---- dictionaries ----

struct NlrgsDicts {
  SpectralDict low_rank, residual;  // D_L (H x l1), D_E (H x l2)
};

inline NlrgsDicts estimate_dicts(const Cube& y_registered, Index l1, Index l2) {
  if (l1 < 1 || l2 < 0 || l1 + l2 > y_registered.bands())
    throw ParameterError("estimate_dicts: l1 + l2 = " + std::to_string(l1 + l2) + " exceeds " +
                         std::to_string(y_registered.bands()) + " bands");
  // full U so the complement is available even when Y_R is rank deficient
  Eigen::BDCSVD<Matrix> svd(unfold3(y_registered), Eigen::ComputeFullU);
  Matrix u = svd.matrixU();
  for (Index j = 0; j < u.cols(); ++j) {
    Index i = 0;
    u.col(j).cwiseAbs().maxCoeff(&i);
    if (u(i, j) < 0.0) u.col(j) *= -1.0;
  }
  return NlrgsDicts{u.leftCols(l1), u.middleCols(l1, l2)};
}

// ---- patches and clusters ----

struct ClusterIndex {
  Index rows = 0, cols = 0, size = 0;
  std::vector<std::pair<Index, Index>> origins;  // top-left corner of every patch
  std::vector<Index> assignment;                 // patch -> cluster
  std::vector<std::vector<Index>> members;       // cluster -> patches, ascending

  Index clusters() const { return static_cast<Index>(members.size()); }
  Index patches() const { return static_cast<Index>(origins.size()); }
};

// Origins 0, step, 2*step, ... plus a final one flush with the far edge.
inline std::vector<Index> patch_starts(Index dim, const PatchSpec& p) {
  if (p.size > dim) throw DimensionError("patch size " + std::to_string(p.size) + " exceeds dimension " + std::to_string(dim));
  const Index step = p.size - p.overlap;
  std::vector<Index> s;
  for (Index o = 0; o + p.size <= dim; o += step) s.push_back(o);
  if (s.back() != dim - p.size) s.push_back(dim - p.size);
  return s;
}

namespace detail {

inline Vector patch_vector(const Cube& x, Index r0, Index c0, Index ps) {
  Vector v(ps * ps * x.bands());
  Index k = 0;
  for (Index b = 0; b < x.bands(); ++b)
    for (Index i = 0; i < ps; ++i)
      for (Index j = 0; j < ps; ++j) v[k++] = x(r0 + i, c0 + j, b);
  return v;
}

}  // namespace detail

// Seeded k-means++ then Lloyd iterations on flattened patches (all bands).
// Empty clusters steal the worst-fitting patch of a cluster with >1 member.
inline ClusterIndex cluster_patches(const Cube& coeff, const NlrgsConfig& cfg, std::uint64_t seed) {
  const Index ps = cfg.patch.size;
  if (ps > coeff.rows() || ps > coeff.cols())
    throw DimensionError("cluster_patches: patch size " + std::to_string(ps) + " exceeds " + coeff.shape());
  ClusterIndex idx;
  idx.rows = coeff.rows();
  idx.cols = coeff.cols();
  idx.size = ps;
  for (Index r : patch_starts(coeff.rows(), cfg.patch))
    for (Index c : patch_starts(coeff.cols(), cfg.patch)) idx.origins.emplace_back(r, c);
  const Index n = idx.patches(), k = cfg.n_clusters;
  if (k > n)
    throw ParameterError("cluster_patches: " + std::to_string(k) + " clusters requested, only " + std::to_string(n) +
                         " patches");

  Matrix feat(ps * ps * coeff.bands(), n);
  for (Index p = 0; p < n; ++p) feat.col(p) = detail::patch_vector(coeff, idx.origins[p].first, idx.origins[p].second, ps);

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Matrix centers(feat.rows(), k);
  std::vector<bool> taken(static_cast<std::size_t>(n), false);
  Index first = static_cast<Index>(u(rng) * static_cast<double>(n));
  first = std::min(first, n - 1);
  centers.col(0) = feat.col(first);
  taken[static_cast<std::size_t>(first)] = true;
  Vector d2 = (feat.colwise() - centers.col(0)).colwise().squaredNorm().transpose();
  for (Index c = 1; c < k; ++c) {
    const double total = d2.sum();
    Index pick = -1;
    if (total > 0.0) {
      double t = u(rng) * total;
      for (Index p = 0; p < n; ++p) {
        if (d2[p] <= 0.0) continue;
        pick = p;
        t -= d2[p];
        if (t <= 0.0) break;
      }
    }
    if (pick < 0)  // duplicates everywhere: next untaken patch
      for (Index p = 0; p < n && pick < 0; ++p)
        if (!taken[static_cast<std::size_t>(p)]) pick = p;
    taken[static_cast<std::size_t>(pick)] = true;
    centers.col(c) = feat.col(pick);
    d2 = d2.cwiseMin((feat.colwise() - centers.col(c)).colwise().squaredNorm().transpose());
  }

  std::vector<Index> assign(static_cast<std::size_t>(n), -1);
  Vector best(n);
  for (int iter = 0; iter < 100; ++iter) {
    bool moved = false;
    for (Index p = 0; p < n; ++p) {
      Index arg = 0;
      best[p] = (centers.colwise() - feat.col(p)).colwise().squaredNorm().minCoeff(&arg);
      if (assign[static_cast<std::size_t>(p)] != arg) {
        assign[static_cast<std::size_t>(p)] = arg;
        moved = true;
      }
    }
    std::vector<Index> count(static_cast<std::size_t>(k), 0);
    for (Index a : assign) ++count[static_cast<std::size_t>(a)];
    for (Index c = 0; c < k; ++c) {
      if (count[static_cast<std::size_t>(c)] > 0) continue;
      Index worst = -1;
      for (Index p = 0; p < n; ++p)
        if (count[static_cast<std::size_t>(assign[static_cast<std::size_t>(p)])] > 1 && (worst < 0 || best[p] > best[worst]))
          worst = p;
      --count[static_cast<std::size_t>(assign[static_cast<std::size_t>(worst)])];
      assign[static_cast<std::size_t>(worst)] = c;
      best[worst] = 0.0;
      ++count[static_cast<std::size_t>(c)];
      moved = true;
    }
    centers.setZero();
    for (Index p = 0; p < n; ++p) centers.col(assign[static_cast<std::size_t>(p)]) += feat.col(p);
    for (Index c = 0; c < k; ++c) centers.col(c) /= static_cast<double>(count[static_cast<std::size_t>(c)]);
    if (!moved) break;
  }

  idx.assignment = assign;
  idx.members.assign(static_cast<std::size_t>(k), {});
  for (Index p = 0; p < n; ++p) idx.members[static_cast<std::size_t>(assign[static_cast<std::size_t>(p)])].push_back(p);
  return idx;
}

// Cluster i of x as a (p*p) x n_i x bands block.
inline Cube gather_block(const Cube& x, const ClusterIndex& idx, Index i) {
  const auto& mem = idx.members[static_cast<std::size_t>(i)];
  const Index ps = idx.size;
  Cube blk(ps * ps, static_cast<Index>(mem.size()), x.bands());
  for (std::size_t j = 0; j < mem.size(); ++j) {
    const auto [r0, c0] = idx.origins[static_cast<std::size_t>(mem[j])];
    for (Index b = 0; b < x.bands(); ++b)
      for (Index a = 0; a < ps * ps; ++a) blk(a, static_cast<Index>(j), b) = x(r0 + a / ps, c0 + a % ps, b);
  }
  return blk;
}

// Inverse of gather_block over all clusters; overlapping pixels are averaged.
inline Cube scatter_blocks(const std::vector<Cube>& blocks, const ClusterIndex& idx, Index bands) {
  if (static_cast<Index>(blocks.size()) != idx.clusters())
    throw DimensionError("scatter_blocks: " + std::to_string(blocks.size()) + " blocks for " +
                         std::to_string(idx.clusters()) + " clusters");
  const Index ps = idx.size;
  Cube sum(idx.rows, idx.cols, bands);
  RowMajorMatrix count = RowMajorMatrix::Zero(idx.rows, idx.cols);
  for (Index i = 0; i < idx.clusters(); ++i) {
    const auto& mem = idx.members[static_cast<std::size_t>(i)];
    const Cube& blk = blocks[static_cast<std::size_t>(i)];
    if (blk.rows() != ps * ps || blk.cols() != static_cast<Index>(mem.size()) || blk.bands() != bands)
      throw DimensionError("scatter_blocks: block " + std::to_string(i) + " has shape " + blk.shape());
    for (std::size_t j = 0; j < mem.size(); ++j) {
      const auto [r0, c0] = idx.origins[static_cast<std::size_t>(mem[j])];
      for (Index a = 0; a < ps * ps; ++a) {
        count(r0 + a / ps, c0 + a % ps) += 1.0;
        for (Index b = 0; b < bands; ++b) sum(r0 + a / ps, c0 + a % ps, b) += blk(a, static_cast<Index>(j), b);
      }
    }
  }
  if (count.minCoeff() <= 0.0) throw DimensionError("scatter_blocks: patches do not cover the image");
  for (Index b = 0; b < bands; ++b) sum.band(b).array() /= count.array();
  return sum;
}

// sum_i ||L_i||_psi; each block is normalized by its own tube length (= l1).
inline double clustered_norm(const PenaltySpec& p, const Cube& l, const ClusterIndex& idx) {
  double s = 0.0;
  for (Index i = 0; i < idx.clusters(); ++i) s += norm_psi(p, gather_block(l, idx, i));
  return s;
}

// ---- fixed data of one refinement run ----

class NlrgsProblem {
 public:
  NlrgsProblem(const Cube& y, const Cube& z, const DegradationModel& model, const NlrgsDicts& dicts,
               ClusterIndex clusters)
      : y_(y), z_(z), model_(model), op_(model, z.rows(), z.cols()), dl_(dicts.low_rank), de_(dicts.residual),
        clusters_(std::move(clusters)) {
    model.validate();
    if (!y.all_finite() || !z.all_finite()) throw DataError("nlrgs: input cubes contain NaN or Inf");
    if (z.rows() != y.rows() * model.factor || z.cols() != y.cols() * model.factor)
      throw DimensionError("nlrgs: HSI " + y.shape() + " and MSI " + z.shape() + " do not match factor " +
                           std::to_string(model.factor));
    if (model.response.rows() != z.bands() || model.response.cols() != y.bands())
      throw DimensionError("nlrgs: response does not map " + std::to_string(y.bands()) + " to " +
                           std::to_string(z.bands()) + " bands");
    if (dl_.rows() != y.bands() || de_.rows() != y.bands()) throw DimensionError("nlrgs: dictionary height");
    if (clusters_.rows != z.rows() || clusters_.cols != z.cols())
      throw DimensionError("nlrgs: clusters built for a different image size");
    y3_ = unfold3(y);
    z3_ = unfold3(z);
    yb_ = op_.adjoint_rows(y3_);
    rdl_ = model.response * dl_;
    rde_ = model.response * de_;
  }

  Index rows() const { return z_.rows(); }
  Index cols() const { return z_.cols(); }
  Index l1() const { return dl_.cols(); }
  Index l2() const { return de_.cols(); }
  const SpatialOperator& op() const { return op_; }
  const ClusterIndex& clusters() const { return clusters_; }
  const SpectralDict& dict_l() const { return dl_; }
  const SpectralDict& dict_e() const { return de_; }
  const Matrix& rdl() const { return rdl_; }
  const Matrix& rde() const { return rde_; }
  const Matrix& z3() const { return z3_; }
  const Matrix& y_back() const { return yb_; }  // Y (BS)^T

  // X_(3) for coefficient matrices l (l1 x N) and e (l2 x N).
  Matrix compose(const Matrix& l, const Matrix& e) const {
    Matrix x = dl_ * l;
    if (l2() > 0) x += de_ * e;
    return x;
  }

  double q(const Matrix& l, const Matrix& e) const {
    const Matrix x = compose(l, e);
    return (op_.apply_rows(x) - y3_).squaredNorm() + (model_.response * x - z3_).squaredNorm();
  }

  // Gradient of q with respect to E.
  Matrix grad_e(const Matrix& l, const Matrix& e) const {
    const Matrix x = compose(l, e);
    return 2.0 * (de_.transpose() * op_.adjoint_rows(op_.apply_rows(x) - y3_) +
                  rde_.transpose() * (model_.response * x - z3_));
  }

 private:
  Cube y_, z_;
  DegradationModel model_;
  SpatialOperator op_;
  SpectralDict dl_, de_;
  ClusterIndex clusters_;
  Matrix y3_, z3_, yb_, rdl_, rde_;
};

inline double nlrgs_objective(const NlrgsProblem& pb, const NlrgsConfig& cfg, const Cube& l, const Cube& e) {
  double g = pb.q(unfold3(l), pb.l2() > 0 ? unfold3(e) : Matrix());
  if (cfg.alpha > 0.0) g += cfg.alpha * clustered_norm(cfg.penalty(), l, pb.clusters());
  if (cfg.beta > 0.0 && pb.l2() > 0) g += cfg.beta * norm_group(cfg.penalty(), e);
  return g;
}

// ---- L step ----

struct SubproblemResult {
  Cube value;
  int iterations = 0;
  double residual = 0.0;  // split ||L - G|| / ||L|| or relative E change at exit
  int choice = 0;         // 0 primary iterate, 1 auxiliary (G or F), 2 previous iterate kept
};

namespace detail {

inline void require_finite(const Cube& c, const char* what, int it) {
  if (!c.all_finite())
    throw NumericalError(std::string("nlrgs: non-finite ") + what + " at inner iteration " + std::to_string(it));
}

inline Cube prox_clustered(const PenaltySpec& p, double a, const Cube& x, const ClusterIndex& idx) {
  std::vector<Cube> blocks(static_cast<std::size_t>(idx.clusters()));
  for (Index i = 0; i < idx.clusters(); ++i) blocks[static_cast<std::size_t>(i)] = prox_tnn_psi(p, a, gather_block(x, idx, i));
  return scatter_blocks(blocks, idx, x.bands());
}

// Smallest of the candidates under f; ties keep the earlier one.
template <class F>
int pick_best(const std::vector<const Cube*>& cands, F f) {
  int arg = 0;
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < cands.size(); ++i) {
    const double v = f(*cands[i]);
    if (v < best) {
      best = v;
      arg = static_cast<int>(i);
    }
  }
  return arg;
}

}  // namespace detail

// Proximal L subproblem by ADMM on L = G. Clusters with overlapping patches
// make the G step inexact, so the result is the best of {L, G, L^k} under the
// exact subproblem objective; that keeps the PAO descent inequality intact.
inline SubproblemResult solve_l_admm(const NlrgsProblem& pb, const Cube& l_k, const Cube& e_k, const NlrgsConfig& cfg) {
  const Index rows = pb.rows(), cols = pb.cols(), l1 = pb.l1();
  if (l_k.rows() != rows || l_k.cols() != cols || l_k.bands() != l1)
    throw DimensionError("solve_l_admm: L^k is " + l_k.shape());
  const PenaltySpec pen = cfg.penalty();
  const Matrix e3 = pb.l2() > 0 ? unfold3(e_k) : Matrix();
  Matrix h1 = pb.rdl().transpose() * pb.rdl();
  h1.diagonal().array() += 0.5 * (cfg.mu_l + cfg.lambda);
  h1 = 0.5 * (h1 + h1.transpose());
  Matrix base = pb.dict_l().transpose() * pb.y_back() + pb.rdl().transpose() * pb.z3() + 0.5 * cfg.lambda * unfold3(l_k);
  if (pb.l2() > 0) base -= pb.rdl().transpose() * (pb.rde() * e3);

  SubproblemResult r;
  Cube l = l_k, g = l_k, o(rows, cols, l1);
  for (int it = 1; it <= cfg.max_admm; ++it) {
    const Matrix h3 = base + 0.5 * (cfg.mu_l * unfold3(g) - unfold3(o));
    l = fold3(sylvester_solve(h1, pb.op(), h3, 1.0), rows, cols);
    detail::require_finite(l, "L", it);
    if (cfg.alpha > 0.0) {
      g = detail::prox_clustered(pen, cfg.alpha / cfg.mu_l, l + (1.0 / cfg.mu_l) * o, pb.clusters());
      o += cfg.mu_l * (l - g);
    } else {
      g = l;
    }
    r.iterations = it;
    r.residual = (l - g).norm() / std::max(l.norm(), std::numeric_limits<double>::min());
    if (r.residual < cfg.tol) break;
  }
  auto phi = [&](const Cube& c) {
    double v = pb.q(unfold3(c), e3) + 0.5 * cfg.lambda * (c - l_k).squared_norm();
    if (cfg.alpha > 0.0) v += cfg.alpha * clustered_norm(pen, c, pb.clusters());
    return v;
  };
  r.choice = detail::pick_best({&l, &g, &l_k}, phi);
  r.value = r.choice == 0 ? l : r.choice == 1 ? g : l_k;
  return r;
}

// ---- E step ----

// Proximal E subproblem by block coordinate descent on the penalized split
// E = F; best of {E, F, E^k} under the exact subproblem objective.
inline SubproblemResult solve_e_bcd(const NlrgsProblem& pb, const Cube& l_next, const Cube& e_k,
                                    const NlrgsConfig& cfg) {
  const Index rows = pb.rows(), cols = pb.cols(), l2 = pb.l2();
  SubproblemResult r;
  if (l2 == 0) {
    r.value = e_k;
    return r;
  }
  if (e_k.rows() != rows || e_k.cols() != cols || e_k.bands() != l2)
    throw DimensionError("solve_e_bcd: E^k is " + e_k.shape());
  const PenaltySpec pen = cfg.penalty();
  const bool shrink = cfg.beta > 0.0;
  const double mu = shrink ? cfg.mu_e : 0.0;
  Matrix h1 = pb.rde().transpose() * pb.rde();
  h1.diagonal().array() += 0.5 * (mu + cfg.lambda);
  h1 = 0.5 * (h1 + h1.transpose());
  const Matrix base = pb.dict_e().transpose() * pb.y_back() +
                      pb.rde().transpose() * (pb.z3() - pb.rdl() * unfold3(l_next)) + 0.5 * cfg.lambda * unfold3(e_k);

  Cube e = e_k, f = e_k;
  for (int it = 1; it <= cfg.max_bcd; ++it) {
    const Cube prev = e;
    e = fold3(sylvester_solve(h1, pb.op(), base + 0.5 * mu * unfold3(f), 1.0), rows, cols);
    detail::require_finite(e, "E", it);
    f = shrink ? prox_group(pen, cfg.beta / mu, e) : e;
    r.iterations = it;
    r.residual = (e - prev).norm() / std::max(e.norm(), std::numeric_limits<double>::min());
    if (!shrink || r.residual < cfg.tol) break;
  }
  const Matrix l3 = unfold3(l_next);
  auto phi = [&](const Cube& c) {
    double v = pb.q(l3, unfold3(c)) + 0.5 * cfg.lambda * (c - e_k).squared_norm();
    if (shrink) v += cfg.beta * norm_group(pen, c);
    return v;
  };
  r.choice = detail::pick_best({&e, &f, &e_k}, phi);
  r.value = r.choice == 0 ? e : r.choice == 1 ? f : e_k;
  return r;
}

// ---- stopping rule ----

struct NlrgsKappa {
  double kappa = 0.0, kappa_l = 0.0, kappa_e = 0.0;
};

// kappa_L = ||L^{k+1} - L^k|| / ||L^k||;
// kappa_E = ||E^{k+1} - prox_{beta/lambda}(E^k - grad_E q(L^{k+1}, E^{k+1}))|| / (1 + ||L^{k+1}|| + ||E^{k+1}||).
inline NlrgsKappa kappa_nlrgs(const NlrgsProblem& pb, const NlrgsConfig& cfg, const Cube& l_prev, const Cube& l_next,
                              const Cube& e_prev, const Cube& e_next) {
  const double nl = l_prev.norm();
  if (nl == 0.0) throw NumericalError("kappa_nlrgs: previous L is zero");
  NlrgsKappa k;
  k.kappa_l = (l_next - l_prev).norm() / nl;
  if (pb.l2() > 0) {
    const Cube step =
        e_prev - fold3(pb.grad_e(unfold3(l_next), unfold3(e_next)), pb.rows(), pb.cols());
    const Cube p = cfg.beta > 0.0 ? prox_group(cfg.penalty(), cfg.beta / cfg.lambda, step) : step;
    k.kappa_e = (e_next - p).norm() / (1.0 + l_next.norm() + e_next.norm());
  }
  k.kappa = std::max(k.kappa_l, k.kappa_e);
  return k;
}

// ---- PAO driver ----

struct NlrgsIterationLog {
  int iteration = 0;
  double g = 0.0;
  double descent_slack = 0.0;  // g(V^k) - g(V^{k+1}) - lambda/2 ||dV||^2, must be >= -1e-8
  double step_sq = 0.0;        // ||V^{k+1} - V^k||^2
  double kappa = 0.0, kappa_l = 0.0, kappa_e = 0.0;
  int admm_iterations = 0, bcd_iterations = 0;
  double wall_time = 0.0;
};

struct NlrgsResult {
  Cube x_fused;
  Cube coeff_l, coeff_e;
  NlrgsDicts dicts;
  ClusterIndex clusters;
  double g_initial = 0.0;
  std::vector<NlrgsIterationLog> log;
  int iterations = 0;
  bool converged = false;
};

inline constexpr double kDescentSlack = 1e-8;

// warm_x: a fused cube (e.g. from the registration stage), projected onto D_L.
// Without it L^0 = (R D_L)^+ Z_(3). E^0 = 0.
inline NlrgsResult pao_run(const Cube& y_registered, const Cube& z, const DegradationModel& model,
                           const NlrgsConfig& cfg, const std::optional<Cube>& warm_x = std::nullopt) {
  using clock = std::chrono::steady_clock;
  const auto t0 = clock::now();
  cfg.validate(y_registered.bands());
  if (!y_registered.all_finite() || !z.all_finite()) throw DataError("nlrgs: input cubes contain NaN or Inf");
  const NlrgsDicts dicts = estimate_dicts(y_registered, cfg.l1, cfg.l2);
  const Index rows = z.rows(), cols = z.cols();

  Cube l;
  if (warm_x) {
    if (warm_x->rows() != rows || warm_x->cols() != cols || warm_x->bands() != y_registered.bands())
      throw DimensionError("pao_run: warm start " + warm_x->shape() + " does not match the target grid");
    if (!warm_x->all_finite()) throw DataError("pao_run: warm start contains NaN or Inf");
    l = mode3_product(*warm_x, dicts.low_rank.transpose());
  } else {
    if (model.response.rows() != z.bands()) throw DimensionError("pao_run: response does not match the MSI");
    const Matrix rd = model.response * dicts.low_rank;
    l = fold3(rd.completeOrthogonalDecomposition().solve(unfold3(z)), rows, cols);
  }
  Cube e = cfg.l2 > 0 ? Cube(rows, cols, cfg.l2) : Cube();

  const NlrgsProblem pb(y_registered, z, model, dicts, cluster_patches(l, cfg, cfg.seed));
  NlrgsResult res;
  double g = nlrgs_objective(pb, cfg, l, e);
  res.g_initial = g;

  for (int k = 1; k <= cfg.max_iter; ++k) {
    const SubproblemResult ls = solve_l_admm(pb, l, e, cfg);
    const SubproblemResult es = solve_e_bcd(pb, ls.value, e, cfg);
    const double g_next = nlrgs_objective(pb, cfg, ls.value, es.value);
    double step = (ls.value - l).squared_norm();
    if (cfg.l2 > 0) step += (es.value - e).squared_norm();

    NlrgsIterationLog entry;
    entry.iteration = k;
    entry.g = g_next;
    entry.step_sq = step;
    entry.descent_slack = g - g_next - 0.5 * cfg.lambda * step;
    if (entry.descent_slack < -kDescentSlack)
      throw NumericalError("nlrgs: sufficient descent violated at iteration " + std::to_string(k) + ": g " +
                           std::to_string(g) + " -> " + std::to_string(g_next) + ", lambda/2 |dV|^2 = " +
                           std::to_string(0.5 * cfg.lambda * step));
    const NlrgsKappa kap = kappa_nlrgs(pb, cfg, l, ls.value, e, es.value);
    entry.kappa = kap.kappa;
    entry.kappa_l = kap.kappa_l;
    entry.kappa_e = kap.kappa_e;
    entry.admm_iterations = ls.iterations;
    entry.bcd_iterations = es.iterations;
    entry.wall_time = std::chrono::duration<double>(clock::now() - t0).count();
    res.log.push_back(entry);
    res.iterations = k;

    l = ls.value;
    e = es.value;
    g = g_next;
    if (kap.kappa < cfg.tol) {
      res.converged = true;
      break;
    }
  }
  res.coeff_l = l;
  res.coeff_e = e;
  res.x_fused = fold3(pb.compose(unfold3(l), cfg.l2 > 0 ? unfold3(e) : Matrix()), rows, cols);
  res.dicts = dicts;
  res.clusters = pb.clusters();
  return res;
}

// ---- error bound diagnostic ----

struct ErrorBoundReport {
  double lhs_e = 0.0, mid_e = 0.0, rhs_e = 0.0;  // psi(|dE|) <= |dE|_{F,psi} <= rhs
  double lhs_l = 0.0, mid_l = 0.0, rhs_l = 0.0;
  double lhs_sum = 0.0, rhs_sum = 0.0;           // psi(|dL| + |dE|) <= rhs
  double v = 0.0, w = 0.0;
  Index r = 0, h = 0;
  double s = 0.0;
  bool applicable = false;  // beta > alpha r v
  bool satisfied = false;
};

inline ErrorBoundReport error_bound_check(const Cube& l_hat, const Cube& e_hat, const Cube& l_star, const Cube& e_star,
                                          const NlrgsConfig& cfg, double v, double w) {
  l_hat.require_same_shape(l_star, "error_bound_check L");
  e_hat.require_same_shape(e_star, "error_bound_check E");
  if (!(v > 0.0) || !(w > 0.0)) throw ParameterError("error_bound_check: v and w must be positive");
  const PenaltySpec p = cfg.penalty();
  ErrorBoundReport rep;
  rep.v = v;
  rep.w = w;
  rep.r = std::min(l_hat.rows(), l_hat.cols());
  rep.h = l_hat.rows() * l_hat.cols();
  const double rr = static_cast<double>(rep.r), hh = static_cast<double>(rep.h);
  const Cube dl = l_hat - l_star, de = e_hat - e_star;
  rep.s = rr * psi_eval(p, dl.norm() / std::sqrt(rr));
  const double gap = cfg.beta - cfg.alpha * rr * v;
  rep.applicable = gap > 0.0;
  if (!rep.applicable) return rep;
  const double est = norm_group(p, e_star);
  rep.lhs_e = psi_eval(p, de.norm());
  rep.mid_e = norm_group(p, de);
  rep.rhs_e = 2.0 * cfg.beta * est / gap;
  rep.lhs_l = psi_eval(p, dl.norm());
  rep.mid_l = norm_group(p, dl);
  rep.rhs_l = 2.0 * hh * w * cfg.beta * est / gap;
  rep.lhs_sum = psi_eval(p, dl.norm() + de.norm());
  rep.rhs_sum = 2.0 * cfg.beta * (hh * w + 1.0) * est / gap;
  const double eps = 1e-12;
  rep.satisfied = rep.lhs_e <= rep.mid_e + eps && rep.mid_e <= rep.rhs_e + eps && rep.lhs_l <= rep.mid_l + eps &&
                  rep.mid_l <= rep.rhs_l + eps && rep.lhs_sum <= rep.rhs_sum + eps;
  return rep;
}

// Randomized estimate of min ||R D_L L|| / ||L|| over coefficient cubes
// (scale-free, so every direction can be scaled into the psi ball). An upper
// bound on the true restricted constant.
struct XiEstimate {
  double xi = 0.0;
  double spread = 0.0;  // gap between the smallest and the 10th smallest ratio
};

inline XiEstimate estimate_xi(const Matrix& rdl, Index rows, Index cols, int samples, std::uint64_t seed) {
  if (samples < 10) throw ParameterError("estimate_xi: need at least 10 samples");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<double> ratio(static_cast<std::size_t>(samples));
  Matrix l(rdl.cols(), rows * cols);
  for (int s = 0; s < samples; ++s) {
    for (Index i = 0; i < l.size(); ++i) l.data()[i] = n(rng);
    ratio[static_cast<std::size_t>(s)] = (rdl * l).norm() / l.norm();
  }
  std::sort(ratio.begin(), ratio.end());
  return XiEstimate{ratio[0], ratio[9] - ratio[0]};
}

// Proxies for the bound constants: v ~ ||R D_E|| / (sqrt(r) xi), w ~ ||R D_E|| / (sqrt(h) xi).
inline std::pair<double, double> bound_constants(const Matrix& rde, double xi, Index rows, Index cols) {
  if (!(xi > 0.0)) throw ParameterError("bound_constants: xi must be positive");
  const double nrm = rde.size() > 0 ? Eigen::JacobiSVD<Matrix>(rde).singularValues()(0) : 0.0;
  const double r = static_cast<double>(std::min(rows, cols)), h = static_cast<double>(rows * cols);
  return {std::max(nrm, 1e-300) / (std::sqrt(r) * xi), std::max(nrm, 1e-300) / (std::sqrt(h) * xi)};
}

}  // namespace rafnl
