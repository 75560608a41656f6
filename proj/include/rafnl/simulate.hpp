#pragma once

// Synthetic scenes and degraded observation pairs. The geometric perturbation
// goes on the hyperspectral branch: y = H_spa(gt o tau) + n1, z = H_spec(gt) + n2.

#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <string>

#include "rafnl/cube.hpp"
#include "rafnl/degradation.hpp"
#include "rafnl/error.hpp"
#include "rafnl/warp.hpp"

namespace rafnl {

enum class SimKind { NONE, TRANSLATION, ROTATION, FLIP, BARREL, PINCUSHION };

inline const char* sim_kind_name(SimKind k) {
  switch (k) {
    case SimKind::NONE: return "none";
    case SimKind::TRANSLATION: return "translation";
    case SimKind::ROTATION: return "rotation";
    case SimKind::FLIP: return "flip";
    case SimKind::BARREL: return "barrel";
    case SimKind::PINCUSHION: return "pincushion";
  }
  return "?";
}

inline SimKind parse_sim_kind(const std::string& s) {
  for (SimKind k : {SimKind::NONE, SimKind::TRANSLATION, SimKind::ROTATION, SimKind::FLIP, SimKind::BARREL,
                    SimKind::PINCUSHION})
    if (s == sim_kind_name(k)) return k;
  throw ParameterError("unknown simulation kind '" + s + "'");
}

// Warp family used to register a given perturbation.
inline WarpKind sim_warp_kind(SimKind k) {
  switch (k) {
    case SimKind::ROTATION: return WarpKind::SIMILARITY;
    case SimKind::FLIP: return WarpKind::AFFINE;
    case SimKind::BARREL:
    case SimKind::PINCUSHION: return WarpKind::RADIAL;
    default: return WarpKind::TRANSLATION;
  }
}

struct SceneSpec {
  Index rows = 48, cols = 48, bands = 8;
  Index endmembers = 3;
  Index margin = 6;  // constant border width; the taper takes another margin
};

// Linear mixture of smooth spectra with smooth abundances; every band is
// constant on the border strip so edge replication and circular blur agree.
inline Cube synthetic_scene(const SceneSpec& spec, std::uint64_t seed) {
  if (spec.rows < 4 * spec.margin || spec.cols < 4 * spec.margin || spec.bands < 1 || spec.endmembers < 1)
    throw ParameterError("synthetic_scene: scene too small for its margin");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double pi = std::acos(-1.0);
  const Index e = spec.endmembers;

  auto taper = [&](Index i, Index n) {
    const double dist = static_cast<double>(std::min(i, n - 1 - i) - spec.margin);
    if (dist <= 0.0) return 0.0;
    const double ramp = static_cast<double>(spec.margin);
    if (dist >= ramp) return 1.0;
    const double s = std::sin(0.5 * pi * dist / ramp);
    return s * s;
  };

  Matrix spectra(spec.bands, e);
  for (Index k = 0; k < e; ++k) {
    const double f = 0.3 + 0.9 * u(rng), ph = 2.0 * pi * u(rng);
    for (Index b = 0; b < spec.bands; ++b) {
      const double t = spec.bands > 1 ? static_cast<double>(b) / static_cast<double>(spec.bands - 1) : 0.0;
      spectra(b, k) = 0.5 + 0.35 * std::sin(2.0 * pi * f * t + ph);
    }
  }

  Matrix abund(e, spec.rows * spec.cols);
  const double lo = static_cast<double>(std::min(spec.rows, spec.cols));
  for (Index k = 0; k < e; ++k) {
    abund.row(k).setConstant(1.0 / static_cast<double>(e));
    for (int blob = 0; blob < 5; ++blob) {
      const double cr = static_cast<double>(spec.rows) * (0.25 + 0.5 * u(rng));
      const double cc = static_cast<double>(spec.cols) * (0.25 + 0.5 * u(rng));
      const double s = lo * (1.0 / 12.0 + u(rng) / 12.0);
      const double amp = 0.6 * (u(rng) - 0.5);
      for (Index r = 0; r < spec.rows; ++r)
        for (Index c = 0; c < spec.cols; ++c) {
          const double dr = static_cast<double>(r) - cr, dc = static_cast<double>(c) - cc;
          abund(k, r * spec.cols + c) +=
              taper(r, spec.rows) * taper(c, spec.cols) * amp * std::exp(-(dr * dr + dc * dc) / (2.0 * s * s));
        }
    }
  }
  Matrix x = spectra * abund;
  x /= 1.1 * x.maxCoeff();
  return fold3(x, spec.rows, spec.cols);
}

// Per-band perturbation in high-resolution pixel units. Translations move
// `magnitude` pixels along both axes with seeded signs per band; rotations are
// `magnitude` degrees with a seeded sign per band; barrel and pincushion use
// k1 = +magnitude and -magnitude; flip mirrors columns and ignores magnitude.
inline TransformStack sim_transform(SimKind kind, double magnitude, Index bands, std::mt19937_64& rng) {
  if (!std::isfinite(magnitude) || magnitude < 0.0)
    throw ParameterError("simulate: magnitude must be finite and nonnegative, got " + std::to_string(magnitude));
  const double pi = std::acos(-1.0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  TransformStack t = TransformStack::identity(sim_warp_kind(kind), bands);
  for (Index b = 0; b < bands; ++b) {
    switch (kind) {
      case SimKind::NONE: break;
      case SimKind::TRANSLATION: {
        const double sx = u(rng) < 0.5 ? -1.0 : 1.0, sy = u(rng) < 0.5 ? -1.0 : 1.0;
        t[b] << sx * magnitude, sy * magnitude;
        break;
      }
      case SimKind::ROTATION: {
        if (magnitude >= 45.0) throw ParameterError("simulate: rotation must be below 45 degrees");
        const double a = (u(rng) < 0.5 ? -1.0 : 1.0) * magnitude * pi / 180.0;
        t[b] << std::cos(a), std::sin(a), 0.0, 0.0;
        break;
      }
      case SimKind::FLIP: t[b] << -1.0, 0.0, 0.0, 1.0, 0.0, 0.0; break;
      case SimKind::BARREL: t[b] << magnitude; break;
      case SimKind::PINCUSHION: t[b] << -magnitude; break;
    }
  }
  t.validate();
  return t;
}

struct SimSpec {
  Cube source;
  SimKind kind = SimKind::TRANSLATION;
  double magnitude = 2.0;
  DegradationModel model;
  std::optional<double> noise_snr;  // dB, per branch
  std::uint64_t seed = 7;
};

struct SimOutput {
  Cube y, z, ground_truth;
  TransformStack true_tau;  // applied to the ground truth, high-resolution pixels
};

namespace detail {

inline void add_noise(Cube& x, double snr_db, std::mt19937_64& rng) {
  const double power = x.squared_norm() / static_cast<double>(x.size());
  const double sigma = std::sqrt(power / std::pow(10.0, snr_db / 10.0));
  std::normal_distribution<double> n(0.0, sigma);
  for (Index i = 0; i < x.size(); ++i) x.data()[i] += n(rng);
}

}  // namespace detail

inline SimOutput simulate(const SimSpec& spec) {
  spec.model.validate();
  const Cube& gt = spec.source;
  if (spec.model.response.cols() != gt.bands())
    throw DimensionError("simulate: response expects " + std::to_string(spec.model.response.cols()) +
                         " bands, source has " + std::to_string(gt.bands()));
  if (gt.rows() % spec.model.factor != 0 || gt.cols() % spec.model.factor != 0)
    throw DimensionError("simulate: source " + gt.shape() + " not divisible by factor " +
                         std::to_string(spec.model.factor));
  std::mt19937_64 rng(spec.seed);
  SimOutput out;
  out.ground_truth = gt;
  out.true_tau = sim_transform(spec.kind, spec.magnitude, gt.bands(), rng);
  out.y = apply_hspa(spec.model, warp_cube(gt, out.true_tau));
  out.z = apply_hspec(spec.model, gt);
  if (spec.noise_snr) {
    detail::add_noise(out.y, *spec.noise_snr, rng);
    detail::add_noise(out.z, *spec.noise_snr, rng);
  }
  return out;
}

// The scenario used by the tests, the acceptance suite and `rafnl simulate`
// defaults: 48x48x8 scene, factor 2, four MSI bands, 2 px translations.
inline SimSpec default_scenario(std::uint64_t seed = 7) {
  SimSpec s;
  s.source = synthetic_scene(SceneSpec{}, seed);
  s.kind = SimKind::TRANSLATION;
  s.magnitude = 2.0;
  s.model = default_model(2, 4, 8);
  s.seed = seed;
  return s;
}

// Rank-3 scene on the first three DCT-II spectra plus sparse fibers along
// the 4th/5th: a fraction of pixels gets a residual of norm `amplitude`
// outside the low-rank subspace. Bands must be >= 5.
struct SpikedScene {
  Cube gt, low_rank, residual;
  Index spiked = 0;
};

inline SpikedScene spiked_scene(Index size, Index bands, double fraction, double amplitude, std::uint64_t seed) {
  if (bands < 5 || size < 8) throw ParameterError("spiked_scene: need >= 5 bands and size >= 8");
  if (!(fraction >= 0.0 && fraction <= 1.0)) throw ParameterError("spiked_scene: fraction outside [0, 1]");
  const double pi = std::acos(-1.0), h = static_cast<double>(bands);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Matrix s(bands, 5);
  for (Index k = 0; k < 5; ++k)
    for (Index b = 0; b < bands; ++b)
      s(b, k) = std::cos(pi * static_cast<double>(k) * (static_cast<double>(b) + 0.5) / h) *
                std::sqrt((k == 0 ? 1.0 : 2.0) / h);

  auto field = [&]() {
    RowMajorMatrix f = RowMajorMatrix::Zero(size, size);
    for (int blob = 0; blob < 6; ++blob) {
      const double cr = static_cast<double>(size) * u(rng), cc = static_cast<double>(size) * u(rng);
      const double w = static_cast<double>(size) * (0.08 + 0.1 * u(rng)), a = 2.0 * u(rng) - 1.0;
      for (Index r = 0; r < size; ++r)
        for (Index c = 0; c < size; ++c) {
          const double dr = static_cast<double>(r) - cr, dc = static_cast<double>(c) - cc;
          f(r, c) += a * std::exp(-(dr * dr + dc * dc) / (2.0 * w * w));
        }
    }
    return RowMajorMatrix(f / std::max(f.cwiseAbs().maxCoeff(), 1e-12));
  };
  const double sq = std::sqrt(h);
  const RowMajorMatrix f0 = field(), f1 = field(), f2 = field();
  Matrix coef(3, size * size);
  for (Index p = 0; p < size * size; ++p) {
    coef(0, p) = 0.5 * sq * (1.0 + 0.2 * f0.data()[p]);
    coef(1, p) = 0.15 * sq * f1.data()[p];
    coef(2, p) = 0.1 * sq * f2.data()[p];
  }
  SpikedScene out;
  out.low_rank = fold3(s.leftCols(3) * coef, size, size);
  Matrix res = Matrix::Zero(bands, size * size);
  for (Index p = 0; p < size * size; ++p) {
    if (u(rng) >= fraction) continue;
    const double t = 2.0 * pi * u(rng);
    res.col(p) = amplitude * (std::cos(t) * s.col(3) + std::sin(t) * s.col(4));
    ++out.spiked;
  }
  out.residual = fold3(res, size, size);
  out.gt = out.low_rank + out.residual;
  return out;
}

// Low-resolution translation that undoes a high-resolution one.
inline TransformStack expected_lr_translation(const TransformStack& hr, Index factor) {
  if (hr.kind != WarpKind::TRANSLATION) throw ParameterError("expected_lr_translation: not a translation stack");
  TransformStack t = hr;
  for (auto& p : t.params) p = -p / static_cast<double>(factor);
  return t;
}

}  // namespace rafnl
