#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "rafnl/error.hpp"

namespace rafnl {

using Index = Eigen::Index;
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowMajorMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Dense rows x cols x bands tensor. Storage is band-sequential and row-major
// inside a band: element (r, c, b) lives at b*rows*cols + r*cols + c. The
// mode-3 unfolding is therefore a row-major bands x (rows*cols) matrix whose
// column j = r*cols + c is the spectral fiber at pixel (r, c).
class Cube {
 public:
  Cube() = default;

  Cube(Index rows, Index cols, Index bands, double fill = 0.0)
      : rows_(rows), cols_(cols), bands_(bands) {
    if (rows <= 0 || cols <= 0 || bands <= 0)
      throw DimensionError("Cube: dimensions must be positive, got " + shape_string(rows, cols, bands));
    data_.assign(static_cast<std::size_t>(rows * cols * bands), fill);
  }

  Cube(Index rows, Index cols, Index bands, std::vector<double> data)
      : rows_(rows), cols_(cols), bands_(bands), data_(std::move(data)) {
    if (rows <= 0 || cols <= 0 || bands <= 0)
      throw DimensionError("Cube: dimensions must be positive, got " + shape_string(rows, cols, bands));
    if (static_cast<Index>(data_.size()) != rows * cols * bands)
      throw DimensionError("Cube: data length " + std::to_string(data_.size()) + " does not match " +
                           shape_string(rows, cols, bands));
  }

  Index rows() const { return rows_; }
  Index cols() const { return cols_; }
  Index bands() const { return bands_; }
  Index pixels() const { return rows_ * cols_; }
  Index size() const { return rows_ * cols_ * bands_; }
  bool empty() const { return data_.empty(); }

  double& operator()(Index r, Index c, Index b) { return data_[static_cast<std::size_t>((b * rows_ + r) * cols_ + c)]; }
  double operator()(Index r, Index c, Index b) const {
    return data_[static_cast<std::size_t>((b * rows_ + r) * cols_ + c)];
  }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  const std::vector<double>& values() const { return data_; }

  // Band b as a rows x cols row-major view.
  Eigen::Map<RowMajorMatrix> band(Index b) {
    return Eigen::Map<RowMajorMatrix>(data_.data() + b * pixels(), rows_, cols_);
  }
  Eigen::Map<const RowMajorMatrix> band(Index b) const {
    return Eigen::Map<const RowMajorMatrix>(data_.data() + b * pixels(), rows_, cols_);
  }

  // Mode-3 unfolding as a zero-copy view (bands x pixels).
  Eigen::Map<RowMajorMatrix> unfolded() { return Eigen::Map<RowMajorMatrix>(data_.data(), bands_, pixels()); }
  Eigen::Map<const RowMajorMatrix> unfolded() const {
    return Eigen::Map<const RowMajorMatrix>(data_.data(), bands_, pixels());
  }

  Vector fiber(Index r, Index c) const {
    Vector f(bands_);
    for (Index b = 0; b < bands_; ++b) f[b] = (*this)(r, c, b);
    return f;
  }

  bool same_shape(const Cube& o) const { return rows_ == o.rows_ && cols_ == o.cols_ && bands_ == o.bands_; }

  std::string shape() const { return shape_string(rows_, cols_, bands_); }

  double norm() const {
    double s = 0.0;
    for (double v : data_) s += v * v;
    return std::sqrt(s);
  }

  double squared_norm() const {
    double s = 0.0;
    for (double v : data_) s += v * v;
    return s;
  }

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
  }

  Cube& operator+=(const Cube& o) {
    require_same_shape(o, "operator+=");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
    return *this;
  }
  Cube& operator-=(const Cube& o) {
    require_same_shape(o, "operator-=");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= o.data_[i];
    return *this;
  }
  Cube& operator*=(double s) {
    for (double& v : data_) v *= s;
    return *this;
  }

  friend Cube operator+(Cube a, const Cube& b) { return a += b; }
  friend Cube operator-(Cube a, const Cube& b) { return a -= b; }
  friend Cube operator*(Cube a, double s) { return a *= s; }
  friend Cube operator*(double s, Cube a) { return a *= s; }

  friend bool operator==(const Cube& a, const Cube& b) { return a.same_shape(b) && a.data_ == b.data_; }

  void require_same_shape(const Cube& o, const char* what) const {
    if (!same_shape(o)) throw DimensionError(std::string(what) + ": shape " + shape() + " vs " + o.shape());
  }

  static std::string shape_string(Index r, Index c, Index b) {
    return std::to_string(r) + "x" + std::to_string(c) + "x" + std::to_string(b);
  }

 private:
  Index rows_ = 0;
  Index cols_ = 0;
  Index bands_ = 0;
  std::vector<double> data_;
};

inline double dot(const Cube& a, const Cube& b) {
  a.require_same_shape(b, "dot");
  double s = 0.0;
  for (Index i = 0; i < a.size(); ++i) s += a.data()[i] * b.data()[i];
  return s;
}

// bands x (rows*cols) copy; column j holds the fiber at pixel j = r*cols + c.
inline Matrix unfold3(const Cube& x) { return x.unfolded(); }

inline Cube fold3(const Eigen::Ref<const Matrix>& m, Index rows, Index cols) {
  if (m.cols() != rows * cols)
    throw DimensionError("fold3: matrix has " + std::to_string(m.cols()) + " columns, expected " +
                         std::to_string(rows * cols));
  Cube out(rows, cols, m.rows());
  out.unfolded() = m;
  return out;
}

// Frobenius norm of the mode-3 fiber at every pixel, as a rows x cols image.
inline RowMajorMatrix fiber_norms(const Cube& x) {
  RowMajorMatrix n = RowMajorMatrix::Zero(x.rows(), x.cols());
  for (Index b = 0; b < x.bands(); ++b) n.array() += x.band(b).array().square();
  return n.array().sqrt();
}

}  // namespace rafnl
