#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "tayattn/error.hpp"

namespace tayattn {

/// Dense row-major f64 array with one or two extents.
///
/// A 1-D tensor of length n behaves as an n x 1 matrix for `rows()`/`cols()`,
/// which lets gate vectors and matrices share the same accessors.
class Tensor {
 public:
  Tensor() = default;

  Tensor(std::size_t rows, std::size_t cols, double fill = 0.0)
      : shape_{rows, cols}, data_(rows * cols, fill) {}

  static Tensor vector(std::size_t n, double fill = 0.0) {
    Tensor t;
    t.shape_ = {n};
    t.data_.assign(n, fill);
    return t;
  }

  /// Builds a tensor from explicit shape and data, enforcing both invariants.
  static Tensor from_data(std::vector<std::size_t> shape, std::vector<double> data) {
    if (shape.empty() || shape.size() > 2) {
      throw ShapeError("tensor rank must be 1 or 2, got " + std::to_string(shape.size()));
    }
    std::size_t n = 1;
    for (auto extent : shape) n *= extent;
    if (n != data.size()) {
      throw ShapeError("tensor data length " + std::to_string(data.size()) +
                       " does not match shape product " + std::to_string(n));
    }
    for (double x : data) {
      if (!std::isfinite(x)) throw NumericError("tensor contains a non-finite value");
    }
    Tensor t;
    t.shape_ = std::move(shape);
    t.data_ = std::move(data);
    return t;
  }

  static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows) {
    std::size_t r = rows.size();
    std::size_t c = r ? rows.begin()->size() : 0;
    std::vector<double> data;
    data.reserve(r * c);
    for (const auto& row : rows) {
      if (row.size() != c) throw ShapeError("ragged matrix literal");
      data.insert(data.end(), row.begin(), row.end());
    }
    return from_data({r, c}, std::move(data));
  }

  std::size_t ndim() const { return shape_.size(); }
  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::size_t rows() const { return shape_.empty() ? 0 : shape_[0]; }
  std::size_t cols() const { return shape_.size() == 2 ? shape_[1] : (shape_.empty() ? 0 : 1); }

  double& operator()(std::size_t i, std::size_t j) { return data_[i * cols() + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data_[i * cols() + j]; }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  std::span<double> row(std::size_t i) { return {data_.data() + i * cols(), cols()}; }
  std::span<const double> row(std::size_t i) const { return {data_.data() + i * cols(), cols()}; }

  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }
  const std::vector<double>& data() const { return data_; }

  bool all_finite() const {
    for (double x : data_) {
      if (!std::isfinite(x)) return false;
    }
    return true;
  }

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> data_;
};

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

/// Mixed absolute/relative error: max_i |a_i - b_i| / max(|a_i|, |b_i|, 1).
inline double max_rel_error(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) throw ShapeError("max_rel_error: shape mismatch");
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    double scale = std::max({std::abs(a[i]), std::abs(b[i]), 1.0});
    double err = std::abs(a[i] - b[i]) / scale;
    if (std::isnan(err)) return err;
    worst = std::max(worst, err);
  }
  return worst;
}

inline double max_abs_error(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) throw ShapeError("max_abs_error: shape mismatch");
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
  return worst;
}

}  // namespace tayattn
