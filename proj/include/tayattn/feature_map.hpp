#pragma once

#include <cmath>
#include <span>

#include "tayattn/config.hpp"
#include "tayattn/tensor.hpp"

namespace tayattn {

/// Applies a feature map to one row in place. Cosine maps a zero row to itself.
inline void apply_feature_map(FeatureMap map, std::span<double> row) {
  switch (map) {
    case FeatureMap::identity:
      return;
    case FeatureMap::elu_plus_one:
      for (auto& x : row) x = x > 0.0 ? x + 1.0 : std::exp(x);
      return;
    case FeatureMap::relu:
      for (auto& x : row) x = x > 0.0 ? x : 0.0;
      return;
    case FeatureMap::cosine: {
      double norm = std::sqrt(dot(row, row));
      if (norm == 0.0) return;
      for (auto& x : row) x /= norm;
      return;
    }
  }
}

inline Tensor apply_feature_map(FeatureMap map, const Tensor& x) {
  Tensor out = x;
  for (std::size_t i = 0; i < out.rows(); ++i) apply_feature_map(map, out.row(i));
  return out;
}

/// Pulls a cotangent on the mapped row back to the raw row, overwriting `grad`.
inline void feature_map_backward(FeatureMap map, std::span<const double> raw, std::span<double> grad) {
  switch (map) {
    case FeatureMap::identity:
      return;
    case FeatureMap::elu_plus_one:
      for (std::size_t i = 0; i < raw.size(); ++i) grad[i] *= raw[i] > 0.0 ? 1.0 : std::exp(raw[i]);
      return;
    case FeatureMap::relu:
      for (std::size_t i = 0; i < raw.size(); ++i) grad[i] *= raw[i] > 0.0 ? 1.0 : 0.0;
      return;
    case FeatureMap::cosine: {
      double norm = std::sqrt(dot(raw, raw));
      if (norm == 0.0) {
        for (auto& g : grad) g = 0.0;
        return;
      }
      // d(x/|x|) = (I - u u^T) / |x|
      double proj = 0.0;
      for (std::size_t i = 0; i < raw.size(); ++i) proj += grad[i] * raw[i] / norm;
      for (std::size_t i = 0; i < raw.size(); ++i) grad[i] = (grad[i] - proj * raw[i] / norm) / norm;
      return;
    }
  }
}

}  // namespace tayattn
