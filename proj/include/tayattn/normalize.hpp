#pragma once

#include <cmath>
#include <optional>
#include <span>

#include "tayattn/config.hpp"
#include "tayattn/error.hpp"

namespace tayattn {

inline constexpr double kTinyNorm = 1e-300;

namespace detail {

inline void scale_row(std::span<double> row, double s) {
  for (auto& x : row) x *= s;
}

inline void zero_row(std::span<double> row) {
  for (auto& x : row) x = 0.0;
}

inline void l2_normalize(std::span<double> row) {
  double ss = 0.0;
  for (double x : row) ss += x * x;
  double norm = std::sqrt(ss);
  if (norm < kTinyNorm) return zero_row(row);
  scale_row(row, 1.0 / norm);
}

}  // namespace detail

/// Everything a row needs to turn its Taylor numerator into an output row.
struct RowNormalizer {
  double weight_sum = 0.0;       // sum_s of the truncated series weights
  double visible = 0.0;          // number of visible keys (t or M)
  std::optional<double> gate;    // g_in for the query row, gate modes only
};

/// Applies the denominator mode to a numerator row in place.
inline void finalize_row(Denominator mode, const RowNormalizer& n, std::span<double> row) {
  switch (mode) {
    case Denominator::none:
      return;
    case Denominator::exact:
      if (!(std::abs(n.weight_sum) >= kTinyNorm)) {
        throw NumericError("exact denominator vanished (|sum of weights| < 1e-300)");
      }
      for (auto& x : row) x /= n.weight_sum;
      return;
    case Denominator::seq_norm:
      for (auto& x : row) x /= n.visible;
      return;
    case Denominator::gate:
    case Denominator::gate_seq: {
      if (!n.gate) throw ConfigError("gate mode requires a gate value for every query");
      detail::scale_row(row, *n.gate);
      if (mode == Denominator::gate_seq) {
        for (auto& x : row) x /= n.visible;
      }
      return;
    }
    case Denominator::l2_norm:
      return detail::l2_normalize(row);
    case Denominator::rms_norm: {
      double ss = 0.0;
      for (double x : row) ss += x * x;
      double rms = std::sqrt(ss / static_cast<double>(row.size()));
      if (rms < kTinyNorm) return detail::zero_row(row);
      detail::scale_row(row, 1.0 / rms);
      return;
    }
    case Denominator::layer_norm: {
      double mean = 0.0;
      for (double x : row) mean += x;
      mean /= static_cast<double>(row.size());
      double var = 0.0;
      for (double x : row) var += (x - mean) * (x - mean);
      double sd = std::sqrt(var / static_cast<double>(row.size()));
      if (sd < kTinyNorm) return detail::zero_row(row);
      for (auto& x : row) x = (x - mean) / sd;
      return;
    }
    case Denominator::l2_plus_seq:
      for (auto& x : row) x /= n.visible;
      return detail::l2_normalize(row);
  }
}

}  // namespace tayattn
