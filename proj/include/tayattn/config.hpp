#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "tayattn/error.hpp"
#include "tayattn/tensor.hpp"

namespace tayattn {

inline constexpr int kMaxOrder = 30;

/// Largest number of f64 elements a single hidden-state stack may hold.
inline constexpr std::size_t kStateElementGuard = std::size_t{1} << 26;

enum class Mode { causal, bidirectional };

/// How the Taylor numerator is normalized.
enum class Denominator {
  none,        // raw numerator
  exact,       // divide by the truncated sum of weights (softmax normalizer)
  seq_norm,    // divide by the visible sequence length
  gate,        // multiply by an external per-query gate
  gate_seq,    // gate, then divide by the visible sequence length
  l2_norm,     // unit Euclidean norm per row
  rms_norm,    // unit root-mean-square per row
  layer_norm,  // zero mean, unit variance per row (no affine parameters)
  l2_plus_seq  // divide by the visible sequence length, then unit Euclidean norm
};

enum class FeatureMap { identity, elu_plus_one, relu, cosine };

inline constexpr std::array kAllDenominators{
    Denominator::none,    Denominator::exact,   Denominator::seq_norm,
    Denominator::gate,    Denominator::gate_seq, Denominator::l2_norm,
    Denominator::rms_norm, Denominator::layer_norm, Denominator::l2_plus_seq};

inline constexpr std::array kAllFeatureMaps{FeatureMap::identity, FeatureMap::elu_plus_one,
                                            FeatureMap::relu, FeatureMap::cosine};

inline bool is_gate(Denominator d) { return d == Denominator::gate || d == Denominator::gate_seq; }

inline std::string_view to_string(Mode m) { return m == Mode::causal ? "causal" : "bidir"; }

inline std::string_view to_string(Denominator d) {
  switch (d) {
    case Denominator::none: return "none";
    case Denominator::exact: return "exact";
    case Denominator::seq_norm: return "seq_norm";
    case Denominator::gate: return "gate";
    case Denominator::gate_seq: return "gate_seq";
    case Denominator::l2_norm: return "l2_norm";
    case Denominator::rms_norm: return "rms_norm";
    case Denominator::layer_norm: return "layer_norm";
    case Denominator::l2_plus_seq: return "l2_plus_seq";
  }
  return "?";
}

inline std::string_view to_string(FeatureMap f) {
  switch (f) {
    case FeatureMap::identity: return "identity";
    case FeatureMap::elu_plus_one: return "elu_plus_one";
    case FeatureMap::relu: return "relu";
    case FeatureMap::cosine: return "cosine";
  }
  return "?";
}

inline Mode parse_mode(std::string_view s) {
  if (s == "causal") return Mode::causal;
  if (s == "bidir" || s == "bidirectional") return Mode::bidirectional;
  throw ConfigError("unknown mode '" + std::string(s) + "'");
}

inline Denominator parse_denominator(std::string_view s) {
  for (auto d : kAllDenominators) {
    if (to_string(d) == s) return d;
  }
  throw ConfigError("unknown denominator '" + std::string(s) + "'");
}

inline FeatureMap parse_feature_map(std::string_view s) {
  for (auto f : kAllFeatureMaps) {
    if (to_string(f) == s) return f;
  }
  throw ConfigError("unknown feature map '" + std::string(s) + "'");
}

struct AttentionConfig {
  int order = 0;
  /// First retained series term. 0 keeps the full expansion; 1 with order 1
  /// is plain linear attention.
  int min_order = 0;
  Mode mode = Mode::causal;
  Denominator denominator = Denominator::exact;
  FeatureMap query_map = FeatureMap::identity;
  FeatureMap key_map = FeatureMap::identity;
  std::optional<double> clamp;
  /// Series coefficients c_0..c_order. Empty means 1/m!. Only fault-injection
  /// fixtures set this.
  std::vector<double> series_weights;

  void validate() const {
    if (order < 0 || order > kMaxOrder) {
      throw ConfigError("order must lie in [0, " + std::to_string(kMaxOrder) + "], got " +
                        std::to_string(order));
    }
    if (min_order < 0 || min_order > order) {
      throw ConfigError("min_order must lie in [0, order]");
    }
    if (clamp && !(*clamp >= 0.0 && std::isfinite(*clamp))) {
      throw ConfigError("clamp must be a finite non-negative number");
    }
    if (!series_weights.empty() && series_weights.size() != static_cast<std::size_t>(order) + 1) {
      throw ConfigError("series_weights must hold order + 1 coefficients");
    }
  }
};

/// w_0 = 1, w_m = w_{m-1} / m.
inline std::vector<double> inverse_factorials(int order) {
  std::vector<double> w(static_cast<std::size_t>(order) + 1);
  w[0] = 1.0;
  for (int m = 1; m <= order; ++m) w[m] = w[m - 1] / m;
  return w;
}

/// Coefficients c_0..c_order with c_m = 0 below min_order.
inline std::vector<double> series_weights(const AttentionConfig& cfg) {
  auto w = cfg.series_weights.empty() ? inverse_factorials(cfg.order) : cfg.series_weights;
  for (int m = 0; m < cfg.min_order; ++m) w[m] = 0.0;
  return w;
}

inline double clamp_logit(double x, std::optional<double> bound) {
  if (!bound) return x;
  return std::min(std::max(x, -*bound), *bound);
}

/// Gate vectors from the gated-attention identity. `g_in` scales output rows
/// (one entry per query), `g_out` scales value rows (one entry per key).
struct GatePair {
  std::vector<double> g_in;
  std::vector<double> g_out;

  void validate(std::size_t n_queries, std::size_t n_keys) const {
    if (g_in.size() != n_queries) {
      throw ShapeError("g_in has " + std::to_string(g_in.size()) + " entries, expected " +
                       std::to_string(n_queries));
    }
    if (g_out.size() != n_keys) {
      throw ShapeError("g_out has " + std::to_string(g_out.size()) + " entries, expected " +
                       std::to_string(n_keys));
    }
    auto in_unit = [](double g) { return g >= 0.0 && g <= 1.0; };
    if (!std::all_of(g_in.begin(), g_in.end(), in_unit) ||
        !std::all_of(g_out.begin(), g_out.end(), in_unit)) {
      throw ConfigError("gate entries must lie in [0, 1]");
    }
  }
};

// Gate files hold g_in followed by g_out as a single 1-D tensor.
inline Tensor gates_to_tensor(const GatePair& g) {
  std::vector<double> data(g.g_in);
  data.insert(data.end(), g.g_out.begin(), g.g_out.end());
  const std::size_t n = data.size();
  return Tensor::from_data({n}, std::move(data));
}

inline GatePair gates_from_tensor(const Tensor& t, std::size_t n_queries, std::size_t n_keys) {
  if (t.ndim() != 1 || t.size() != n_queries + n_keys) {
    throw ShapeError("gate tensor must be 1-D with " + std::to_string(n_queries + n_keys) +
                     " entries");
  }
  GatePair g;
  auto v = t.values();
  g.g_in.assign(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(n_queries));
  g.g_out.assign(v.begin() + static_cast<std::ptrdiff_t>(n_queries), v.end());
  g.validate(n_queries, n_keys);
  return g;
}

inline void check_attention_shapes(const Tensor& q, const Tensor& k, const Tensor& v, Mode mode) {
  if (q.ndim() != 2 || k.ndim() != 2 || v.ndim() != 2) throw ShapeError("Q, K, V must be matrices");
  if (q.rows() == 0 || k.rows() == 0) throw ShapeError("empty sequence");
  if (q.cols() != k.cols()) throw ShapeError("Q and K must share the feature dimension");
  if (q.cols() == 0 || v.cols() == 0) throw ShapeError("feature dimensions must be >= 1");
  if (k.rows() != v.rows()) throw ShapeError("K and V must have the same number of rows");
  if (mode == Mode::causal && q.rows() != k.rows()) {
    throw ShapeError("causal mode requires as many queries as keys");
  }
}

/// Number of keys visible to query t (0-based).
inline std::size_t visible_keys(Mode mode, std::size_t t, std::size_t n_keys) {
  return mode == Mode::causal ? t + 1 : n_keys;
}

}  // namespace tayattn
