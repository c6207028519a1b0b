#pragma once

// Quadratic-time attention kernels. Every function here evaluates query-key
// pairs one at a time; they are the oracles for the recurrent forms.

#include <cmath>
#include <limits>
#include <optional>
#include <utility>
#include <vector>

#include "tayattn/config.hpp"
#include "tayattn/error.hpp"
#include "tayattn/feature_map.hpp"
#include "tayattn/normalize.hpp"
#include "tayattn/tensor.hpp"

namespace tayattn {

/// Pre-normalization score matrix; masked entries are exactly zero.
struct AttentionMatrix {
  Tensor scores;
  Mode mode = Mode::causal;
};

/// sum_{m<=n} c_m x^m, accumulated in ascending m.
inline double truncated_series(double x, std::span<const double> weights) {
  double sum = 0.0;
  double power = 1.0;
  for (double c : weights) {
    sum += c * power;
    power *= x;
  }
  return sum;
}

/// d/dx of `truncated_series`.
inline double truncated_series_derivative(double x, std::span<const double> weights) {
  double sum = 0.0;
  double power = 1.0;
  for (std::size_t m = 1; m < weights.size(); ++m) {
    sum += weights[m] * static_cast<double>(m) * power;
    power *= x;
  }
  return sum;
}

/// Row-wise softmax attention with per-row max subtraction.
inline Tensor softmax_attention(const Tensor& q, const Tensor& k, const Tensor& v, Mode mode) {
  check_attention_shapes(q, k, v, mode);
  const std::size_t n = q.rows(), m = k.rows(), e = v.cols();
  Tensor out(n, e);
  std::vector<double> logits(m);
  for (std::size_t t = 0; t < n; ++t) {
    const std::size_t visible = visible_keys(mode, t, m);
    double hi = -std::numeric_limits<double>::infinity();
    for (std::size_t s = 0; s < visible; ++s) {
      logits[s] = dot(q.row(t), k.row(s));
      hi = std::max(hi, logits[s]);
    }
    double z = 0.0;
    auto o = out.row(t);
    for (std::size_t s = 0; s < visible; ++s) {
      double w = std::exp(logits[s] - hi);
      z += w;
      auto vs = v.row(s);
      for (std::size_t j = 0; j < e; ++j) o[j] += w * vs[j];
    }
    for (auto& x : o) x /= z;
  }
  return out;
}

namespace detail {

inline void check_gates_for(const AttentionConfig& cfg, const std::optional<GatePair>& gates,
                            std::size_t n, std::size_t m) {
  if (is_gate(cfg.denominator)) {
    if (!gates) throw ConfigError("gate denominator requires a GatePair");
    gates->validate(n, m);
  } else if (gates) {
    throw ConfigError("gates are only used by the gate denominators");
  }
}

}  // namespace detail

/// Scores x_ts = clamp(phi(Q)_t . psi(K)_s) for visible pairs, unmasked zeros elsewhere.
inline AttentionMatrix logit_matrix(const Tensor& q, const Tensor& k, FeatureMap query_map,
                                    FeatureMap key_map, Mode mode, std::optional<double> clamp) {
  const Tensor qm = apply_feature_map(query_map, q);
  const Tensor km = apply_feature_map(key_map, k);
  AttentionMatrix a{Tensor(q.rows(), k.rows()), mode};
  for (std::size_t t = 0; t < q.rows(); ++t) {
    const std::size_t visible = visible_keys(mode, t, k.rows());
    for (std::size_t s = 0; s < visible; ++s) {
      a.scores(t, s) = clamp_logit(dot(qm.row(t), km.row(s)), clamp);
    }
  }
  return a;
}

/// Truncated-Taylor attention evaluated per query-key pair:
/// numerator_t = sum_s (sum_{m<=n} x_ts^m / m!) V_s, then the denominator mode.
/// In gate modes the value rows are scaled by g_out and the output row by g_in.
inline Tensor taylor_attention_direct(const Tensor& q, const Tensor& k, const Tensor& v,
                                      const AttentionConfig& cfg,
                                      const std::optional<GatePair>& gates = std::nullopt) {
  cfg.validate();
  check_attention_shapes(q, k, v, cfg.mode);
  const std::size_t n = q.rows(), m = k.rows(), e = v.cols();
  detail::check_gates_for(cfg, gates, n, m);
  const auto weights = series_weights(cfg);
  const Tensor qm = apply_feature_map(cfg.query_map, q);
  const Tensor km = apply_feature_map(cfg.key_map, k);

  Tensor out(n, e);
  for (std::size_t t = 0; t < n; ++t) {
    const std::size_t visible = visible_keys(cfg.mode, t, m);
    auto o = out.row(t);
    RowNormalizer norm;
    norm.visible = static_cast<double>(visible);
    for (std::size_t s = 0; s < visible; ++s) {
      const double x = clamp_logit(dot(qm.row(t), km.row(s)), cfg.clamp);
      const double w = truncated_series(x, weights);
      norm.weight_sum += w;
      const double wv = gates ? w * gates->g_out[s] : w;
      auto vs = v.row(s);
      for (std::size_t j = 0; j < e; ++j) o[j] += wv * vs[j];
    }
    if (gates) norm.gate = gates->g_in[t];
    finalize_row(cfg.denominator, norm, o);
  }
  return out;
}

/// Linear attention phi(Q) psi(K)^T V with the causal mask applied to the
/// explicit score matrix.
inline Tensor linear_attention_matrix(const Tensor& q, const Tensor& k, const Tensor& v,
                                      FeatureMap query_map, FeatureMap key_map, Mode mode) {
  check_attention_shapes(q, k, v, mode);
  const AttentionMatrix a = logit_matrix(q, k, query_map, key_map, mode, std::nullopt);
  const std::size_t n = q.rows(), m = k.rows(), e = v.cols();
  Tensor out(n, e);
  for (std::size_t t = 0; t < n; ++t) {
    auto o = out.row(t);
    for (std::size_t s = 0; s < m; ++s) {
      const double w = a.scores(t, s);
      auto vs = v.row(s);
      for (std::size_t j = 0; j < e; ++j) o[j] += w * vs[j];
    }
  }
  return out;
}

struct GatedOutputs {
  Tensor factored;
  Tensor fused;
};

/// Unnormalized gated attention in both algebraic forms:
///   fused    = [g_in (.) e^{QK^T} (.) M (.) g_out] V
///   factored = g_in (.) ([e^{QK^T} (.) M] (g_out (.) V))
inline GatedOutputs gated_attention_matrix(const Tensor& q, const Tensor& k, const Tensor& v,
                                           const GatePair& gates, Mode mode,
                                           std::optional<double> clamp = std::nullopt) {
  check_attention_shapes(q, k, v, mode);
  const std::size_t n = q.rows(), m = k.rows(), e = v.cols();
  gates.validate(n, m);

  AttentionMatrix a = logit_matrix(q, k, FeatureMap::identity, FeatureMap::identity, mode, clamp);
  for (std::size_t t = 0; t < n; ++t) {
    const std::size_t visible = visible_keys(mode, t, m);
    for (std::size_t s = 0; s < visible; ++s) a.scores(t, s) = std::exp(a.scores(t, s));
  }

  Tensor fused_scores = a.scores;
  for (std::size_t t = 0; t < n; ++t) {
    for (std::size_t s = 0; s < m; ++s) fused_scores(t, s) *= gates.g_in[t] * gates.g_out[s];
  }

  Tensor gated_v = v;
  for (std::size_t s = 0; s < m; ++s) {
    for (auto& x : gated_v.row(s)) x *= gates.g_out[s];
  }

  GatedOutputs out{Tensor(n, e), Tensor(n, e)};
  for (std::size_t t = 0; t < n; ++t) {
    auto f = out.fused.row(t);
    auto g = out.factored.row(t);
    for (std::size_t s = 0; s < m; ++s) {
      auto vs = v.row(s);
      auto gvs = gated_v.row(s);
      for (std::size_t j = 0; j < e; ++j) {
        f[j] += fused_scores(t, s) * vs[j];
        g[j] += a.scores(t, s) * gvs[j];
      }
    }
    for (auto& x : g) x *= gates.g_in[t];
  }
  return out;
}

}  // namespace tayattn
