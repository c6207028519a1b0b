#pragma once

// Softmax attention as a stack of linear RNNs, one per Taylor order m:
//   H^m_t = sum_{s<=t} (K_s^(x)m)^T V_s,   D^m_t = sum_{s<=t} K_s^(x)m
//   O_t   = norm( sum_m c_m (Q_t^(x)m) . H^m_t )
// where the exact normalizer is sum_m c_m (Q_t^(x)m) . D^m_t.

#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tayattn/config.hpp"
#include "tayattn/error.hpp"
#include "tayattn/feature_map.hpp"
#include "tayattn/kron.hpp"
#include "tayattn/normalize.hpp"
#include "tayattn/reference.hpp"
#include "tayattn/tensor.hpp"

namespace tayattn {

/// Sum over m = lo..hi of d^m (e + 1), the elements held by a recurrent state.
inline std::size_t state_element_count(std::size_t d, std::size_t e, int hi, int lo = 0) {
  std::size_t total = 0;
  for (int m = lo; m <= hi; ++m) {
    const std::size_t block = checked_power(d, m) * (e + 1);
    if (total > kStateElementGuard - block) {
      throw ResourceError("recurrent state for d=" + std::to_string(d) + ", e=" + std::to_string(e) +
                          ", order=" + std::to_string(hi) + " exceeds the element guard");
    }
    total += block;
  }
  return total;
}

class RecurrentState {
 public:
  RecurrentState(std::size_t d, std::size_t e, int order, int min_order = 0)
      : d_(d), e_(e), order_(order), min_order_(min_order) {
    if (d == 0 || e == 0) throw ConfigError("state dimensions must be >= 1");
    if (order < 0 || order > kMaxOrder || min_order < 0 || min_order > order) {
      throw ConfigError("invalid state order range");
    }
    state_element_count(d, e, order, min_order);
    std::size_t rows = 1;
    for (int m = 0; m <= order; ++m) {
      if (m >= min_order) {
        hidden_.emplace_back(rows, e);
        denom_.emplace_back(rows, 0.0);
      }
      if (m < order) rows *= d;
    }
    key_power_.resize(rows);
    scratch_.resize(rows);
  }

  std::size_t key_dim() const { return d_; }
  std::size_t value_dim() const { return e_; }
  int order() const { return order_; }
  int min_order() const { return min_order_; }
  std::size_t steps() const { return steps_; }

  /// H^m for m in [min_order, order].
  const Tensor& hidden(int m) const { return hidden_.at(static_cast<std::size_t>(m - min_order_)); }
  const std::vector<double>& denom(int m) const {
    return denom_.at(static_cast<std::size_t>(m - min_order_));
  }

  std::size_t element_count() const {
    std::size_t total = 0;
    for (std::size_t i = 0; i < hidden_.size(); ++i) total += hidden_[i].size() + denom_[i].size();
    return total;
  }

  /// Absorbs one key/value pair; `gate` scales the contribution.
  void update(std::span<const double> k, std::span<const double> v, std::optional<double> gate = {}) {
    if (k.size() != d_ || v.size() != e_) throw ShapeError("state_update: key/value length mismatch");
    if (gate && !(*gate >= 0.0 && *gate <= 1.0)) throw ConfigError("input gate must lie in [0, 1]");
    const double g = gate.value_or(1.0);
    std::size_t len = 1;
    key_power_[0] = 1.0;
    for (int m = 0; m <= order_; ++m) {
      if (m > 0) {
        kron_extend<double>(std::span<const double>(key_power_.data(), len), k,
                            std::span<double>(scratch_.data(), len * d_));
        len *= d_;
        key_power_.swap(scratch_);
      }
      if (m < min_order_) continue;
      Tensor& h = hidden_[static_cast<std::size_t>(m - min_order_)];
      std::vector<double>& z = denom_[static_cast<std::size_t>(m - min_order_)];
      if (g == 1.0) {
        for (std::size_t i = 0; i < len; ++i) {
          const double kp = key_power_[i];
          double* row = &h(i, 0);
          for (std::size_t j = 0; j < e_; ++j) row[j] += kp * v[j];
          z[i] += kp;
        }
      } else {
        for (std::size_t i = 0; i < len; ++i) {
          const double kp = g * key_power_[i];
          double* row = &h(i, 0);
          for (std::size_t j = 0; j < e_; ++j) row[j] += kp * v[j];
          z[i] += kp;
        }
      }
    }
    ++steps_;
  }

  /// Numerator sum_m c_m q^(x)m . H^m written to `out`; returns the matching
  /// normalizer sum_m c_m q^(x)m . D^m.
  double contract(std::span<const double> q, std::span<const double> weights,
                  std::span<double> out) const {
    if (q.size() != d_ || out.size() != e_) throw ShapeError("readout: query/output length mismatch");
    if (weights.size() != static_cast<std::size_t>(order_) + 1) {
      throw ConfigError("readout: weight table does not match state order");
    }
    for (auto& x : out) x = 0.0;
    double normalizer = 0.0;
    std::size_t len = 1;
    std::vector<double> query_power(key_power_.size()), scratch(key_power_.size());
    query_power[0] = 1.0;
    for (int m = 0; m <= order_; ++m) {
      if (m > 0) {
        kron_extend<double>(std::span<const double>(query_power.data(), len), q,
                            std::span<double>(scratch.data(), len * d_));
        len *= d_;
        query_power.swap(scratch);
      }
      if (m < min_order_) continue;
      const Tensor& h = hidden_[static_cast<std::size_t>(m - min_order_)];
      const std::vector<double>& z = denom_[static_cast<std::size_t>(m - min_order_)];
      const double c = weights[static_cast<std::size_t>(m)];
      for (std::size_t i = 0; i < len; ++i) {
        const double qp = c * query_power[i];
        const double* row = h.row(i).data();
        for (std::size_t j = 0; j < e_; ++j) out[j] += qp * row[j];
        normalizer += qp * z[i];
      }
    }
    return normalizer;
  }

 private:
  std::size_t d_;
  std::size_t e_;
  int order_;
  int min_order_;
  std::size_t steps_ = 0;
  std::vector<Tensor> hidden_;
  std::vector<std::vector<double>> denom_;
  std::vector<double> key_power_;
  std::vector<double> scratch_;
};

inline RecurrentState state_init(std::size_t d, std::size_t e, int order, int min_order = 0) {
  return RecurrentState(d, e, order, min_order);
}

inline void state_update(RecurrentState& state, std::span<const double> k, std::span<const double> v,
                         std::optional<double> gate_in = {}) {
  state.update(k, v, gate_in);
}

/// One output row from the current state. `gate_out` is the per-query gate
/// used by the gate denominators.
inline std::vector<double> readout(const RecurrentState& state, std::span<const double> q,
                                   const AttentionConfig& cfg, std::optional<double> gate_out = {}) {
  cfg.validate();
  if (state.steps() == 0) throw ConfigError("readout before any update");
  if (cfg.order != state.order() || cfg.min_order != state.min_order()) {
    throw ConfigError("readout: config order does not match state order");
  }
  if (is_gate(cfg.denominator) && !gate_out) throw ConfigError("gate denominator requires gate_out");
  const auto weights = series_weights(cfg);
  std::vector<double> out(state.value_dim());
  RowNormalizer norm;
  norm.weight_sum = state.contract(q, weights, out);
  norm.visible = static_cast<double>(state.steps());
  norm.gate = gate_out;
  finalize_row(cfg.denominator, norm, out);
  return out;
}

namespace detail {

struct MappedInputs {
  Tensor q;
  Tensor k;
};

// Feature maps, then the clamp realized as a rescaling of the queries so the
// largest visible |logit| does not exceed the bound.
inline MappedInputs map_and_prescale(const Tensor& q, const Tensor& k, const AttentionConfig& cfg) {
  MappedInputs mi{apply_feature_map(cfg.query_map, q), apply_feature_map(cfg.key_map, k)};
  if (!cfg.clamp) return mi;
  double largest = 0.0;
  for (std::size_t t = 0; t < mi.q.rows(); ++t) {
    const std::size_t visible = visible_keys(cfg.mode, t, mi.k.rows());
    for (std::size_t s = 0; s < visible; ++s) {
      largest = std::max(largest, std::abs(dot(mi.q.row(t), mi.k.row(s))));
    }
  }
  if (largest > *cfg.clamp) {
    const double factor = *cfg.clamp / largest;
    for (auto& x : mi.q.values()) x *= factor;
  }
  return mi;
}

}  // namespace detail

/// Largest |phi(Q)_t . psi(K)_s| over visible pairs after the clamp rescaling.
inline double max_visible_logit(const Tensor& q, const Tensor& k, const AttentionConfig& cfg) {
  auto mi = detail::map_and_prescale(q, k, cfg);
  double largest = 0.0;
  for (std::size_t t = 0; t < mi.q.rows(); ++t) {
    for (std::size_t s = 0; s < visible_keys(cfg.mode, t, mi.k.rows()); ++s) {
      largest = std::max(largest, std::abs(dot(mi.q.row(t), mi.k.row(s))));
    }
  }
  return largest;
}

inline Tensor bidirectional_recurrent_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                                                const AttentionConfig& cfg,
                                                const std::optional<GatePair>& gates = std::nullopt) {
  cfg.validate();
  check_attention_shapes(q, k, v, Mode::bidirectional);
  detail::check_gates_for(cfg, gates, q.rows(), k.rows());
  AttentionConfig bcfg = cfg;
  bcfg.mode = Mode::bidirectional;
  const auto mi = detail::map_and_prescale(q, k, bcfg);

  RecurrentState state(q.cols(), v.cols(), cfg.order, cfg.min_order);
  for (std::size_t s = 0; s < k.rows(); ++s) {
    state.update(mi.k.row(s), v.row(s), gates ? std::optional(gates->g_out[s]) : std::nullopt);
  }
  Tensor out(q.rows(), v.cols());
  for (std::size_t t = 0; t < q.rows(); ++t) {
    auto row = readout(state, mi.q.row(t), bcfg, gates ? std::optional(gates->g_in[t]) : std::nullopt);
    std::copy(row.begin(), row.end(), out.row(t).begin());
  }
  return out;
}

/// Single left-to-right scan: absorb (K_t, V_t), then read out Q_t. A
/// bidirectional config is forwarded to `bidirectional_recurrent_attention`.
inline Tensor recurrent_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                                  const AttentionConfig& cfg,
                                  const std::optional<GatePair>& gates = std::nullopt) {
  if (cfg.mode == Mode::bidirectional) return bidirectional_recurrent_attention(q, k, v, cfg, gates);
  cfg.validate();
  check_attention_shapes(q, k, v, Mode::causal);
  detail::check_gates_for(cfg, gates, q.rows(), k.rows());
  const auto mi = detail::map_and_prescale(q, k, cfg);

  RecurrentState state(q.cols(), v.cols(), cfg.order, cfg.min_order);
  Tensor out(q.rows(), v.cols());
  for (std::size_t t = 0; t < q.rows(); ++t) {
    state.update(mi.k.row(t), v.row(t), gates ? std::optional(gates->g_out[t]) : std::nullopt);
    auto row = readout(state, mi.q.row(t), cfg, gates ? std::optional(gates->g_in[t]) : std::nullopt);
    std::copy(row.begin(), row.end(), out.row(t).begin());
  }
  return out;
}

/// H_t = H_{t-1} + psi(K_t)^T V_t,  O_t = phi(Q_t) H_t.
inline Tensor linear_attention_recurrent(const Tensor& q, const Tensor& k, const Tensor& v,
                                         FeatureMap query_map, FeatureMap key_map) {
  check_attention_shapes(q, k, v, Mode::causal);
  const std::size_t d = q.cols(), e = v.cols();
  const Tensor qm = apply_feature_map(query_map, q);
  const Tensor km = apply_feature_map(key_map, k);
  Tensor h(d, e);
  Tensor out(q.rows(), e);
  for (std::size_t t = 0; t < q.rows(); ++t) {
    auto kt = km.row(t);
    auto vt = v.row(t);
    for (std::size_t i = 0; i < d; ++i) {
      for (std::size_t j = 0; j < e; ++j) h(i, j) += kt[i] * vt[j];
    }
    auto qt = qm.row(t);
    auto o = out.row(t);
    for (std::size_t i = 0; i < d; ++i) {
      for (std::size_t j = 0; j < e; ++j) o[j] += qt[i] * h(i, j);
    }
  }
  return out;
}

/// H_t = H_{t-1} + (K_t (x) K_t)^T V_t,  O_t = (Q_t (x) Q_t) H_t.
inline Tensor quadratic_attention_recurrent(const Tensor& q, const Tensor& k, const Tensor& v) {
  check_attention_shapes(q, k, v, Mode::causal);
  const std::size_t d = q.cols(), e = v.cols();
  Tensor h(d * d, e);
  Tensor out(q.rows(), e);
  std::vector<double> kk(d * d), qq(d * d);
  for (std::size_t t = 0; t < q.rows(); ++t) {
    kron_extend<double>(k.row(t), k.row(t), kk);
    auto vt = v.row(t);
    for (std::size_t i = 0; i < d * d; ++i) {
      for (std::size_t j = 0; j < e; ++j) h(i, j) += kk[i] * vt[j];
    }
    kron_extend<double>(q.row(t), q.row(t), qq);
    auto o = out.row(t);
    for (std::size_t i = 0; i < d * d; ++i) {
      for (std::size_t j = 0; j < e; ++j) o[j] += qq[i] * h(i, j);
    }
  }
  return out;
}

}  // namespace tayattn
