#pragma once

// Hand-derived reverse-mode gradients for softmax attention and for the
// truncated Taylor attention, plus a central finite-difference checker.
//
// The truncated gradient is taken on the per-pair form
//   O_t = norm( sum_s w(x_ts) V_s ),  w(x) = sum_{m<=n} c_m x^m,
// which is the same function the recurrent scan computes, at O(N^2 d) cost.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "tayattn/config.hpp"
#include "tayattn/error.hpp"
#include "tayattn/feature_map.hpp"
#include "tayattn/reference.hpp"
#include "tayattn/tensor.hpp"

namespace tayattn {

struct GradTriple {
  Tensor dq;
  Tensor dk;
  Tensor dv;
};

inline bool supports_gradient(Denominator d) {
  return d == Denominator::none || d == Denominator::seq_norm || d == Denominator::exact ||
         d == Denominator::l2_norm;
}

namespace detail {

inline void check_cotangent(const Tensor& q, const Tensor& v, const Tensor& d_out) {
  if (d_out.ndim() != 2 || d_out.rows() != q.rows() || d_out.cols() != v.cols()) {
    throw ShapeError("output cotangent must be " + std::to_string(q.rows()) + " x " +
                     std::to_string(v.cols()));
  }
}

}  // namespace detail

inline GradTriple softmax_attention_backward(const Tensor& q, const Tensor& k, const Tensor& v,
                                             const Tensor& d_out, Mode mode) {
  check_attention_shapes(q, k, v, mode);
  detail::check_cotangent(q, v, d_out);
  const std::size_t n = q.rows(), m = k.rows(), d = q.cols(), e = v.cols();
  GradTriple g{Tensor(n, d), Tensor(m, d), Tensor(m, e)};
  std::vector<double> p(m);
  std::vector<double> o(e);
  for (std::size_t t = 0; t < n; ++t) {
    const std::size_t visible = visible_keys(mode, t, m);
    double hi = -std::numeric_limits<double>::infinity();
    for (std::size_t s = 0; s < visible; ++s) {
      p[s] = dot(q.row(t), k.row(s));
      hi = std::max(hi, p[s]);
    }
    double z = 0.0;
    for (std::size_t s = 0; s < visible; ++s) {
      p[s] = std::exp(p[s] - hi);
      z += p[s];
    }
    std::fill(o.begin(), o.end(), 0.0);
    for (std::size_t s = 0; s < visible; ++s) {
      p[s] /= z;
      auto vs = v.row(s);
      for (std::size_t j = 0; j < e; ++j) o[j] += p[s] * vs[j];
    }
    auto dot_t = d_out.row(t);
    const double do_o = dot(dot_t, o);
    for (std::size_t s = 0; s < visible; ++s) {
      auto dvs = g.dv.row(s);
      for (std::size_t j = 0; j < e; ++j) dvs[j] += p[s] * dot_t[j];
      // dS_ts = P_ts (dO_t . V_s - dO_t . O_t)
      const double ds = p[s] * (dot(dot_t, v.row(s)) - do_o);
      auto dqt = g.dq.row(t);
      auto dks = g.dk.row(s);
      auto ks = k.row(s);
      auto qt = q.row(t);
      for (std::size_t i = 0; i < d; ++i) {
        dqt[i] += ds * ks[i];
        dks[i] += ds * qt[i];
      }
    }
  }
  return g;
}

/// Gradients of the truncated Taylor attention for the none, seq_norm, exact
/// and l2_norm denominators. The clamp acts per pair (zero slope outside the
/// bound).
inline GradTriple recurrent_attention_backward(const Tensor& q, const Tensor& k, const Tensor& v,
                                               const Tensor& d_out, const AttentionConfig& cfg) {
  cfg.validate();
  check_attention_shapes(q, k, v, cfg.mode);
  detail::check_cotangent(q, v, d_out);
  if (!supports_gradient(cfg.denominator)) {
    throw ConfigError("gradients are not implemented for the '" +
                      std::string(to_string(cfg.denominator)) + "' denominator");
  }
  const std::size_t n = q.rows(), m = k.rows(), d = q.cols(), e = v.cols();
  const auto weights = series_weights(cfg);
  const Tensor qm = apply_feature_map(cfg.query_map, q);
  const Tensor km = apply_feature_map(cfg.key_map, k);

  Tensor dqm(n, d), dkm(m, d);
  GradTriple g{Tensor(n, d), Tensor(m, d), Tensor(m, e)};
  std::vector<double> x(m), w(m), u(e), du(e);

  for (std::size_t t = 0; t < n; ++t) {
    const std::size_t visible = visible_keys(cfg.mode, t, m);
    std::fill(u.begin(), u.end(), 0.0);
    double z = 0.0;
    for (std::size_t s = 0; s < visible; ++s) {
      x[s] = dot(qm.row(t), km.row(s));
      w[s] = truncated_series(clamp_logit(x[s], cfg.clamp), weights);
      z += w[s];
      auto vs = v.row(s);
      for (std::size_t j = 0; j < e; ++j) u[j] += w[s] * vs[j];
    }

    // du: cotangent on the numerator u_t. dz: cotangent on the normalizer z_t.
    auto dot_t = d_out.row(t);
    double dz = 0.0;
    switch (cfg.denominator) {
      case Denominator::none:
        std::copy(dot_t.begin(), dot_t.end(), du.begin());
        break;
      case Denominator::seq_norm:
        for (std::size_t j = 0; j < e; ++j) du[j] = dot_t[j] / static_cast<double>(visible);
        break;
      case Denominator::exact: {
        if (!(std::abs(z) >= kTinyNorm)) throw NumericError("exact denominator vanished");
        double do_u = 0.0;
        for (std::size_t j = 0; j < e; ++j) {
          du[j] = dot_t[j] / z;
          do_u += dot_t[j] * u[j];
        }
        dz = -do_u / (z * z);
        break;
      }
      case Denominator::l2_norm: {
        const double norm = std::sqrt(dot(u, u));
        if (norm < kTinyNorm) {
          std::fill(du.begin(), du.end(), 0.0);
          break;
        }
        double proj = 0.0;
        for (std::size_t j = 0; j < e; ++j) proj += dot_t[j] * u[j] / norm;
        for (std::size_t j = 0; j < e; ++j) du[j] = (dot_t[j] - proj * u[j] / norm) / norm;
        break;
      }
      default:
        break;
    }

    for (std::size_t s = 0; s < visible; ++s) {
      auto vs = v.row(s);
      auto dvs = g.dv.row(s);
      for (std::size_t j = 0; j < e; ++j) dvs[j] += w[s] * du[j];
      const double dw = dot(du, vs) + dz;
      const bool clamped = cfg.clamp && std::abs(x[s]) > *cfg.clamp;
      if (clamped) continue;
      const double dx = dw * truncated_series_derivative(x[s], weights);
      auto dqt = dqm.row(t);
      auto dks = dkm.row(s);
      auto ks = km.row(s);
      auto qt = qm.row(t);
      for (std::size_t i = 0; i < d; ++i) {
        dqt[i] += dx * ks[i];
        dks[i] += dx * qt[i];
      }
    }
  }

  for (std::size_t t = 0; t < n; ++t) {
    auto row = dqm.row(t);
    feature_map_backward(cfg.query_map, q.row(t), row);
    std::copy(row.begin(), row.end(), g.dq.row(t).begin());
  }
  for (std::size_t s = 0; s < m; ++s) {
    auto row = dkm.row(s);
    feature_map_backward(cfg.key_map, k.row(s), row);
    std::copy(row.begin(), row.end(), g.dk.row(s).begin());
  }
  return g;
}

/// (f(x + h) - f(x - h)) / 2h.
template <typename F>
double central_difference(F&& f, double x, double h) {
  return (f(x + h) - f(x - h)) / (2.0 * h);
}

struct InputError {
  double max_rel_err = 0.0;
  double max_abs_err = 0.0;
};

struct GradReport {
  std::string path;
  std::string config;
  double h = 1e-4;
  double tolerance = 1e-5;
  InputError dq, dk, dv;
  double max_rel_err = 0.0;
  double max_abs_err = 0.0;
  /// Coordinates where both values sat under `noise_floor` count as agreeing.
  double noise_floor = 0.0;
  std::size_t below_noise = 0;
  bool pass = false;
};

/// |a - f| / max(|a|, |f|, 1e-8).
inline double grad_relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-8});
}

/// Smallest derivative a central difference can resolve: 64 ulps of
/// sum |O_i dO_i| spread over the 2h step.
inline double central_difference_floor(const Tensor& out, const Tensor& d_out, double h) {
  double s = 0.0;
  for (std::size_t i = 0; i < out.size(); ++i) s += std::abs(out[i] * d_out[i]);
  return 64.0 * std::numeric_limits<double>::epsilon() * s / (2.0 * h);
}

/// Central differences of <forward(Q, K, V), dO> over every input coordinate
/// (Q row-major, then K, then V), compared against `analytic`.
template <typename Forward>
GradReport finite_diff_check(Forward&& forward, const Tensor& q, const Tensor& k, const Tensor& v,
                             const Tensor& d_out, const GradTriple& analytic, double h = 1e-4,
                             double tolerance = 1e-5) {
  if (!(h > 0.0)) throw ConfigError("finite difference step must be positive");
  Tensor qq = q, kk = k, vv = v;
  auto evaluate = [&]() {
    Tensor o = forward(qq, kk, vv);
    if (o.shape() != d_out.shape()) throw ShapeError("forward output does not match the cotangent");
    for (std::size_t i = 0; i < o.size(); ++i) {
      if (!std::isfinite(o[i])) throw NumericError("non-finite forward value during perturbation");
    }
    return o;
  };
  auto objective = [&]() {
    const Tensor o = evaluate();
    double s = 0.0;
    for (std::size_t i = 0; i < o.size(); ++i) s += o[i] * d_out[i];
    return s;
  };
  GradReport r;
  r.h = h;
  r.tolerance = tolerance;
  r.noise_floor = central_difference_floor(evaluate(), d_out, h);
  auto sweep = [&](Tensor& x, const Tensor& grad) {
    if (grad.shape() != x.shape()) throw ShapeError("analytic gradient shape mismatch");
    InputError err;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double saved = x[i];
      x[i] = saved + h;
      const double fp = objective();
      x[i] = saved - h;
      const double fm = objective();
      x[i] = saved;
      const double numeric = (fp - fm) / (2.0 * h);
      err.max_abs_err = std::max(err.max_abs_err, std::abs(grad[i] - numeric));
      if (std::abs(grad[i]) <= r.noise_floor && std::abs(numeric) <= r.noise_floor) {
        ++r.below_noise;
        continue;
      }
      err.max_rel_err = std::max(err.max_rel_err, grad_relative_error(grad[i], numeric));
    }
    return err;
  };
  r.dq = sweep(qq, analytic.dq);
  r.dk = sweep(kk, analytic.dk);
  r.dv = sweep(vv, analytic.dv);
  r.max_rel_err = std::max({r.dq.max_rel_err, r.dk.max_rel_err, r.dv.max_rel_err});
  r.max_abs_err = std::max({r.dq.max_abs_err, r.dk.max_abs_err, r.dv.max_abs_err});
  r.pass = r.max_rel_err <= tolerance;
  return r;
}

}  // namespace tayattn
