#pragma once

// Compiled-in verification suites. Each check records the measured error, the
// tolerance it is held to and whether it passed.

#include <array>
#include <chrono>
#include <limits>
#include <utility>
#include <cmath>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "tayattn/bench.hpp"
#include "tayattn/config.hpp"
#include "tayattn/grad.hpp"
#include "tayattn/kron.hpp"
#include "tayattn/recurrent.hpp"
#include "tayattn/reference.hpp"
#include "tayattn/rng.hpp"
#include "tayattn/tensor.hpp"

namespace tayattn {

struct Check {
  std::string name;
  std::string config;
  double measured = 0.0;
  double tolerance = 0.0;
  bool pass = false;
};

struct SuiteReport {
  std::string suite;
  std::vector<Check> checks;

  bool all_pass() const {
    for (const auto& c : checks) {
      if (!c.pass) return false;
    }
    return !checks.empty();
  }

  void add(std::string name, std::string config, double measured, double tolerance) {
    checks.push_back({std::move(name), std::move(config), measured, tolerance,
                      std::isfinite(measured) && measured <= tolerance});
  }
};

struct VerifyOptions {
  /// Replaces the 1/m! table everywhere the suites build a config. Used to
  /// prove the suites notice a corrupted series.
  std::function<std::vector<double>(int order)> series_override;
};

inline constexpr std::array<std::string_view, 5> kSuiteNames{"kron", "equivalence", "denominator",
                                                             "gates", "grad"};

namespace verify_detail {

using Clock = std::chrono::steady_clock;

inline double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

inline AttentionConfig make_config(const VerifyOptions& opt, int order, Denominator den, Mode mode,
                                   FeatureMap qmap = FeatureMap::identity,
                                   FeatureMap kmap = FeatureMap::identity) {
  AttentionConfig cfg;
  cfg.order = order;
  cfg.denominator = den;
  cfg.mode = mode;
  cfg.query_map = qmap;
  cfg.key_map = kmap;
  if (opt.series_override) cfg.series_weights = opt.series_override(order);
  return cfg;
}

inline std::string describe(const AttentionConfig& c, std::size_t n, std::size_t m, std::size_t d,
                            std::size_t e) {
  std::ostringstream os;
  os << "N=" << n << " M=" << m << " d=" << d << " e=" << e << " order=" << c.order;
  if (c.min_order) os << " min_order=" << c.min_order;
  os << " mode=" << to_string(c.mode) << " den=" << to_string(c.denominator)
     << " qmap=" << to_string(c.query_map) << " kmap=" << to_string(c.key_map);
  if (c.clamp) os << " clamp=" << *c.clamp;
  return os.str();
}

inline GatePair random_gates(SplitMix64& rng, std::size_t n, std::size_t m) {
  GatePair g;
  for (std::size_t i = 0; i < n; ++i) g.g_in.push_back(rng.uniform01());
  for (std::size_t i = 0; i < m; ++i) g.g_out.push_back(rng.uniform01());
  return g;
}

/// Runs `a` and `b`; both raising NumericError counts as agreement (an exactly
/// vanishing exact denominator), one raising alone counts as a failure.
inline double compare_or_both_fail(const std::function<Tensor()>& a, const std::function<Tensor()>& b) {
  std::optional<Tensor> ra, rb;
  bool fa = false, fb = false;
  try {
    ra = a();
  } catch (const NumericError&) {
    fa = true;
  }
  try {
    rb = b();
  } catch (const NumericError&) {
    fb = true;
  }
  if (fa && fb) return 0.0;
  if (fa || fb) return std::numeric_limits<double>::infinity();
  return max_rel_error(*ra, *rb);
}

// Per-pair squaring oracle for the order-2-only recurrence.
inline Tensor squared_score_attention(const Tensor& q, const Tensor& k, const Tensor& v) {
  Tensor out(q.rows(), v.cols());
  for (std::size_t t = 0; t < q.rows(); ++t) {
    for (std::size_t s = 0; s <= t; ++s) {
      const double x = dot(q.row(t), k.row(s));
      for (std::size_t j = 0; j < v.cols(); ++j) out(t, j) += x * x * v(s, j);
    }
  }
  return out;
}

}  // namespace verify_detail

// ---------------------------------------------------------------------------

inline SuiteReport verify_kron(const VerifyOptions& = {}) {
  using namespace verify_detail;
  SuiteReport r{"kron", {}};

  const auto start = Clock::now();
  SplitMix64 rng(0x4B524F4EULL);
  double worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t d = 1 + rng.next() % 6;
    const int n = static_cast<int>(rng.next() % 5);
    std::vector<double> a(d), b(d);
    for (auto& x : a) x = rng.uniform(-1.0, 1.0);
    for (auto& x : b) x = rng.uniform(-1.0, 1.0);
    const double exact = std::pow(dot(a, b), n);
    const double decomposed = decomposed_inner_power(a, b, n);
    worst = std::max(worst, std::abs(decomposed - exact) / (1.0 + std::abs(exact)));
  }
  const double elapsed = seconds_since(start);
  r.add("kron.decomposed_inner_power", "1000 draws, d<=6, n<=4, entries in [-1,1]", worst, 1e-9);
  r.add("kron.decomposed_inner_power_runtime_s", "1000 draws", elapsed, 2.0);

  {
    const auto p = kron_power({1.0, 2.0}, 2);
    const std::vector<double> expect{1, 2, 2, 4};
    double diff = p.data.size() == expect.size() ? 0.0 : 1.0;
    for (std::size_t i = 0; i < std::min(p.size(), expect.size()); ++i) {
      diff = std::max(diff, std::abs(p.data[i] - expect[i]));
    }
    diff = std::max(diff, std::abs(kron_power({3.0}, 4).data.at(0) - 81.0));
    diff = std::max(diff, std::abs(kron_power({1.0, 2.0, 3.0}, 0).data.at(0) - 1.0));
    diff = std::max(diff, std::abs(decomposed_inner_power({1.0, 2.0}, {3.0, 4.0}, 2) - 121.0));
    r.add("kron.worked_examples", "[1,2]^2, [3]^4, n=0, <[1,2],[3,4]>^2", diff, 0.0);
  }

  {
    double worst_sum = 0.0, worst_scale = 0.0;
    SplitMix64 g(77);
    for (int trial = 0; trial < 200; ++trial) {
      const std::size_t d = 1 + g.next() % 4;
      const int n = static_cast<int>(g.next() % 5);
      std::vector<double> v(d), scaled(d);
      double sum = 0.0;
      const double alpha = g.uniform(-2.0, 2.0);
      for (std::size_t i = 0; i < d; ++i) {
        v[i] = g.uniform(-1.0, 1.0);
        sum += v[i];
        scaled[i] = alpha * v[i];
      }
      const auto p = kron_power(v, n);
      const auto ps = kron_power(scaled, n);
      double total = 0.0;
      for (double x : p.data) total += x;
      worst_sum = std::max(worst_sum, std::abs(total - std::pow(sum, n)) / (1.0 + std::abs(std::pow(sum, n))));
      const double an = std::pow(alpha, n);
      for (std::size_t i = 0; i < p.size(); ++i) {
        worst_scale = std::max(worst_scale, std::abs(ps.data[i] - an * p.data[i]) / (1.0 + std::abs(an * p.data[i])));
      }
    }
    r.add("kron.entry_sum_equals_sum_power", "200 draws, d<=4, n<=4", worst_sum, 1e-12);
    r.add("kron.scale_covariance", "200 draws, d<=4, n<=4", worst_scale, 1e-12);
  }

  {
    double mismatch = 0.0;
    for (std::size_t d : {1, 2, 3, 4}) {
      for (std::size_t e : {1, 3}) {
        for (int order = 0; order <= 5; ++order) {
          RecurrentState s(d, e, order);
          std::size_t law = 0;
          for (int m = 0; m <= order; ++m) law += checked_power(d, m) * (e + 1);
          mismatch = std::max(mismatch, std::abs(static_cast<double>(s.element_count()) - static_cast<double>(law)));
        }
      }
    }
    r.add("recurrent.state_size_law", "d<=4, e in {1,3}, order<=5", mismatch, 0.0);
  }
  return r;
}

inline SuiteReport verify_equivalence(const VerifyOptions& opt = {}) {
  using namespace verify_detail;
  SuiteReport r{"equivalence", {}};

  // Recurrent scan against per-pair evaluation over the full grid.
  {
    const auto start = Clock::now();
    const std::size_t n = 32;
    for (Mode mode : {Mode::causal, Mode::bidirectional}) {
      for (Denominator den : kAllDenominators) {
        double worst = 0.0;
        std::string worst_cfg = "-";
        std::uint64_t seed = 1000;
        for (std::size_t d : {1, 2, 3}) {
          for (std::size_t e : {1, 4}) {
            for (int order = 0; order <= 5; ++order) {
              for (FeatureMap map : kAllFeatureMaps) {
                ++seed;
                auto in = generate_inputs(seed, n, n, d, e, 0.5);
                SplitMix64 grng(seed * 31 + 7);
                std::optional<GatePair> gates;
                if (is_gate(den)) gates = random_gates(grng, n, n);
                const auto cfg = make_config(opt, order, den, mode, map, map);
                const double err = compare_or_both_fail(
                    [&] { return recurrent_attention(in.q, in.k, in.v, cfg, gates); },
                    [&] { return taylor_attention_direct(in.q, in.k, in.v, cfg, gates); });
                if (!(err <= worst)) {
                  worst = err;
                  worst_cfg = describe(cfg, n, n, d, e);
                }
              }
            }
          }
        }
        r.add("equivalence.recurrent_vs_direct." + std::string(to_string(mode)) + "." +
                  std::string(to_string(den)),
              "worst: " + worst_cfg, worst, 1e-10);
      }
    }
    r.add("equivalence.grid_runtime_s", "N=32 grid", seconds_since(start), 60.0);
  }

  // Order-1-only recurrence is linear attention, for every feature-map pair.
  {
    double worst_dedicated = 0.0, worst_generic = 0.0;
    for (FeatureMap qmap : kAllFeatureMaps) {
      for (FeatureMap kmap : kAllFeatureMaps) {
        for (std::uint64_t seed = 1; seed <= 10; ++seed) {
          auto in = generate_inputs(seed, 16, 16, 3, 2, 1.0);
          const Tensor matrix = linear_attention_matrix(in.q, in.k, in.v, qmap, kmap, Mode::causal);
          worst_dedicated = std::max(
              worst_dedicated, max_rel_error(linear_attention_recurrent(in.q, in.k, in.v, qmap, kmap), matrix));
          auto cfg = make_config(opt, 1, Denominator::none, Mode::causal, qmap, kmap);
          cfg.min_order = 1;
          worst_generic = std::max(worst_generic, max_rel_error(recurrent_attention(in.q, in.k, in.v, cfg), matrix));
        }
      }
    }
    r.add("equivalence.first_order_dedicated", "16 map pairs x 10 seeds, N=16 d=3 e=2", worst_dedicated, 1e-12);
    r.add("equivalence.first_order_generic", "min_order=1 order=1, 16 map pairs x 10 seeds", worst_generic, 1e-12);
  }

  // Order-2-only recurrence is the per-pair squared score.
  {
    double worst = 0.0, worst_taylor = 0.0;
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
      auto in = generate_inputs(100 + seed, 16, 16, 3, 2, 1.0);
      const Tensor oracle = squared_score_attention(in.q, in.k, in.v);
      worst = std::max(worst, max_rel_error(quadratic_attention_recurrent(in.q, in.k, in.v), oracle));
      auto cfg = make_config(opt, 2, Denominator::none, Mode::causal);
      cfg.min_order = 2;
      Tensor half = recurrent_attention(in.q, in.k, in.v, cfg);
      for (auto& x : half.values()) x *= 2.0;
      worst_taylor = std::max(worst_taylor, max_rel_error(half, oracle));
    }
    r.add("equivalence.quadratic_dedicated", "10 seeds, N=16 d=3 e=2", worst, 1e-12);
    r.add("equivalence.quadratic_generic", "2 x (min_order=2 order=2), 10 seeds", worst_taylor, 1e-12);
  }

  // Convergence of the truncation to softmax attention.
  {
    double w10 = 0.0, w25 = 0.0, wrec = 0.0, w30 = 0.0;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      auto in = generate_inputs(200 + seed, 32, 32, 4, 4, 1.0);
      scale_to_logit_bound(in.q, in.k, Mode::causal, 1.0);
      const Tensor soft = softmax_attention(in.q, in.k, in.v, Mode::causal);
      w10 = std::max(w10, max_rel_error(taylor_attention_direct(
                                            in.q, in.k, in.v, make_config(opt, 10, Denominator::exact, Mode::causal)),
                                        soft));

      auto in5 = generate_inputs(300 + seed, 32, 32, 4, 4, 1.0);
      scale_to_logit_bound(in5.q, in5.k, Mode::causal, 5.0);
      auto cfg25 = make_config(opt, 25, Denominator::exact, Mode::causal);
      cfg25.clamp = 5.0;
      w25 = std::max(w25, max_rel_error(taylor_attention_direct(in5.q, in5.k, in5.v, cfg25),
                                        softmax_attention(in5.q, in5.k, in5.v, Mode::causal)));

      auto in2 = generate_inputs(400 + seed, 32, 32, 2, 4, 1.0);
      scale_to_logit_bound(in2.q, in2.k, Mode::causal, 1.0);
      wrec = std::max(wrec, max_rel_error(recurrent_attention(in2.q, in2.k, in2.v,
                                                              make_config(opt, 12, Denominator::exact, Mode::causal)),
                                          softmax_attention(in2.q, in2.k, in2.v, Mode::causal)));
    }
    {
      const Tensor q = Tensor::matrix({{0.5}, {1.0}});
      const Tensor k = Tensor::matrix({{0.5}, {1.0}});
      const Tensor v = Tensor::matrix({{10.0}, {20.0}});
      auto cfg = make_config(opt, 30, Denominator::exact, Mode::causal);
      cfg.clamp = 1.0;
      w30 = max_rel_error(taylor_attention_direct(q, k, v, cfg), softmax_attention(q, k, v, Mode::causal));
    }
    r.add("equivalence.softmax_limit.order10_bound1", "direct, exact, N=32 d=4 e=4, 5 seeds", w10, 1e-6);
    r.add("equivalence.softmax_limit.order25_bound5", "direct, exact, clamp=5, 5 seeds", w25, 1e-3);
    r.add("equivalence.softmax_limit.recurrent_order12_bound1", "recurrent, d=2, exact, 5 seeds", wrec, 1e-8);
    r.add("equivalence.softmax_limit.order30_clamp1_d1", "q=k=[0.5,1], v=[10,20]", w30, 1e-12);
  }

  // Causal and bidirectional agree bitwise on the last row when N = M.
  {
    double worst = 0.0;
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
      auto in = generate_inputs(500 + seed, 12, 12, 3, 2, 0.7);
      for (Denominator den : {Denominator::exact, Denominator::none, Denominator::seq_norm, Denominator::l2_norm}) {
        auto causal = make_config(opt, 3, den, Mode::causal);
        auto bidir = make_config(opt, 3, den, Mode::bidirectional);
        const Tensor rc = recurrent_attention(in.q, in.k, in.v, causal);
        const Tensor rb = bidirectional_recurrent_attention(in.q, in.k, in.v, bidir);
        const Tensor dc = taylor_attention_direct(in.q, in.k, in.v, causal);
        const Tensor db = taylor_attention_direct(in.q, in.k, in.v, bidir);
        const std::size_t last = in.q.rows() - 1;
        for (std::size_t j = 0; j < in.v.cols(); ++j) {
          worst = std::max(worst, std::abs(rc(last, j) - rb(last, j)));
          worst = std::max(worst, std::abs(dc(last, j) - db(last, j)));
        }
      }
      const Tensor sc = softmax_attention(in.q, in.k, in.v, Mode::causal);
      const Tensor sb = softmax_attention(in.q, in.k, in.v, Mode::bidirectional);
      for (std::size_t j = 0; j < in.v.cols(); ++j) worst = std::max(worst, std::abs(sc(11, j) - sb(11, j)));
    }
    r.add("equivalence.horizon_causal_equals_bidir", "N=M=12, 10 seeds, bitwise", worst, 0.0);
  }

  // Streaming: one scan equals recomputation from a fresh state per prefix.
  {
    double worst = 0.0;
    auto in = generate_inputs(601, 10, 10, 2, 3, 0.8);
    const auto cfg = make_config(opt, 4, Denominator::exact, Mode::causal);
    const Tensor scan = recurrent_attention(in.q, in.k, in.v, cfg);
    for (std::size_t t = 0; t < in.q.rows(); ++t) {
      RecurrentState fresh(2, 3, cfg.order);
      for (std::size_t s = 0; s <= t; ++s) fresh.update(in.k.row(s), in.v.row(s));
      const auto row = readout(fresh, in.q.row(t), cfg);
      for (std::size_t j = 0; j < row.size(); ++j) worst = std::max(worst, std::abs(row[j] - scan(t, j)));
    }
    r.add("equivalence.streaming_prefix_recompute", "N=10 d=2 e=3 order=4", worst, 1e-12);
  }
  return r;
}

inline SuiteReport verify_denominator(const VerifyOptions& opt = {}) {
  using namespace verify_detail;
  SuiteReport r{"denominator", {}};

  {
    double worst = 0.0;
    for (int order = 0; order <= 12; ++order) {
      for (Mode mode : {Mode::causal, Mode::bidirectional}) {
        auto in = generate_inputs(700 + static_cast<std::uint64_t>(order), 16, 16, 3, 3, 0.5);
        for (auto& x : in.v.values()) x = 1.0;
        const auto cfg = make_config(opt, order, Denominator::exact, mode);
        for (const Tensor& o : {recurrent_attention(in.q, in.k, in.v, cfg),
                                taylor_attention_direct(in.q, in.k, in.v, cfg)}) {
          for (double x : o.values()) worst = std::max(worst, std::abs(x - 1.0));
        }
      }
    }
    r.add("denominator.exact_ones_value", "orders 0..12, both modes, recurrent + direct", worst, 1e-10);
  }

  auto row_stat = [&](Denominator den, auto&& stat) {
    double worst = 0.0;
    for (int order = 0; order <= 5; ++order) {
      for (Mode mode : {Mode::causal, Mode::bidirectional}) {
        auto in = generate_inputs(800 + static_cast<std::uint64_t>(order), 16, 16, 3, 4, 0.8);
        const auto cfg = make_config(opt, order, den, mode);
        for (const Tensor& o : {recurrent_attention(in.q, in.k, in.v, cfg),
                                taylor_attention_direct(in.q, in.k, in.v, cfg)}) {
          for (std::size_t t = 0; t < o.rows(); ++t) {
            const double s = stat(o.row(t));
            if (s == 0.0) continue;  // zero numerator row
            worst = std::max(worst, std::abs(s - 1.0));
          }
        }
      }
    }
    return worst;
  };
  r.add("denominator.l2_unit_norm", "orders 0..5, both modes",
        row_stat(Denominator::l2_norm, [](std::span<const double> row) { return std::sqrt(dot(row, row)); }),
        1e-12);
  r.add("denominator.rms_unit_rms", "orders 0..5, both modes",
        row_stat(Denominator::rms_norm,
                 [](std::span<const double> row) { return std::sqrt(dot(row, row) / static_cast<double>(row.size())); }),
        1e-12);
  r.add("denominator.layer_norm_unit_variance", "orders 0..5, both modes",
        row_stat(Denominator::layer_norm,
                 [](std::span<const double> row) {
                   double mean = 0.0;
                   for (double x : row) mean += x;
                   mean /= static_cast<double>(row.size());
                   double var = 0.0;
                   for (double x : row) var += (x - mean) * (x - mean);
                   return std::sqrt(var / static_cast<double>(row.size())) + std::abs(mean);
                 }),
        1e-12);

  {
    double worst = 0.0;
    auto in = generate_inputs(901, 9, 9, 3, 2, 1.0);
    for (auto& x : in.q.values()) x = 0.0;
    const auto cfg = make_config(opt, 0, Denominator::seq_norm, Mode::causal);
    const Tensor rec = recurrent_attention(in.q, in.k, in.v, cfg);
    const Tensor dir = taylor_attention_direct(in.q, in.k, in.v, cfg);
    for (std::size_t t = 0; t < in.q.rows(); ++t) {
      for (std::size_t j = 0; j < in.v.cols(); ++j) {
        double sum = 0.0;
        for (std::size_t s = 0; s <= t; ++s) sum += in.v(s, j);
        const double mean = sum / static_cast<double>(t + 1);
        worst = std::max({worst, std::abs(rec(t, j) - mean), std::abs(dir(t, j) - mean)});
      }
    }
    r.add("denominator.seq_norm_zero_query_mean", "Q=0, order 0, exact equality", worst, 0.0);
  }

  {
    double worst = 0.0;
    auto in = generate_inputs(902, 12, 12, 2, 3, 0.8);
    GatePair ones{std::vector<double>(12, 1.0), std::vector<double>(12, 1.0)};
    for (int order = 0; order <= 4; ++order) {
      const Tensor gated = recurrent_attention(in.q, in.k, in.v, make_config(opt, order, Denominator::gate_seq, Mode::causal), ones);
      const Tensor seq = recurrent_attention(in.q, in.k, in.v, make_config(opt, order, Denominator::seq_norm, Mode::causal));
      worst = std::max(worst, max_rel_error(gated, seq));
    }
    r.add("denominator.unit_gate_seq_equals_seq_norm", "orders 0..4", worst, 1e-15);
  }
  return r;
}

inline SuiteReport verify_gates(const VerifyOptions& opt = {}) {
  using namespace verify_detail;
  SuiteReport r{"gates", {}};
  SplitMix64 rng(0x6A7E5ULL);
  double worst = 0.0, worst_rec = 0.0;
  for (int draw = 0; draw < 100; ++draw) {
    const std::size_t n = 1 + rng.next() % 12;
    const std::size_t d = 1 + rng.next() % 4;
    const std::size_t e = 1 + rng.next() % 4;
    const Mode mode = draw % 2 ? Mode::bidirectional : Mode::causal;
    auto in = generate_inputs(rng.next(), n, n, d, e, 1.0);
    GatePair g = random_gates(rng, n, n);
    switch (draw % 5) {
      case 0: std::fill(g.g_in.begin(), g.g_in.end(), 0.0); break;
      case 1:
        std::fill(g.g_in.begin(), g.g_in.end(), 1.0);
        std::fill(g.g_out.begin(), g.g_out.end(), 1.0);
        break;
      case 2: std::fill(g.g_out.begin(), g.g_out.end(), 0.0); break;
      default: break;
    }
    const auto out = gated_attention_matrix(in.q, in.k, in.v, g, mode);
    worst = std::max(worst, max_rel_error(out.fused, out.factored));

    // With small logits the gated scan reproduces the gated exponential form.
    auto small = in;
    scale_to_logit_bound(small.q, small.k, mode, 0.25);
    const auto cfg = make_config(opt, 8, Denominator::gate, mode);
    worst_rec = std::max(worst_rec, max_rel_error(recurrent_attention(small.q, small.k, small.v, cfg, g),
                                                  gated_attention_matrix(small.q, small.k, small.v, g, mode).fused));
  }
  r.add("gates.fused_equals_factored", "100 draws incl. all-zero and all-one gates", worst, 1e-12);
  r.add("gates.recurrent_gate_mode_matches_fused", "order 8, 100 draws, |logit| <= 0.25", worst_rec, 1e-8);

  {
    auto in = generate_inputs(903, 6, 6, 2, 3, 1.0);
    GatePair ones{std::vector<double>(6, 1.0), std::vector<double>(6, 1.0)};
    const auto out = gated_attention_matrix(in.q, in.k, in.v, ones, Mode::causal);
    Tensor numer(6, 3);
    for (std::size_t t = 0; t < 6; ++t)
      for (std::size_t s = 0; s <= t; ++s)
        for (std::size_t j = 0; j < 3; ++j) numer(t, j) += std::exp(dot(in.q.row(t), in.k.row(s))) * in.v(s, j);
    r.add("gates.unit_gates_equal_softmax_numerator", "N=M=6 d=2 e=3", max_rel_error(out.fused, numer), 1e-12);
  }
  return r;
}

inline SuiteReport verify_grad(const VerifyOptions& opt = {}) {
  using namespace verify_detail;
  SuiteReport r{"grad", {}};
  const auto start = Clock::now();
  const std::size_t n = 8, d = 3, e = 2;
  constexpr double h = 1e-4;
  constexpr double tol = 1e-5;

  for (Mode mode : {Mode::causal, Mode::bidirectional}) {
    double worst = 0.0, worst_abs = 0.0;
    std::size_t below = 0;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      auto in = generate_inputs(seed, n, n, d, e, 0.5);
      const Tensor dout = generate_inputs(seed + 1000, 1, n, 1, e, 1.0).v;
      const auto g = softmax_attention_backward(in.q, in.k, in.v, dout, mode);
      const auto rep = finite_diff_check(
          [&](const Tensor& q, const Tensor& k, const Tensor& v) { return softmax_attention(q, k, v, mode); },
          in.q, in.k, in.v, dout, g, h, tol);
      worst = std::max(worst, rep.max_rel_err);
      worst_abs = std::max(worst_abs, rep.max_abs_err);
      below += rep.below_noise;
    }
    r.add("grad.softmax." + std::string(to_string(mode)),
          "N=8 d=3 e=2, h=1e-4, 5 seeds, max_abs_err=" + format_double(worst_abs) +
              ", below_noise=" + std::to_string(below),
          worst, tol);
  }

  for (Mode mode : {Mode::causal, Mode::bidirectional}) {
    for (Denominator den : {Denominator::none, Denominator::seq_norm, Denominator::exact, Denominator::l2_norm}) {
      for (int order = 0; order <= 4; ++order) {
        double worst = 0.0, worst_abs = 0.0;
        std::size_t below = 0;
        for (std::uint64_t seed = 1; seed <= 5; ++seed) {
          auto in = generate_inputs(seed, n, n, d, e, 0.5);
          const Tensor dout = generate_inputs(seed + 1000, 1, n, 1, e, 1.0).v;
          const auto cfg = make_config(opt, order, den, mode);
          const auto g = recurrent_attention_backward(in.q, in.k, in.v, dout, cfg);
          const auto rep = finite_diff_check(
              [&](const Tensor& q, const Tensor& k, const Tensor& v) { return recurrent_attention(q, k, v, cfg); },
              in.q, in.k, in.v, dout, g, h, tol);
          worst = std::max(worst, rep.max_rel_err);
          worst_abs = std::max(worst_abs, rep.max_abs_err);
          below += rep.below_noise;
        }
        r.add("grad.recurrent." + std::string(to_string(mode)) + "." + std::string(to_string(den)) + ".order" +
                  std::to_string(order),
              "N=8 d=3 e=2, h=1e-4, 5 seeds, max_abs_err=" + format_double(worst_abs) +
                  ", below_noise=" + std::to_string(below),
              worst, tol);
      }
    }
  }

  // Same l2_norm instances at a tenth of the step: truncation error drops by
  // about 100x, rounding error grows by 10x.
  {
    double worst = 0.0;
    for (Mode mode : {Mode::causal, Mode::bidirectional}) {
      for (int order = 0; order <= 4; ++order) {
        for (std::uint64_t seed = 1; seed <= 5; ++seed) {
          auto in = generate_inputs(seed, n, n, d, e, 0.5);
          const Tensor dout = generate_inputs(seed + 1000, 1, n, 1, e, 1.0).v;
          const auto cfg = make_config(opt, order, Denominator::l2_norm, mode);
          const auto g = recurrent_attention_backward(in.q, in.k, in.v, dout, cfg);
          const auto rep = finite_diff_check(
              [&](const Tensor& q, const Tensor& k, const Tensor& v) { return recurrent_attention(q, k, v, cfg); },
              in.q, in.k, in.v, dout, g, 1e-5, tol);
          worst = std::max(worst, rep.max_rel_err);
        }
      }
    }
    r.add("grad.recurrent.l2_norm.h1e-5", "both modes, orders 0-4, 5 seeds, h=1e-5", worst, tol);
  }

  {
    double worst = 0.0;
    for (FeatureMap map : {FeatureMap::elu_plus_one, FeatureMap::relu, FeatureMap::cosine}) {
      for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        auto in = generate_inputs(seed, n, n, d, e, 0.5);
        const Tensor dout = generate_inputs(seed + 1000, 1, n, 1, e, 1.0).v;
        const auto cfg = make_config(opt, 3, Denominator::exact, Mode::causal, map, map);
        const auto g = recurrent_attention_backward(in.q, in.k, in.v, dout, cfg);
        const auto rep = finite_diff_check(
            [&](const Tensor& q, const Tensor& k, const Tensor& v) { return recurrent_attention(q, k, v, cfg); },
            in.q, in.k, in.v, dout, g, h, tol);
        worst = std::max(worst, rep.max_rel_err);
      }
    }
    r.add("grad.recurrent.feature_maps", "elu+1/relu/cosine, order 3, exact, 5 seeds", worst, tol);
  }

  // Two programs for the same function: finite differences through the scan
  // and through the per-pair form agree.
  {
    double worst = 0.0;
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
      auto in = generate_inputs(1700 + seed, n, n, d, e, 0.5);
      const Tensor dout = generate_inputs(1800 + seed, 1, n, 1, e, 1.0).v;
      const auto cfg = make_config(opt, 4, Denominator::exact, Mode::causal);
      auto numeric = [&](auto&& fwd) {
        std::vector<double> out;
        Tensor qq = in.q, kk = in.k, vv = in.v;
        for (Tensor* x : {&qq, &kk, &vv}) {
          for (std::size_t i = 0; i < x->size(); ++i) {
            const double saved = (*x)[i];
            auto objective = [&] {
              const Tensor o = fwd(qq, kk, vv);
              double s = 0.0;
              for (std::size_t j = 0; j < o.size(); ++j) s += o[j] * dout[j];
              return s;
            };
            (*x)[i] = saved + h;
            const double fp = objective();
            (*x)[i] = saved - h;
            const double fm = objective();
            (*x)[i] = saved;
            out.push_back((fp - fm) / (2 * h));
          }
        }
        return out;
      };
      const auto a = numeric([&](const Tensor& q, const Tensor& k, const Tensor& v) { return recurrent_attention(q, k, v, cfg); });
      const auto b = numeric([&](const Tensor& q, const Tensor& k, const Tensor& v) { return taylor_attention_direct(q, k, v, cfg); });
      for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
    }
    r.add("grad.recurrent_vs_direct_numeric", "order 4, exact, 3 seeds, abs diff of FD gradients", worst, 1e-10);
  }

  {
    auto in = generate_inputs(1901, n, n, d, e, 0.5);
    const Tensor dout = generate_inputs(1902, 1, n, 1, e, 1.0).v;
    Tensor scaled = dout;
    for (auto& x : scaled.values()) x *= 0.5;
    const auto cfg = make_config(opt, 3, Denominator::exact, Mode::causal);
    const auto g1 = recurrent_attention_backward(in.q, in.k, in.v, dout, cfg);
    const auto g2 = recurrent_attention_backward(in.q, in.k, in.v, scaled, cfg);
    double worst = 0.0;
    for (auto [a, b] : {std::pair{&g1.dq, &g2.dq}, std::pair{&g1.dk, &g2.dk}, std::pair{&g1.dv, &g2.dv}}) {
      for (std::size_t i = 0; i < a->size(); ++i) worst = std::max(worst, std::abs(0.5 * (*a)[i] - (*b)[i]));
    }
    r.add("grad.cotangent_linearity", "backward(dO/2) == backward(dO)/2 bitwise", worst, 0.0);
  }

  {
    double worst = 0.0;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      auto in = generate_inputs(2000 + seed, n, n, d, e, 1.0);
      scale_to_logit_bound(in.q, in.k, Mode::causal, 0.999);
      const Tensor dout = generate_inputs(2100 + seed, 1, n, 1, e, 1.0).v;
      auto cfg = make_config(opt, 30, Denominator::exact, Mode::causal);
      cfg.clamp = 1.0;
      const auto gt = recurrent_attention_backward(in.q, in.k, in.v, dout, cfg);
      const auto gs = softmax_attention_backward(in.q, in.k, in.v, dout, Mode::causal);
      for (auto [a, b] : {std::pair{&gt.dq, &gs.dq}, std::pair{&gt.dk, &gs.dk}, std::pair{&gt.dv, &gs.dv}}) {
        for (std::size_t i = 0; i < a->size(); ++i) worst = std::max(worst, grad_relative_error((*a)[i], (*b)[i]));
      }
    }
    r.add("grad.order30_matches_softmax", "exact, clamp=1, 5 seeds", worst, 1e-5);
  }

  r.add("grad.runtime_s", "whole grad suite", seconds_since(start), 120.0);
  return r;
}

inline SuiteReport run_suite(std::string_view name, const VerifyOptions& opt = {}) {
  if (name == "kron") return verify_kron(opt);
  if (name == "equivalence") return verify_equivalence(opt);
  if (name == "denominator") return verify_denominator(opt);
  if (name == "gates") return verify_gates(opt);
  if (name == "grad") return verify_grad(opt);
  if (name == "all") {
    SuiteReport all{"all", {}};
    for (auto suite : kSuiteNames) {
      auto part = run_suite(suite, opt);
      all.checks.insert(all.checks.end(), part.checks.begin(), part.checks.end());
    }
    return all;
  }
  throw ConfigError("unknown suite '" + std::string(name) + "'");
}

}  // namespace tayattn
