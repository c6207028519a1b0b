#include <cmath>

#include <gtest/gtest.h>

#include "oracle_values.hpp"
#include "tayattn/tayattn.hpp"

using namespace tayattn;

namespace {

template <std::size_t N>
Tensor frozen(const double (&values)[N], std::size_t rows, std::size_t cols) {
  return Tensor::from_data({rows, cols}, std::vector<double>(values, values + N));
}

AttentionConfig config(int order, Denominator den, Mode mode = Mode::causal) {
  AttentionConfig cfg;
  cfg.order = order;
  cfg.denominator = den;
  cfg.mode = mode;
  return cfg;
}

std::optional<GatePair> gates_for(Denominator den, std::uint64_t seed, std::size_t n, std::size_t m) {
  if (!is_gate(den)) return std::nullopt;
  SplitMix64 rng(seed);
  GatePair g;
  for (std::size_t i = 0; i < n; ++i) g.g_in.push_back(rng.uniform01());
  for (std::size_t i = 0; i < m; ++i) g.g_out.push_back(rng.uniform01());
  return g;
}

}  // namespace

TEST(RecurrentState, Shapes) {
  auto s = state_init(2, 3, 2);
  for (int m = 0; m <= 2; ++m) {
    EXPECT_EQ(s.hidden(m).rows(), std::size_t{1} << m);
    EXPECT_EQ(s.hidden(m).cols(), 3u);
    EXPECT_EQ(s.denom(m).size(), std::size_t{1} << m);
  }
  EXPECT_EQ(s.steps(), 0u);
  EXPECT_EQ(s.element_count(), (1u + 2 + 4) * 4);

  auto scalar = state_init(1, 1, 5);
  for (int m = 0; m <= 5; ++m) EXPECT_EQ(scalar.hidden(m).shape(), (std::vector<std::size_t>{1, 1}));
}

TEST(RecurrentState, ResourceGuard) {
  EXPECT_THROW(state_init(4, 4, 20), ResourceError);
  EXPECT_NO_THROW(state_init(4, 4, 8));
}

TEST(RecurrentState, SizeLawIndependentOfSteps) {
  for (std::size_t d = 1; d <= 4; ++d) {
    for (std::size_t e : {1u, 3u}) {
      for (int order = 0; order <= 5; ++order) {
        auto s = state_init(d, e, order);
        std::size_t expected = 0;
        for (int m = 0; m <= order; ++m) expected += static_cast<std::size_t>(std::pow(d, m)) * (e + 1);
        EXPECT_EQ(s.element_count(), expected);
        auto in = generate_inputs(d * 10 + e, 1, 7, d, e, 1.0);
        for (std::size_t t = 0; t < 7; ++t) state_update(s, in.k.row(t), in.v.row(t));
        EXPECT_EQ(s.element_count(), expected);
      }
    }
  }
}

TEST(RecurrentState, HiddenBlocksAreMaterializedSums) {
  auto in = generate_inputs(21, 1, 6, 3, 2, 1.0);
  auto s = state_init(3, 2, 3);
  for (std::size_t t = 0; t < 6; ++t) state_update(s, in.k.row(t), in.v.row(t));
  for (int m = 0; m <= 3; ++m) {
    Tensor expected(static_cast<std::size_t>(std::pow(3, m)), 2);
    std::vector<double> denom(expected.rows(), 0.0);
    for (std::size_t t = 0; t < 6; ++t) {
      kron_outer_accumulate(expected, in.k.row(t), in.v.row(t), m);
      const auto kp = kron_power<double>(in.k.row(t), m);
      for (std::size_t i = 0; i < kp.size(); ++i) denom[i] += kp[i];
    }
    EXPECT_LE(max_abs_error(s.hidden(m), expected), 1e-14);
    for (std::size_t i = 0; i < denom.size(); ++i) EXPECT_NEAR(s.denom(m)[i], denom[i], 1e-14);
  }
}

TEST(RecurrentState, ScaleCovariance) {
  auto in = generate_inputs(22, 1, 5, 2, 2, 1.0);
  auto a = state_init(2, 2, 4), b = state_init(2, 2, 4);
  const double alpha = 0.5;
  for (std::size_t t = 0; t < 5; ++t) {
    state_update(a, in.k.row(t), in.v.row(t));
    std::vector<double> scaled(in.k.row(t).begin(), in.k.row(t).end());
    for (auto& x : scaled) x *= alpha;
    state_update(b, scaled, in.v.row(t));
  }
  for (int m = 0; m <= 4; ++m) {
    for (std::size_t i = 0; i < a.hidden(m).size(); ++i) {
      EXPECT_EQ(b.hidden(m)[i], std::pow(alpha, m) * a.hidden(m)[i]);
    }
  }
}

TEST(RecurrentState, OneUpdateTwoTerms) {
  const std::vector<double> k{0.5, -1.0}, v{2.0, 3.0}, q{1.5, 0.25};
  auto s = state_init(2, 2, 1);
  state_update(s, k, v);
  const auto out = readout(s, q, config(1, Denominator::none));
  const double x = 0.5 * 1.5 - 0.25;
  EXPECT_DOUBLE_EQ(out[0], x * 2.0 + 2.0);
  EXPECT_DOUBLE_EQ(out[1], x * 3.0 + 3.0);
}

TEST(RecurrentState, ZeroGateLeavesStateButCountsStep) {
  auto s = state_init(2, 2, 2);
  state_update(s, std::vector<double>{1.0, 2.0}, std::vector<double>{3.0, 4.0}, 0.0);
  EXPECT_EQ(s.steps(), 1u);
  for (int m = 0; m <= 2; ++m) {
    EXPECT_EQ(s.hidden(m), Tensor(s.hidden(m).rows(), 2));
    for (double z : s.denom(m)) EXPECT_EQ(z, 0.0);
  }
  EXPECT_THROW(state_update(s, std::vector<double>{1.0, 2.0}, std::vector<double>{3.0, 4.0}, 1.5), ConfigError);
}

TEST(RecurrentState, UpdatesAreLinear) {
  const std::vector<double> k{0.3, -0.7}, v1{1.0, 2.0}, v2{-0.5, 4.0}, vsum{0.5, 6.0};
  auto a = state_init(2, 2, 3), b = state_init(2, 2, 3);
  state_update(a, k, v1);
  state_update(a, k, v2);
  state_update(b, k, vsum);
  for (int m = 0; m <= 3; ++m) EXPECT_LE(max_abs_error(a.hidden(m), b.hidden(m)), 1e-15);
}

TEST(RecurrentState, ShapeMismatch) {
  auto s = state_init(2, 2, 1);
  EXPECT_THROW(state_update(s, std::vector<double>{1.0}, std::vector<double>{1.0, 2.0}), ShapeError);
  EXPECT_THROW(state_update(s, std::vector<double>{1.0, 2.0}, std::vector<double>{1.0}), ShapeError);
}

TEST(Readout, OrderZeroModes) {
  auto in = generate_inputs(23, 1, 4, 2, 3, 1.0);
  auto s = state_init(2, 3, 0);
  for (std::size_t t = 0; t < 4; ++t) state_update(s, in.k.row(t), in.v.row(t));
  const std::vector<double> q{0.4, 0.9};
  const auto raw = readout(s, q, config(0, Denominator::none));
  const auto mean = readout(s, q, config(0, Denominator::exact));
  for (std::size_t j = 0; j < 3; ++j) {
    double sum = 0.0;
    for (std::size_t t = 0; t < 4; ++t) sum += in.v(t, j);
    EXPECT_NEAR(raw[j], sum, 1e-15);
    EXPECT_NEAR(mean[j], sum / 4.0, 1e-15);
  }
}

TEST(Readout, Errors) {
  auto s = state_init(2, 2, 2);
  state_update(s, std::vector<double>{1.0, 0.0}, std::vector<double>{1.0, 1.0});
  EXPECT_THROW(readout(s, std::vector<double>{1.0, 0.0}, config(2, Denominator::gate)), ConfigError);
  EXPECT_THROW(readout(s, std::vector<double>{1.0, 0.0}, config(3, Denominator::none)), ConfigError);
  EXPECT_THROW(readout(s, std::vector<double>{1.0}, config(2, Denominator::none)), ShapeError);
  auto lone = state_init(1, 1, 1);
  state_update(lone, std::vector<double>{1.0}, std::vector<double>{1.0});
  EXPECT_THROW(readout(lone, std::vector<double>{-1.0}, config(1, Denominator::exact)), NumericError);
}

TEST(Recurrent, Seed11MatchesOracle) {
  auto in = generate_inputs(11, 16, 16, 3, 2, 1.0);
  const auto cfg = config(4, Denominator::exact);
  const Tensor expected = frozen(oracle::kSeed11Order4Exact, 16, 2);
  EXPECT_LE(max_rel_error(recurrent_attention(in.q, in.k, in.v, cfg), expected), 1e-12);
  EXPECT_LE(max_rel_error(taylor_attention_direct(in.q, in.k, in.v, cfg), expected), 1e-12);
}

TEST(Recurrent, Seed13BidirectionalMatchesOracle) {
  auto in = generate_inputs(13, 5, 9, 2, 3, 1.0);
  const auto cfg = config(3, Denominator::l2_norm, Mode::bidirectional);
  const Tensor expected = frozen(oracle::kSeed13Order3L2Bidir, 5, 3);
  EXPECT_LE(max_rel_error(bidirectional_recurrent_attention(in.q, in.k, in.v, cfg), expected), 1e-12);
  EXPECT_LE(max_rel_error(recurrent_attention(in.q, in.k, in.v, cfg), expected), 1e-12);
  EXPECT_LE(max_rel_error(taylor_attention_direct(in.q, in.k, in.v, cfg), expected), 1e-12);
}

TEST(Recurrent, EquivalenceGridAgainstDirect) {
  double worst = 0.0;
  for (Mode mode : {Mode::causal, Mode::bidirectional}) {
    for (Denominator den : kAllDenominators) {
      for (FeatureMap map : kAllFeatureMaps) {
        for (int order = 0; order <= 5; ++order) {
          const std::uint64_t seed = 500 + static_cast<std::uint64_t>(order);
          auto in = generate_inputs(seed, 12, 12, 2, 3, 1.0);
          auto cfg = config(order, den, mode);
          cfg.query_map = cfg.key_map = map;
          const auto g = gates_for(den, seed, 12, 12);
          worst = std::max(worst, verify_detail::compare_or_both_fail(
                                      [&] { return recurrent_attention(in.q, in.k, in.v, cfg, g); },
                                      [&] { return taylor_attention_direct(in.q, in.k, in.v, cfg, g); }));
        }
      }
    }
  }
  EXPECT_LE(worst, 1e-10);
}

TEST(Recurrent, FirstOrderTermIsLinearAttention) {
  for (FeatureMap qm : kAllFeatureMaps) {
    for (FeatureMap km : kAllFeatureMaps) {
      for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        auto in = generate_inputs(seed, 10, 10, 3, 2, 1.0);
        auto cfg = config(1, Denominator::none);
        cfg.min_order = 1;
        cfg.query_map = qm;
        cfg.key_map = km;
        const Tensor matrix = linear_attention_matrix(in.q, in.k, in.v, qm, km, Mode::causal);
        EXPECT_LE(max_rel_error(recurrent_attention(in.q, in.k, in.v, cfg), matrix), 1e-12);
        EXPECT_LE(max_rel_error(linear_attention_recurrent(in.q, in.k, in.v, qm, km), matrix), 1e-12);
      }
    }
  }
}

TEST(Recurrent, LinearEluMatchesOracle) {
  auto in = generate_inputs(17, 8, 8, 3, 2, 1.0);
  const Tensor expected = frozen(oracle::kSeed17LinearElu, 8, 2);
  const auto elu = FeatureMap::elu_plus_one;
  EXPECT_LE(max_rel_error(linear_attention_recurrent(in.q, in.k, in.v, elu, elu), expected), 1e-13);
  EXPECT_LE(max_rel_error(linear_attention_matrix(in.q, in.k, in.v, elu, elu, Mode::causal), expected), 1e-13);
}

TEST(Recurrent, QuadraticCase) {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    auto in = generate_inputs(seed, 9, 9, 3, 2, 1.0);
    auto cfg = config(2, Denominator::none);
    cfg.min_order = 2;
    Tensor direct(9, 2);
    for (std::size_t t = 0; t < 9; ++t) {
      for (std::size_t s = 0; s <= t; ++s) {
        const double x = dot(in.q.row(t), in.k.row(s));
        for (std::size_t j = 0; j < 2; ++j) direct(t, j) += x * x * in.v(s, j);
      }
    }
    const Tensor quad = quadratic_attention_recurrent(in.q, in.k, in.v);
    EXPECT_LE(max_rel_error(quad, direct), 1e-12);
    Tensor halved = taylor_attention_direct(in.q, in.k, in.v, cfg);
    for (auto& x : halved.values()) x *= 2.0;
    EXPECT_LE(max_rel_error(quad, halved), 1e-12);
  }
  const Tensor q = Tensor::matrix({{2.0}, {-1.0}});
  const Tensor k = Tensor::matrix({{3.0}, {0.5}});
  const Tensor v = Tensor::matrix({{1.0}, {4.0}});
  const Tensor o = quadratic_attention_recurrent(q, k, v);
  EXPECT_EQ(o(0, 0), 4.0 * 9.0 * 1.0);
  EXPECT_EQ(o(1, 0), 1.0 * 9.0 * 1.0 + 1.0 * 0.25 * 4.0);
  auto in = generate_inputs(3, 4, 4, 2, 2, 1.0);
  EXPECT_EQ(quadratic_attention_recurrent(Tensor(4, 2), in.k, in.v), Tensor(4, 2));
}

TEST(Recurrent, ConvergesToSoftmaxAtOrder12) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    auto in = generate_inputs(seed, 32, 32, 2, 3, 1.0);
    scale_to_logit_bound(in.q, in.k, Mode::causal, 1.0);
    EXPECT_LE(max_rel_error(recurrent_attention(in.q, in.k, in.v, config(12, Denominator::exact)),
                            softmax_attention(in.q, in.k, in.v, Mode::causal)),
              1e-8);
  }
}

TEST(Recurrent, HorizonRowIsBitwiseEqual) {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    auto in = generate_inputs(seed, 8, 8, 2, 2, 1.0);
    for (Denominator den : {Denominator::exact, Denominator::none, Denominator::l2_norm}) {
      const Tensor c = recurrent_attention(in.q, in.k, in.v, config(4, den));
      const Tensor b = recurrent_attention(in.q, in.k, in.v, config(4, den, Mode::bidirectional));
      for (std::size_t j = 0; j < 2; ++j) EXPECT_EQ(c(7, j), b(7, j));
    }
  }
}

TEST(Recurrent, StreamingMatchesPrefixRecompute) {
  auto in = generate_inputs(24, 10, 10, 2, 3, 1.0);
  const auto cfg = config(3, Denominator::exact);
  const Tensor scan = recurrent_attention(in.q, in.k, in.v, cfg);
  for (std::size_t t = 0; t < 10; ++t) {
    auto s = state_init(2, 3, 3);
    for (std::size_t u = 0; u <= t; ++u) state_update(s, in.k.row(u), in.v.row(u));
    const auto row = readout(s, in.q.row(t), cfg);
    for (std::size_t j = 0; j < 3; ++j) EXPECT_NEAR(row[j], scan(t, j), 1e-12);
  }
}

TEST(Recurrent, ExactDenominatorStochastic) {
  auto in = generate_inputs(25, 12, 12, 2, 3, 0.5);
  for (int order = 0; order <= 8; ++order) {
    const Tensor o = recurrent_attention(in.q, in.k, Tensor(12, 3, 1.0), config(order, Denominator::exact));
    EXPECT_LE(max_abs_error(o, Tensor(12, 3, 1.0)), 1e-10);
  }
}

TEST(Recurrent, SingleKeyCases) {
  auto in = generate_inputs(26, 4, 1, 2, 2, 1.0);
  const auto cfg = config(3, Denominator::none, Mode::bidirectional);
  const Tensor o = recurrent_attention(in.q, in.k, in.v, cfg);
  const auto w = inverse_factorials(3);
  for (std::size_t t = 0; t < 4; ++t) {
    const double x = dot(in.q.row(t), in.k.row(0));
    for (std::size_t j = 0; j < 2; ++j) EXPECT_NEAR(o(t, j), truncated_series(x, w) * in.v(0, j), 1e-14);
  }
  auto one = generate_inputs(27, 1, 1, 3, 2, 1.0);
  for (Denominator den : {Denominator::exact, Denominator::none, Denominator::rms_norm}) {
    EXPECT_LE(max_rel_error(recurrent_attention(one.q, one.k, one.v, config(5, den)),
                            taylor_attention_direct(one.q, one.k, one.v, config(5, den))),
              1e-14);
  }
}

TEST(Recurrent, ClampPrescalesQueries) {
  auto in = generate_inputs(28, 8, 8, 2, 2, 2.0);
  auto cfg = config(20, Denominator::exact);
  cfg.clamp = 1.0;
  Tensor q = in.q;
  scale_to_logit_bound(q, in.k, Mode::causal, 1.0);
  auto unclamped = cfg;
  unclamped.clamp.reset();
  EXPECT_LE(max_rel_error(recurrent_attention(in.q, in.k, in.v, cfg),
                          recurrent_attention(q, in.k, in.v, unclamped)),
            1e-14);
  auto inside = generate_inputs(29, 8, 8, 2, 2, 0.3);
  cfg.clamp = 5.0;
  EXPECT_LE(max_rel_error(recurrent_attention(inside.q, inside.k, inside.v, cfg),
                          taylor_attention_direct(inside.q, inside.k, inside.v, cfg)),
            1e-12);
}

TEST(Recurrent, GatesMatchGatedMatrixIdentity) {
  auto in = generate_inputs(30, 7, 7, 2, 2, 1.0);
  for (auto& x : in.q.values()) x *= 0.25;
  const auto g = gates_for(Denominator::gate, 31, 7, 7);
  const Tensor rec = recurrent_attention(in.q, in.k, in.v, config(20, Denominator::gate), g);
  const auto mat = gated_attention_matrix(in.q, in.k, in.v, *g, Mode::causal);
  EXPECT_LE(max_rel_error(rec, mat.factored), 1e-12);
}
