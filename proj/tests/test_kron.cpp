#include <cmath>
#include <numeric>

#include <gtest/gtest.h>

#include "tayattn/tayattn.hpp"

using namespace tayattn;

namespace {

std::vector<double> random_vector(SplitMix64& rng, std::size_t d) {
  std::vector<double> v(d);
  for (auto& x : v) x = rng.uniform(-1.0, 1.0);
  return v;
}

}  // namespace

TEST(KronPower, WorkedExamples) {
  EXPECT_EQ(kron_power({1.0, 2.0}, 2).data, (std::vector<double>{1, 2, 2, 4}));
  EXPECT_EQ(kron_power({3.0}, 4).data, (std::vector<double>{81}));
  EXPECT_EQ(kron_power({1.0, 2.0, 3.0}, 0).data, (std::vector<double>{1}));
}

TEST(KronPower, RowMajorMultiIndexLayout) {
  const std::vector<double> v{2.0, 3.0, 5.0};
  const auto kp = kron_power(v, 3);
  ASSERT_EQ(kp.size(), 27u);
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < 3; ++j) {
      for (std::size_t l = 0; l < 3; ++l) EXPECT_EQ(kp[i * 9 + j * 3 + l], v[i] * v[j] * v[l]);
    }
  }
}

TEST(KronPower, LengthAndEntrySum) {
  SplitMix64 rng(41);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t d = 1 + rng.next() % 4;
    const int n = static_cast<int>(rng.next() % 5);
    const auto v = random_vector(rng, d);
    const auto kp = kron_power(v, n);
    EXPECT_EQ(kp.size(), static_cast<std::size_t>(std::pow(d, n)));
    const double total = std::accumulate(kp.data.begin(), kp.data.end(), 0.0);
    const double expected = std::pow(std::accumulate(v.begin(), v.end(), 0.0), n);
    EXPECT_NEAR(total, expected, 1e-12 * (1 + std::abs(expected)));
  }
}

TEST(KronPower, ScaleCovariance) {
  SplitMix64 rng(43);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t d = 1 + rng.next() % 4;
    const int n = static_cast<int>(rng.next() % 5);
    const double alpha = rng.uniform(-2.0, 2.0);
    auto v = random_vector(rng, d);
    const auto base = kron_power(v, n);
    for (auto& x : v) x *= alpha;
    const auto scaled = kron_power(v, n);
    for (std::size_t i = 0; i < base.size(); ++i) {
      EXPECT_NEAR(scaled[i], std::pow(alpha, n) * base[i], 1e-12);
    }
  }
}

TEST(KronPower, ResourceGuard) {
  EXPECT_THROW(kron_power(std::vector<double>(4, 1.0), 14), ResourceError);
  EXPECT_THROW(kron_power(std::vector<double>{}, 1), ShapeError);
  EXPECT_THROW(kron_power({1.0}, -1), ConfigError);
}

TEST(DecomposedInnerPower, WorkedExamples) {
  EXPECT_EQ(decomposed_inner_power({1.0, 2.0}, {3.0, 4.0}, 2), 121.0);
  EXPECT_EQ(decomposed_inner_power({0.3, -2.0}, {7.0, 4.0}, 0), 1.0);
  EXPECT_EQ(decomposed_inner_power({0.0, 0.0, 0.0}, {0.0, 0.0, 0.0}, 3), 0.0);
  EXPECT_THROW(decomposed_inner_power({1.0}, {1.0, 2.0}, 1), ShapeError);
}

TEST(DecomposedInnerPower, EqualsScalarPower) {
  SplitMix64 rng(47);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t d = 1 + rng.next() % 6;
    const int n = static_cast<int>(rng.next() % 5);
    const auto a = random_vector(rng, d);
    const auto b = random_vector(rng, d);
    const double expected = std::pow(std::inner_product(a.begin(), a.end(), b.begin(), 0.0), n);
    EXPECT_LE(std::abs(decomposed_inner_power(a, b, n) - expected), 1e-9 * (1 + std::abs(expected)));
  }
}

TEST(DecomposedInnerPower, FloatInstantiation) {
  const std::vector<float> a{1.0f, 2.0f}, b{3.0f, 4.0f};
  EXPECT_EQ(decomposed_inner_power<float>(a, b, 2), 121.0f);
}

TEST(KronOuterAccumulate, WorkedExamples) {
  Tensor state(2, 1);
  const std::vector<double> k{1.0, 2.0}, v{10.0};
  kron_outer_accumulate(state, k, v, 1);
  EXPECT_EQ(state, Tensor::matrix({{10.0}, {20.0}}));

  Tensor twice(2, 1);
  kron_outer_accumulate(twice, k, v, 1);
  kron_outer_accumulate(twice, k, v, 1);
  EXPECT_EQ(twice, Tensor::matrix({{20.0}, {40.0}}));

  Tensor order0(1, 2);
  const std::vector<double> v2{5.0, 7.0};
  kron_outer_accumulate(order0, std::vector<double>{0.3, -4.0}, v2, 0);
  kron_outer_accumulate(order0, std::vector<double>{9.0, 1.0}, v2, 0);
  EXPECT_EQ(order0, Tensor::matrix({{10.0, 14.0}}));
}

TEST(KronOuterAccumulate, ShapeMismatch) {
  Tensor state(3, 1);
  EXPECT_THROW(kron_outer_accumulate(state, std::vector<double>{1.0, 2.0}, std::vector<double>{1.0}, 1),
               ShapeError);
}
