#pragma once

#include <cstdint>
#include <tuple>

#include "tayattn/error.hpp"
#include "tayattn/tensor.hpp"

namespace tayattn {

/// SplitMix64. Fully specified, so streams match across platforms.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  /// Top 53 bits mapped to [0, 1).
  double uniform01() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

 private:
  std::uint64_t state_;
};

struct AttentionInputs {
  Tensor q;
  Tensor k;
  Tensor v;
};

/// Q (n x d), K (m x d), V (m x e) drawn from one SplitMix64 stream, in that
/// order, row-major, each entry uniform in [-scale, scale).
inline AttentionInputs generate_inputs(std::uint64_t seed, std::size_t n, std::size_t m,
                                       std::size_t d, std::size_t e, double scale) {
  if (n == 0 || m == 0 || d == 0 || e == 0) {
    throw ConfigError("generate_inputs: all dimensions must be >= 1");
  }
  if (!(scale > 0.0) || !std::isfinite(scale)) {
    throw ConfigError("generate_inputs: scale must be a positive finite number");
  }
  SplitMix64 rng(seed);
  auto fill = [&](std::size_t r, std::size_t c) {
    Tensor t(r, c);
    for (auto& x : t.values()) x = -scale + 2.0 * scale * rng.uniform01();
    return t;
  };
  AttentionInputs in;
  in.q = fill(n, d);
  in.k = fill(m, d);
  in.v = fill(m, e);
  return in;
}

}  // namespace tayattn
