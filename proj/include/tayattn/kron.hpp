#pragma once

#include <concepts>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "tayattn/config.hpp"
#include "tayattn/error.hpp"
#include "tayattn/tensor.hpp"

namespace tayattn {

/// d^n, or ResourceError if it would exceed `limit`.
inline std::size_t checked_power(std::size_t d, int n, std::size_t limit = kStateElementGuard) {
  std::size_t p = 1;
  for (int i = 0; i < n; ++i) {
    if (d != 0 && p > limit / d) {
      throw ResourceError(std::to_string(d) + "^" + std::to_string(n) +
                          " exceeds the state element guard of " + std::to_string(limit));
    }
    p *= d;
  }
  return p;
}

/// n-fold Kronecker power of a d-vector, length d^n.
///
/// Layout is row-major over the multi-index (i_1, ..., i_n): flat index
/// sum_k i_k d^(n-k), leftmost factor slowest. With this layout
/// v^(x)n = (v^(x)(n-1)) (x) v, which is what `kron_extend` computes.
template <std::floating_point T = double>
struct KronVector {
  std::size_t base_dim = 0;
  int order = 0;
  std::vector<T> data{T(1)};

  std::size_t size() const { return data.size(); }
  T operator[](std::size_t i) const { return data[i]; }
};

/// out = prev (x) v. `out` must hold prev.size() * v.size() entries.
template <std::floating_point T>
void kron_extend(std::span<const T> prev, std::span<const T> v, std::span<T> out) {
  const std::size_t d = v.size();
  for (std::size_t i = 0; i < prev.size(); ++i) {
    const T p = prev[i];
    T* dst = out.data() + i * d;
    for (std::size_t j = 0; j < d; ++j) dst[j] = p * v[j];
  }
}

template <std::floating_point T>
KronVector<T> kron_power(std::span<const T> v, int n) {
  if (v.empty()) throw ShapeError("kron_power: empty vector");
  if (n < 0) throw ConfigError("kron_power: negative order");
  KronVector<T> out;
  out.base_dim = v.size();
  out.order = n;
  out.data.reserve(checked_power(v.size(), n));
  std::vector<T> next;
  for (int m = 1; m <= n; ++m) {
    next.resize(out.data.size() * v.size());
    kron_extend<T>(out.data, v, next);
    out.data.swap(next);
  }
  return out;
}

inline KronVector<double> kron_power(const std::vector<double>& v, int n) {
  return kron_power<double>(std::span<const double>(v), n);
}

/// <a^(x)n, b^(x)n> by materializing both Kronecker powers. Equals (a.b)^n;
/// this path exists to exercise that identity, not for speed.
template <std::floating_point T>
T decomposed_inner_power(std::span<const T> a, std::span<const T> b, int n) {
  if (a.size() != b.size()) throw ShapeError("decomposed_inner_power: length mismatch");
  auto ka = kron_power<T>(a, n);
  auto kb = kron_power<T>(b, n);
  T s = 0;
  for (std::size_t i = 0; i < ka.size(); ++i) s += ka.data[i] * kb.data[i];
  return s;
}

inline double decomposed_inner_power(const std::vector<double>& a, const std::vector<double>& b,
                                     int n) {
  return decomposed_inner_power<double>(std::span<const double>(a), std::span<const double>(b), n);
}

/// state (d^n x e) += (k^(x)n)^T v.
inline void kron_outer_accumulate(Tensor& state, std::span<const double> k, std::span<const double> v,
                                  int n) {
  auto kp = kron_power<double>(k, n);
  if (state.ndim() != 2 || state.rows() != kp.size() || state.cols() != v.size()) {
    throw ShapeError("kron_outer_accumulate: state must be " + std::to_string(kp.size()) + " x " +
                     std::to_string(v.size()));
  }
  for (std::size_t i = 0; i < kp.size(); ++i) {
    auto dst = state.row(i);
    for (std::size_t j = 0; j < v.size(); ++j) dst[j] += kp.data[i] * v[j];
  }
}

}  // namespace tayattn
