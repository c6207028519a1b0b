#pragma once

#include <array>
#include <charconv>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "tayattn/error.hpp"
#include "tayattn/tensor.hpp"

namespace tayattn {

// TNSR v1: "TNSR", u32 version, u32 ndim, ndim x u64 extents, f64 payload.
// All integers and floats little-endian.
inline constexpr std::array<char, 4> kTensorMagic{'T', 'N', 'S', 'R'};
inline constexpr std::uint32_t kTensorVersion = 1;

namespace detail {

template <typename T>
void put_le(std::string& out, T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  std::uint64_t bits = 0;
  std::memcpy(&bits, &value, sizeof(T));
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xFF));
}

template <typename T>
T get_le(const unsigned char* p) {
  std::uint64_t bits = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) bits |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  T value;
  if constexpr (sizeof(T) == 8) {
    std::memcpy(&value, &bits, 8);
  } else {
    auto narrow = static_cast<std::uint32_t>(bits);
    std::memcpy(&value, &narrow, sizeof(T));
  }
  return value;
}

}  // namespace detail

inline std::string encode_tensor(const Tensor& t) {
  if (t.ndim() < 1 || t.ndim() > 2) throw ShapeError("encode_tensor: rank must be 1 or 2");
  std::string out(kTensorMagic.begin(), kTensorMagic.end());
  detail::put_le<std::uint32_t>(out, kTensorVersion);
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(t.ndim()));
  for (auto extent : t.shape()) detail::put_le<std::uint64_t>(out, extent);
  out.reserve(out.size() + 8 * t.size());
  for (double x : t.values()) detail::put_le<double>(out, x);
  return out;
}

inline Tensor decode_tensor(const std::string& bytes) {
  auto p = reinterpret_cast<const unsigned char*>(bytes.data());
  std::size_t n = bytes.size();
  if (n < 12) throw FormatError("tensor file truncated in header");
  if (std::memcmp(p, kTensorMagic.data(), 4) != 0) throw FormatError("bad tensor magic");
  auto version = detail::get_le<std::uint32_t>(p + 4);
  if (version != kTensorVersion) {
    throw FormatError("unsupported tensor version " + std::to_string(version));
  }
  auto ndim = detail::get_le<std::uint32_t>(p + 8);
  if (ndim < 1 || ndim > 2) throw FormatError("tensor rank must be 1 or 2, got " + std::to_string(ndim));
  std::size_t header = 12 + 8 * static_cast<std::size_t>(ndim);
  if (n < header) throw FormatError("tensor file truncated in extents");
  std::vector<std::size_t> shape(ndim);
  std::uint64_t count = 1;
  for (std::uint32_t i = 0; i < ndim; ++i) {
    auto extent = detail::get_le<std::uint64_t>(p + 12 + 8 * i);
    if (extent != 0 && count > (std::uint64_t{1} << 40) / extent) {
      throw FormatError("tensor extents overflow");
    }
    count *= extent;
    shape[i] = static_cast<std::size_t>(extent);
  }
  if (n - header < 8 * count) throw FormatError("tensor payload truncated");
  if (n - header > 8 * count) throw FormatError("trailing bytes after tensor payload");
  std::vector<double> data(count);
  for (std::size_t i = 0; i < count; ++i) data[i] = detail::get_le<double>(p + header + 8 * i);
  for (double x : data) {
    if (!std::isfinite(x)) throw FormatError("tensor payload contains a non-finite value");
  }
  return Tensor::from_data(std::move(shape), std::move(data));
}

inline void tensor_write(const std::string& path, const Tensor& t) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot open '" + path + "' for writing");
  auto bytes = encode_tensor(t);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError("write to '" + path + "' failed");
}

inline Tensor tensor_read(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open '" + path + "' for reading");
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_tensor(bytes);
}

/// Shortest round-trip decimal representation ('.' separator, locale-independent).
inline std::string format_double(double x) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, res.ptr);
}

}  // namespace tayattn
