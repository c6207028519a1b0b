#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "tayattn/config.hpp"
#include "tayattn/error.hpp"
#include "tayattn/io.hpp"
#include "tayattn/recurrent.hpp"
#include "tayattn/reference.hpp"
#include "tayattn/rng.hpp"
#include "tayattn/tensor.hpp"

namespace tayattn {

enum class BenchKind { softmax_direct, taylor_direct, recurrent };

inline std::string_view to_string(BenchKind k) {
  switch (k) {
    case BenchKind::softmax_direct: return "softmax_direct";
    case BenchKind::taylor_direct: return "taylor_direct";
    case BenchKind::recurrent: return "recurrent";
  }
  return "?";
}

inline BenchKind parse_bench_kind(std::string_view s) {
  for (auto k : {BenchKind::softmax_direct, BenchKind::taylor_direct, BenchKind::recurrent}) {
    if (to_string(k) == s) return k;
  }
  throw ConfigError("unknown bench kind '" + std::string(s) + "'");
}

struct BenchCell {
  BenchKind kind = BenchKind::recurrent;
  std::size_t n = 0;
  std::size_t d = 0;
  std::size_t e = 0;
  int order = 0;
};

struct BenchRow {
  BenchCell cell;
  int repeats = 0;
  std::int64_t median_ns = 0;
  std::size_t state_elements = 0;
  double checksum = 0.0;
};

inline constexpr std::size_t kMaxRecurrentLength = std::size_t{1} << 20;
inline constexpr std::size_t kMaxDirectLength = std::size_t{1} << 16;

/// Elements a kind must keep alive between steps: the Taylor state stack for
/// the recurrent scan, the key/value cache for the direct kinds.
inline std::size_t bench_state_elements(const BenchCell& c) {
  if (c.kind == BenchKind::recurrent) return state_element_count(c.d, c.e, c.order);
  return c.n * (c.d + c.e);
}

inline void check_bench_cell(const BenchCell& c) {
  if (c.n == 0 || c.d == 0 || c.e == 0) throw ConfigError("bench cell dimensions must be >= 1");
  if (c.order < 0 || c.order > kMaxOrder) throw ConfigError("bench order out of range");
  const std::size_t limit = c.kind == BenchKind::recurrent ? kMaxRecurrentLength : kMaxDirectLength;
  if (c.n > limit) {
    throw ResourceError("bench N=" + std::to_string(c.n) + " exceeds the " +
                        std::string(to_string(c.kind)) + " limit of " + std::to_string(limit));
  }
  if (c.kind == BenchKind::recurrent) state_element_count(c.d, c.e, c.order);
}

/// Cell inputs depend on (seed, N, d, e) only, so kinds and orders sharing a
/// shape see identical tensors. Entries lie in [-1/sqrt(d), 1/sqrt(d)), which
/// bounds every logit by 1.
inline AttentionInputs bench_inputs(std::uint64_t seed, std::size_t n, std::size_t d, std::size_t e) {
  SplitMix64 mix(seed ^ (n * 0x9E3779B97F4A7C15ULL) ^ (d << 40) ^ (e << 52));
  return generate_inputs(mix.next(), n, n, d, e, 1.0 / std::sqrt(static_cast<double>(d)));
}

inline Tensor run_bench_kind(const BenchCell& c, const AttentionInputs& in) {
  AttentionConfig cfg;
  cfg.order = c.order;
  cfg.denominator = Denominator::exact;
  switch (c.kind) {
    case BenchKind::softmax_direct: return softmax_attention(in.q, in.k, in.v, Mode::causal);
    case BenchKind::taylor_direct: return taylor_attention_direct(in.q, in.k, in.v, cfg);
    case BenchKind::recurrent: return recurrent_attention(in.q, in.k, in.v, cfg);
  }
  return {};
}

inline double checksum(const Tensor& t) {
  double s = 0.0;
  for (double x : t.values()) s += x;
  return s;
}

/// Times each cell sequentially: one untimed warm-up, then `repeats` timed
/// runs on a monotonic clock; the median is reported.
inline std::vector<BenchRow> bench_runtime(const std::vector<BenchCell>& grid, int repeats,
                                           std::uint64_t seed) {
  if (repeats < 3) throw ConfigError("bench needs at least 3 repeats");
  for (const auto& c : grid) check_bench_cell(c);
  std::vector<BenchRow> rows;
  rows.reserve(grid.size());
  for (const auto& c : grid) {
    const auto in = bench_inputs(seed, c.n, c.d, c.e);
    BenchRow row{c, repeats, 0, bench_state_elements(c), 0.0};
    row.checksum = checksum(run_bench_kind(c, in));
    std::vector<std::int64_t> times;
    for (int r = 0; r < repeats; ++r) {
      const auto start = std::chrono::steady_clock::now();
      const Tensor out = run_bench_kind(c, in);
      const auto stop = std::chrono::steady_clock::now();
      times.push_back(std::chrono::duration_cast<std::chrono::nanoseconds>(stop - start).count());
      const double cs = checksum(out);
      if (cs != row.checksum) throw NumericError("bench output changed between repeats");
    }
    if (!std::isfinite(row.checksum)) throw NumericError("bench checksum is not finite");
    std::nth_element(times.begin(), times.begin() + repeats / 2, times.end());
    row.median_ns = times[static_cast<std::size_t>(repeats / 2)];
    rows.push_back(row);
  }
  return rows;
}

inline constexpr std::string_view kBenchCsvHeader =
    "impl,N,d,e,order,repeats,median_ns,state_elements,checksum";

inline void write_bench_csv(std::ostream& out, const std::vector<BenchRow>& rows) {
  out << kBenchCsvHeader << '\n';
  for (const auto& r : rows) {
    out << to_string(r.cell.kind) << ',' << r.cell.n << ',' << r.cell.d << ',' << r.cell.e << ','
        << r.cell.order << ',' << r.repeats << ',' << r.median_ns << ',' << r.state_elements << ','
        << format_double(r.checksum) << '\n';
  }
}

namespace detail {

inline std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> parts;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    parts.emplace_back(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return parts;
}

inline std::size_t parse_size(const std::string& s) {
  std::size_t pos = 0;
  unsigned long long v = 0;
  try {
    v = std::stoull(s, &pos);
  } catch (const std::exception&) {
    throw ConfigError("expected a non-negative integer, got '" + s + "'");
  }
  if (pos != s.size() || s.empty() || s[0] == '-') {
    throw ConfigError("expected a non-negative integer, got '" + s + "'");
  }
  return static_cast<std::size_t>(v);
}

}  // namespace detail

/// Default grid: the three kinds at N in {4096, 8192, 16384}, d=2, e=4, order 3.
inline std::string default_bench_grid() {
  return "impl=softmax_direct,taylor_direct,recurrent;N=4096,8192,16384;d=2;e=4;order=3";
}

/// Parses "impl=a,b;N=..;d=..;e=..;order=.." into cells ordered impl, N, d, e,
/// order (outermost first). Missing keys default to d=2, e=4, order=3.
inline std::vector<BenchCell> parse_bench_grid(std::string_view spec) {
  std::vector<BenchKind> kinds{BenchKind::softmax_direct, BenchKind::taylor_direct, BenchKind::recurrent};
  std::vector<std::size_t> ns, ds{2}, es{4};
  std::vector<int> orders{3};
  for (const auto& clause : detail::split(spec, ';')) {
    if (clause.empty()) continue;
    const auto eq = clause.find('=');
    if (eq == std::string::npos) throw ConfigError("grid clause '" + clause + "' lacks '='");
    const std::string key = clause.substr(0, eq);
    const auto values = detail::split(std::string_view(clause).substr(eq + 1), ',');
    if (key == "impl") {
      kinds.clear();
      for (const auto& v : values) kinds.push_back(parse_bench_kind(v));
    } else if (key == "N" || key == "d" || key == "e") {
      auto& target = key == "N" ? ns : key == "d" ? ds : es;
      target.clear();
      for (const auto& v : values) target.push_back(detail::parse_size(v));
    } else if (key == "order") {
      orders.clear();
      for (const auto& v : values) orders.push_back(static_cast<int>(detail::parse_size(v)));
    } else {
      throw ConfigError("unknown grid key '" + key + "'");
    }
  }
  if (ns.empty()) throw ConfigError("grid must list at least one N");
  std::vector<BenchCell> cells;
  for (auto k : kinds)
    for (auto n : ns)
      for (auto d : ds)
        for (auto e : es)
          for (auto o : orders) cells.push_back({k, n, d, e, o});
  return cells;
}

// ---------------------------------------------------------------------------
// Approximation sweep

struct ApproxRow {
  int order = 0;
  double max_rel_err = 0.0;
  double mean_rel_err = 0.0;
};

struct ApproxSweep {
  std::vector<int> orders;
  double logit_bound = 1.0;
  std::uint64_t seed = 1;
  std::size_t n = 64;
  std::size_t d = 4;
  std::size_t e = 4;
  FeatureMap query_map = FeatureMap::identity;
  FeatureMap key_map = FeatureMap::identity;
};

/// Scales Q so the largest visible |Q_t . K_s| equals `bound` exactly.
inline void scale_to_logit_bound(Tensor& q, const Tensor& k, Mode mode, double bound) {
  double largest = 0.0;
  for (std::size_t t = 0; t < q.rows(); ++t) {
    for (std::size_t s = 0; s < visible_keys(mode, t, k.rows()); ++s) {
      largest = std::max(largest, std::abs(dot(q.row(t), k.row(s))));
    }
  }
  if (largest == 0.0) return;
  const double factor = bound / largest;
  for (auto& x : q.values()) x *= factor;
}

/// Error of exact-denominator Taylor attention against softmax attention over
/// the same feature-mapped queries and keys, one row per order. Raw inputs are
/// scaled to the logit bound before the feature maps.
inline std::vector<ApproxRow> approx_error_sweep(const ApproxSweep& sweep) {
  if (!(sweep.logit_bound >= 0.0) || !std::isfinite(sweep.logit_bound)) {
    throw ConfigError("logit bound must be a finite non-negative number");
  }
  auto in = generate_inputs(sweep.seed, sweep.n, sweep.n, sweep.d, sweep.e, 1.0);
  scale_to_logit_bound(in.q, in.k, Mode::causal, sweep.logit_bound);
  const Tensor reference = softmax_attention(apply_feature_map(sweep.query_map, in.q),
                                             apply_feature_map(sweep.key_map, in.k), in.v, Mode::causal);
  std::vector<ApproxRow> rows;
  for (int order : sweep.orders) {
    AttentionConfig cfg;
    cfg.order = order;
    cfg.denominator = Denominator::exact;
    cfg.query_map = sweep.query_map;
    cfg.key_map = sweep.key_map;
    const Tensor approx = taylor_attention_direct(in.q, in.k, in.v, cfg);
    ApproxRow row{order, 0.0, 0.0};
    for (std::size_t i = 0; i < approx.size(); ++i) {
      const double scale = std::max({std::abs(approx[i]), std::abs(reference[i]), 1.0});
      const double err = std::abs(approx[i] - reference[i]) / scale;
      row.max_rel_err = std::max(row.max_rel_err, err);
      row.mean_rel_err += err;
    }
    row.mean_rel_err /= static_cast<double>(approx.size());
    rows.push_back(row);
  }
  return rows;
}

inline constexpr std::string_view kApproxCsvHeader = "order,max_rel_err,mean_rel_err";

inline void write_approx_csv(std::ostream& out, const std::vector<ApproxRow>& rows) {
  out << kApproxCsvHeader << '\n';
  for (const auto& r : rows) {
    out << r.order << ',' << format_double(r.max_rel_err) << ',' << format_double(r.mean_rel_err) << '\n';
  }
}

/// True when max_rel_err never rises by more than `slack` between consecutive
/// orders, ignoring steps that start at or below `floor`.
inline bool is_monotone_non_increasing(const std::vector<ApproxRow>& rows, double slack = 1e-14,
                                       double floor = 1e-15) {
  for (std::size_t i = 1; i < rows.size(); ++i) {
    if (rows[i - 1].max_rel_err <= floor) continue;
    if (rows[i].max_rel_err > rows[i - 1].max_rel_err + slack) return false;
  }
  return true;
}

/// Parses "a..b" or a comma list "a,b,c" into orders.
inline std::vector<int> parse_order_list(std::string_view s) {
  std::vector<int> out;
  const auto dots = s.find("..");
  if (dots != std::string_view::npos) {
    const auto lo = detail::parse_size(std::string(s.substr(0, dots)));
    const auto hi = detail::parse_size(std::string(s.substr(dots + 2)));
    if (hi < lo) throw ConfigError("order range must be ascending");
    for (auto o = lo; o <= hi; ++o) out.push_back(static_cast<int>(o));
  } else {
    for (const auto& part : detail::split(s, ',')) out.push_back(static_cast<int>(detail::parse_size(part)));
  }
  for (int o : out) {
    if (o > kMaxOrder) throw ConfigError("order exceeds " + std::to_string(kMaxOrder));
  }
  return out;
}

}  // namespace tayattn
