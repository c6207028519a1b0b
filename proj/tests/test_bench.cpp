#include <sstream>

#include <gtest/gtest.h>

#include "tayattn/tayattn.hpp"

using namespace tayattn;

TEST(BenchGrid, DefaultGrid) {
  const auto cells = parse_bench_grid(default_bench_grid());
  ASSERT_EQ(cells.size(), 9u);
  EXPECT_EQ(cells[0].kind, BenchKind::softmax_direct);
  EXPECT_EQ(cells[0].n, 4096u);
  EXPECT_EQ(cells[8].kind, BenchKind::recurrent);
  EXPECT_EQ(cells[8].n, 16384u);
  for (const auto& c : cells) {
    EXPECT_EQ(c.d, 2u);
    EXPECT_EQ(c.e, 4u);
    EXPECT_EQ(c.order, 3);
  }
}

TEST(BenchGrid, CartesianOrder) {
  const auto cells = parse_bench_grid("impl=recurrent;N=8,16;order=1,2");
  ASSERT_EQ(cells.size(), 4u);
  EXPECT_EQ(cells[1].n, 8u);
  EXPECT_EQ(cells[1].order, 2);
  EXPECT_EQ(cells[2].n, 16u);
  EXPECT_EQ(cells[2].order, 1);
}

TEST(BenchGrid, Errors) {
  EXPECT_THROW(parse_bench_grid("impl=recurrent"), ConfigError);
  EXPECT_THROW(parse_bench_grid("N=8;impl=flash"), ConfigError);
  EXPECT_THROW(parse_bench_grid("N=8;width=3"), ConfigError);
  EXPECT_THROW(parse_bench_grid("N=-8"), ConfigError);
  EXPECT_THROW(parse_bench_grid("N=8x"), ConfigError);
  EXPECT_THROW(parse_bench_grid("N"), ConfigError);
}

TEST(BenchState, ElementCounts) {
  EXPECT_EQ(bench_state_elements({BenchKind::recurrent, 4096, 2, 4, 3}), 75u);
  EXPECT_EQ(bench_state_elements({BenchKind::recurrent, 1 << 20, 2, 4, 3}), 75u);
  EXPECT_EQ(bench_state_elements({BenchKind::taylor_direct, 4096, 2, 4, 3}), 4096u * 6);
  EXPECT_EQ(bench_state_elements({BenchKind::softmax_direct, 10, 3, 1, 0}), 40u);
}

TEST(BenchState, Guards) {
  EXPECT_THROW(check_bench_cell({BenchKind::softmax_direct, kMaxDirectLength + 1, 2, 4, 3}), ResourceError);
  EXPECT_NO_THROW(check_bench_cell({BenchKind::recurrent, kMaxDirectLength + 1, 2, 4, 3}));
  EXPECT_THROW(check_bench_cell({BenchKind::recurrent, kMaxRecurrentLength + 1, 2, 4, 3}), ResourceError);
  EXPECT_THROW(check_bench_cell({BenchKind::recurrent, 16, 4, 4, 20}), ResourceError);
  EXPECT_THROW(check_bench_cell({BenchKind::recurrent, 0, 2, 4, 3}), ConfigError);
  EXPECT_THROW(bench_runtime({{BenchKind::recurrent, 8, 2, 2, 1}}, 2, 1), ConfigError);
}

TEST(BenchRuntime, CsvAndDeterministicChecksums) {
  const auto grid = parse_bench_grid("N=32;d=2;e=2;order=2");
  const auto a = bench_runtime(grid, 3, 5);
  const auto b = bench_runtime(grid, 3, 5);
  ASSERT_EQ(a.size(), 3u);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].checksum, b[i].checksum);
    EXPECT_GT(a[i].median_ns, 0);
  }
  EXPECT_NEAR(a[1].checksum, a[2].checksum, 1e-10);
  std::ostringstream csv;
  write_bench_csv(csv, a);
  std::istringstream lines(csv.str());
  std::string line;
  std::getline(lines, line);
  EXPECT_EQ(line, kBenchCsvHeader);
  std::getline(lines, line);
  EXPECT_EQ(line.rfind("softmax_direct,32,2,2,2,3,", 0), 0u);
  int count = 1;
  while (std::getline(lines, line)) ++count;
  EXPECT_EQ(count, 3);
}

TEST(BenchInputs, LogitsBoundedByOne) {
  const auto in = bench_inputs(1, 64, 3, 2);
  for (std::size_t t = 0; t < 64; ++t) {
    for (std::size_t s = 0; s < 64; ++s) EXPECT_LE(std::abs(dot(in.q.row(t), in.k.row(s))), 1.0);
  }
}

TEST(OrderList, Parsing) {
  EXPECT_EQ(parse_order_list("0..3"), (std::vector<int>{0, 1, 2, 3}));
  EXPECT_EQ(parse_order_list("2,5,7"), (std::vector<int>{2, 5, 7}));
  EXPECT_EQ(parse_order_list("4"), (std::vector<int>{4}));
  EXPECT_THROW(parse_order_list("3..1"), ConfigError);
  EXPECT_THROW(parse_order_list("0..31"), ConfigError);
  EXPECT_THROW(parse_order_list("a"), ConfigError);
  EXPECT_THROW(parse_order_list("1,,2"), ConfigError);
}

TEST(Monotone, Helper) {
  EXPECT_TRUE(is_monotone_non_increasing({{0, 1.0, 0}, {1, 0.5, 0}, {2, 0.5, 0}}));
  EXPECT_FALSE(is_monotone_non_increasing({{0, 1.0, 0}, {1, 0.5, 0}, {2, 0.6, 0}}));
  EXPECT_TRUE(is_monotone_non_increasing({{0, 1e-16, 0}, {1, 2e-16, 0}}));
}

TEST(ApproxSweep, ErrorFallsWithOrder) {
  ApproxSweep sweep;
  sweep.orders = parse_order_list("0..12");
  const auto rows = approx_error_sweep(sweep);
  ASSERT_EQ(rows.size(), 13u);
  EXPECT_TRUE(is_monotone_non_increasing(rows));
  EXPECT_GT(rows[0].max_rel_err, 1e-2);
  EXPECT_LE(rows[10].max_rel_err, 1e-6);
  EXPECT_LE(rows[12].max_rel_err, 1e-9);
  for (const auto& r : rows) EXPECT_LE(r.mean_rel_err, r.max_rel_err);
}

TEST(ApproxSweep, ZeroBoundIsExact) {
  ApproxSweep sweep;
  sweep.orders = {0, 3};
  sweep.logit_bound = 0.0;
  for (const auto& r : approx_error_sweep(sweep)) EXPECT_LE(r.max_rel_err, 1e-15);
}

TEST(ApproxSweep, FeatureMapsAndCsv) {
  for (FeatureMap map : kAllFeatureMaps) {
    ApproxSweep sweep;
    sweep.orders = parse_order_list("0..14");
    sweep.query_map = sweep.key_map = map;
    sweep.logit_bound = 0.5;
    const auto rows = approx_error_sweep(sweep);
    EXPECT_TRUE(is_monotone_non_increasing(rows)) << to_string(map);
  }
  ApproxSweep sweep;
  sweep.orders = {1, 2};
  std::ostringstream csv;
  write_approx_csv(csv, approx_error_sweep(sweep));
  EXPECT_EQ(csv.str().substr(0, kApproxCsvHeader.size()), kApproxCsvHeader);
  sweep.logit_bound = -1.0;
  EXPECT_THROW(approx_error_sweep(sweep), ConfigError);
}

TEST(BenchRuntime, RecurrentOrder12ChecksumMatchesSoftmax) {
  const auto rows = bench_runtime({{BenchKind::softmax_direct, 128, 3, 2, 0}, {BenchKind::recurrent, 128, 3, 2, 12}}, 3, 7);
  EXPECT_LE(std::abs(rows[0].checksum - rows[1].checksum), 1e-6 * std::abs(rows[0].checksum));
}
