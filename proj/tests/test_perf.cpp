#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <sstream>

#include "psram/mapping.hpp"
#include "psram/perf.hpp"
#include "psram/svg.hpp"

using namespace psram;

namespace {

// Least-squares line through the origin; returns {slope, r_squared}.
std::pair<double, double> fit_through_origin(const std::vector<double>& xs,
                                             const std::vector<double>& ys) {
  double sxx = 0.0, sxy = 0.0, mean = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxx += xs[i] * xs[i];
    sxy += xs[i] * ys[i];
    mean += ys[i];
  }
  mean /= static_cast<double>(ys.size());
  const double slope = sxy / sxx;
  double ss_res = 0.0, ss_tot = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    ss_res += std::pow(ys[i] - slope * xs[i], 2);
    ss_tot += std::pow(ys[i] - mean, 2);
  }
  return {slope, 1.0 - ss_res / ss_tot};
}

}  // namespace

TEST_CASE("the default configuration peaks at 17.04 peta-ops") {
  const double peak = peak_throughput(ArrayConfig{}, 2);
  REQUIRE(peak == 8192.0 * 52.0 * 2.0 * 20e9);
  REQUIRE(peak == Catch::Approx(1.7039e16).epsilon(1e-4));
  // Within half a percent of the headline 17 peta-ops figure.
  REQUIRE(std::abs(peak / 17e15 - 1.0) < 0.005);
}

TEST_CASE("peak throughput is exactly linear in channels and frequency") {
  ArrayConfig cfg;
  const double base = peak_throughput(cfg, 2);
  cfg.channels = 26;
  REQUIRE(peak_throughput(cfg, 2) == base / 2.0);
  cfg.channels = 52;
  cfg.compute_freq_hz = 10e9;
  REQUIRE(peak_throughput(cfg, 2) == base / 2.0);
  cfg.compute_freq_hz = 40e9;
  REQUIRE(peak_throughput(cfg, 2) == base * 2.0);
}

TEST_CASE("counting a MAC as one op halves the figures") {
  ArrayConfig cfg;
  REQUIRE(peak_throughput(cfg, 1) == peak_throughput(cfg, 2) / 2.0);
  PerfQuery q;
  q.dims = {64, 64, 64};
  q.rank = 4;
  q.ops_per_mac = 1;
  PerfQuery q2 = q;
  q2.ops_per_mac = 2;
  REQUIRE(sustained_mttkrp(q).sustained_ops_per_s ==
          sustained_mttkrp(q2).sustained_ops_per_s / 2.0);
}

TEST_CASE("the reference workload sustains at least 99 percent of peak") {
  PerfQuery q;  // 1e6 per mode, rank 52, default config
  const PerfReport rep = sustained_mttkrp(q);
  REQUIRE(rep.sustained_ops_per_s >= 0.99 * rep.peak_ops_per_s);
  REQUIRE(rep.sustained_ops_per_s <= rep.peak_ops_per_s);
  REQUIRE(rep.utilization == rep.sustained_ops_per_s / rep.peak_ops_per_s);
}

TEST_CASE("a tiny workload leaves the array mostly idle") {
  PerfQuery q;
  q.dims = {4, 4, 4};
  q.rank = 4;
  const PerfReport rep = sustained_mttkrp(q);
  REQUIRE(rep.utilization < 0.01);
}

TEST_CASE("disabling write overlap strictly lowers sustained throughput") {
  PerfQuery q;
  q.dims = {128, 128, 128};
  q.rank = 16;
  const PerfReport with = sustained_mttkrp(q);
  q.config.double_buffering = false;
  const PerfReport without = sustained_mttkrp(q);
  REQUIRE(without.sustained_ops_per_s < with.sustained_ops_per_s);
}

TEST_CASE("analytic cycle counts equal simulated cycle counts") {
  SplitMix64 g(101);
  for (int trial = 0; trial < 5; ++trial) {
    PerfQuery q;
    q.dims = {1 + g.next_below(6), 1 + g.next_below(6), 1 + g.next_below(6)};
    q.rank = 1 + g.next_below(16);
    q.target_mode = g.next_below(3);
    const PerfReport rep = sustained_mttkrp(q);
    DenseTensor t = DenseTensor::random({q.dims[0], q.dims[1], q.dims[2]}, g.next_u64());
    std::vector<FactorMatrix> f;
    for (std::size_t m = 0; m < 3; ++m)
      f.push_back(FactorMatrix::random(m, q.dims[m], q.rank, g.next_u64()));
    const ExecutionResult r = mttkrp_on_array(t, f, q.target_mode, q.config);
    REQUIRE(rep.compute_cycles == r.compute_cycles);
    REQUIRE(rep.write_cycles == r.write_cycles);
  }
}

TEST_CASE("sustained never exceeds peak across random queries") {
  SplitMix64 g(102);
  for (int trial = 0; trial < 20; ++trial) {
    PerfQuery q;
    q.dims = {1 + g.next_below(200), 1 + g.next_below(200), 1 + g.next_below(200)};
    q.rank = 1 + g.next_below(80);
    q.config.channels = 1 + g.next_below(64);
    q.config.double_buffering = g.next_unit() < 0.5;
    const PerfReport rep = sustained_mttkrp(q);
    REQUIRE(rep.sustained_ops_per_s <= rep.peak_ops_per_s);
    REQUIRE(rep.utilization > 0.0);
    REQUIRE(rep.utilization <= 1.0);
  }
}

TEST_CASE("channel sweep at fixed frequency is exactly linear through the origin") {
  ArrayConfig base;
  PerfQuery q;
  std::vector<std::size_t> chans(52);
  for (std::size_t i = 0; i < 52; ++i) chans[i] = i + 1;
  const auto rows = sweep({20e9}, chans, base, q);
  REQUIRE(rows.size() == 52);
  std::vector<double> xs, ys;
  for (const auto& r : rows) {
    xs.push_back(static_cast<double>(r.channels));
    ys.push_back(r.sustained_ops);
  }
  const auto [slope, r2] = fit_through_origin(xs, ys);
  REQUIRE(r2 >= 1.0 - 1e-12);
  REQUIRE(slope == Catch::Approx(17.04e15 / 52.0).epsilon(1e-3));
}

TEST_CASE("frequency sweep at fixed channels scales 1:2:4") {
  ArrayConfig base;
  PerfQuery q;
  const auto rows = sweep({5e9, 10e9, 20e9}, {52}, base, q);
  REQUIRE(rows.size() == 3);
  REQUIRE(rows[1].sustained_ops == 2.0 * rows[0].sustained_ops);
  REQUIRE(rows[2].sustained_ops == 4.0 * rows[0].sustained_ops);
}

TEST_CASE("invalid grid points are filtered and can empty the table") {
  ArrayConfig base;
  PerfQuery q;
  const auto rows = sweep({-1.0}, {0}, base, q);
  REQUIRE(rows.empty());
  std::ostringstream csv;
  write_sweep_csv(csv, rows);
  REQUIRE(csv.str() ==
          "freq_hz,channels,rows,word_cols,peak_ops,sustained_ops,utilization,"
          "total_cycles,energy_j\n");
}

TEST_CASE("sweep CSV carries the documented header and row-major grid order") {
  ArrayConfig base;
  PerfQuery q;
  q.dims = {64, 64, 64};
  q.rank = 8;
  const auto rows = sweep({1e9, 2e9}, {1, 2}, base, q);
  REQUIRE(rows.size() == 4);
  REQUIRE(rows[0].freq_hz == 1e9);
  REQUIRE(rows[0].channels == 1);
  REQUIRE(rows[3].freq_hz == 2e9);
  REQUIRE(rows[3].channels == 2);
  std::ostringstream csv;
  write_sweep_csv(csv, rows);
  REQUIRE(csv.str().rfind("freq_hz,channels,", 0) == 0);
}

TEST_CASE("the sweep SVG contains two monotone polylines") {
  ArrayConfig base;
  PerfQuery q;
  std::vector<std::size_t> chans{1, 13, 26, 39, 52};
  const auto rows = sweep({5e9, 10e9, 20e9}, chans, base, q);
  std::ostringstream svg;
  write_sweep_svg(svg, rows);
  const std::string text = svg.str();
  std::size_t count = 0;
  for (std::size_t pos = text.find("<polyline"); pos != std::string::npos;
       pos = text.find("<polyline", pos + 1))
    ++count;
  REQUIRE(count == 2);
}
