#pragma once

#include <array>
#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "psram/array.hpp"
#include "psram/common.hpp"
#include "psram/mapping.hpp"

namespace psram {

/// Workload description for the analytic model. A multiply-accumulate counts
/// as ops_per_mac operations (2 by default; the calibration that lands the
/// reference configuration on 17.04 PetaOps).
struct PerfQuery {
  ArrayConfig config;
  std::array<std::size_t, 3> dims{1000000, 1000000, 1000000};
  std::size_t rank = 52;
  std::size_t target_mode = 0;
  unsigned ops_per_mac = 2;
};

struct PerfReport {
  double peak_ops_per_s = 0.0;
  double sustained_ops_per_s = 0.0;
  double utilization = 0.0;  // sustained / peak
  std::uint64_t compute_cycles = 0;
  std::uint64_t write_cycles = 0;
  double total_cycles = 0.0;  // compute + write
  double elapsed_s = 0.0;
  double total_ops = 0.0;
  double write_energy_j = 0.0;
  double static_energy_j = 0.0;
  double total_energy_j = 0.0;  // projection from device coefficients, not a
                                // published figure
  unsigned ops_per_mac = 2;
  TilePlan plan;  // per-stage cycle/word breakdown
};

/// Peak throughput: every word multiplies every channel each compute cycle,
/// words x channels x ops_per_mac x frequency.
inline double peak_throughput(const ArrayConfig& cfg, unsigned ops_per_mac = 2) {
  cfg.validate();
  if (ops_per_mac == 0) throw_invalid("ops_per_mac must be >= 1");
  return static_cast<double>(cfg.word_count()) * static_cast<double>(cfg.channels) *
         static_cast<double>(ops_per_mac) * cfg.compute_freq_hz;
}

/// Sustained throughput of a full MTTKRP from the analytic tile plan. With
/// double buffering on, tile writes overlap compute and elapsed time is the
/// compute time; off, write cycles serialize at the write clock.
inline PerfReport sustained_mttkrp(const PerfQuery& query) {
  const ArrayConfig& cfg = query.config;
  PerfReport rep;
  rep.plan = tile_plan(query.dims, query.rank, cfg, query.target_mode);
  rep.ops_per_mac = query.ops_per_mac;
  rep.total_ops = static_cast<double>(query.ops_per_mac) * rep.plan.mac_count;
  rep.compute_cycles = rep.plan.compute_cycles;
  rep.write_cycles = rep.plan.write_cycles;
  rep.total_cycles = static_cast<double>(rep.plan.compute_cycles) +
                     static_cast<double>(rep.plan.write_cycles);
  rep.elapsed_s = static_cast<double>(rep.plan.compute_cycles) / cfg.compute_freq_hz;
  if (!cfg.double_buffering)
    rep.elapsed_s += static_cast<double>(rep.plan.write_cycles) / cfg.write_freq_hz;
  rep.peak_ops_per_s = peak_throughput(cfg, query.ops_per_mac);
  rep.sustained_ops_per_s = rep.total_ops / rep.elapsed_s;
  rep.utilization = rep.sustained_ops_per_s / rep.peak_ops_per_s;
  rep.write_energy_j = static_cast<double>(rep.plan.write_words) *
                       (static_cast<double>(cfg.word_bits) * cfg.e_write_per_bit_j);
  rep.static_energy_j = static_cast<double>(rep.plan.compute_cycles) *
                        cfg.e_static_per_bit_j * static_cast<double>(cfg.rows) *
                        static_cast<double>(cfg.bit_cols);
  rep.total_energy_j = rep.write_energy_j + rep.static_energy_j;
  return rep;
}

// ---------------------------------------------------------------------------
// Frequency / channel sweeps
// ---------------------------------------------------------------------------

struct SweepRow {
  double freq_hz = 0.0;
  std::size_t channels = 0;
  std::size_t rows = 0;
  std::size_t word_cols = 0;
  double peak_ops = 0.0;
  double sustained_ops = 0.0;  // saturated-workload limit (= peak)
  double utilization = 0.0;
  double total_cycles = 0.0;  // query workload, analytic
  double energy_j = 0.0;
};

/// One report per (frequency, channel) grid point, row-major over the grid.
/// The sustained column is the saturated large-tensor limit, in which input
/// streaming keeps every word-channel slot busy; it is exactly linear in each
/// swept variable. Invalid configurations are filtered out.
inline std::vector<SweepRow> sweep(const std::vector<double>& freqs,
                                   const std::vector<std::size_t>& channel_counts,
                                   const ArrayConfig& base, const PerfQuery& query) {
  std::vector<SweepRow> rows;
  for (double f : freqs) {
    for (std::size_t c : channel_counts) {
      ArrayConfig cfg = base;
      cfg.compute_freq_hz = f;
      cfg.channels = c;
      try {
        cfg.validate();
      } catch (const std::invalid_argument&) {
        continue;
      }
      SweepRow row;
      row.freq_hz = f;
      row.channels = c;
      row.rows = cfg.rows;
      row.word_cols = cfg.word_cols();
      row.peak_ops = peak_throughput(cfg, query.ops_per_mac);
      row.sustained_ops = row.peak_ops;
      row.utilization = 1.0;
      try {
        const TilePlan plan = tile_plan(query.dims, query.rank, cfg, query.target_mode);
        row.total_cycles = static_cast<double>(plan.compute_cycles) +
                           static_cast<double>(plan.write_cycles);
        row.energy_j = static_cast<double>(plan.write_words) *
                           (static_cast<double>(cfg.word_bits) * cfg.e_write_per_bit_j) +
                       static_cast<double>(plan.compute_cycles) * cfg.e_static_per_bit_j *
                           static_cast<double>(cfg.rows) * static_cast<double>(cfg.bit_cols);
      } catch (const std::invalid_argument&) {
        continue;  // workload does not fit 64-bit accounting at this point
      }
      rows.push_back(row);
    }
  }
  return rows;
}

inline void write_sweep_csv(std::ostream& out, const std::vector<SweepRow>& rows) {
  out << "freq_hz,channels,rows,word_cols,peak_ops,sustained_ops,utilization,"
         "total_cycles,energy_j\n";
  for (const SweepRow& r : rows)
    out << format_double(r.freq_hz) << ',' << r.channels << ',' << r.rows << ','
        << r.word_cols << ',' << format_double(r.peak_ops) << ','
        << format_double(r.sustained_ops) << ',' << format_double(r.utilization) << ','
        << format_double(r.total_cycles) << ',' << format_double(r.energy_j) << '\n';
}

}  // namespace psram
