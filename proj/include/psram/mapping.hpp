#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "psram/array.hpp"
#include "psram/common.hpp"
#include "psram/cp.hpp"
#include "psram/quantize.hpp"
#include "psram/schedule.hpp"
#include "psram/tensor.hpp"

namespace psram {

// ---------------------------------------------------------------------------
// Lane chunking: rank components ride wavelength channels; ranks wider than
// the channel budget run in sequential passes.
// ---------------------------------------------------------------------------

struct LaneChunk {
  std::size_t lane0 = 0;
  std::size_t lanes = 0;
};

inline std::vector<LaneChunk> lane_chunks(std::size_t rank, std::size_t capacity) {
  if (capacity == 0) throw_invalid("lane_chunks: zero channel capacity");
  std::vector<LaneChunk> out;
  for (std::size_t l0 = 0; l0 < rank; l0 += capacity)
    out.push_back({l0, std::min(capacity, rank - l0)});
  return out;
}

namespace detail {

// ADC transfer sized for lossless readback of integer accumulations up to
// max_int. Widens past config.adc_bits when the accumulation needs it.
inline AdcSpec lossless_adc(const ArrayConfig& cfg, std::uint64_t max_int) {
  AdcSpec adc;
  adc.bits = std::max(cfg.adc_bits, bits_for(max_int));
  if (adc.bits > 52)
    throw_invalid("accumulation range needs " + std::to_string(adc.bits) +
                  " ADC bits; beyond lossless conversion support");
  adc.full_scale = static_cast<double>(max_int);
  return adc;
}

inline AdcSpec hadamard_adc(const ArrayConfig& cfg) {
  const std::uint64_t m = cfg.max_word();
  return lossless_adc(cfg, m * m);
}

inline AdcSpec scale_add_adc(const ArrayConfig& cfg, std::size_t batch_rows) {
  const std::uint64_t m = cfg.max_word();
  return lossless_adc(cfg, static_cast<std::uint64_t>(batch_rows) * m * m * m);
}

// Integer readback of one slot; exact whenever full_scale <= 2^bits - 1.
inline std::int64_t readback(const ReadoutSlot& slot, const AdcSpec& adc) {
  return std::llround(adc_decode(slot.adc_code, adc.bits, adc.full_scale));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise product of factor rows on the array (stored vector replicated
// down one column, streamed rows on interleaved wavelengths).
// ---------------------------------------------------------------------------

struct HadamardMap {
  Schedule schedule;
  QuantizedMatrix stored;    // 1 x R vector held in the words
  QuantizedMatrix streamed;  // n x R rows fed as wavelength inputs
  std::size_t rank = 0;
  std::vector<LaneChunk> chunks;
};

inline HadamardMap map_hadamard(std::span<const double> stored_row,
                                const std::vector<std::vector<double>>& streamed_rows,
                                const ArrayConfig& cfg) {
  cfg.validate();
  const std::size_t rank = stored_row.size();
  if (rank == 0) throw_invalid("map_hadamard: empty vector");
  if (streamed_rows.empty()) throw_invalid("map_hadamard: no streamed rows");
  std::vector<double> flat;
  flat.reserve(rank * streamed_rows.size());
  for (const auto& r : streamed_rows) {
    if (r.size() != rank) throw_invalid("map_hadamard: length mismatch");
    flat.insert(flat.end(), r.begin(), r.end());
  }

  HadamardMap map;
  map.rank = rank;
  map.stored = quantize_matrix(stored_row, 1, rank, cfg.word_bits);
  map.streamed = quantize_matrix(flat, streamed_rows.size(), rank, cfg.word_bits);
  const std::size_t cap = std::min(cfg.rows, cfg.channels);
  map.chunks = lane_chunks(rank, cap);
  const AdcSpec adc = detail::hadamard_adc(cfg);
  const std::size_t n = streamed_rows.size();

  for (const LaneChunk& ch : map.chunks) {
    const std::size_t groups = cap / ch.lanes;
    PrimitiveOp wr;
    wr.kind = OpKind::Write;
    wr.row0 = 0;
    wr.row1 = groups * ch.lanes;
    wr.col0 = 0;
    wr.col1 = 1;
    for (std::size_t g = 0; g < groups; ++g)
      for (std::size_t l = 0; l < ch.lanes; ++l)
        wr.writes.push_back({g * ch.lanes + l, 0, map.stored.mag(0, ch.lane0 + l)});
    map.schedule.push(std::move(wr), cfg);

    for (std::size_t s0 = 0; s0 < n; s0 += groups) {
      const std::size_t ga = std::min(groups, n - s0);
      PrimitiveOp op;
      op.kind = OpKind::Hadamard;
      op.row0 = 0;
      op.row1 = ga * ch.lanes;
      op.col0 = 0;
      op.col1 = 1;
      op.adc = adc;
      op.phase = 1;
      op.base_stored = 0;
      op.base_stream = s0;
      op.lane0 = ch.lane0;
      op.lanes = ch.lanes;
      op.groups = ga;
      op.input.input_bits = cfg.word_bits;
      for (std::size_t g = 0; g < ga; ++g)
        for (std::size_t l = 0; l < ch.lanes; ++l)
          op.input.drives.push_back(
              {g * ch.lanes + l, g * ch.lanes + l, map.streamed.mag(s0 + g, ch.lane0 + l)});
      map.schedule.push(std::move(op), cfg);
    }
  }
  return map;
}

struct HadamardRun {
  std::vector<std::vector<double>> products;  // one per streamed row
  std::vector<std::vector<std::int64_t>> products_int;
  double scale = 1.0;
  EnergyLedger ledger;
};

inline HadamardRun run_hadamard(const HadamardMap& map, const ArrayConfig& cfg,
                                const NoiseSpec& noise = {}, std::uint64_t seed = 0) {
  ArraySim sim(cfg, seed);
  HadamardRun run;
  run.scale = map.stored.scale() * map.streamed.scale();
  run.products_int.assign(map.streamed.rows, std::vector<std::int64_t>(map.rank, 0));
  for (const PrimitiveOp& op : map.schedule.ops) {
    if (op.kind == OpKind::Write) {
      sim.write_words(op.writes);
      continue;
    }
    const ColumnReadout ro = sim.compute_cycle(op.input, op.adc, noise);
    for (const ReadoutSlot& slot : ro.slots) {
      if (slot.word_col < op.col0 || slot.word_col >= op.col1) continue;
      const std::size_t g = slot.channel / op.lanes;
      const std::size_t lane = op.lane0 + slot.channel % op.lanes;
      const std::size_t stream = op.base_stream + g;
      const int sgn = map.stored.sign(0, lane) * map.streamed.sign(stream, lane);
      run.products_int[stream][lane] = sgn * detail::readback(slot, op.adc);
    }
  }
  run.ledger = sim.ledger();
  run.products.assign(map.streamed.rows, std::vector<double>(map.rank, 0.0));
  for (std::size_t s = 0; s < map.streamed.rows; ++s)
    for (std::size_t r = 0; r < map.rank; ++r)
      run.products[s][r] = run.scale * static_cast<double>(run.products_int[s][r]);
  return run;
}

// ---------------------------------------------------------------------------
// Scale-and-accumulate on the array: tensor elements resident in the words,
// elementwise-product vectors streamed back as wavelength inputs; identical
// wavelengths accumulate down the column and the running output row is kept
// digitally.
// ---------------------------------------------------------------------------

struct ScaleAddMap {
  Schedule schedule;
  QuantizedMatrix elements;  // T x 1 stored scalars
  QuantizedMatrix streams;   // T x R streamed vectors
  std::size_t rank = 0;
  std::size_t phases = 1;
  std::vector<LaneChunk> chunks;
};

inline ScaleAddMap map_scale_add(std::span<const double> elements,
                                 const std::vector<std::vector<double>>& streams,
                                 const ArrayConfig& cfg) {
  cfg.validate();
  if (elements.size() != streams.size() || elements.empty())
    throw_invalid("map_scale_add: need one streamed vector per element");
  const std::size_t rank = streams.front().size();
  if (rank == 0) throw_invalid("map_scale_add: empty vectors");
  std::vector<double> flat;
  flat.reserve(rank * streams.size());
  for (const auto& s : streams) {
    if (s.size() != rank) throw_invalid("map_scale_add: length mismatch");
    flat.insert(flat.end(), s.begin(), s.end());
  }

  ScaleAddMap map;
  map.rank = rank;
  map.elements = quantize_matrix(elements, elements.size(), 1, cfg.word_bits);
  map.streams = quantize_matrix(flat, streams.size(), rank, 2 * cfg.word_bits);
  map.phases = cfg.signed_data ? 2 : 1;
  if (map.phases == 1 && (map.elements.any_negative() || map.streams.any_negative()))
    throw_invalid("map_scale_add: negative operands require signed_data = true");
  map.chunks = lane_chunks(rank, cfg.channels);

  const std::size_t total = elements.size();
  for (std::size_t t0 = 0; t0 < total; t0 += cfg.rows) {
    const std::size_t s = std::min(cfg.rows, total - t0);
    PrimitiveOp wr;
    wr.kind = OpKind::Write;
    wr.row0 = 0;
    wr.row1 = s;
    wr.col0 = 0;
    wr.col1 = 1;
    for (std::size_t t = 0; t < s; ++t)
      wr.writes.push_back({t, 0, map.elements.mag(t0 + t, 0)});
    map.schedule.push(std::move(wr), cfg);

    const AdcSpec adc = detail::scale_add_adc(cfg, s);
    for (const LaneChunk& ch : map.chunks) {
      for (std::size_t p = 0; p < map.phases; ++p) {
        const int phase = p == 0 ? 1 : -1;
        PrimitiveOp op;
        op.kind = OpKind::ScaleAdd;
        op.row0 = 0;
        op.row1 = s;
        op.col0 = 0;
        op.col1 = 1;
        op.adc = adc;
        op.phase = phase;
        op.base_stored = 0;
        op.base_stream = t0;
        op.lane0 = ch.lane0;
        op.lanes = ch.lanes;
        op.groups = s;
        op.input.input_bits = 2 * cfg.word_bits;
        for (std::size_t t = 0; t < s; ++t)
          for (std::size_t l = 0; l < ch.lanes; ++l) {
            const std::size_t lane = ch.lane0 + l;
            const int sgn =
                map.elements.sign(t0 + t, 0) * map.streams.sign(t0 + t, lane);
            const std::uint64_t mag = map.streams.mag(t0 + t, lane);
            const bool active = map.phases == 1 || sgn == phase;
            op.input.drives.push_back({t, l, active ? mag : 0});
          }
        map.schedule.push(std::move(op), cfg);
      }
    }
  }
  return map;
}

struct ScaleAddRun {
  std::vector<double> result;  // base_row + sum_t element_t * stream_t
  EnergyLedger ledger;
};

inline ScaleAddRun run_scale_add(const ScaleAddMap& map, std::span<const double> base_row,
                                 const ArrayConfig& cfg, const NoiseSpec& noise = {},
                                 std::uint64_t seed = 0) {
  if (base_row.size() != map.rank) throw_invalid("run_scale_add: base row length mismatch");
  ArraySim sim(cfg, seed);
  std::vector<std::int64_t> acc(map.rank, 0);
  for (const PrimitiveOp& op : map.schedule.ops) {
    if (op.kind == OpKind::Write) {
      sim.write_words(op.writes);
      continue;
    }
    const ColumnReadout ro = sim.compute_cycle(op.input, op.adc, noise);
    for (const ReadoutSlot& slot : ro.slots) {
      if (slot.word_col < op.col0 || slot.word_col >= op.col1) continue;
      acc[op.lane0 + slot.channel] += op.phase * detail::readback(slot, op.adc);
    }
  }
  ScaleAddRun run;
  run.ledger = sim.ledger();
  const double scale = map.elements.scale() * map.streams.scale();
  run.result.resize(map.rank);
  for (std::size_t r = 0; r < map.rank; ++r)
    run.result[r] = base_row[r] + scale * static_cast<double>(acc[r]);
  return run;
}

// ---------------------------------------------------------------------------
// Analytic tiling plan for a full MTTKRP. The executor iterates exactly this
// plan, so predicted cycle counts equal measured ones.
// ---------------------------------------------------------------------------

struct TilePlan {
  std::size_t target_mode = 0;
  std::array<std::size_t, 3> dims{};
  std::size_t rank = 0;
  std::size_t mode_lo = 0, mode_hi = 0;  // non-target modes, ascending
  std::size_t j1 = 0, j2 = 0, out = 0;   // dims of mode_lo / mode_hi / target
  std::size_t phases = 1;

  std::vector<LaneChunk> had_chunks;  // lanes <= min(rows, channels)
  std::vector<LaneChunk> acc_chunks;  // lanes <= channels

  std::size_t had_col_tiles = 0;
  std::uint64_t had_cycles_per_tile = 0;
  std::uint64_t had_compute_cycles = 0;
  std::uint64_t had_write_words = 0;
  std::uint64_t had_write_cycles = 0;

  std::size_t out_col_tiles = 0;
  std::uint64_t pair_count = 0;
  std::uint64_t batches_per_tile = 0;
  std::uint64_t acc_cycles_per_tile = 0;
  std::uint64_t acc_compute_cycles = 0;
  std::uint64_t acc_write_words = 0;
  std::uint64_t acc_write_cycles = 0;

  std::uint64_t compute_cycles = 0;
  std::uint64_t write_cycles = 0;
  std::uint64_t write_words = 0;

  double mac_count = 0.0;      // useful multiply-accumulate slots
  double active_slots = 0.0;   // structurally driven slots (phases included)
  double utilization = 0.0;    // active slots / slot capacity over compute cycles
};

namespace detail {

inline std::uint64_t u128_to_u64(unsigned __int128 v, const char* what) {
  if (v > static_cast<unsigned __int128>(UINT64_MAX))
    throw_invalid(std::string(what) + " overflows 64-bit cycle accounting");
  return static_cast<std::uint64_t>(v);
}

inline unsigned __int128 ceil_div128(unsigned __int128 a, unsigned __int128 b) {
  return (a + b - 1) / b;
}

}  // namespace detail

inline TilePlan tile_plan(std::array<std::size_t, 3> dims, std::size_t rank,
                          const ArrayConfig& cfg, std::size_t target_mode = 0) {
  cfg.validate();
  if (rank == 0) throw_invalid("tile_plan: rank must be >= 1");
  if (target_mode >= 3) throw_invalid("tile_plan: target mode out of range");
  for (std::size_t d : dims)
    if (d == 0) throw_invalid("tile_plan: dims must be >= 1");

  TilePlan p;
  p.target_mode = target_mode;
  p.dims = dims;
  p.rank = rank;
  std::vector<std::size_t> others;
  for (std::size_t m = 0; m < 3; ++m)
    if (m != target_mode) others.push_back(m);
  p.mode_lo = others[0];
  p.mode_hi = others[1];
  p.j1 = dims[p.mode_lo];
  p.j2 = dims[p.mode_hi];
  p.out = dims[target_mode];
  p.phases = cfg.signed_data ? 2 : 1;

  const std::size_t W = cfg.word_cols();
  const std::size_t cap = std::min(cfg.rows, cfg.channels);
  p.had_chunks = lane_chunks(rank, cap);
  p.acc_chunks = lane_chunks(rank, cfg.channels);

  using u128 = unsigned __int128;
  const u128 wpwc = cfg.words_per_write_cycle;

  // Elementwise-product stage: stored-factor rows tile the word columns, the
  // other factor's rows stream in channel groups.
  p.had_col_tiles = static_cast<std::size_t>(ceil_div(p.j1, W));
  const std::size_t full_h = p.j1 / W;
  const std::size_t rem_h = p.j1 % W;
  u128 had_cycles = 0, had_words = 0, had_wcycles = 0, had_cpt = 0;
  for (const LaneChunk& ch : p.had_chunks) {
    const std::size_t groups = cap / ch.lanes;
    had_cpt += ceil_div(p.j2, groups);
    const u128 words_per_col = static_cast<u128>(groups) * ch.lanes;
    had_words += static_cast<u128>(p.j1) * words_per_col;
    had_wcycles += static_cast<u128>(full_h) * detail::ceil_div128(W * words_per_col, wpwc);
    if (rem_h) had_wcycles += detail::ceil_div128(static_cast<u128>(rem_h) * words_per_col, wpwc);
  }
  had_cycles = static_cast<u128>(p.had_col_tiles) * had_cpt;
  p.had_cycles_per_tile = detail::u128_to_u64(had_cpt, "per-tile cycles");
  p.had_compute_cycles = detail::u128_to_u64(had_cycles, "compute cycles");
  p.had_write_words = detail::u128_to_u64(had_words, "write words");
  p.had_write_cycles = detail::u128_to_u64(had_wcycles, "write cycles");

  // Accumulation stage: output rows tile the word columns, tensor elements
  // fill the wordlines batch by batch.
  const u128 pairs = static_cast<u128>(p.j1) * p.j2;
  p.pair_count = detail::u128_to_u64(pairs, "pair count");
  p.out_col_tiles = static_cast<std::size_t>(ceil_div(p.out, W));
  const std::size_t full_a = p.out / W;
  const std::size_t rem_a = p.out % W;
  const u128 batches = detail::ceil_div128(pairs, cfg.rows);
  const u128 full_b = pairs / cfg.rows;
  const u128 rem_s = pairs % cfg.rows;
  p.batches_per_tile = detail::u128_to_u64(batches, "batches");
  const u128 acc_cpt = batches * p.acc_chunks.size() * p.phases;
  p.acc_cycles_per_tile = detail::u128_to_u64(acc_cpt, "per-tile cycles");
  const u128 acc_cycles = static_cast<u128>(p.out_col_tiles) * acc_cpt;
  p.acc_compute_cycles = detail::u128_to_u64(acc_cycles, "compute cycles");
  const u128 acc_words = static_cast<u128>(p.out) * pairs;
  p.acc_write_words = detail::u128_to_u64(acc_words, "write words");
  auto batch_write_cycles = [&](u128 width) -> u128 {
    u128 c = full_b * detail::ceil_div128(width * cfg.rows, wpwc);
    if (rem_s) c += detail::ceil_div128(width * rem_s, wpwc);
    return c;
  };
  u128 acc_wcycles = static_cast<u128>(full_a) * batch_write_cycles(W);
  if (rem_a) acc_wcycles += batch_write_cycles(rem_a);
  p.acc_write_cycles = detail::u128_to_u64(acc_wcycles, "write cycles");

  p.compute_cycles =
      detail::u128_to_u64(had_cycles + acc_cycles, "compute cycles");
  p.write_cycles = detail::u128_to_u64(had_wcycles + acc_wcycles, "write cycles");
  p.write_words = detail::u128_to_u64(had_words + acc_words, "write words");

  const double pairs_d = static_cast<double>(p.j1) * static_cast<double>(p.j2);
  const double mac_had = pairs_d * static_cast<double>(rank);
  const double mac_acc = pairs_d * static_cast<double>(rank) * static_cast<double>(p.out);
  p.mac_count = mac_had + mac_acc;
  p.active_slots = mac_had + static_cast<double>(p.phases) * mac_acc;
  const double capacity = static_cast<double>(p.compute_cycles) *
                          static_cast<double>(cfg.rows) * static_cast<double>(W) *
                          static_cast<double>(cfg.channels);
  p.utilization = capacity > 0.0 ? p.active_slots / capacity : 0.0;
  return p;
}

// ---------------------------------------------------------------------------
// Full MTTKRP on the array.
// ---------------------------------------------------------------------------

struct ExecutionOptions {
  bool analog = false;
  double sigma_rel = 0.0;
  std::uint64_t seed = 0;
  bool keep_schedule = true;  // materialize ops (disable for cycle-only runs)
};

struct ExecutionResult {
  FactorMatrix values;
  EnergyLedger ledger;
  std::uint64_t compute_cycles = 0;
  std::uint64_t write_cycles = 0;
  double utilization = 0.0;
  double operand_scale = 1.0;
  TilePlan plan;
  Schedule schedule;
};

struct MttkrpOperands {
  QuantizedMatrix tensor;    // element_count x 1
  QuantizedMatrix factor_lo; // dims[mode_lo] x rank
  QuantizedMatrix factor_hi; // dims[mode_hi] x rank
  double total_scale = 1.0;
};

inline MttkrpOperands quantize_mttkrp_operands(const DenseTensor& tensor,
                                               std::span<const FactorMatrix> factors,
                                               std::size_t target, const ArrayConfig& cfg) {
  if (tensor.mode_count() != 3)
    throw_invalid("array mapping supports 3-mode tensors only");
  detail::check_mttkrp_args(tensor.shape, factors, target);
  std::vector<std::size_t> others;
  for (std::size_t m = 0; m < 3; ++m)
    if (m != target) others.push_back(m);
  MttkrpOperands q;
  q.tensor = quantize_matrix(tensor.values, tensor.values.size(), 1, cfg.word_bits);
  q.factor_lo = quantize_matrix(factors[others[0]].values, factors[others[0]].rows,
                                factors[others[0]].rank, cfg.word_bits);
  q.factor_hi = quantize_matrix(factors[others[1]].values, factors[others[1]].rows,
                                factors[others[1]].rank, cfg.word_bits);
  q.total_scale = q.tensor.scale() * q.factor_lo.scale() * q.factor_hi.scale();
  return q;
}

/// Reference MTTKRP evaluated on the quantized operands with the same
/// deferred scaling as the array path; integer sums are exact in double, so
/// ideal-mode array execution must match this bit for bit.
inline FactorMatrix mttkrp_reference_on_quantized(const DenseTensor& tensor,
                                                  const MttkrpOperands& q,
                                                  std::size_t target) {
  std::vector<std::size_t> others;
  for (std::size_t m = 0; m < 3; ++m)
    if (m != target) others.push_back(m);
  DenseTensor xi(tensor.shape);
  for (std::size_t i = 0; i < xi.values.size(); ++i)
    xi.values[i] = static_cast<double>(q.tensor.flat.signed_mag(i));
  std::vector<FactorMatrix> fi(3);
  const std::size_t rank = q.factor_lo.cols;
  for (std::size_t m = 0; m < 3; ++m) fi[m] = FactorMatrix(m, tensor.shape[m], rank);
  for (std::size_t i = 0; i < q.factor_lo.rows; ++i)
    for (std::size_t r = 0; r < rank; ++r)
      fi[others[0]].at(i, r) = static_cast<double>(q.factor_lo.flat.signed_mag(i * rank + r));
  for (std::size_t i = 0; i < q.factor_hi.rows; ++i)
    for (std::size_t r = 0; r < rank; ++r)
      fi[others[1]].at(i, r) = static_cast<double>(q.factor_hi.flat.signed_mag(i * rank + r));
  FactorMatrix out = mttkrp(xi, std::span<const FactorMatrix>(fi), target);
  for (double& v : out.values) v = q.total_scale * v;
  return out;
}

/// Runs the composed pipeline: elementwise products of the two factor rows
/// for every index pair (stage 1), then batched scale-and-accumulate of the
/// tensor elements into the output rows (stage 2). Ideal mode reproduces
/// mttkrp_reference_on_quantized exactly.
inline ExecutionResult mttkrp_on_array(const DenseTensor& tensor,
                                       std::span<const FactorMatrix> factors,
                                       std::size_t target, const ArrayConfig& cfg,
                                       const ExecutionOptions& opt = {}) {
  const MttkrpOperands q = quantize_mttkrp_operands(tensor, factors, target, cfg);
  if (q.tensor.any_negative())
    throw_invalid("mttkrp_on_array: negative tensor elements cannot be stored as "
                  "optical word magnitudes; use the reference implementation");
  if (!cfg.signed_data && (q.factor_lo.any_negative() || q.factor_hi.any_negative()))
    throw_invalid("mttkrp_on_array: negative factors require signed_data = true");

  std::array<std::size_t, 3> dims{tensor.shape[0], tensor.shape[1], tensor.shape[2]};
  TilePlan plan = tile_plan(dims, q.factor_lo.cols, cfg, target);
  if (plan.compute_cycles + plan.write_cycles > (std::uint64_t{1} << 48))
    throw_invalid("mttkrp_on_array: schedule exceeds 2^48 cycles; use the analytic "
                  "performance model (sustained_mttkrp)");

  const std::size_t rank = q.factor_lo.cols;
  const std::size_t W = cfg.word_cols();
  const std::size_t cap = std::min(cfg.rows, cfg.channels);
  const NoiseSpec noise{opt.analog, opt.sigma_rel};

  ArraySim sim(cfg, opt.seed);
  Schedule sched;

  // Stage 1: per-pair elementwise products of the two factor rows, stored
  // as magnitude + digital sign.
  std::vector<std::uint32_t> y_mag(plan.pair_count * rank, 0);
  std::vector<std::int8_t> y_sign(plan.pair_count * rank, 1);
  const AdcSpec had_adc = detail::hadamard_adc(cfg);
  for (std::size_t tile0 = 0; tile0 < plan.j1; tile0 += W) {
    const std::size_t width = std::min(W, plan.j1 - tile0);
    for (const LaneChunk& ch : plan.had_chunks) {
      const std::size_t groups = cap / ch.lanes;
      PrimitiveOp wr;
      wr.kind = OpKind::Write;
      wr.row0 = 0;
      wr.row1 = groups * ch.lanes;
      wr.col0 = 0;
      wr.col1 = width;
      for (std::size_t c = 0; c < width; ++c)
        for (std::size_t g = 0; g < groups; ++g)
          for (std::size_t l = 0; l < ch.lanes; ++l)
            wr.writes.push_back(
                {g * ch.lanes + l, c, q.factor_lo.mag(tile0 + c, ch.lane0 + l)});
      sim.write_words(wr.writes);
      sched.push(std::move(wr), cfg);

      for (std::size_t s0 = 0; s0 < plan.j2; s0 += groups) {
        const std::size_t ga = std::min(groups, plan.j2 - s0);
        PrimitiveOp op;
        op.kind = OpKind::Hadamard;
        op.row0 = 0;
        op.row1 = ga * ch.lanes;
        op.col0 = 0;
        op.col1 = width;
        op.adc = had_adc;
        op.base_stored = tile0;
        op.base_stream = s0;
        op.lane0 = ch.lane0;
        op.lanes = ch.lanes;
        op.groups = ga;
        op.input.input_bits = cfg.word_bits;
        for (std::size_t g = 0; g < ga; ++g)
          for (std::size_t l = 0; l < ch.lanes; ++l)
            op.input.drives.push_back(
                {g * ch.lanes + l, g * ch.lanes + l, q.factor_hi.mag(s0 + g, ch.lane0 + l)});
        const ColumnReadout ro = sim.compute_cycle(op.input, op.adc, noise);
        for (const ReadoutSlot& slot : ro.slots) {
          if (slot.word_col >= width) continue;
          const std::size_t g = slot.channel / ch.lanes;
          const std::size_t lane = op.lane0 + slot.channel % ch.lanes;
          const std::size_t pair = (tile0 + slot.word_col) + (s0 + g) * plan.j1;
          const std::int64_t v = detail::readback(slot, op.adc);
          y_mag[pair * rank + lane] = static_cast<std::uint32_t>(v);
          y_sign[pair * rank + lane] = static_cast<std::int8_t>(
              q.factor_lo.sign(tile0 + slot.word_col, lane) *
              q.factor_hi.sign(s0 + g, lane));
        }
        sched.push(std::move(op), cfg);
      }
    }
  }

  // Stage 2: tensor elements resident in the words, product vectors streamed
  // back; per-channel column sums accumulate one output row per word column.
  std::vector<std::int64_t> acc(static_cast<std::size_t>(plan.out) * rank, 0);
  std::array<std::size_t, 3> idx{};
  for (std::size_t tile0 = 0; tile0 < plan.out; tile0 += W) {
    const std::size_t width = std::min(W, plan.out - tile0);
    for (std::uint64_t pair0 = 0; pair0 < plan.pair_count; pair0 += cfg.rows) {
      const std::size_t batch = static_cast<std::size_t>(
          std::min<std::uint64_t>(cfg.rows, plan.pair_count - pair0));
      PrimitiveOp wr;
      wr.kind = OpKind::Write;
      wr.row0 = 0;
      wr.row1 = batch;
      wr.col0 = 0;
      wr.col1 = width;
      for (std::size_t c = 0; c < width; ++c)
        for (std::size_t t = 0; t < batch; ++t) {
          const std::uint64_t pair = pair0 + t;
          idx[target] = tile0 + c;
          idx[plan.mode_lo] = static_cast<std::size_t>(pair % plan.j1);
          idx[plan.mode_hi] = static_cast<std::size_t>(pair / plan.j1);
          wr.writes.push_back({t, c, q.tensor.mag(tensor.linear_index(idx), 0)});
        }
      sim.write_words(wr.writes);
      sched.push(std::move(wr), cfg);

      const AdcSpec acc_adc = detail::scale_add_adc(cfg, batch);
      for (const LaneChunk& ch : plan.acc_chunks) {
        for (std::size_t ph = 0; ph < plan.phases; ++ph) {
          const int phase = ph == 0 ? 1 : -1;
          PrimitiveOp op;
          op.kind = OpKind::ScaleAdd;
          op.row0 = 0;
          op.row1 = batch;
          op.col0 = 0;
          op.col1 = width;
          op.adc = acc_adc;
          op.phase = phase;
          op.base_stored = tile0;
          op.base_stream = static_cast<std::size_t>(pair0);
          op.lane0 = ch.lane0;
          op.lanes = ch.lanes;
          op.groups = batch;
          op.input.input_bits = 2 * cfg.word_bits;
          for (std::size_t t = 0; t < batch; ++t)
            for (std::size_t l = 0; l < ch.lanes; ++l) {
              const std::size_t lane = ch.lane0 + l;
              const std::size_t yi = (pair0 + t) * rank + lane;
              const bool active = plan.phases == 1 || y_sign[yi] == phase;
              op.input.drives.push_back({t, l, active ? y_mag[yi] : 0});
            }
          const ColumnReadout ro = sim.compute_cycle(op.input, op.adc, noise);
          for (const ReadoutSlot& slot : ro.slots) {
            if (slot.word_col >= width) continue;
            acc[(tile0 + slot.word_col) * rank + op.lane0 + slot.channel] +=
                phase * detail::readback(slot, op.adc);
          }
          sched.push(std::move(op), cfg);
        }
      }
    }
  }

  ExecutionResult result;
  result.values = FactorMatrix(target, plan.out, rank);
  for (std::size_t i = 0; i < plan.out; ++i)
    for (std::size_t r = 0; r < rank; ++r)
      result.values.at(i, r) = q.total_scale * static_cast<double>(acc[i * rank + r]);
  result.ledger = sim.ledger();
  result.compute_cycles = sched.compute_cycles;
  result.write_cycles = sched.write_cycles;
  const double capacity = static_cast<double>(sched.compute_cycles) *
                          static_cast<double>(cfg.rows) * static_cast<double>(W) *
                          static_cast<double>(cfg.channels);
  result.utilization =
      capacity > 0.0 ? static_cast<double>(sched.active_slots) / capacity : 0.0;
  result.operand_scale = q.total_scale;
  result.plan = std::move(plan);
  if (opt.keep_schedule) result.schedule = std::move(sched);
  return result;
}

}  // namespace psram
