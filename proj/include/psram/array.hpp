#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "psram/common.hpp"

namespace psram {

/// Behavioral parameters of the crossbar. The defaults reproduce the
/// reference configuration: 256x256 bitcells grouped into 256x32 8-bit words,
/// 52 wavelength channels, 20 GHz compute and write clocks.
struct ArrayConfig {
  std::size_t rows = 256;        // wordline count
  std::size_t bit_cols = 256;    // bitcell columns
  std::size_t word_bits = 8;     // bits per stored word
  std::size_t channels = 52;     // usable wavelength channels
  double compute_freq_hz = 20e9;
  double write_freq_hz = 20e9;
  std::size_t adc_bits = 16;     // default ADC resolution for accumulations
  double e_write_per_bit_j = 1.04e-12;   // switching energy per bit
  double e_static_per_bit_j = 16.7e-18;  // static energy per bit per compute cycle
  std::size_t words_per_write_cycle = 1;

  // Scheduling knobs (consumed by the mapping and performance layers).
  bool signed_data = false;     // emit sign-split phases for accumulating ops
  bool double_buffering = true; // overlap tile writes with compute

  std::size_t word_cols() const { return bit_cols / word_bits; }
  std::size_t word_count() const { return rows * word_cols(); }
  std::uint64_t max_word() const { return (std::uint64_t{1} << word_bits) - 1; }

  void validate() const {
    if (rows == 0 || bit_cols == 0) throw_invalid("array geometry must be nonzero");
    if (word_bits == 0 || word_bits > 16) throw_invalid("word_bits must be in [1, 16]");
    if (bit_cols % word_bits != 0) throw_invalid("bit_cols must be divisible by word_bits");
    if (channels == 0) throw_invalid("channels must be >= 1");
    if (adc_bits == 0 || adc_bits > 52) throw_invalid("adc_bits must be in [1, 52]");
    if (!(compute_freq_hz > 0.0) || !(write_freq_hz > 0.0))
      throw_invalid("frequencies must be > 0");
    if (!(e_write_per_bit_j > 0.0) || !(e_static_per_bit_j > 0.0))
      throw_invalid("energies must be > 0");
    if (words_per_write_cycle == 0) throw_invalid("words_per_write_cycle must be >= 1");
  }
};

/// Accumulated write/static energy and cycle totals. Totals only grow.
struct EnergyLedger {
  double write_j = 0.0;
  double static_j = 0.0;
  std::uint64_t compute_cycles = 0;
  std::uint64_t write_cycles = 0;

  double total_j() const { return write_j + static_j; }

  void add(const EnergyLedger& other) {
    write_j += other.write_j;
    static_j += other.static_j;
    compute_cycles += other.compute_cycles;
    write_cycles += other.write_cycles;
  }
};

struct WordWrite {
  std::size_t row = 0;
  std::size_t col = 0;
  std::uint32_t value = 0;
};

struct WriteCost {
  std::uint64_t cycles = 0;
  double energy_j = 0.0;
  std::uint64_t words = 0;
};

/// Stored word grid plus dirty flags used by hazard checks.
struct ArrayState {
  std::size_t word_rows = 0;
  std::size_t word_cols = 0;
  std::vector<std::uint32_t> words;
  std::vector<std::uint8_t> written;

  ArrayState() = default;
  ArrayState(std::size_t r, std::size_t c)
      : word_rows(r), word_cols(c), words(r * c, 0), written(r * c, 0) {}

  std::uint32_t at(std::size_t r, std::size_t c) const { return words[r * word_cols + c]; }
};

/// One modulated wavelength hitting one wordline for one cycle. A wordline
/// may carry several channels at once; a (row, channel) pair carries exactly
/// one level.
struct WavelengthDrive {
  std::size_t row = 0;
  std::size_t channel = 0;
  std::uint64_t level = 0;
};

struct WavelengthInput {
  std::size_t input_bits = 8;  // encoding width of the levels
  std::vector<WavelengthDrive> drives;
};

/// ADC transfer: full_scale maps to the top code. Conversion is lossless for
/// integer readouts whenever full_scale <= 2^bits - 1.
struct AdcSpec {
  std::size_t bits = 16;
  double full_scale = 1.0;
};

struct NoiseSpec {
  bool analog = false;
  double sigma_rel = 0.0;  // Gaussian sigma as a fraction of full scale
};

struct ReadoutSlot {
  std::size_t word_col = 0;
  std::size_t channel = 0;
  std::uint64_t ideal = 0;   // exact integer accumulation
  double analog = 0.0;       // ideal plus noise (equals ideal in ideal mode)
  std::uint64_t adc_code = 0;
};

/// Per-cycle readout: one slot per (word column, driven channel), ordered by
/// column then channel.
struct ColumnReadout {
  std::vector<ReadoutSlot> slots;
};

/// Identity map onto the discrete intensity scale; power normalization is a
/// physical concern outside the model.
inline std::uint64_t encode_intensity(std::uint64_t value, std::size_t bits) {
  if (bits == 0 || bits > 63) throw_invalid("encode_intensity: bits must be in [1, 63]");
  if (value >> bits)
    throw_invalid("encode_intensity: value " + std::to_string(value) +
                  " does not fit " + std::to_string(bits) + " bits");
  return value;
}

inline std::uint64_t adc_quantize(double readout, std::size_t bits, double full_scale) {
  if (!(full_scale > 0.0)) throw_invalid("adc_quantize: full_scale must be > 0");
  const double top = std::ldexp(1.0, static_cast<int>(bits)) - 1.0;
  double code = readout / full_scale * top;
  if (!(code > 0.0)) return 0;             // clamps negatives and NaN
  if (code >= top) return static_cast<std::uint64_t>(top);
  return static_cast<std::uint64_t>(std::llround(code));
}

inline double adc_decode(std::uint64_t code, std::size_t bits, double full_scale) {
  const double top = std::ldexp(1.0, static_cast<int>(bits)) - 1.0;
  return static_cast<double>(code) * full_scale / top;
}

/// Single-owner simulator of one array instance: word storage, wavelength
/// compute cycles, and energy/cycle accounting. Distinct instances are
/// independent; all randomness comes from the per-instance seed.
class ArraySim {
 public:
  explicit ArraySim(ArrayConfig cfg, std::uint64_t seed = 0)
      : cfg_(cfg), state_(cfg.rows, cfg.word_cols()), rng_(mix_seed(seed, 0x61727279ULL)) {
    cfg_.validate();
  }

  const ArrayConfig& config() const { return cfg_; }
  const ArrayState& state() const { return state_; }
  const EnergyLedger& ledger() const { return ledger_; }

  /// Writes a batch of words. Each wordline write is one word; the cost is
  /// ceil(words / words_per_write_cycle) write cycles and
  /// word_bits * e_write_per_bit_j per word.
  WriteCost write_words(std::span<const WordWrite> updates) {
    for (const WordWrite& w : updates) {
      if (w.row >= state_.word_rows || w.col >= state_.word_cols)
        throw_invalid("write_words: coordinate (" + std::to_string(w.row) + ", " +
                      std::to_string(w.col) + ") out of range");
      if (w.value > cfg_.max_word())
        throw_invalid("write_words: value " + std::to_string(w.value) +
                      " exceeds word_bits");
    }
    for (const WordWrite& w : updates) {
      state_.words[w.row * state_.word_cols + w.col] = w.value;
      state_.written[w.row * state_.word_cols + w.col] = 1;
    }
    WriteCost cost;
    cost.words = updates.size();
    cost.cycles = ceil_div(updates.size(), cfg_.words_per_write_cycle);
    cost.energy_j = static_cast<double>(updates.size()) *
                    (static_cast<double>(cfg_.word_bits) * cfg_.e_write_per_bit_j);
    ledger_.write_cycles += cost.cycles;
    ledger_.write_j += cost.energy_j;
    return cost;
  }

  /// One compute cycle: every driven (row, channel) level multiplies the
  /// stored word of each column; identical wavelengths accumulate down each
  /// column. Costs one compute cycle of static energy across all bitcells.
  ColumnReadout compute_cycle(const WavelengthInput& input, const AdcSpec& adc,
                              const NoiseSpec& noise = {}) {
    validate_input(input);
    // Active channels, ascending.
    std::vector<std::size_t> active;
    for (const WavelengthDrive& d : input.drives) active.push_back(d.channel);
    std::sort(active.begin(), active.end());
    active.erase(std::unique(active.begin(), active.end()), active.end());
    std::vector<std::size_t> channel_slot(cfg_.channels, SIZE_MAX);
    for (std::size_t s = 0; s < active.size(); ++s) channel_slot[active[s]] = s;

    const std::size_t cols = state_.word_cols;
    std::vector<std::uint64_t> acc(cols * active.size(), 0);
    for (const WavelengthDrive& d : input.drives) {
      if (d.level == 0) continue;
      const std::size_t slot = channel_slot[d.channel];
      const std::uint32_t* row_words = state_.words.data() + d.row * cols;
      for (std::size_t c = 0; c < cols; ++c)
        acc[c * active.size() + slot] += d.level * row_words[c];
    }

    ColumnReadout out;
    out.slots.reserve(cols * active.size());
    for (std::size_t c = 0; c < cols; ++c)
      for (std::size_t s = 0; s < active.size(); ++s) {
        ReadoutSlot slot;
        slot.word_col = c;
        slot.channel = active[s];
        slot.ideal = acc[c * active.size() + s];
        slot.analog = static_cast<double>(slot.ideal);
        if (noise.analog)
          slot.analog += rng_.next_gaussian() * noise.sigma_rel * adc.full_scale;
        slot.adc_code = adc_quantize(slot.analog, adc.bits, adc.full_scale);
        out.slots.push_back(slot);
      }

    ledger_.compute_cycles += 1;
    ledger_.static_j += cfg_.e_static_per_bit_j *
                        static_cast<double>(cfg_.rows) * static_cast<double>(cfg_.bit_cols);
    return out;
  }

 private:
  void validate_input(const WavelengthInput& input) const {
    std::vector<std::uint64_t> seen;
    seen.reserve(input.drives.size());
    for (const WavelengthDrive& d : input.drives) {
      if (d.row >= cfg_.rows)
        throw_invalid("compute_cycle: row " + std::to_string(d.row) + " out of range");
      if (d.channel >= cfg_.channels)
        throw_invalid("compute_cycle: channel " + std::to_string(d.channel) +
                      " exceeds configured channel count");
      encode_intensity(d.level, input.input_bits);
      seen.push_back((static_cast<std::uint64_t>(d.row) << 32) | d.channel);
    }
    std::sort(seen.begin(), seen.end());
    if (std::adjacent_find(seen.begin(), seen.end()) != seen.end())
      throw_invalid("compute_cycle: duplicate (row, channel) drive");
  }

  ArrayConfig cfg_;
  ArrayState state_;
  EnergyLedger ledger_;
  SplitMix64 rng_;
};

}  // namespace psram
