#pragma once

#include <cstdint>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "psram/array.hpp"
#include "psram/common.hpp"

namespace psram {

enum class OpKind { Write, Hadamard, ScaleAdd };

inline const char* op_kind_name(OpKind k) {
  switch (k) {
    case OpKind::Write: return "WRITE";
    case OpKind::Hadamard: return "HPROD";
    case OpKind::ScaleAdd: return "SACC";
  }
  return "?";
}

/// One scheduled primitive. Compute ops carry their wavelength drives, ADC
/// transfer, and the binding that tells the executor where readouts land:
/// column q of the tile maps to stored id base_stored + q, channel
/// g * lanes + l maps to streamed id base_stream + g and rank lane lane0 + l.
struct PrimitiveOp {
  OpKind kind = OpKind::Write;
  std::size_t row0 = 0, row1 = 0;  // wordline range [row0, row1)
  std::size_t col0 = 0, col1 = 0;  // word-column range [col0, col1)

  std::vector<WordWrite> writes;  // Write payload

  WavelengthInput input;  // compute payload
  AdcSpec adc;
  int phase = 1;  // accumulation sign (+1 / -1) for sign-split phases

  std::size_t base_stored = 0;  // Hadamard: stored-row id at col0; ScaleAdd: output row at col0
  std::size_t base_stream = 0;  // Hadamard: streamed-row id of group 0; ScaleAdd: element id at row0
  std::size_t lane0 = 0;
  std::size_t lanes = 0;
  std::size_t groups = 0;
};

/// Ordered op list plus derived totals (always equal to the sum over ops).
struct Schedule {
  std::vector<PrimitiveOp> ops;
  std::uint64_t compute_cycles = 0;
  std::uint64_t write_cycles = 0;
  std::uint64_t words_written = 0;
  std::uint64_t active_slots = 0;  // driven (row, channel) pairs x engaged columns

  void push(PrimitiveOp op, const ArrayConfig& cfg) {
    if (op.kind == OpKind::Write) {
      words_written += op.writes.size();
      write_cycles += ceil_div(op.writes.size(), cfg.words_per_write_cycle);
    } else {
      compute_cycles += 1;
      active_slots += static_cast<std::uint64_t>(op.input.drives.size()) * (op.col1 - op.col0);
    }
    ops.push_back(std::move(op));
  }
};

// ---------------------------------------------------------------------------
// Line-oriented text form, one op per line, for inspection and replay.
// ---------------------------------------------------------------------------

inline void write_schedule(std::ostream& out, const Schedule& s) {
  for (const PrimitiveOp& op : s.ops) {
    out << op_kind_name(op.kind) << " tile=" << op.row0 << ':' << op.row1 << ':'
        << op.col0 << ':' << op.col1;
    if (op.kind == OpKind::Write) {
      out << " words=";
      for (std::size_t i = 0; i < op.writes.size(); ++i) {
        const WordWrite& w = op.writes[i];
        out << (i ? "," : "") << w.row << ':' << w.col << ':' << w.value;
      }
    } else {
      out << " base_s=" << op.base_stored << " base_t=" << op.base_stream
          << " lane0=" << op.lane0 << " lanes=" << op.lanes << " groups=" << op.groups
          << " phase=" << op.phase << " bits=" << op.input.input_bits
          << " adc=" << op.adc.bits << ':' << format_double(op.adc.full_scale)
          << " drives=";
      for (std::size_t i = 0; i < op.input.drives.size(); ++i) {
        const WavelengthDrive& d = op.input.drives[i];
        out << (i ? "," : "") << d.row << ':' << d.channel << ':' << d.level;
      }
    }
    out << '\n';
  }
}

namespace detail {

inline std::uint64_t sched_num(const std::string& tok, const std::string& where) {
  try {
    std::size_t pos = 0;
    const long long v = std::stoll(tok, &pos);
    if (pos != tok.size() || v < 0) throw std::invalid_argument(tok);
    return static_cast<std::uint64_t>(v);
  } catch (const std::exception&) {
    throw_invalid(where + ": bad number '" + tok + "' in schedule");
  }
}

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

}  // namespace detail

/// Parses the text form back into a Schedule. Totals are recomputed so they
/// stay consistent with the ops.
inline Schedule read_schedule(std::istream& in, const ArrayConfig& cfg,
                              const std::string& name = "<schedule>") {
  Schedule s;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const std::string where = name + ":" + std::to_string(line_no);
    std::istringstream ls(line);
    std::string kind_tok;
    ls >> kind_tok;
    PrimitiveOp op;
    if (kind_tok == "WRITE") op.kind = OpKind::Write;
    else if (kind_tok == "HPROD") op.kind = OpKind::Hadamard;
    else if (kind_tok == "SACC") op.kind = OpKind::ScaleAdd;
    else throw_invalid(where + ": unknown op kind '" + kind_tok + "'");

    std::string field;
    while (ls >> field) {
      const std::size_t eq = field.find('=');
      if (eq == std::string::npos) throw_invalid(where + ": malformed field '" + field + "'");
      const std::string key = field.substr(0, eq);
      const std::string val = field.substr(eq + 1);
      if (key == "tile") {
        const auto p = detail::split(val, ':');
        if (p.size() != 4) throw_invalid(where + ": malformed tile");
        op.row0 = detail::sched_num(p[0], where);
        op.row1 = detail::sched_num(p[1], where);
        op.col0 = detail::sched_num(p[2], where);
        op.col1 = detail::sched_num(p[3], where);
      } else if (key == "words") {
        for (const std::string& item : detail::split(val, ',')) {
          const auto p = detail::split(item, ':');
          if (p.size() != 3) throw_invalid(where + ": malformed word entry");
          op.writes.push_back({detail::sched_num(p[0], where), detail::sched_num(p[1], where),
                               static_cast<std::uint32_t>(detail::sched_num(p[2], where))});
        }
      } else if (key == "drives") {
        if (val.empty()) continue;
        for (const std::string& item : detail::split(val, ',')) {
          const auto p = detail::split(item, ':');
          if (p.size() != 3) throw_invalid(where + ": malformed drive entry");
          op.input.drives.push_back({detail::sched_num(p[0], where),
                                     detail::sched_num(p[1], where),
                                     detail::sched_num(p[2], where)});
        }
      } else if (key == "adc") {
        const auto p = detail::split(val, ':');
        if (p.size() != 2) throw_invalid(where + ": malformed adc field");
        op.adc.bits = detail::sched_num(p[0], where);
        op.adc.full_scale = std::stod(p[1]);
      } else if (key == "base_s") op.base_stored = detail::sched_num(val, where);
      else if (key == "base_t") op.base_stream = detail::sched_num(val, where);
      else if (key == "lane0") op.lane0 = detail::sched_num(val, where);
      else if (key == "lanes") op.lanes = detail::sched_num(val, where);
      else if (key == "groups") op.groups = detail::sched_num(val, where);
      else if (key == "bits") op.input.input_bits = detail::sched_num(val, where);
      else if (key == "phase") op.phase = val == "-1" ? -1 : 1;
      else throw_invalid(where + ": unknown field '" + key + "'");
    }
    s.push(std::move(op), cfg);
  }
  return s;
}

// ---------------------------------------------------------------------------
// Structural validators used by tests and the validate subcommand.
// ---------------------------------------------------------------------------

/// Hadamard interleaving rule: per column and channel, fan-in is exactly one
/// wordline (every drive's channel is unique within the op).
inline bool hadamard_fan_in_is_one(const Schedule& s) {
  for (const PrimitiveOp& op : s.ops) {
    if (op.kind != OpKind::Hadamard) continue;
    std::vector<std::size_t> chans;
    for (const WavelengthDrive& d : op.input.drives) chans.push_back(d.channel);
    std::sort(chans.begin(), chans.end());
    if (std::adjacent_find(chans.begin(), chans.end()) != chans.end()) return false;
  }
  return true;
}

/// Read-after-write discipline: every word a compute op touches was written
/// by an earlier op in schedule order.
inline bool hazards_respected(const Schedule& s, std::size_t rows, std::size_t cols) {
  std::vector<std::uint8_t> written(rows * cols, 0);
  for (const PrimitiveOp& op : s.ops) {
    if (op.kind == OpKind::Write) {
      for (const WordWrite& w : op.writes) written[w.row * cols + w.col] = 1;
      continue;
    }
    for (const WavelengthDrive& d : op.input.drives)
      for (std::size_t c = op.col0; c < op.col1; ++c)
        if (!written[d.row * cols + c]) return false;
  }
  return true;
}

}  // namespace psram
