#pragma once

#include <fstream>
#include <ostream>
#include <sstream>
#include <string>

#include "psram/array.hpp"
#include "psram/common.hpp"

namespace psram {

namespace detail {

inline std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline bool parse_bool(const std::string& v, const std::string& where) {
  if (v == "1" || v == "true" || v == "on" || v == "yes") return true;
  if (v == "0" || v == "false" || v == "off" || v == "no") return false;
  throw_invalid(where + ": expected a boolean, got '" + v + "'");
}

}  // namespace detail

/// Key-value array configuration (INI style): `key = value`, '#'/';' comments,
/// section headers ignored. Keys are the ArrayConfig field names.
inline ArrayConfig read_array_config(std::istream& in, const std::string& name = "<config>") {
  ArrayConfig cfg;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string where = name + ":" + std::to_string(line_no);
    std::size_t cut = line.find_first_of("#;");
    if (cut != std::string::npos) line = line.substr(0, cut);
    line = detail::trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') continue;  // section header, ignored
    std::size_t eq = line.find('=');
    if (eq == std::string::npos) throw_invalid(where + ": expected 'key = value'");
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string val = detail::trim(line.substr(eq + 1));
    if (key.empty() || val.empty()) throw_invalid(where + ": expected 'key = value'");

    auto as_size = [&](const std::string& v) -> std::size_t {
      try {
        const double d = std::stod(v);
        if (d < 0 || d != static_cast<double>(static_cast<std::uint64_t>(d)))
          throw_invalid(where + ": '" + key + "' must be a non-negative integer");
        return static_cast<std::size_t>(d);
      } catch (const std::invalid_argument&) {
        throw_invalid(where + ": bad number for '" + key + "'");
      }
    };
    auto as_double = [&](const std::string& v) -> double {
      try {
        return std::stod(v);
      } catch (const std::exception&) {
        throw_invalid(where + ": bad number for '" + key + "'");
      }
    };

    if (key == "rows") cfg.rows = as_size(val);
    else if (key == "bit_cols") cfg.bit_cols = as_size(val);
    else if (key == "word_bits") cfg.word_bits = as_size(val);
    else if (key == "channels") cfg.channels = as_size(val);
    else if (key == "compute_freq_hz") cfg.compute_freq_hz = as_double(val);
    else if (key == "write_freq_hz") cfg.write_freq_hz = as_double(val);
    else if (key == "adc_bits") cfg.adc_bits = as_size(val);
    else if (key == "e_write_per_bit_j") cfg.e_write_per_bit_j = as_double(val);
    else if (key == "e_static_per_bit_j") cfg.e_static_per_bit_j = as_double(val);
    else if (key == "words_per_write_cycle") cfg.words_per_write_cycle = as_size(val);
    else if (key == "signed_data") cfg.signed_data = detail::parse_bool(val, where);
    else if (key == "double_buffering") cfg.double_buffering = detail::parse_bool(val, where);
    else throw_invalid(where + ": unknown config key '" + key + "'");
  }
  cfg.validate();
  return cfg;
}

inline ArrayConfig read_array_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw_invalid(path + ": cannot open config file");
  return read_array_config(in, path);
}

inline void write_array_config(std::ostream& out, const ArrayConfig& cfg) {
  out << "rows = " << cfg.rows << '\n'
      << "bit_cols = " << cfg.bit_cols << '\n'
      << "word_bits = " << cfg.word_bits << '\n'
      << "channels = " << cfg.channels << '\n'
      << "compute_freq_hz = " << format_double(cfg.compute_freq_hz) << '\n'
      << "write_freq_hz = " << format_double(cfg.write_freq_hz) << '\n'
      << "adc_bits = " << cfg.adc_bits << '\n'
      << "e_write_per_bit_j = " << format_double(cfg.e_write_per_bit_j) << '\n'
      << "e_static_per_bit_j = " << format_double(cfg.e_static_per_bit_j) << '\n'
      << "words_per_write_cycle = " << cfg.words_per_write_cycle << '\n'
      << "signed_data = " << (cfg.signed_data ? "true" : "false") << '\n'
      << "double_buffering = " << (cfg.double_buffering ? "true" : "false") << '\n';
}

/// EnergyLedger CSV export: component, joules, cycles.
inline void write_ledger_csv(std::ostream& out, const EnergyLedger& ledger) {
  out << "component,joules,cycles\n";
  out << "write," << format_double(ledger.write_j) << ',' << ledger.write_cycles << '\n';
  out << "static," << format_double(ledger.static_j) << ',' << ledger.compute_cycles << '\n';
  out << "total," << format_double(ledger.total_j()) << ','
      << (ledger.write_cycles + ledger.compute_cycles) << '\n';
}

}  // namespace psram
