#pragma once

#include <cctype>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "psram/common.hpp"
#include "psram/cp.hpp"
#include "psram/tensor.hpp"

namespace psram {

/// Raised on malformed input files; carries the offending path/line.
struct ParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

namespace detail {

inline bool blank_or_comment(const std::string& line) {
  for (char c : line) {
    if (c == '#' || c == '%') return true;
    if (!std::isspace(static_cast<unsigned char>(c))) return false;
  }
  return true;
}

inline double parse_number(const std::string& tok, const std::string& where) {
  std::size_t pos = 0;
  double v = 0.0;
  try {
    v = std::stod(tok, &pos);
  } catch (const std::exception&) {
    throw ParseError(where + ": not a number: '" + tok + "'");
  }
  if (pos != tok.size()) throw ParseError(where + ": not a number: '" + tok + "'");
  return v;
}

inline std::size_t parse_index(const std::string& tok, const std::string& where) {
  for (char c : tok)
    if (!std::isdigit(static_cast<unsigned char>(c)))
      throw ParseError(where + ": not a positive integer: '" + tok + "'");
  return static_cast<std::size_t>(std::stoull(tok));
}

}  // namespace detail

/// Reads a coordinate-list sparse tensor (.tns): one nonzero per line,
/// whitespace-separated 1-based indices followed by the value. Lines starting
/// with '#' or '%' are comments. The shape is the per-mode index maximum.
inline SparseTensor read_tns(std::istream& in, const std::string& name = "<tns>") {
  std::vector<SparseEntry> entries;
  std::vector<std::size_t> shape;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::blank_or_comment(line)) continue;
    std::istringstream ls(line);
    std::vector<std::string> toks;
    std::string tok;
    while (ls >> tok) toks.push_back(tok);
    const std::string where = name + ":" + std::to_string(line_no);
    if (toks.size() < 2)
      throw ParseError(where + ": expected indices followed by a value");
    if (shape.empty()) shape.assign(toks.size() - 1, 0);
    if (toks.size() - 1 != shape.size())
      throw ParseError(where + ": expected " + std::to_string(shape.size()) +
                       " indices, got " + std::to_string(toks.size() - 1));
    SparseEntry e;
    for (std::size_t m = 0; m + 1 < toks.size(); ++m) {
      const std::size_t one_based = detail::parse_index(toks[m], where);
      if (one_based == 0) throw ParseError(where + ": indices are 1-based");
      e.coords.push_back(one_based - 1);
      shape[m] = std::max(shape[m], one_based);
    }
    e.value = detail::parse_number(toks.back(), where);
    entries.push_back(std::move(e));
  }
  if (entries.empty()) throw ParseError(name + ": no nonzeros found");
  return SparseTensor(shape, entries);
}

inline SparseTensor read_tns_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(path + ": cannot open file");
  return read_tns(in, path);
}

/// Reads a dense tensor: header line "N I0 I1 ... I(N-1)" followed by the
/// row-major values, whitespace separated.
inline DenseTensor read_dense(std::istream& in, const std::string& name = "<dense>") {
  std::size_t n_modes = 0;
  if (!(in >> n_modes) || n_modes == 0)
    throw ParseError(name + ":1: expected mode count at start of header");
  std::vector<std::size_t> shape(n_modes);
  for (std::size_t m = 0; m < n_modes; ++m) {
    long long d = 0;
    if (!(in >> d) || d <= 0)
      throw ParseError(name + ":1: bad size for mode " + std::to_string(m));
    shape[m] = static_cast<std::size_t>(d);
  }
  std::size_t count = 1;
  for (std::size_t d : shape) count *= d;
  std::vector<double> values(count);
  for (std::size_t i = 0; i < count; ++i)
    if (!(in >> values[i]))
      throw ParseError(name + ": expected " + std::to_string(count) +
                       " values, got " + std::to_string(i));
  return DenseTensor(shape, values);
}

inline DenseTensor read_dense_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(path + ": cannot open file");
  return read_dense(in, path);
}

inline void write_dense(std::ostream& out, const DenseTensor& t) {
  out << t.mode_count();
  for (std::size_t d : t.shape) out << ' ' << d;
  out << '\n';
  for (std::size_t i = 0; i < t.values.size(); ++i)
    out << format_double(t.values[i]) << ((i + 1) % 8 == 0 ? '\n' : ' ');
  if (t.values.size() % 8 != 0) out << '\n';
}

/// Factor matrix CSV: leading comment line with the component weights, then
/// one row per index with one column per rank component.
inline void write_factor_csv(std::ostream& out, const FactorMatrix& f,
                             std::span<const double> weights) {
  out << "# weights";
  for (double w : weights) out << ',' << format_double(w);
  out << '\n';
  for (std::size_t i = 0; i < f.rows; ++i) {
    for (std::size_t r = 0; r < f.rank; ++r)
      out << (r ? "," : "") << format_double(f.at(i, r));
    out << '\n';
  }
}

inline void write_factor_csv_file(const std::string& path, const FactorMatrix& f,
                                  std::span<const double> weights) {
  std::ofstream out(path);
  if (!out) throw ParseError(path + ": cannot open for writing");
  write_factor_csv(out, f, weights);
}

}  // namespace psram
