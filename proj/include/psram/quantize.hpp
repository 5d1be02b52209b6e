#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "psram/common.hpp"

namespace psram {

/// Symmetric sign-magnitude fixed point: value ~= sign * magnitude * scale.
/// Magnitudes ride through the optical path, signs stay digital. Vectors that
/// are already integer-valued within the magnitude range pass through with
/// scale 1, so integer test vectors survive quantization exactly.
struct QuantizedVector {
  std::vector<std::uint32_t> mags;
  std::vector<std::int8_t> signs;  // +1 or -1; zero values carry +1
  double scale = 1.0;
  std::size_t bits = 8;

  std::size_t size() const { return mags.size(); }
  bool any_negative() const {
    for (std::size_t i = 0; i < mags.size(); ++i)
      if (signs[i] < 0 && mags[i] != 0) return true;
    return false;
  }
  double value(std::size_t i) const {
    return static_cast<double>(signs[i]) * static_cast<double>(mags[i]) * scale;
  }
  std::int64_t signed_mag(std::size_t i) const {
    return static_cast<std::int64_t>(signs[i]) * static_cast<std::int64_t>(mags[i]);
  }
};

/// Row-major matrix view over one jointly quantized value block (one scale
/// per matrix, per the fixed-point scheme).
struct QuantizedMatrix {
  QuantizedVector flat;
  std::size_t rows = 0;
  std::size_t cols = 0;

  std::uint32_t mag(std::size_t r, std::size_t c) const { return flat.mags[r * cols + c]; }
  std::int8_t sign(std::size_t r, std::size_t c) const { return flat.signs[r * cols + c]; }
  double scale() const { return flat.scale; }
  bool any_negative() const { return flat.any_negative(); }
  double value(std::size_t r, std::size_t c) const { return flat.value(r * cols + c); }
};

inline QuantizedVector quantize_signed(std::span<const double> values, std::size_t bits) {
  if (bits == 0 || bits > 16) throw_invalid("quantize: bits must be in [1, 16]");
  const double top = std::ldexp(1.0, static_cast<int>(bits)) - 1.0;
  QuantizedVector q;
  q.bits = bits;
  q.mags.resize(values.size());
  q.signs.assign(values.size(), 1);

  double max_abs = 0.0;
  bool all_integer = true;
  for (double v : values) {
    if (!std::isfinite(v)) throw_invalid("quantize: non-finite value");
    max_abs = std::max(max_abs, std::abs(v));
    if (v != std::floor(v)) all_integer = false;
  }
  q.scale = (max_abs == 0.0 || (all_integer && max_abs <= top)) ? 1.0 : max_abs / top;

  for (std::size_t i = 0; i < values.size(); ++i) {
    const double mag = std::abs(values[i]) / q.scale;
    q.mags[i] = static_cast<std::uint32_t>(std::llround(std::min(mag, top)));
    q.signs[i] = values[i] < 0.0 ? -1 : 1;
  }
  return q;
}

inline QuantizedMatrix quantize_matrix(std::span<const double> values, std::size_t rows,
                                       std::size_t cols, std::size_t bits) {
  if (values.size() != rows * cols) throw_invalid("quantize_matrix: size mismatch");
  QuantizedMatrix m;
  m.flat = quantize_signed(values, bits);
  m.rows = rows;
  m.cols = cols;
  return m;
}

}  // namespace psram
