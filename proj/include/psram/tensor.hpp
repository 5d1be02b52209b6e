#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "psram/common.hpp"

namespace psram {

/// Dense N-mode tensor stored row-major over mode indices (mode 0 varies
/// slowest). Shapes are validated on construction.
struct DenseTensor {
  std::vector<std::size_t> shape;
  std::vector<double> values;

  DenseTensor() = default;

  explicit DenseTensor(std::vector<std::size_t> shape_in)
      : shape(std::move(shape_in)) {
    validate_shape();
    values.assign(element_count(), 0.0);
  }

  DenseTensor(std::vector<std::size_t> shape_in, std::vector<double> values_in)
      : shape(std::move(shape_in)), values(std::move(values_in)) {
    validate_shape();
    if (values.size() != element_count())
      throw_invalid("tensor value count " + std::to_string(values.size()) +
                    " does not match shape product " + std::to_string(element_count()));
  }

  std::size_t mode_count() const { return shape.size(); }

  std::size_t element_count() const {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    return n;
  }

  std::size_t linear_index(std::span<const std::size_t> idx) const {
    std::size_t lin = 0;
    for (std::size_t m = 0; m < shape.size(); ++m) lin = lin * shape[m] + idx[m];
    return lin;
  }

  double at(std::span<const std::size_t> idx) const { return values[linear_index(idx)]; }
  double& at(std::span<const std::size_t> idx) { return values[linear_index(idx)]; }

  double frobenius_norm() const {
    double s = 0.0;
    for (double v : values) s += v * v;
    return std::sqrt(s);
  }

  static DenseTensor random(std::vector<std::size_t> shape_in, std::uint64_t seed,
                            double lo = 0.0, double hi = 1.0) {
    DenseTensor t(std::move(shape_in));
    SplitMix64 g(seed);
    for (double& v : t.values) v = g.next_range(lo, hi);
    return t;
  }

 private:
  void validate_shape() const {
    if (shape.empty()) throw_invalid("tensor shape must have at least one mode");
    for (std::size_t d : shape)
      if (d == 0) throw_invalid("tensor mode sizes must be >= 1");
  }
};

/// One nonzero of a sparse tensor. Coordinates are 0-based internally.
struct SparseEntry {
  std::vector<std::size_t> coords;
  double value = 0.0;
};

/// Coordinate-format sparse tensor. Entries are kept in row-major coordinate
/// order and duplicate coordinates are rejected.
struct SparseTensor {
  std::vector<std::size_t> shape;
  std::vector<SparseEntry> entries;

  SparseTensor() = default;

  SparseTensor(std::vector<std::size_t> shape_in, std::vector<SparseEntry> entries_in)
      : shape(std::move(shape_in)), entries(std::move(entries_in)) {
    if (shape.empty()) throw_invalid("tensor shape must have at least one mode");
    for (std::size_t d : shape)
      if (d == 0) throw_invalid("tensor mode sizes must be >= 1");
    for (const SparseEntry& e : entries) {
      if (e.coords.size() != shape.size())
        throw_invalid("sparse entry arity does not match mode count");
      for (std::size_t m = 0; m < shape.size(); ++m)
        if (e.coords[m] >= shape[m])
          throw_invalid("sparse entry coordinate out of range in mode " + std::to_string(m));
    }
    std::sort(entries.begin(), entries.end(),
              [](const SparseEntry& a, const SparseEntry& b) { return a.coords < b.coords; });
    for (std::size_t i = 1; i < entries.size(); ++i)
      if (entries[i].coords == entries[i - 1].coords)
        throw_invalid("duplicate coordinate tuple in sparse tensor");
  }

  std::size_t mode_count() const { return shape.size(); }
  std::size_t nonzero_count() const { return entries.size(); }

  DenseTensor densify() const {
    DenseTensor t(shape);
    for (const SparseEntry& e : entries) t.at(e.coords) = e.value;
    return t;
  }

  double frobenius_norm() const {
    double s = 0.0;
    for (const SparseEntry& e : entries) s += e.value * e.value;
    return std::sqrt(s);
  }
};

/// Mode-n unfolding: I_n rows, prod of the remaining mode sizes columns.
/// Column ordering sweeps the remaining modes with the lowest-numbered mode
/// varying fastest, matching the Khatri-Rao row ordering used by mttkrp.
struct Matricization {
  std::size_t mode = 0;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;  // row-major

  double at(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
  double& at(std::size_t r, std::size_t c) { return values[r * cols + c]; }
};

namespace detail {

// Column strides of the unfolding: stride of remaining mode m is the product
// of the sizes of lower-numbered remaining modes.
inline std::vector<std::size_t> unfold_strides(std::span<const std::size_t> shape,
                                               std::size_t mode) {
  std::vector<std::size_t> stride(shape.size(), 0);
  std::size_t acc = 1;
  for (std::size_t m = 0; m < shape.size(); ++m) {
    if (m == mode) continue;
    stride[m] = acc;
    acc *= shape[m];
  }
  return stride;
}

inline std::size_t unfold_col(std::span<const std::size_t> idx,
                              std::span<const std::size_t> stride, std::size_t mode) {
  std::size_t col = 0;
  for (std::size_t m = 0; m < idx.size(); ++m)
    if (m != mode) col += idx[m] * stride[m];
  return col;
}

// Odometer over all index tuples of `shape`, mode 0 slowest (storage order).
template <typename Fn>
void for_each_index(std::span<const std::size_t> shape, Fn&& fn) {
  std::vector<std::size_t> idx(shape.size(), 0);
  for (;;) {
    fn(std::span<const std::size_t>(idx));
    std::size_t m = shape.size();
    while (m > 0) {
      --m;
      if (++idx[m] < shape[m]) break;
      idx[m] = 0;
      if (m == 0) return;
    }
  }
}

}  // namespace detail

inline Matricization matricize(const DenseTensor& tensor, std::size_t mode) {
  if (mode >= tensor.mode_count())
    throw_invalid("matricize: mode " + std::to_string(mode) + " out of range for " +
                  std::to_string(tensor.mode_count()) + "-mode tensor");
  Matricization m;
  m.mode = mode;
  m.rows = tensor.shape[mode];
  m.cols = tensor.element_count() / m.rows;
  m.values.assign(tensor.values.size(), 0.0);
  const auto stride = detail::unfold_strides(tensor.shape, mode);
  std::size_t lin = 0;
  detail::for_each_index(tensor.shape, [&](std::span<const std::size_t> idx) {
    m.at(idx[mode], detail::unfold_col(idx, stride, mode)) = tensor.values[lin++];
  });
  return m;
}

/// Inverse of matricize; requires the original shape.
inline DenseTensor tensorize(const Matricization& m, std::vector<std::size_t> shape) {
  DenseTensor t(std::move(shape));
  if (m.mode >= t.mode_count() || t.shape[m.mode] != m.rows ||
      t.element_count() != m.values.size())
    throw_invalid("tensorize: matricization inconsistent with target shape");
  const auto stride = detail::unfold_strides(t.shape, m.mode);
  std::size_t lin = 0;
  detail::for_each_index(t.shape, [&](std::span<const std::size_t> idx) {
    t.values[lin++] = m.at(idx[m.mode], detail::unfold_col(idx, stride, m.mode));
  });
  return t;
}

}  // namespace psram
