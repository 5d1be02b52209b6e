#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "psram/common.hpp"
#include "psram/tensor.hpp"

namespace psram {

/// Plain row-major matrix used for Khatri-Rao products and Gram systems.
struct RealMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;

  RealMatrix() = default;
  RealMatrix(std::size_t r, std::size_t c, double fill = 0.0)
      : rows(r), cols(c), values(r * c, fill) {}
  RealMatrix(std::size_t r, std::size_t c, std::vector<double> vals)
      : rows(r), cols(c), values(std::move(vals)) {}

  double at(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
  double& at(std::size_t r, std::size_t c) { return values[r * cols + c]; }
};

/// Factor matrix of one tensor mode: I_n rows by R rank components.
struct FactorMatrix {
  std::size_t mode = 0;
  std::size_t rows = 0;
  std::size_t rank = 0;
  std::vector<double> values;  // rows x rank, row-major

  FactorMatrix() = default;
  FactorMatrix(std::size_t mode_in, std::size_t rows_in, std::size_t rank_in)
      : mode(mode_in), rows(rows_in), rank(rank_in), values(rows_in * rank_in, 0.0) {
    if (rank_in == 0) throw_invalid("factor rank must be >= 1");
    if (rows_in == 0) throw_invalid("factor must have at least one row");
  }

  double at(std::size_t i, std::size_t r) const { return values[i * rank + r]; }
  double& at(std::size_t i, std::size_t r) { return values[i * rank + r]; }

  std::vector<double> row(std::size_t i) const {
    return std::vector<double>(values.begin() + i * rank, values.begin() + (i + 1) * rank);
  }

  static FactorMatrix random(std::size_t mode, std::size_t rows, std::size_t rank,
                             std::uint64_t seed, double lo = 0.0, double hi = 1.0) {
    FactorMatrix f(mode, rows, rank);
    SplitMix64 g(seed);
    for (double& v : f.values) v = g.next_range(lo, hi);
    return f;
  }
};

/// Rank-R model: one factor per mode plus per-component weights extracted by
/// column normalization.
struct CpModel {
  std::vector<FactorMatrix> factors;
  std::vector<double> weights;

  std::size_t rank() const { return weights.size(); }
  std::size_t mode_count() const { return factors.size(); }

  void validate() const {
    if (factors.empty()) throw_invalid("model must have at least one factor");
    for (const FactorMatrix& f : factors)
      if (f.rank != weights.size())
        throw_invalid("factor rank does not match model weight count");
  }
};

// ---------------------------------------------------------------------------
// Khatri-Rao product
// ---------------------------------------------------------------------------

/// Column-wise Kronecker product. Output row (il, ir) = il * right.rows + ir,
/// so the right operand's index varies fastest; composing over remaining
/// modes from highest to lowest matches the matricization column order.
inline RealMatrix khatri_rao(const RealMatrix& left, const RealMatrix& right) {
  if (left.cols != right.cols)
    throw_invalid("khatri_rao: rank mismatch (" + std::to_string(left.cols) + " vs " +
                  std::to_string(right.cols) + ")");
  RealMatrix out(left.rows * right.rows, left.cols);
  for (std::size_t il = 0; il < left.rows; ++il)
    for (std::size_t ir = 0; ir < right.rows; ++ir) {
      const std::size_t row = il * right.rows + ir;
      for (std::size_t r = 0; r < left.cols; ++r)
        out.at(row, r) = left.at(il, r) * right.at(ir, r);
    }
  return out;
}

inline RealMatrix as_matrix(const FactorMatrix& f) {
  return RealMatrix{f.rows, f.rank, f.values};
}

inline RealMatrix khatri_rao(const FactorMatrix& left, const FactorMatrix& right) {
  return khatri_rao(as_matrix(left), as_matrix(right));
}

/// Khatri-Rao product of every factor except `target`, folded so the lowest
/// remaining mode varies fastest. With a single mode this degenerates to a
/// 1 x R row of ones (empty product).
inline RealMatrix khatri_rao_others(std::span<const FactorMatrix> factors,
                                    std::size_t target) {
  RealMatrix acc;
  for (std::size_t m = factors.size(); m-- > 0;) {
    if (m == target) continue;
    acc = acc.rows == 0 ? as_matrix(factors[m]) : khatri_rao(acc, as_matrix(factors[m]));
  }
  if (acc.rows == 0) acc = RealMatrix(1, factors[target].rank, 1.0);
  return acc;
}

// ---------------------------------------------------------------------------
// MTTKRP
// ---------------------------------------------------------------------------

namespace detail {

inline void check_mttkrp_args(std::span<const std::size_t> shape,
                              std::span<const FactorMatrix> factors, std::size_t target) {
  if (target >= shape.size())
    throw_invalid("mttkrp: target mode out of range");
  if (factors.size() != shape.size())
    throw_invalid("mttkrp: expected one factor per mode");
  const std::size_t rank = factors[target].rank;
  for (std::size_t m = 0; m < shape.size(); ++m) {
    if (factors[m].rank != rank) throw_invalid("mttkrp: factor rank mismatch");
    if (m != target && factors[m].rows != shape[m])
      throw_invalid("mttkrp: factor rows do not match mode " + std::to_string(m));
  }
}

}  // namespace detail

/// MTTKRP through the explicit unfolding: X_(n) times the Khatri-Rao product
/// of the other factors. Accumulation runs in ascending column order.
inline FactorMatrix mttkrp(const DenseTensor& tensor, std::span<const FactorMatrix> factors,
                           std::size_t target) {
  detail::check_mttkrp_args(tensor.shape, factors, target);
  const RealMatrix kr = khatri_rao_others(factors, target);
  const Matricization un = matricize(tensor, target);
  const std::size_t rank = factors[target].rank;
  FactorMatrix out(target, un.rows, rank);
  for (std::size_t i = 0; i < un.rows; ++i)
    for (std::size_t j = 0; j < un.cols; ++j) {
      const double x = un.at(i, j);
      for (std::size_t r = 0; r < rank; ++r) out.at(i, r) += x * kr.at(j, r);
    }
  return out;
}

/// Sparse MTTKRP over the nonzeros, visited in the same (row, column) order
/// as the dense unfolding so the result matches the densified computation.
inline FactorMatrix mttkrp(const SparseTensor& tensor, std::span<const FactorMatrix> factors,
                           std::size_t target) {
  detail::check_mttkrp_args(tensor.shape, factors, target);
  const RealMatrix kr = khatri_rao_others(factors, target);
  const std::size_t rank = factors[target].rank;
  const auto stride = detail::unfold_strides(tensor.shape, target);

  struct Ref {
    std::size_t row, col, entry;
  };
  std::vector<Ref> order;
  order.reserve(tensor.entries.size());
  for (std::size_t e = 0; e < tensor.entries.size(); ++e) {
    const auto& c = tensor.entries[e].coords;
    order.push_back({c[target], detail::unfold_col(c, stride, target), e});
  }
  std::sort(order.begin(), order.end(), [](const Ref& a, const Ref& b) {
    return a.row != b.row ? a.row < b.row : a.col < b.col;
  });

  FactorMatrix out(target, tensor.shape[target], rank);
  for (const Ref& ref : order) {
    const double x = tensor.entries[ref.entry].value;
    for (std::size_t r = 0; r < rank; ++r) out.at(ref.row, r) += x * kr.at(ref.col, r);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Model evaluation
// ---------------------------------------------------------------------------

/// Evaluates the model densely: entry = sum_r w_r * prod_n F_n(i_n, r).
inline DenseTensor reconstruct(const CpModel& model) {
  model.validate();
  std::vector<std::size_t> shape;
  shape.reserve(model.factors.size());
  for (const FactorMatrix& f : model.factors) shape.push_back(f.rows);
  DenseTensor t(shape);
  const std::size_t rank = model.rank();
  std::size_t lin = 0;
  detail::for_each_index(t.shape, [&](std::span<const std::size_t> idx) {
    double v = 0.0;
    for (std::size_t r = 0; r < rank; ++r) {
      double p = model.weights[r];
      for (std::size_t m = 0; m < model.factors.size(); ++m)
        p *= model.factors[m].at(idx[m], r);
      v += p;
    }
    t.values[lin++] = v;
  });
  return t;
}

/// Rescales every factor column to unit 2-norm, folding the norms into the
/// weights. A zero column gets weight 0 and is replaced with a fresh unit
/// column drawn from the seeded generator, which leaves reconstruct unchanged.
inline CpModel normalize(const CpModel& model, std::uint64_t seed = 0) {
  model.validate();
  CpModel out = model;
  SplitMix64 reseed(mix_seed(seed, 0x6e6f726dULL));
  for (FactorMatrix& f : out.factors) {
    for (std::size_t r = 0; r < f.rank; ++r) {
      double s = 0.0;
      for (std::size_t i = 0; i < f.rows; ++i) s += f.at(i, r) * f.at(i, r);
      const double norm = std::sqrt(s);
      if (norm == 0.0) {
        out.weights[r] = 0.0;
        double s2 = 0.0;
        for (std::size_t i = 0; i < f.rows; ++i) {
          f.at(i, r) = reseed.next_unit() + 0.5;  // bounded away from zero
          s2 += f.at(i, r) * f.at(i, r);
        }
        const double n2 = std::sqrt(s2);
        for (std::size_t i = 0; i < f.rows; ++i) f.at(i, r) /= n2;
      } else {
        out.weights[r] *= norm;
        for (std::size_t i = 0; i < f.rows; ++i) f.at(i, r) /= norm;
      }
    }
  }
  return out;
}

/// Fit of the model against the tensor: 1 - ||X - reconstruct|| / ||X||.
/// A zero tensor has fit 1 by convention.
inline double fit(const DenseTensor& tensor, const CpModel& model) {
  const double norm_x = tensor.frobenius_norm();
  const DenseTensor approx = reconstruct(model);
  if (approx.shape != tensor.shape)
    throw_invalid("fit: model shape does not match tensor shape");
  if (norm_x == 0.0) return 1.0;
  double s = 0.0;
  for (std::size_t i = 0; i < tensor.values.size(); ++i) {
    const double d = tensor.values[i] - approx.values[i];
    s += d * d;
  }
  return 1.0 - std::sqrt(s) / norm_x;
}

inline double fit(const SparseTensor& tensor, const CpModel& model) {
  return fit(tensor.densify(), model);
}

// ---------------------------------------------------------------------------
// Alternating least squares
// ---------------------------------------------------------------------------

namespace detail {

inline RealMatrix gram(const FactorMatrix& f) {
  RealMatrix g(f.rank, f.rank);
  for (std::size_t r = 0; r < f.rank; ++r)
    for (std::size_t s = r; s < f.rank; ++s) {
      double acc = 0.0;
      for (std::size_t i = 0; i < f.rows; ++i) acc += f.at(i, r) * f.at(i, s);
      g.at(r, s) = acc;
      g.at(s, r) = acc;
    }
  return g;
}

// Cholesky factorization; returns false if the matrix is not numerically
// positive definite.
inline bool cholesky(RealMatrix& a) {
  const std::size_t n = a.rows;
  double max_diag = 0.0;
  for (std::size_t i = 0; i < n; ++i) max_diag = std::max(max_diag, std::abs(a.at(i, i)));
  const double floor = max_diag * 1e-14;
  for (std::size_t j = 0; j < n; ++j) {
    double d = a.at(j, j);
    for (std::size_t k = 0; k < j; ++k) d -= a.at(j, k) * a.at(j, k);
    if (!(d > floor) || !std::isfinite(d)) return false;
    const double l = std::sqrt(d);
    a.at(j, j) = l;
    for (std::size_t i = j + 1; i < n; ++i) {
      double v = a.at(i, j);
      for (std::size_t k = 0; k < j; ++k) v -= a.at(i, k) * a.at(j, k);
      a.at(i, j) = v / l;
    }
  }
  return true;
}

inline void cholesky_solve_row(const RealMatrix& l, std::span<double> x) {
  const std::size_t n = l.rows;
  for (std::size_t i = 0; i < n; ++i) {
    double v = x[i];
    for (std::size_t k = 0; k < i; ++k) v -= l.at(i, k) * x[k];
    x[i] = v / l.at(i, i);
  }
  for (std::size_t i = n; i-- > 0;) {
    double v = x[i];
    for (std::size_t k = i + 1; k < n; ++k) v -= l.at(k, i) * x[k];
    x[i] = v / l.at(i, i);
  }
}

/// Solves F * V = M row by row for symmetric positive semi-definite V.
/// Falls back to a ridge of 1e-12 * trace(V) when V is singular; an all-zero
/// V yields the all-zero solution.
inline FactorMatrix solve_gram_system(const FactorMatrix& m, RealMatrix v) {
  double trace = 0.0;
  for (std::size_t i = 0; i < v.rows; ++i) trace += v.at(i, i);
  FactorMatrix out = m;
  if (trace == 0.0) {
    std::fill(out.values.begin(), out.values.end(), 0.0);
    return out;
  }
  RealMatrix chol = v;
  if (!cholesky(chol)) {
    chol = v;
    const double ridge = 1e-12 * trace;
    for (std::size_t i = 0; i < chol.rows; ++i) chol.at(i, i) += ridge;
    if (!cholesky(chol))
      throw std::runtime_error("gram system not solvable even with ridge");
  }
  std::vector<double> row(m.rank);
  for (std::size_t i = 0; i < m.rows; ++i) {
    for (std::size_t r = 0; r < m.rank; ++r) row[r] = m.at(i, r);
    cholesky_solve_row(chol, row);
    for (std::size_t r = 0; r < m.rank; ++r) out.at(i, r) = row[r];
  }
  return out;
}

}  // namespace detail

struct CpAlsOptions {
  std::size_t rank = 1;
  std::size_t max_iters = 50;
  double tol = 1e-6;
  std::uint64_t seed = 0;
};

struct CpAlsSweepStat {
  std::size_t sweep = 0;
  double fit = 0.0;
  double abs_error = 0.0;  // ||X - reconstruct||_F at the sweep boundary
};

struct CpAlsResult {
  CpModel model;
  double fit = 0.0;
  std::size_t sweeps = 0;
  bool converged = false;
  std::vector<CpAlsSweepStat> trace;
};

namespace detail {

template <typename TensorT>
CpAlsResult cp_als_impl(const TensorT& tensor, const DenseTensor& dense_view,
                        const CpAlsOptions& opt) {
  if (opt.rank == 0) throw_invalid("cp_als: rank must be >= 1");
  if (opt.max_iters == 0) throw_invalid("cp_als: max_iters must be >= 1");
  if (opt.tol < 0.0) throw_invalid("cp_als: tol must be >= 0");

  const std::size_t n_modes = tensor.shape.size();
  CpModel model;
  model.weights.assign(opt.rank, 1.0);
  for (std::size_t m = 0; m < n_modes; ++m)
    model.factors.push_back(
        FactorMatrix::random(m, tensor.shape[m], opt.rank, mix_seed(opt.seed, m)));

  SplitMix64 reseed(mix_seed(opt.seed, 0x72657365ULL));
  const double norm_x = dense_view.frobenius_norm();

  CpAlsResult result;
  double prev_fit = 0.0;
  for (std::size_t sweep = 1; sweep <= opt.max_iters; ++sweep) {
    for (std::size_t n = 0; n < n_modes; ++n) {
      FactorMatrix m = mttkrp(tensor, std::span<const FactorMatrix>(model.factors), n);
      RealMatrix v(opt.rank, opt.rank, 1.0);
      for (std::size_t q = 0; q < n_modes; ++q) {
        if (q == n) continue;
        const RealMatrix g = gram(model.factors[q]);
        for (std::size_t k = 0; k < v.values.size(); ++k) v.values[k] *= g.values[k];
      }
      FactorMatrix updated = solve_gram_system(m, v);
      // Column norms become the model weights; columns stay unit length.
      for (std::size_t r = 0; r < opt.rank; ++r) {
        double s = 0.0;
        for (std::size_t i = 0; i < updated.rows; ++i)
          s += updated.at(i, r) * updated.at(i, r);
        const double norm = std::sqrt(s);
        if (norm == 0.0) {
          model.weights[r] = 0.0;
          double s2 = 0.0;
          for (std::size_t i = 0; i < updated.rows; ++i) {
            updated.at(i, r) = reseed.next_unit() + 0.5;
            s2 += updated.at(i, r) * updated.at(i, r);
          }
          const double n2 = std::sqrt(s2);
          for (std::size_t i = 0; i < updated.rows; ++i) updated.at(i, r) /= n2;
        } else {
          model.weights[r] = norm;
          for (std::size_t i = 0; i < updated.rows; ++i) updated.at(i, r) /= norm;
        }
      }
      model.factors[n] = std::move(updated);
    }

    const DenseTensor approx = reconstruct(model);
    double err_sq = 0.0;
    for (std::size_t i = 0; i < dense_view.values.size(); ++i) {
      const double d = dense_view.values[i] - approx.values[i];
      err_sq += d * d;
    }
    const double err = std::sqrt(err_sq);
    const double fit_now = norm_x == 0.0 ? 1.0 : 1.0 - err / norm_x;
    result.trace.push_back({sweep, fit_now, err});
    result.sweeps = sweep;
    result.fit = fit_now;
    if (std::abs(fit_now - prev_fit) < opt.tol) {
      result.converged = true;
      break;
    }
    prev_fit = fit_now;
  }
  result.model = std::move(model);
  return result;
}

}  // namespace detail

inline CpAlsResult cp_als(const DenseTensor& tensor, const CpAlsOptions& opt) {
  return detail::cp_als_impl(tensor, tensor, opt);
}

inline CpAlsResult cp_als(const SparseTensor& tensor, const CpAlsOptions& opt) {
  return detail::cp_als_impl(tensor, tensor.densify(), opt);
}

}  // namespace psram
