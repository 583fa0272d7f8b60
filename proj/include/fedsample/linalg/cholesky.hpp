#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstring>
#include <span>
#include <string>
#include <vector>

#include "fedsample/linalg/matrix.hpp"

namespace fedsample::linalg {

namespace detail {
// Row-block height for the cubic kernels. A block of 64 rows at d = 2048
// is 1 MiB, which stays resident in L2 while earlier rows stream past.
inline constexpr std::size_t kRowBlock = 64;

inline std::size_t floor8(std::size_t k) noexcept { return k & ~std::size_t{7}; }

// out[r][c] = sum_{k in [begin, end)} a[r][k] * b[c][k] for a 4x4 tile.
// Lane l collects k = begin + l (mod 8) over full groups of eight, lanes
// reduce exactly as linalg::dot does, and leftover terms are added in
// order afterwards. A single pair therefore gets the same bits whether it
// is computed here or by dot() over the same range.
inline void dot_tile(const double* const a[4], const double* const b[4], std::size_t begin,
                     std::size_t end, double out[4][4]) noexcept {
#if defined(__GNUC__)
  // Eight lanes as one vector register; without AVX-512 the compiler splits
  // it, and the lane arithmetic is unchanged either way.
  typedef double lanes __attribute__((vector_size(64)));
  auto load = [](const double* p) {
    lanes v;
    std::memcpy(&v, p, sizeof v);
    return v;
  };
  lanes acc[4][4] = {};
  std::size_t k = begin;
  for (; k + 8 <= end; k += 8) {
    const lanes b0 = load(b[0] + k), b1 = load(b[1] + k), b2 = load(b[2] + k), b3 = load(b[3] + k);
    for (std::size_t r = 0; r < 4; ++r) {
      const lanes ar = load(a[r] + k);
      acc[r][0] += ar * b0;
      acc[r][1] += ar * b1;
      acc[r][2] += ar * b2;
      acc[r][3] += ar * b3;
    }
  }
#else
  double acc[4][4][8] = {};
  std::size_t k = begin;
  for (; k + 8 <= end; k += 8)
    for (std::size_t r = 0; r < 4; ++r)
      for (std::size_t c = 0; c < 4; ++c)
        for (std::size_t l = 0; l < 8; ++l) acc[r][c][l] += a[r][k + l] * b[c][k + l];
#endif
  for (std::size_t r = 0; r < 4; ++r) {
    for (std::size_t c = 0; c < 4; ++c) {
      double x[8];
      std::memcpy(x, &acc[r][c], sizeof x);
      double tail = 0.0;
      for (std::size_t t = k; t < end; ++t) tail += a[r][t] * b[c][t];
      out[r][c] = ((x[0] + x[4]) + (x[1] + x[5])) + ((x[2] + x[6]) + (x[3] + x[7])) + tail;
    }
  }
}

// Row pointers for rows first..first+3, clamped to `last` so a ragged
// final quad repeats a valid row; callers discard the duplicates.
inline void quad_rows(const SquareMatrix& m, std::size_t first, std::size_t last,
                      const double* rows[4]) noexcept {
  for (std::size_t r = 0; r < 4; ++r) rows[r] = m.row(std::min(first + r, last)).data();
}

// Upper triangular U = L^{-T}, i.e. row j of U is column j of L^{-1}.
//
// Row block [lo, hi) of L^{-1} is assembled in a scratch buffer: first the
// contributions of the already finished columns k < lo as tiled dot
// products against rows of U, then forward substitution inside the block.
inline SquareMatrix inverse_transpose(const SquareMatrix& l) {
  const std::size_t n = l.dim();
  SquareMatrix u(n);
  std::vector<double> buf(kRowBlock * n);

  for (std::size_t lo = 0; lo < n; lo += kRowBlock) {
    const std::size_t hi = std::min(lo + kRowBlock, n);
    std::fill(buf.begin(), buf.end(), 0.0);
    auto brow = [&](std::size_t i) { return buf.data() + (i - lo) * n; };

    for (std::size_t j0 = 0; j0 < lo; j0 += 4) {
      const double* urows[4];
      quad_rows(u, j0, n - 1, urows);
      for (std::size_t i0 = lo; i0 < hi; i0 += 4) {
        const double* lrows[4];
        quad_rows(l, i0, hi - 1, lrows);
        double s[4][4];
        dot_tile(lrows, urows, floor8(j0), lo, s);
        for (std::size_t r = 0; r < 4 && i0 + r < hi; ++r)
          for (std::size_t c = 0; c < 4; ++c) brow(i0 + r)[j0 + c] = s[r][c];
      }
    }
    for (std::size_t i = lo; i < hi; ++i) {
      double* xi = brow(i);
      for (std::size_t k = lo; k < i; ++k) {
        const double lik = l(i, k);
        const double* xk = brow(k);
        for (std::size_t j = 0; j <= k; ++j) xi[j] += lik * xk[j];
      }
      const double d = l(i, i);
      for (std::size_t j = 0; j < i; ++j) xi[j] = -xi[j] / d;
      xi[i] = 1.0 / d;
      for (std::size_t j = 0; j <= i; ++j) u(j, i) = xi[j];
    }
  }
  return u;
}
}  // namespace detail

/// Lower triangular factor L of an SPD matrix, L L^T = A.
///
/// Invariants: every entry above the diagonal is exactly zero and every
/// diagonal entry is strictly positive. Instances are produced only by
/// cholesky_decompose, scaled_identity, from_lower (validated) and the
/// rank-1 update, so a live factor always satisfies both.
class CholeskyFactor {
 public:
  /// diag * I, the factor of diag^2 * I.
  static CholeskyFactor scaled_identity(std::size_t dim, double diag) {
    if (!(diag > 0.0) || !std::isfinite(diag)) {
      throw NotPositiveDefinite("CholeskyFactor: diagonal must be positive and finite");
    }
    return CholeskyFactor(SquareMatrix::identity(dim, diag));
  }

  static CholeskyFactor from_lower(SquareMatrix l) {
    for (std::size_t i = 0; i < l.dim(); ++i) {
      if (!(l(i, i) > 0.0)) {
        throw NotPositiveDefinite("CholeskyFactor: diagonal entry " + std::to_string(i) +
                                  " is not positive");
      }
      for (std::size_t j = i + 1; j < l.dim(); ++j) {
        if (l(i, j) != 0.0) throw std::invalid_argument("CholeskyFactor: entry above diagonal");
      }
    }
    return CholeskyFactor(std::move(l));
  }

  std::size_t dim() const noexcept { return l_.dim(); }
  double operator()(std::size_t i, std::size_t j) const noexcept { return l_(i, j); }
  const SquareMatrix& lower() const noexcept { return l_; }

  /// log det(L L^T).
  double log_determinant() const {
    double s = 0.0;
    for (std::size_t i = 0; i < dim(); ++i) s += std::log(l_(i, i));
    return 2.0 * s;
  }

  /// L L^T, exactly symmetric.
  SquareMatrix reconstruct() const {
    const std::size_t n = dim();
    SquareMatrix a(n);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j <= i; ++j) {
        const double v = dot(l_.row(i).data(), l_.row(j).data(), j + 1);
        a(i, j) = v;
        a(j, i) = v;
      }
    }
    return a;
  }

  friend CholeskyFactor cholesky_decompose(const SquareMatrix& a);
  friend void rank1_update_in_place(CholeskyFactor& factor, std::span<const double> v);

 private:
  explicit CholeskyFactor(SquareMatrix l) : l_(std::move(l)) {}

  SquareMatrix l_;
};

/// Cholesky factorization of a symmetric positive-definite matrix.
///
/// Left-looking and blocked by rows. Only the lower triangle of `a` is
/// read after the symmetry check. Throws NotPositiveDefinite on a
/// non-symmetric input or a non-positive pivot.
inline CholeskyFactor cholesky_decompose(const SquareMatrix& a) {
  if (!is_symmetric(a)) throw NotPositiveDefinite("cholesky_decompose: matrix is not symmetric");
  const std::size_t n = a.dim();
  SquareMatrix l(n);

  // L_ij = (a_ij - sum_{m<j} L_im L_jm) / L_jj. The sum over m < floor8(j)
  // uses the lane order of dot(); the rest is added in sequence.
  auto finish_entry = [&](std::size_t i, std::size_t j, double partial) {
    double s = partial;
    for (std::size_t m = detail::floor8(j); m < j; ++m) s += l(i, m) * l(j, m);
    s = a(i, j) - s;
    if (i == j) {
      if (!(s > 0.0) || !std::isfinite(s)) {
        throw NotPositiveDefinite("cholesky_decompose: non-positive pivot at " + std::to_string(i));
      }
      l(i, i) = std::sqrt(s);
    } else {
      l(i, j) = s / l(j, j);
    }
  };

  for (std::size_t lo = 0; lo < n; lo += detail::kRowBlock) {
    const std::size_t hi = std::min(lo + detail::kRowBlock, n);
    for (std::size_t j0 = 0; j0 < lo; j0 += 4) {
      const double* jrows[4];
      detail::quad_rows(l, j0, n - 1, jrows);
      for (std::size_t i0 = lo; i0 < hi; i0 += 4) {
        const double* irows[4];
        detail::quad_rows(l, i0, hi - 1, irows);
        double s[4][4];
        detail::dot_tile(irows, jrows, 0, detail::floor8(j0), s);
        for (std::size_t r = 0; r < 4 && i0 + r < hi; ++r)
          for (std::size_t c = 0; c < 4; ++c) finish_entry(i0 + r, j0 + c, s[r][c]);
      }
    }
    for (std::size_t i = lo; i < hi; ++i) {
      for (std::size_t j = lo; j <= i; ++j) {
        finish_entry(i, j, dot(l.row(i).data(), l.row(j).data(), detail::floor8(j)));
      }
    }
  }
  return CholeskyFactor(std::move(l));
}

/// In-place positive rank-1 update: afterwards L L^T equals the old
/// L L^T + v v^T.
///
/// Stacks v^T under L^T and annihilates it with one Givens rotation per
/// column. Rotations are applied row by row so every access to L is
/// contiguous; the arithmetic per entry matches the column-ordered sweep.
/// The radius comes from hypot and is positive whenever L_kk > 0, so the
/// diagonal stays positive. O(d^2).
inline void rank1_update_in_place(CholeskyFactor& factor, std::span<const double> v) {
  const std::size_t n = factor.dim();
  require_same_dim(n, v.size(), "rank1_update");
  if (!all_finite(v)) throw NonFiniteValue("rank1_update: non-finite update vector");

  std::vector<double> cos_k(n);
  std::vector<double> sin_k(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto row = factor.l_.row(i);
    double x = v[i];
    for (std::size_t k = 0; k < i; ++k) {
      const double lik = row[k];
      row[k] = cos_k[k] * lik + sin_k[k] * x;
      x = cos_k[k] * x - sin_k[k] * lik;
    }
    const double r = std::hypot(row[i], x);
    cos_k[i] = row[i] / r;
    sin_k[i] = x / r;
    row[i] = r;
  }
}

inline CholeskyFactor rank1_update(const CholeskyFactor& factor, std::span<const double> v) {
  CholeskyFactor out = factor;
  rank1_update_in_place(out, v);
  return out;
}

/// L^{-1} by forward substitution, X_ij = -(sum_{k=j}^{i-1} L_ik X_kj) / L_ii.
/// The result is lower triangular. Blocked by rows and tiled so the
/// triangular zeros are never touched. Throws SingularFactor if a
/// diagonal entry is below 1e-300 in magnitude.
inline SquareMatrix invert_lower_triangular(const CholeskyFactor& factor) {
  const SquareMatrix& l = factor.lower();
  for (std::size_t i = 0; i < l.dim(); ++i) {
    if (std::abs(l(i, i)) < 1e-300) {
      throw SingularFactor("invert_lower_triangular: diagonal entry " + std::to_string(i) +
                           " is numerically zero");
    }
  }
  return transpose(detail::inverse_transpose(l));
}

/// (L L^T)^{-1} = L^{-T} L^{-1}.
///
/// With U = L^{-T}, entry (i, j) is the dot product of rows i and j of U
/// over k >= max(i, j). Only the lower half is computed; the upper half
/// is its mirror, so the result is exactly symmetric.
inline SquareMatrix spd_inverse_from_factor(const CholeskyFactor& factor) {
  const SquareMatrix& l = factor.lower();
  const std::size_t n = l.dim();
  for (std::size_t i = 0; i < n; ++i) {
    if (std::abs(l(i, i)) < 1e-300) {
      throw SingularFactor("spd_inverse_from_factor: diagonal entry " + std::to_string(i) +
                           " is numerically zero");
    }
  }
  const SquareMatrix u = detail::inverse_transpose(l);
  SquareMatrix m(n);

  for (std::size_t lo = 0; lo < n; lo += detail::kRowBlock) {
    const std::size_t hi = std::min(lo + detail::kRowBlock, n);
    for (std::size_t j0 = 0; j0 < hi; j0 += 4) {
      const double* jrows[4];
      detail::quad_rows(u, j0, n - 1, jrows);
      for (std::size_t i0 = std::max(lo, j0); i0 < hi; i0 += 4) {
        const double* irows[4];
        detail::quad_rows(u, i0, n - 1, irows);
        double s[4][4];
        // Row i of U is zero before column i, so starting at floor8(i0)
        // only adds exact zeros for the entries with j < i.
        detail::dot_tile(irows, jrows, detail::floor8(i0), n, s);
        for (std::size_t r = 0; r < 4 && i0 + r < hi; ++r)
          for (std::size_t c = 0; c < 4 && j0 + c <= i0 + r; ++c) m(i0 + r, j0 + c) = s[r][c];
      }
    }
  }
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < i; ++j) m(j, i) = m(i, j);
  return m;
}

}  // namespace fedsample::linalg
