#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace fedsample::linalg {

using Vector = std::vector<double>;

struct DimensionMismatch : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct NonFiniteValue : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct NotPositiveDefinite : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct SingularFactor : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DenominatorNonPositive : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ZeroReference : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

inline void require_same_dim(std::size_t a, std::size_t b, const char* what) {
  if (a != b) {
    throw DimensionMismatch(std::string(what) + ": dimension " + std::to_string(a) +
                            " vs " + std::to_string(b));
  }
}

inline bool all_finite(std::span<const double> xs) {
  return std::all_of(xs.begin(), xs.end(), [](double x) { return std::isfinite(x); });
}

/// Dense d x d matrix of doubles in row-major order.
///
/// Finiteness is checked when a matrix is built from caller-provided
/// entries; kernels writing through the mutable accessors are trusted.
class SquareMatrix {
 public:
  SquareMatrix() = default;

  explicit SquareMatrix(std::size_t dim) : dim_(dim), a_(dim * dim, 0.0) {
    if (dim == 0) throw std::invalid_argument("SquareMatrix: dim must be >= 1");
  }

  SquareMatrix(std::size_t dim, std::vector<double> entries) : dim_(dim), a_(std::move(entries)) {
    if (dim == 0) throw std::invalid_argument("SquareMatrix: dim must be >= 1");
    if (a_.size() != dim * dim) {
      throw DimensionMismatch("SquareMatrix: expected " + std::to_string(dim * dim) +
                              " entries, got " + std::to_string(a_.size()));
    }
    if (!all_finite(a_)) throw NonFiniteValue("SquareMatrix: non-finite entry");
  }

  static SquareMatrix identity(std::size_t dim, double scale = 1.0) {
    SquareMatrix m(dim);
    for (std::size_t i = 0; i < dim; ++i) m(i, i) = scale;
    return m;
  }

  static SquareMatrix diagonal(std::span<const double> diag) {
    SquareMatrix m(diag.size());
    for (std::size_t i = 0; i < diag.size(); ++i) m(i, i) = diag[i];
    return m;
  }

  /// Row-wise construction, e.g. SquareMatrix::from_rows({{4, 2}, {2, 3}}).
  static SquareMatrix from_rows(std::initializer_list<std::initializer_list<double>> rows) {
    const std::size_t n = rows.size();
    std::vector<double> entries;
    entries.reserve(n * n);
    for (const auto& r : rows) {
      if (r.size() != n) throw DimensionMismatch("SquareMatrix::from_rows: ragged rows");
      entries.insert(entries.end(), r.begin(), r.end());
    }
    return SquareMatrix(n, std::move(entries));
  }

  std::size_t dim() const noexcept { return dim_; }

  double& operator()(std::size_t i, std::size_t j) noexcept { return a_[i * dim_ + j]; }
  double operator()(std::size_t i, std::size_t j) const noexcept { return a_[i * dim_ + j]; }

  std::span<double> row(std::size_t i) noexcept { return {a_.data() + i * dim_, dim_}; }
  std::span<const double> row(std::size_t i) const noexcept { return {a_.data() + i * dim_, dim_}; }

  std::span<double> entries() noexcept { return a_; }
  std::span<const double> entries() const noexcept { return a_; }

  friend bool operator==(const SquareMatrix&, const SquareMatrix&) = default;

 private:
  std::size_t dim_ = 0;
  std::vector<double> a_;
};

inline double frobenius_norm(const SquareMatrix& m) {
  double s = 0.0;
  for (double x : m.entries()) s += x * x;
  return std::sqrt(s);
}

/// ||m - reference||_F / ||reference||_F.
inline double relative_frobenius_error(const SquareMatrix& m, const SquareMatrix& reference) {
  require_same_dim(m.dim(), reference.dim(), "relative_frobenius_error");
  const double ref = frobenius_norm(reference);
  if (!(ref > 0.0)) throw ZeroReference("relative_frobenius_error: reference has zero norm");
  double s = 0.0;
  const auto a = m.entries();
  const auto b = reference.entries();
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double diff = a[i] - b[i];
    s += diff * diff;
  }
  return std::sqrt(s) / ref;
}

/// True when |a_ij - a_ji| <= rel_tol * max|a| for all pairs.
inline bool is_symmetric(const SquareMatrix& a, double rel_tol = 1e-12) {
  double scale = 0.0;
  for (double x : a.entries()) scale = std::max(scale, std::abs(x));
  const double tol = rel_tol * scale;
  for (std::size_t i = 0; i < a.dim(); ++i) {
    for (std::size_t j = 0; j < i; ++j) {
      if (std::abs(a(i, j) - a(j, i)) > tol) return false;
    }
  }
  return true;
}

/// a += scale * v v^T. The increment is scale * (v_i v_j), which is the
/// same double for (i, j) and (j, i), so a symmetric input stays exactly
/// symmetric.
inline void add_outer_product(SquareMatrix& a, std::span<const double> v, double scale = 1.0) {
  require_same_dim(a.dim(), v.size(), "add_outer_product");
  const std::size_t n = a.dim();
  for (std::size_t i = 0; i < n; ++i) {
    const double vi = v[i];
    auto row = a.row(i);
    for (std::size_t j = 0; j < n; ++j) row[j] += scale * (vi * v[j]);
  }
}

/// Dot product with a fixed eight-lane accumulation order. The order is
/// part of the contract: results are bit-reproducible for a given length.
inline double dot(const double* a, const double* b, std::size_t n) noexcept {
  double acc[8] = {0, 0, 0, 0, 0, 0, 0, 0};
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    for (std::size_t l = 0; l < 8; ++l) acc[l] += a[i + l] * b[i + l];
  }
  double tail = 0.0;
  for (; i < n; ++i) tail += a[i] * b[i];
  return ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail;
}

inline double dot(std::span<const double> a, std::span<const double> b) {
  require_same_dim(a.size(), b.size(), "dot");
  return dot(a.data(), b.data(), a.size());
}

/// y = m x.
inline Vector multiply(const SquareMatrix& m, std::span<const double> x) {
  require_same_dim(m.dim(), x.size(), "multiply");
  Vector y(m.dim());
  for (std::size_t i = 0; i < m.dim(); ++i) y[i] = dot(m.row(i).data(), x.data(), x.size());
  return y;
}

/// Plain triple-loop product; test and reporting helper, not a hot path.
inline SquareMatrix multiply(const SquareMatrix& a, const SquareMatrix& b) {
  require_same_dim(a.dim(), b.dim(), "multiply");
  const std::size_t n = a.dim();
  SquareMatrix c(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto ci = c.row(i);
    for (std::size_t k = 0; k < n; ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      const auto bk = b.row(k);
      for (std::size_t j = 0; j < n; ++j) ci[j] += aik * bk[j];
    }
  }
  return c;
}

inline SquareMatrix transpose(const SquareMatrix& a) {
  SquareMatrix t(a.dim());
  for (std::size_t i = 0; i < a.dim(); ++i)
    for (std::size_t j = 0; j < a.dim(); ++j) t(j, i) = a(i, j);
  return t;
}

}  // namespace fedsample::linalg
