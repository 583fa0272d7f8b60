#pragma once

#include <cmath>
#include <span>

#include "fedsample/linalg/matrix.hpp"

namespace fedsample::linalg {

/// Sherman-Morrison rank-1 update of an explicit inverse, in place:
///   inv <- inv - (inv v)(v^T inv) / (1 + v^T inv v).
///
/// inv v and v^T inv are formed separately and nothing is symmetrized, so
/// any asymmetry the formula produces is carried forward. O(d^2).
/// Throws DenominatorNonPositive when the update would leave the
/// positive-definite cone; `inv` is untouched in that case.
inline void sherman_morrison_update_in_place(SquareMatrix& inv, std::span<const double> v) {
  const std::size_t n = inv.dim();
  require_same_dim(n, v.size(), "sherman_morrison_update");

  const Vector col = multiply(inv, v);  // inv v
  Vector row(n, 0.0);                   // v^T inv
  for (std::size_t k = 0; k < n; ++k) {
    const double vk = v[k];
    if (vk == 0.0) continue;
    const auto ik = inv.row(k);
    for (std::size_t j = 0; j < n; ++j) row[j] += vk * ik[j];
  }
  const double denom = 1.0 + dot(v.data(), col.data(), n);
  if (!(denom > 0.0) || !std::isfinite(denom)) {
    throw DenominatorNonPositive("sherman_morrison_update: 1 + v^T inv v = " + std::to_string(denom));
  }
  for (std::size_t i = 0; i < n; ++i) {
    const double ci = col[i] / denom;
    auto ri = inv.row(i);
    for (std::size_t j = 0; j < n; ++j) ri[j] -= ci * row[j];
  }
}

inline SquareMatrix sherman_morrison_update(const SquareMatrix& inv, std::span<const double> v) {
  SquareMatrix out = inv;
  sherman_morrison_update_in_place(out, v);
  return out;
}

}  // namespace fedsample::linalg
