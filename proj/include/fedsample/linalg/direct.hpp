#pragma once

#include "fedsample/linalg/cholesky.hpp"
#include "fedsample/linalg/matrix.hpp"

namespace fedsample::linalg {

/// Inverse of an SPD matrix from scratch: factorize, then invert the
/// factor. O(d^3) per call; the reference the incremental paths are
/// measured against.
inline SquareMatrix direct_spd_inverse(const SquareMatrix& a) {
  return spd_inverse_from_factor(cholesky_decompose(a));
}

}  // namespace fedsample::linalg
