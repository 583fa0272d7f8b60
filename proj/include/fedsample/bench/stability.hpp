#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fedsample/bench/records.hpp"
#include "fedsample/linalg/cholesky.hpp"
#include "fedsample/linalg/direct.hpp"
#include "fedsample/linalg/woodbury.hpp"
#include "fedsample/sampler/rng.hpp"

namespace fedsample::bench {

struct StabilityRunSpec {
  std::size_t dim = 256;
  std::size_t iterations = 1000;
  double lambda = 1e-3;
  std::uint64_t seed = 0;

  void validate() const {
    if (dim == 0) throw std::invalid_argument("stability: dim must be >= 1");
    if (iterations == 0) throw std::invalid_argument("stability: iterations must be >= 1");
    if (!(lambda > 0.0)) throw std::invalid_argument("stability: lambda must be > 0");
  }
};

/// Running FNV-1a over the raw bytes of every update vector a path consumed.
class VectorStreamHash {
 public:
  void add(std::span<const double> v) noexcept {
    const auto* p = reinterpret_cast<const unsigned char*>(v.data());
    for (std::size_t i = 0; i < v.size_bytes(); ++i) {
      h_ ^= p[i];
      h_ *= 0x100000001b3ULL;
    }
  }
  std::uint64_t value() const noexcept { return h_; }

 private:
  std::uint64_t h_ = 0xcbf29ce484222325ULL;
};

struct StabilityResult {
  std::vector<ExperimentRecord> records;
  std::uint64_t direct_hash = 0;
  std::uint64_t woodbury_hash = 0;
  std::uint64_t cholesky_hash = 0;

  bool poisoned() const {
    for (const auto& r : records)
      if (r.poisoned) return true;
    return false;
  }

  /// Values of `method` by iteration (NaN where poisoned).
  std::vector<double> trace(std::string_view method) const {
    std::vector<double> out;
    for (const auto& r : records)
      if (r.method == method) out.push_back(r.value);
    return out;
  }
};

/// Draws the update vectors: standard normal scaled by 1/sqrt(dim).
inline linalg::Vector draw_update_vector(Xoshiro256& rng, std::size_t dim) {
  linalg::Vector v(dim);
  const double scale = 1.0 / std::sqrt(static_cast<double>(dim));
  for (auto& x : v) x = scale * rng.normal();
  return v;
}

/// Tracks inv(lambda I + sum v v^T) three ways over the same vector
/// sequence: direct re-inversion of the accumulated matrix (reference),
/// Sherman-Morrison on the explicit inverse, and a rank-1 Cholesky update
/// followed by inversion of the factor. Records the relative Frobenius
/// error of the last two against the reference; iteration 0 is the common
/// starting point.
///
/// A method that throws, or produces a non-finite error, is poisoned from
/// that iteration on and the run continues.
inline StabilityResult stability_experiment(
    const StabilityRunSpec& spec,
    const std::function<void(std::size_t)>& on_iteration = nullptr) {
  spec.validate();
  const std::size_t d = spec.dim;
  Xoshiro256 rng(derive_seed(spec.seed, "stability/v"));

  linalg::SquareMatrix accumulated = linalg::SquareMatrix::identity(d, spec.lambda);
  linalg::SquareMatrix woodbury = linalg::SquareMatrix::identity(d, 1.0 / spec.lambda);
  linalg::CholeskyFactor factor = linalg::CholeskyFactor::scaled_identity(d, std::sqrt(spec.lambda));
  bool woodbury_failed = false;
  bool cholesky_failed = false;
  VectorStreamHash direct_hash, woodbury_hash, cholesky_hash;

  StabilityResult result;
  result.records.reserve(2 * (spec.iterations + 1));
  auto record = [&](const char* method, std::size_t it, double value, bool failed) {
    const bool poisoned = failed || !std::isfinite(value);
    result.records.push_back({"stability", method, d, it,
                              poisoned ? std::numeric_limits<double>::quiet_NaN() : value, spec.seed,
                              0, poisoned});
    return poisoned;
  };

  {
    const linalg::SquareMatrix reference = linalg::direct_spd_inverse(accumulated);
    record("woodbury", 0, linalg::relative_frobenius_error(woodbury, reference), false);
    record("cholesky", 0,
           linalg::relative_frobenius_error(linalg::spd_inverse_from_factor(factor), reference), false);
  }

  for (std::size_t it = 1; it <= spec.iterations; ++it) {
    const linalg::Vector v = draw_update_vector(rng, d);

    direct_hash.add(v);
    linalg::add_outer_product(accumulated, v);
    std::optional<linalg::SquareMatrix> reference;
    try {
      reference = linalg::direct_spd_inverse(accumulated);
    } catch (const std::exception&) {
    }

    woodbury_hash.add(v);
    double woodbury_error = std::numeric_limits<double>::quiet_NaN();
    if (!woodbury_failed) {
      try {
        linalg::sherman_morrison_update_in_place(woodbury, v);
        if (reference) woodbury_error = linalg::relative_frobenius_error(woodbury, *reference);
      } catch (const std::exception&) {
        woodbury_failed = true;
      }
    }

    cholesky_hash.add(v);
    double cholesky_error = std::numeric_limits<double>::quiet_NaN();
    if (!cholesky_failed) {
      try {
        linalg::rank1_update_in_place(factor, v);
        if (reference) {
          cholesky_error =
              linalg::relative_frobenius_error(linalg::spd_inverse_from_factor(factor), *reference);
        }
      } catch (const std::exception&) {
        cholesky_failed = true;
      }
    }

    // Non-finite output poisons the method for the rest of the run. A
    // failed reference poisons only this iteration.
    if (record("woodbury", it, woodbury_error, woodbury_failed) && reference) woodbury_failed = true;
    if (record("cholesky", it, cholesky_error, cholesky_failed) && reference) cholesky_failed = true;
    if (on_iteration) on_iteration(it);
  }

  result.direct_hash = direct_hash.value();
  result.woodbury_hash = woodbury_hash.value();
  result.cholesky_hash = cholesky_hash.value();
  return result;
}

}  // namespace fedsample::bench
