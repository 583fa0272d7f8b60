#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "fedsample/bench/records.hpp"
#include "fedsample/bench/stability.hpp"
#include "fedsample/linalg/cholesky.hpp"
#include "fedsample/linalg/direct.hpp"
#include "fedsample/linalg/woodbury.hpp"

namespace fedsample::bench {

struct TimingRunSpec {
  std::vector<std::size_t> dims{256, 1024, 2048};
  std::size_t iterations = 100;
  std::size_t warmup = 10;
  std::size_t repetitions = 3;
  double lambda = 1.0;
  std::uint64_t seed = 0;

  void validate() const {
    if (dims.empty()) throw std::invalid_argument("timing: need at least one dim");
    for (auto d : dims)
      if (d == 0) throw std::invalid_argument("timing: dims must be >= 1");
    if (iterations == 0) throw std::invalid_argument("timing: iterations must be >= 1");
    if (repetitions == 0) throw std::invalid_argument("timing: repetitions must be >= 1");
    if (!(lambda > 0.0)) throw std::invalid_argument("timing: lambda must be > 0");
  }
};

struct TimingResult {
  std::vector<ExperimentRecord> records;
  /// One row per (method, dim): mean and std of seconds per update over
  /// every timed update of every repetition.
  std::vector<SummaryRow> summary;

  const SummaryRow* find(const std::string& method, std::size_t dim) const {
    for (const auto& s : summary)
      if (s.method == method && s.dim == dim) return &s;
    return nullptr;
  }
};

inline constexpr const char* kTimedMethods[] = {"direct", "woodbury", "cholesky"};

namespace detail {

// Wall time of one update that leaves a usable inverse behind:
//   direct   = accumulate v v^T, factorize and invert from scratch
//   woodbury = Sherman-Morrison on the explicit inverse
//   cholesky = rank-1 factor update, then invert the factor
class TimedPath {
 public:
  TimedPath(std::string method, std::size_t d, double lambda)
      : method_(std::move(method)),
        accumulated_(linalg::SquareMatrix::identity(d, lambda)),
        inverse_(linalg::SquareMatrix::identity(d, 1.0 / lambda)),
        factor_(linalg::CholeskyFactor::scaled_identity(d, std::sqrt(lambda))) {}

  double update(const linalg::Vector& v) {
    const auto start = std::chrono::steady_clock::now();
    if (method_ == "direct") {
      linalg::add_outer_product(accumulated_, v);
      inverse_ = linalg::direct_spd_inverse(accumulated_);
    } else if (method_ == "woodbury") {
      linalg::sherman_morrison_update_in_place(inverse_, v);
    } else {
      linalg::rank1_update_in_place(factor_, v);
      inverse_ = linalg::spd_inverse_from_factor(factor_);
    }
    const auto stop = std::chrono::steady_clock::now();
    return std::chrono::duration<double>(stop - start).count();
  }

  const linalg::SquareMatrix& inverse() const noexcept { return inverse_; }

 private:
  std::string method_;
  linalg::SquareMatrix accumulated_;
  linalg::SquareMatrix inverse_;
  linalg::CholeskyFactor factor_;
};

}  // namespace detail

/// Per-update wall-clock time of the three inverse-maintenance paths.
/// Single-threaded. Each (dim, repetition) starts every method from
/// lambda I and feeds it the same vector sequence; the first `warmup`
/// updates are not recorded.
inline TimingResult timing_experiment(
    const TimingRunSpec& spec,
    const std::function<void(const std::string&, std::size_t, std::size_t)>& on_cell = nullptr) {
  spec.validate();
  TimingResult result;
  for (std::size_t d : spec.dims) {
    std::map<std::string, std::vector<double>> samples;
    for (std::size_t rep = 0; rep < spec.repetitions; ++rep) {
      const std::uint64_t cell_seed =
          derive_seed(spec.seed, "timing/" + std::to_string(d) + "/" + std::to_string(rep));
      for (const char* method : kTimedMethods) {
        if (on_cell) on_cell(method, d, rep);
        Xoshiro256 rng(cell_seed);
        detail::TimedPath path(method, d, spec.lambda);
        for (std::size_t w = 0; w < spec.warmup; ++w) path.update(draw_update_vector(rng, d));
        for (std::size_t it = 0; it < spec.iterations; ++it) {
          const linalg::Vector v = draw_update_vector(rng, d);
          const double seconds = path.update(v);
          samples[method].push_back(seconds);
          result.records.push_back({"timing", method, d, it, seconds, spec.seed, rep, false});
        }
      }
    }
    for (const char* method : kTimedMethods) {
      result.summary.push_back(summarize("timing", method, d, samples[method]));
    }
  }
  return result;
}

}  // namespace fedsample::bench
