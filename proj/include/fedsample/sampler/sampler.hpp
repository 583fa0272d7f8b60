#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "fedsample/linalg/cholesky.hpp"
#include "fedsample/linalg/matrix.hpp"
#include "fedsample/sampler/rng.hpp"
#include "fedsample/stream/sample.hpp"

namespace fedsample {

struct InvalidConfig : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Per-client sampler parameters.
///
/// `stream_length` is |U|, the number of observations the client will
/// see. When it is unknown, `length_estimate` stands in for it in the
/// adaptive rate.
struct SamplerConfig {
  std::size_t dim = 0;
  std::size_t budget = 0;
  std::optional<std::size_t> stream_length;
  double length_estimate = 0.0;
  double lambda = 1.0;
  std::uint64_t seed = 0;

  void validate() const {
    if (dim == 0) throw InvalidConfig("sampler: dim must be >= 1");
    if (budget == 0) throw InvalidConfig("sampler: budget must be >= 1");
    if (!(lambda > 0.0) || !std::isfinite(lambda)) throw InvalidConfig("sampler: lambda must be > 0");
    if (stream_length) {
      if (*stream_length == 0) throw InvalidConfig("sampler: stream_length must be >= 1");
    } else if (!(length_estimate >= 1.0) || !std::isfinite(length_estimate)) {
      throw InvalidConfig("sampler: unknown stream length needs length_estimate >= 1");
    }
  }
};

/// Remaining budget over remaining observations, the current one
/// included: (k - selected) / max(n - t + 1, 1). Zero once the budget is
/// spent.
inline double adaptive_rate(std::size_t budget, std::size_t selected, std::size_t stream_length,
                            std::size_t t) noexcept {
  if (selected >= budget) return 0.0;
  const double remaining_samples =
      t > stream_length ? 1.0 : std::max(static_cast<double>(stream_length - t + 1), 1.0);
  return static_cast<double>(budget - selected) / remaining_samples;
}

/// Rate for a stream of unknown length: k / estimate, capped by the
/// remaining budget and zero once it is spent.
inline double adaptive_rate_unknown_length(std::size_t budget, std::size_t selected,
                                           double length_estimate) noexcept {
  if (selected >= budget) return 0.0;
  return std::min(static_cast<double>(budget) / length_estimate,
                  static_cast<double>(budget - selected));
}

struct SelectionDecision {
  std::uint64_t t = 0;
  std::uint64_t sample_id = 0;
  double q = 0.0;
  double raw_probability = 0.0;
  double probability = 0.0;
  bool selected = false;

  friend bool operator==(const SelectionDecision&, const SelectionDecision&) = default;
};

struct ProbabilityTerms {
  double raw = 0.0;
  double clamped = 0.0;
  bool nan = false;
};

/// p = q * (tau^T inv tau) / tr(inv A), clamped to [0, 1].
///
/// A trace below 1e-12 gives p = q; a NaN from roundoff gives p = 0 and
/// sets `nan`.
inline ProbabilityTerms sampling_probability(const linalg::SquareMatrix& inv_sigma,
                                             const linalg::SquareMatrix& running_cov,
                                             std::span<const double> tau, double q) {
  linalg::require_same_dim(inv_sigma.dim(), tau.size(), "sampling_probability");
  linalg::require_same_dim(running_cov.dim(), tau.size(), "sampling_probability");
  const linalg::Vector w = linalg::multiply(inv_sigma, tau);
  const double numerator = linalg::dot(tau.data(), w.data(), tau.size());
  const double trace = linalg::dot(inv_sigma.entries(), running_cov.entries());

  ProbabilityTerms p;
  p.raw = trace < 1e-12 ? q : q * numerator / trace;
  if (std::isnan(p.raw)) {
    p.raw = 0.0;
    p.nan = true;
  }
  p.clamped = std::clamp(p.raw, 0.0, 1.0);
  return p;
}

struct SelectedSample {
  std::uint64_t sample_id = 0;
  std::uint64_t t = 0;
  std::optional<std::uint16_t> class_tag;
  linalg::Vector embedding;
  double q = 0.0;
  double probability = 0.0;
};

/// The labeling batch B in selection order.
struct Batch {
  std::size_t budget = 0;
  std::uint64_t observed = 0;
  std::vector<SelectedSample> samples;

  std::size_t size() const noexcept { return samples.size(); }
};

/// Streaming volume sampler for one client.
///
/// Holds the inverse tracking covariance inv(lambda I + sum_B tau tau^T),
/// its Cholesky factor, the running mean of tau tau^T over every
/// observation, and the selected batch. Each observation consumes exactly
/// one uniform draw, whether or not it can be selected.
///
/// Not thread-safe; independent instances share nothing.
class StreamSampler {
 public:
  explicit StreamSampler(SamplerConfig config)
      : config_((config.validate(), config)),
        inv_sigma_(linalg::SquareMatrix::identity(config.dim, 1.0 / config.lambda)),
        factor_(linalg::CholeskyFactor::scaled_identity(config.dim, std::sqrt(config.lambda))),
        running_cov_(config.dim),
        rng_(config.seed) {}

  SelectionDecision observe(const StreamSample& sample) {
    return observe(sample.index, sample.embedding, sample.class_tag);
  }

  SelectionDecision observe(std::uint64_t sample_id, std::span<const double> tau,
                            std::optional<std::uint16_t> class_tag = std::nullopt) {
    if (finalized_) throw std::logic_error("StreamSampler: observe after finalize");
    linalg::require_same_dim(config_.dim, tau.size(), "StreamSampler::observe");
    if (!linalg::all_finite(tau)) throw linalg::NonFiniteValue("StreamSampler: non-finite embedding");

    ++t_;
    update_running_covariance(tau);

    SelectionDecision d;
    d.t = t_;
    d.sample_id = sample_id;
    d.q = current_rate();
    const ProbabilityTerms p = sampling_probability(inv_sigma_, running_cov_, tau, d.q);
    if (p.nan) ++nan_count_;
    d.raw_probability = p.raw;
    d.probability = p.clamped;

    const double u = rng_.uniform();
    if (u < d.probability && selected_.size() < config_.budget) {
      d.selected = true;
      linalg::rank1_update_in_place(factor_, tau);
      inv_sigma_ = linalg::spd_inverse_from_factor(factor_);
      selected_.push_back(SelectedSample{sample_id, t_, class_tag,
                                         linalg::Vector(tau.begin(), tau.end()), d.q,
                                         d.probability});
    }
    return d;
  }

  /// Closes the stream and returns the batch; further observe() calls throw.
  Batch finalize() {
    finalized_ = true;
    return Batch{config_.budget, t_, selected_};
  }

  double current_rate() const noexcept {
    return config_.stream_length
               ? adaptive_rate(config_.budget, selected_.size(), *config_.stream_length, t_)
               : adaptive_rate_unknown_length(config_.budget, selected_.size(),
                                              config_.length_estimate);
  }

  const SamplerConfig& config() const noexcept { return config_; }
  std::uint64_t observed() const noexcept { return t_; }
  std::size_t selected_count() const noexcept { return selected_.size(); }
  const std::vector<SelectedSample>& selected() const noexcept { return selected_; }
  const linalg::SquareMatrix& inverse_tracking_covariance() const noexcept { return inv_sigma_; }
  const linalg::CholeskyFactor& factor() const noexcept { return factor_; }
  const linalg::SquareMatrix& running_covariance() const noexcept { return running_cov_; }
  std::uint64_t nan_count() const noexcept { return nan_count_; }
  bool finalized() const noexcept { return finalized_; }

 private:
  // A_t = ((t-1)/t) A_{t-1} + (1/t) tau tau^T, entrywise.
  void update_running_covariance(std::span<const double> tau) {
    const double keep = static_cast<double>(t_ - 1) / static_cast<double>(t_);
    const double add = 1.0 / static_cast<double>(t_);
    const std::size_t n = config_.dim;
    for (std::size_t i = 0; i < n; ++i) {
      auto row = running_cov_.row(i);
      const double ti = tau[i];
      for (std::size_t j = 0; j < n; ++j) row[j] = keep * row[j] + add * (ti * tau[j]);
    }
  }

  SamplerConfig config_;
  linalg::SquareMatrix inv_sigma_;
  linalg::CholeskyFactor factor_;
  linalg::SquareMatrix running_cov_;
  Xoshiro256 rng_;
  std::uint64_t t_ = 0;
  std::uint64_t nan_count_ = 0;
  std::vector<SelectedSample> selected_;
  bool finalized_ = false;
};

}  // namespace fedsample
