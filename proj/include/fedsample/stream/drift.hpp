#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "fedsample/sampler/rng.hpp"
#include "fedsample/stream/source.hpp"

namespace fedsample {

struct InvalidSpec : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Synthetic non-i.i.d. embedding stream.
///
/// Class c has a unit-norm mean mu_c and a unit drift direction delta_c.
/// Sample n of class c is
///   mu_c + drift * n * delta_c + (noise / sqrt(dim)) * z,  z ~ N(0, I),
/// rounded to float32 precision, so the noise vector has norm ~ noise.
///
/// Arrival is block-skewed: with probability `skew` the next sample keeps
/// the previous class, otherwise a class is drawn with weight
/// (c + 1)^(-2 skew). skew = 0 gives i.i.d. uniform classes; larger values
/// give longer runs and rarer high-index classes.
struct DriftStreamSpec {
  std::size_t dim = 64;
  std::size_t num_classes = 10;
  std::size_t length = 10000;
  double skew = 0.9;
  double drift = 1e-4;
  double noise = 0.5;
  std::uint64_t seed = 0;
  std::uint32_t client_id = 0;

  void validate() const {
    if (dim == 0) throw InvalidSpec("drift stream: dim must be >= 1");
    if (num_classes < 2) throw InvalidSpec("drift stream: need at least 2 classes");
    if (num_classes > 65535) throw InvalidSpec("drift stream: class tags are 16-bit");
    if (length == 0) throw InvalidSpec("drift stream: length must be >= 1");
    if (!(skew >= 0.0 && skew < 1.0)) throw InvalidSpec("drift stream: skew must be in [0, 1)");
    if (!(drift >= 0.0) || !std::isfinite(drift)) throw InvalidSpec("drift stream: drift must be >= 0");
    if (!(noise > 0.0) || !std::isfinite(noise)) throw InvalidSpec("drift stream: noise must be > 0");
  }
};

class DriftStream final : public SampleSource {
 public:
  explicit DriftStream(const DriftStreamSpec& spec)
      : spec_((spec.validate(), spec)), rng_(derive_seed(spec.seed, "drift/stream")) {
    Xoshiro256 geometry(derive_seed(spec.seed, "drift/geometry"));
    means_ = random_unit_rows(geometry, spec.num_classes, spec.dim);
    directions_ = random_unit_rows(geometry, spec.num_classes, spec.dim);

    cumulative_.resize(spec.num_classes);
    double total = 0.0;
    for (std::size_t c = 0; c < spec.num_classes; ++c) {
      total += std::pow(static_cast<double>(c + 1), -2.0 * spec.skew);
      cumulative_[c] = total;
    }
    for (double& w : cumulative_) w /= total;
  }

  std::size_t dim() const override { return spec_.dim; }
  std::optional<std::size_t> length() const override { return spec_.length; }

  bool next(StreamSample& out) override {
    if (index_ >= spec_.length) return false;
    if (index_ == 0 || rng_.uniform() >= spec_.skew) current_class_ = draw_class();

    const std::size_t d = spec_.dim;
    const double shift = spec_.drift * static_cast<double>(index_);
    const double sigma = spec_.noise / std::sqrt(static_cast<double>(d));
    const double* mu = &means_[current_class_ * d];
    const double* dir = &directions_[current_class_ * d];
    out.embedding.resize(d);
    for (std::size_t j = 0; j < d; ++j) {
      const double x = mu[j] + shift * dir[j] + sigma * rng_.normal();
      out.embedding[j] = static_cast<double>(static_cast<float>(x));
    }
    out.index = index_;
    out.class_tag = static_cast<std::uint16_t>(current_class_);
    out.client_id = spec_.client_id;
    ++index_;
    return true;
  }

  const DriftStreamSpec& spec() const noexcept { return spec_; }

 private:
  static std::vector<double> random_unit_rows(Xoshiro256& rng, std::size_t rows, std::size_t d) {
    std::vector<double> m(rows * d);
    for (std::size_t r = 0; r < rows; ++r) {
      double norm2 = 0.0;
      for (std::size_t j = 0; j < d; ++j) {
        m[r * d + j] = rng.normal();
        norm2 += m[r * d + j] * m[r * d + j];
      }
      const double inv = 1.0 / std::sqrt(norm2);
      for (std::size_t j = 0; j < d; ++j) m[r * d + j] *= inv;
    }
    return m;
  }

  std::size_t draw_class() {
    const double u = rng_.uniform();
    for (std::size_t c = 0; c + 1 < cumulative_.size(); ++c) {
      if (u < cumulative_[c]) return c;
    }
    return cumulative_.size() - 1;
  }

  DriftStreamSpec spec_;
  Xoshiro256 rng_;
  std::vector<double> means_;
  std::vector<double> directions_;
  std::vector<double> cumulative_;
  std::size_t index_ = 0;
  std::size_t current_class_ = 0;
};

inline std::vector<StreamSample> generate_drift_stream(const DriftStreamSpec& spec) {
  DriftStream stream(spec);
  return collect(stream);
}

}  // namespace fedsample
