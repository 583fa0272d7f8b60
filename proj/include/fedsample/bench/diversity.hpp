#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "fedsample/bench/records.hpp"
#include "fedsample/linalg/cholesky.hpp"
#include "fedsample/sampler/sampler.hpp"
#include "fedsample/stream/client.hpp"
#include "fedsample/stream/drift.hpp"

namespace fedsample::bench {

struct DiversitySpec {
  DriftStreamSpec stream;
  std::size_t budget = 60;
  double lambda = 1.0;
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
};

struct BatchQuality {
  std::size_t fill = 0;
  double fill_ratio = 0.0;
  double class_coverage = 0.0;
  /// log det(lambda I + sum_B tau tau^T).
  double log_volume = 0.0;
};

struct DiversityRow {
  std::uint64_t seed = 0;
  BatchQuality sampler;
  BatchQuality random;
};

struct DiversityResult {
  std::vector<DiversityRow> rows;
  BatchQuality sampler_mean;
  BatchQuality random_mean;
};

inline double log_volume(const std::vector<linalg::Vector>& batch, std::size_t dim, double lambda) {
  linalg::SquareMatrix gram = linalg::SquareMatrix::identity(dim, lambda);
  for (const auto& tau : batch) linalg::add_outer_product(gram, tau);
  return linalg::cholesky_decompose(gram).log_determinant();
}

inline BatchQuality batch_quality(const std::vector<linalg::Vector>& embeddings,
                                  const std::vector<std::uint16_t>& tags, std::size_t budget,
                                  std::size_t num_classes, std::size_t dim, double lambda) {
  BatchQuality q;
  q.fill = embeddings.size();
  q.fill_ratio = static_cast<double>(q.fill) / static_cast<double>(budget);
  q.class_coverage = static_cast<double>(std::set<std::uint16_t>(tags.begin(), tags.end()).size()) /
                     static_cast<double>(num_classes);
  q.log_volume = log_volume(embeddings, dim, lambda);
  return q;
}

/// Runs the volume sampler and a size-matched uniform random baseline over
/// the same drifting stream for every seed.
///
/// The baseline keeps a reservoir of `budget` samples in the same single
/// pass, then takes a uniformly random subset of the sampler's batch size,
/// which is a uniform subset of the whole stream.
inline DiversityResult diversity_experiment(const DiversitySpec& spec) {
  DiversityResult result;
  for (std::uint64_t seed : spec.seeds) {
    DriftStreamSpec stream_spec = spec.stream;
    stream_spec.seed = derive_seed(seed, "diversity/stream");
    DriftStream stream(stream_spec);

    SamplerConfig config;
    config.dim = stream_spec.dim;
    config.budget = spec.budget;
    config.stream_length = stream_spec.length;
    config.lambda = spec.lambda;
    config.seed = derive_seed(seed, "diversity/sampler");
    StreamSampler sampler(config);

    Xoshiro256 baseline_rng(derive_seed(seed, "diversity/baseline"));
    std::vector<StreamSample> reservoir;
    reservoir.reserve(spec.budget);

    StreamSample s;
    std::uint64_t seen = 0;
    while (stream.next(s)) {
      sampler.observe(s);
      ++seen;
      if (reservoir.size() < spec.budget) {
        reservoir.push_back(s);
      } else {
        const std::uint64_t j = baseline_rng.below(seen);
        if (j < spec.budget) reservoir[j] = s;
      }
    }
    const Batch batch = sampler.finalize();

    for (std::size_t i = 0; i < batch.size() && i < reservoir.size(); ++i) {
      const std::size_t j = i + baseline_rng.below(reservoir.size() - i);
      std::swap(reservoir[i], reservoir[j]);
    }
    reservoir.resize(std::min(batch.size(), reservoir.size()));

    std::vector<linalg::Vector> sel_emb, rnd_emb;
    std::vector<std::uint16_t> sel_tags, rnd_tags;
    for (const auto& b : batch.samples) {
      sel_emb.push_back(b.embedding);
      if (b.class_tag) sel_tags.push_back(*b.class_tag);
    }
    for (const auto& r : reservoir) {
      rnd_emb.push_back(r.embedding);
      if (r.class_tag) rnd_tags.push_back(*r.class_tag);
    }

    DiversityRow row;
    row.seed = seed;
    row.sampler = batch_quality(sel_emb, sel_tags, spec.budget, stream_spec.num_classes,
                                stream_spec.dim, spec.lambda);
    row.random = batch_quality(rnd_emb, rnd_tags, spec.budget, stream_spec.num_classes,
                               stream_spec.dim, spec.lambda);
    result.rows.push_back(row);
  }

  const double n = static_cast<double>(result.rows.size());
  for (const auto& r : result.rows) {
    result.sampler_mean.fill_ratio += r.sampler.fill_ratio / n;
    result.sampler_mean.class_coverage += r.sampler.class_coverage / n;
    result.sampler_mean.log_volume += r.sampler.log_volume / n;
    result.random_mean.fill_ratio += r.random.fill_ratio / n;
    result.random_mean.class_coverage += r.random.class_coverage / n;
    result.random_mean.log_volume += r.random.log_volume / n;
  }
  result.sampler_mean.fill = static_cast<std::size_t>(std::lround(result.sampler_mean.fill_ratio * spec.budget));
  result.random_mean.fill = static_cast<std::size_t>(std::lround(result.random_mean.fill_ratio * spec.budget));
  return result;
}

/// Diversity rows as experiment records: one record per (seed, method,
/// metric), the metric index stored in `iteration` (0 fill ratio,
/// 1 class coverage, 2 log volume).
inline std::vector<ExperimentRecord> diversity_records(const DiversityResult& r, std::size_t dim) {
  std::vector<ExperimentRecord> out;
  for (const auto& row : r.rows) {
    for (const auto& [name, q] : {std::pair{"volume", row.sampler}, std::pair{"random", row.random}}) {
      out.push_back({"diversity", name, dim, 0, q.fill_ratio, row.seed, 0, false});
      out.push_back({"diversity", name, dim, 1, q.class_coverage, row.seed, 0, false});
      out.push_back({"diversity", name, dim, 2, q.log_volume, row.seed, 0, false});
    }
  }
  return out;
}

}  // namespace fedsample::bench
