#pragma once

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <set>
#include <vector>

#include "fedsample/sampler/sampler.hpp"
#include "fedsample/stream/source.hpp"

namespace fedsample {

struct ClientSummary {
  std::uint64_t observed = 0;
  std::size_t selected = 0;
  std::size_t budget = 0;
  double fill_ratio = 0.0;
  /// Distinct class tags in the batch, when the stream carries tags.
  std::optional<std::size_t> distinct_classes;
  /// distinct_classes over the class count (given, or else seen in the stream).
  std::optional<double> class_coverage;
  std::uint64_t nan_count = 0;
  double elapsed_seconds = 0.0;
};

struct ClientReport {
  std::uint32_t client_id = 0;
  Batch batch;
  std::vector<SelectionDecision> trace;
  ClientSummary summary;
};

struct ClientRunOptions {
  /// Keep every decision in ClientReport::trace. Turn off for long streams
  /// and use on_decision to spill the trace instead.
  bool keep_trace = true;
  std::function<void(const SelectionDecision&)> on_decision;
  std::optional<std::size_t> num_classes;
};

/// Distinct tags in `batch` over `num_classes`.
inline double class_coverage(const Batch& batch, std::size_t num_classes) {
  std::set<std::uint16_t> tags;
  for (const auto& s : batch.samples)
    if (s.class_tag) tags.insert(*s.class_tag);
  return num_classes == 0 ? 0.0 : static_cast<double>(tags.size()) / static_cast<double>(num_classes);
}

/// Feeds every sample of `source` through one sampler, in order.
/// Throws DimensionMismatch before reading anything if the source's
/// dimension differs from config.dim.
inline ClientReport run_client(SampleSource& source, const SamplerConfig& config,
                               std::uint32_t client_id, const ClientRunOptions& options = {}) {
  linalg::require_same_dim(config.dim, source.dim(), "run_client: stream vs sampler");
  const auto start = std::chrono::steady_clock::now();

  StreamSampler sampler(config);
  ClientReport report;
  report.client_id = client_id;

  std::set<std::uint16_t> seen_tags;
  bool tagged = false;
  StreamSample s;
  while (source.next(s)) {
    const SelectionDecision d = sampler.observe(s);
    if (s.class_tag) {
      tagged = true;
      seen_tags.insert(*s.class_tag);
    }
    if (options.on_decision) options.on_decision(d);
    if (options.keep_trace) report.trace.push_back(d);
  }
  report.batch = sampler.finalize();

  ClientSummary& sum = report.summary;
  sum.observed = sampler.observed();
  sum.selected = report.batch.size();
  sum.budget = config.budget;
  sum.fill_ratio = static_cast<double>(sum.selected) / static_cast<double>(config.budget);
  sum.nan_count = sampler.nan_count();
  if (tagged) {
    std::set<std::uint16_t> batch_tags;
    for (const auto& b : report.batch.samples)
      if (b.class_tag) batch_tags.insert(*b.class_tag);
    sum.distinct_classes = batch_tags.size();
    const std::size_t classes = options.num_classes.value_or(seen_tags.size());
    sum.class_coverage = class_coverage(report.batch, classes);
  }
  sum.elapsed_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

}  // namespace fedsample
