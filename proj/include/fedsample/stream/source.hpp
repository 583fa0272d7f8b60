#pragma once

#include <cstddef>
#include <optional>
#include <utility>
#include <vector>

#include "fedsample/stream/sample.hpp"

namespace fedsample {

/// Pull-based sequence of stream samples. Implementations hold O(d)
/// state, never the whole stream, except VectorSource.
class SampleSource {
 public:
  virtual ~SampleSource() = default;

  virtual std::size_t dim() const = 0;
  /// Total number of samples, when the source knows it up front.
  virtual std::optional<std::size_t> length() const = 0;
  /// Writes the next sample into `out`; false at end of stream.
  virtual bool next(StreamSample& out) = 0;
};

class VectorSource final : public SampleSource {
 public:
  VectorSource(std::vector<StreamSample> samples, std::size_t dim)
      : samples_(std::move(samples)), dim_(dim) {}

  std::size_t dim() const override { return dim_; }
  std::optional<std::size_t> length() const override { return samples_.size(); }
  bool next(StreamSample& out) override {
    if (pos_ >= samples_.size()) return false;
    out = samples_[pos_++];
    return true;
  }

 private:
  std::vector<StreamSample> samples_;
  std::size_t dim_;
  std::size_t pos_ = 0;
};

inline std::vector<StreamSample> collect(SampleSource& source) {
  std::vector<StreamSample> out;
  if (auto n = source.length()) out.reserve(*n);
  StreamSample s;
  while (source.next(s)) out.push_back(s);
  return out;
}

}  // namespace fedsample
