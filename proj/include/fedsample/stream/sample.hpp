#pragma once

#include <cstdint>
#include <optional>

#include "fedsample/linalg/matrix.hpp"

namespace fedsample {

/// One stream observation: position, embedding, and an optional class tag
/// that only evaluation code looks at.
struct StreamSample {
  std::uint64_t index = 0;
  linalg::Vector embedding;
  std::optional<std::uint16_t> class_tag;
  std::uint32_t client_id = 0;

  friend bool operator==(const StreamSample&, const StreamSample&) = default;
};

}  // namespace fedsample
