// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <stdexcept>

namespace tsiars::selection {

/// Slot of a pooled length: ceil(log2(length)), with length 1 at slot 0.
/// Slots count from the coarse end, so the same slot means the same temporal
/// granularity no matter how long an epoch's overlap was.
inline std::size_t canonical_index(std::size_t pooled_length) {
  if (pooled_length < 1) throw std::invalid_argument("canonical_index: pooled length must be at least 1");
  std::size_t k = 0;
  while ((std::size_t{1} << k) < pooled_length) ++k;
  return k;
}

}  // namespace tsiars::selection
