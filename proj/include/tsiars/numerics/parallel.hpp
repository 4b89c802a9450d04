// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <functional>

namespace tsiars::numerics {

/// Worker count used by intra-op loops. Defaults to 1.
void set_num_threads(std::size_t n);
std::size_t num_threads();

/// Runs body(i) for i in [0, n). Work items must write disjoint outputs;
/// callers reduce per-item partials in index order so results do not depend
/// on the thread count.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace tsiars::numerics
