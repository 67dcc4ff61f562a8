// Copyright (c) 2026 the dilattn authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <vector>

#include "dilattn/config.hpp"

namespace dilattn {

/// The original sequence positions selected for one (pattern, segment,
/// head offset). positions = {i*w + s + m*r : m >= 0} within the
/// segment [i*w, (i+1)*w), ascending; |positions| = ceil((w - s) / r).
struct SparseIndexMap {
  std::size_t pattern_index;
  std::size_t segment_index;
  std::size_t head_offset;  // s_j = j mod r
  std::vector<std::size_t> positions;
};

/// One map per segment (n / w of them) for the given pattern and head.
/// Throws ConfigError, naming the pattern, when w does not divide n.
std::vector<SparseIndexMap> build_index_maps(const DilatedConfig& config,
                                             std::size_t n,
                                             std::size_t pattern_index,
                                             std::size_t head);

}  // namespace dilattn
