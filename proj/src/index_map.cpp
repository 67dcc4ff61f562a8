// Copyright (c) 2026 the dilattn authors
// SPDX-License-Identifier: Apache-2.0

#include "dilattn/index_map.hpp"

#include <string>

namespace dilattn {

std::vector<SparseIndexMap> build_index_maps(const DilatedConfig& config,
                                             std::size_t n,
                                             std::size_t pattern_index,
                                             std::size_t head) {
  if (pattern_index >= config.patterns.size())
    throw ConfigError("index maps: pattern index out of range");
  if (head >= config.heads)
    throw ConfigError("index maps: head index out of range");

  const Pattern& pat = config.patterns[pattern_index];
  const std::size_t w = pat.segment_len;
  const std::size_t r = pat.dilation;
  if (n == 0 || n % w != 0)
    throw ConfigError("index maps: sequence length " + std::to_string(n) +
                      " is not divisible by segment length " +
                      std::to_string(w) + " (pattern " +
                      std::to_string(pattern_index) + ", w=" +
                      std::to_string(w) + ", r=" + std::to_string(r) + ")");

  const std::size_t offset = head % r;
  const std::size_t num_segments = n / w;

  std::vector<SparseIndexMap> maps;
  maps.reserve(num_segments);
  for (std::size_t seg = 0; seg < num_segments; ++seg) {
    SparseIndexMap map{pattern_index, seg, offset, {}};
    const std::size_t base = seg * w;
    map.positions.reserve((w - offset + r - 1) / r);
    for (std::size_t local = offset; local < w; local += r)
      map.positions.push_back(base + local);
    maps.push_back(std::move(map));
  }
  return maps;
}

}  // namespace dilattn
