// Copyright (c) 2026 the dilattn authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "dilattn/config.hpp"

namespace dilattn {

/// Token-level dependency graph: for each token, the sorted set of
/// tokens it can attend to, unioned over every pattern and head. Built
/// from the same index maps the kernel consumes, so an edge here is
/// exactly a nonzero entry in the structural attention support. Stored
/// in compressed sparse row form.
struct DependencyGraph {
  std::size_t n{0};
  bool causal{false};
  std::vector<std::size_t> row_offsets;  // n + 1
  std::vector<std::size_t> neighbors;    // sorted, unique within a row

  std::size_t degree(std::size_t p) const {
    return row_offsets[p + 1] - row_offsets[p];
  }
  bool has_edge(std::size_t p, std::size_t t) const;
};

/// Union of index-map supports for all (pattern, head) pairs. When
/// `causal`, keeps only edges to positions <= the query position.
DependencyGraph build_dependency_graph(const DilatedConfig& config,
                                       std::size_t n, bool causal);

/// Result of a diameter measurement over the non-causal dependency
/// graph: the minimum number of attention hops connecting the farthest
/// pair of tokens. `infinite` marks a disconnected graph and `witness`
/// then names an unreachable pair; otherwise `witness` attains the
/// diameter. Above `exact_cap` sources are sampled, making `hops` a
/// lower bound (flagged), though disconnection found from any sampled
/// source is still conclusive.
struct PathLengthReport {
  std::size_t n{0};
  bool infinite{false};
  bool lower_bound_only{false};
  std::size_t hops{0};
  std::pair<std::size_t, std::size_t> witness{0, 0};
};

/// All-pairs BFS diameter of the non-causal dependency graph. The
/// graph is built non-causally regardless of config.causal: reach is
/// about how far information can spread per layer, a symmetric notion.
/// n > exact_cap switches to `samples` random BFS sources (seeded).
PathLengthReport max_path_length(const DilatedConfig& config, std::size_t n,
                                 std::size_t exact_cap = 8192,
                                 std::size_t samples = 1024,
                                 std::uint64_t seed = 0x9e3779b9ull);

/// Closed-form cap on the diameter for geometric schedules:
/// ceil(log_alpha(n*(alpha-1)/w0)) + 2. nullopt-like -1 is avoided by
/// requiring geo params; throws ConfigError without them.
std::size_t path_length_bound(const DilatedConfig& config, std::size_t n);

}  // namespace dilattn
