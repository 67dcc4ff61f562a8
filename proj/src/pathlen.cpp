// Copyright (c) 2026 the dilattn authors
// SPDX-License-Identifier: Apache-2.0

#include "dilattn/pathlen.hpp"

#include <algorithm>
#include <cmath>
#include <queue>
#include <random>

#include "dilattn/index_map.hpp"

namespace dilattn {

bool DependencyGraph::has_edge(std::size_t p, std::size_t t) const {
  const auto begin = neighbors.begin() + static_cast<std::ptrdiff_t>(row_offsets[p]);
  const auto end = neighbors.begin() + static_cast<std::ptrdiff_t>(row_offsets[p + 1]);
  return std::binary_search(begin, end, t);
}

DependencyGraph build_dependency_graph(const DilatedConfig& config,
                                       std::size_t n, bool causal) {
  config.validate();
  std::vector<std::vector<std::size_t>> adj(n);
  for (std::size_t i = 0; i < config.patterns.size(); ++i) {
    // Offsets repeat with period r, so only the distinct offsets
    // contribute distinct maps.
    const std::size_t distinct_offsets =
        std::min<std::size_t>(config.heads, config.patterns[i].dilation);
    for (std::size_t h = 0; h < distinct_offsets; ++h) {
      for (const auto& map : build_index_maps(config, n, i, h)) {
        for (const std::size_t p : map.positions) {
          for (const std::size_t t : map.positions) {
            if (causal && t > p) continue;
            adj[p].push_back(t);
          }
        }
      }
    }
  }

  DependencyGraph g;
  g.n = n;
  g.causal = causal;
  g.row_offsets.assign(n + 1, 0);
  for (std::size_t p = 0; p < n; ++p) {
    auto& row = adj[p];
    std::sort(row.begin(), row.end());
    row.erase(std::unique(row.begin(), row.end()), row.end());
    g.row_offsets[p + 1] = g.row_offsets[p] + row.size();
  }
  g.neighbors.reserve(g.row_offsets[n]);
  for (const auto& row : adj)
    g.neighbors.insert(g.neighbors.end(), row.begin(), row.end());
  return g;
}

namespace {

// BFS from `source`; returns the eccentricity and the farthest node,
// or marks `unreachable` with an unvisited node if one exists.
struct BfsResult {
  std::size_t ecc{0};
  std::size_t farthest{0};
  bool disconnected{false};
  std::size_t unreachable{0};
};

BfsResult bfs_eccentricity(const DependencyGraph& g, std::size_t source,
                           std::vector<std::uint32_t>& dist) {
  constexpr std::uint32_t kUnseen = 0xffffffffu;
  dist.assign(g.n, kUnseen);
  std::vector<std::size_t> frontier{source};
  dist[source] = 0;
  std::uint32_t level = 0;
  std::size_t visited = 1;
  std::size_t last = source;
  while (!frontier.empty()) {
    std::vector<std::size_t> next;
    for (const std::size_t p : frontier) {
      for (std::size_t e = g.row_offsets[p]; e < g.row_offsets[p + 1]; ++e) {
        const std::size_t t = g.neighbors[e];
        if (dist[t] != kUnseen) continue;
        dist[t] = level + 1;
        next.push_back(t);
        ++visited;
        last = t;
      }
    }
    if (!next.empty()) ++level;
    frontier = std::move(next);
  }

  BfsResult res;
  res.ecc = level;
  res.farthest = last;
  if (visited != g.n) {
    res.disconnected = true;
    for (std::size_t t = 0; t < g.n; ++t) {
      if (dist[t] == kUnseen) {
        res.unreachable = t;
        break;
      }
    }
  }
  return res;
}

}  // namespace

PathLengthReport max_path_length(const DilatedConfig& config, std::size_t n,
                                 std::size_t exact_cap, std::size_t samples,
                                 std::uint64_t seed) {
  const DependencyGraph g = build_dependency_graph(config, n, /*causal=*/false);

  PathLengthReport report;
  report.n = n;

  std::vector<std::size_t> sources;
  if (n <= exact_cap) {
    sources.resize(n);
    for (std::size_t i = 0; i < n; ++i) sources[i] = i;
  } else {
    report.lower_bound_only = true;
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    sources.resize(samples);
    for (auto& s : sources) s = pick(rng);
    std::sort(sources.begin(), sources.end());
    sources.erase(std::unique(sources.begin(), sources.end()), sources.end());
  }

  std::vector<std::uint32_t> dist;
  for (const std::size_t s : sources) {
    const BfsResult res = bfs_eccentricity(g, s, dist);
    if (res.disconnected) {
      // The graph is undirected, so any unreachable node settles it.
      report.infinite = true;
      report.witness = {s, res.unreachable};
      return report;
    }
    if (res.ecc > report.hops) {
      report.hops = res.ecc;
      report.witness = {s, res.farthest};
    }
  }
  return report;
}

std::size_t path_length_bound(const DilatedConfig& config, std::size_t n) {
  if (!config.geo.has_value())
    throw ConfigError("path_length_bound: config has no geometric schedule");
  const double alpha = config.geo->alpha;
  const double w0 = static_cast<double>(config.geo->w0);
  if (alpha <= 1.0)
    throw ConfigError("path_length_bound: schedule growth factor must be > 1");
  const double arg = static_cast<double>(n) * (alpha - 1.0) / w0;
  const double hops = std::ceil(std::log(arg) / std::log(alpha));
  return static_cast<std::size_t>(std::max(0.0, hops)) + 2;
}

}  // namespace dilattn
