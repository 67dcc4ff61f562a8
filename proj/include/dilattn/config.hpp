// Copyright (c) 2026 the dilattn authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "dilattn/matrix.hpp"

namespace dilattn {

/// One attention pattern: contiguous segments of `segment_len` tokens,
/// subsampled at stride `dilation` within each segment.
struct Pattern {
  std::size_t segment_len;  // w
  std::size_t dilation;     // r
};

/// Softmax temperature. rsqrt_head_dim resolves to 1/sqrt(d_head) at
/// kernel entry; every kernel and oracle resolves it the same way so
/// equivalence checks stay scale-consistent.
struct ScaleSpec {
  enum class Kind { rsqrt_head_dim, fixed };
  Kind kind{Kind::rsqrt_head_dim};
  double value{0.0};

  static ScaleSpec rsqrt() { return {}; }
  static ScaleSpec fixed(double v) {
    return {Kind::fixed, v};
  }

  template <typename T>
  T resolve(std::size_t head_dim) const {
    if (kind == Kind::rsqrt_head_dim)
      return T(1) / std::sqrt(static_cast<T>(head_dim));
    return static_cast<T>(value);
  }
};

/// Parameters of the geometric schedule a config was built from, kept
/// so the cost model can evaluate its closed-form bound.
struct GeoParams {
  std::size_t w0;
  double alpha;
};

/// Validated pattern list plus head count, causal flag and scale.
///
/// Hard requirements: at least one pattern, segment lengths strictly
/// increasing, dilations non-decreasing, 1 <= r_i <= w_i, heads >= 1.
/// A leading dilation of 1 is what guarantees full row coverage; its
/// absence is legal (handy for exercising single patterns) but flagged
/// via has_full_coverage().
struct DilatedConfig {
  std::vector<Pattern> patterns;
  std::size_t heads{1};
  bool causal{false};
  ScaleSpec scale{};
  std::optional<GeoParams> geo{};

  DilatedConfig() = default;
  DilatedConfig(std::vector<Pattern> pats, std::size_t heads_, bool causal_,
                ScaleSpec scale_ = {});

  void validate() const;
  bool has_full_coverage() const {
    return !patterns.empty() && patterns.front().dilation == 1;
  }

  /// Per-head offset for pattern i and head j: s_j = j mod r_i.
  std::size_t head_offset(std::size_t pattern, std::size_t head) const {
    return head % patterns[pattern].dilation;
  }

  std::string summary() const;
};

/// Geometric schedule: w = {w0, w0*alpha, ...} clamped so the last
/// entry equals n (deduplicated), r = {1, alpha, alpha^2, ...} aligned
/// index-wise with each r_i capped at w_i. Non-integral terms are a
/// configuration error.
DilatedConfig geometric_preset(std::size_t w0, double alpha, std::size_t n,
                               std::size_t heads = 1, bool causal = false,
                               ScaleSpec scale = {});

/// Fixed 32K-token schedule: w = {2048, 4096, 8192, 16384, 32768},
/// r = {1, 2, 4, 6, 12}.
DilatedConfig longnet_32k_preset(std::size_t heads = 1, bool causal = false,
                                 ScaleSpec scale = {});

/// Parse a JSON config document:
///   { "patterns": [[w, r], ...], "heads": h, "causal": bool,
///     "scale": "rsqrt_d" | number }
/// heads/causal/scale are optional (1, false, "rsqrt_d").
DilatedConfig parse_config_json(const std::string& text);

DilatedConfig load_config_file(const std::string& path);

std::string config_to_json(const DilatedConfig& config);

/// Resolve a preset token: "longnet-32k", "geo:w0,alpha" (needs n), or
/// "file:path". Head count / causal / scale apply to the named presets;
/// a file config carries its own.
DilatedConfig parse_preset(const std::string& token, std::size_t n,
                           std::size_t heads = 1, bool causal = false,
                           ScaleSpec scale = {});

}  // namespace dilattn
