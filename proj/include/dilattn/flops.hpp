// Copyright (c) 2026 the dilattn authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "dilattn/config.hpp"

namespace dilattn {

/// Cost-model report for one (n, d, config) combination. measured_macs
/// comes from the instrumented kernels (one MAC per scalar product term
/// in the score and value contractions; softmax and mixture arithmetic
/// excluded). analytic_flops is the closed-form prediction
/// sum_i 2*n*d*w_i/r_i^2, in the same MAC units. When every segment
/// length divides n and every dilation divides its segment length, the
/// analytic value is an integer and the two must agree exactly;
/// analytic_exact_macs carries that integer. bound is the geometric
/// -series cap 2*alpha/(alpha-1) * w0 * n * d, present only for configs
/// built from a geometric schedule.
struct FlopsReport {
  std::uint64_t measured_macs{0};
  double analytic_flops{0.0};
  std::optional<std::uint64_t> analytic_exact_macs;
  std::optional<double> bound;
  std::size_t n{0};
  std::size_t d{0};
  std::string config_summary;

  std::string to_json() const;
};

/// Run an instrumented (non-causal) forward pass of dilated attention
/// on throwaway inputs of shape [n x d] and compare the counter against
/// the closed form. The probe is non-causal because the model counts
/// the full per-segment rectangle; a causal flag on the config is
/// ignored here. d must be divisible by config.heads.
FlopsReport count_flops(std::size_t n, std::size_t d,
                        const DilatedConfig& config);

/// The closed-form MAC count alone: sum_i 2*n*d*w_i/r_i^2.
double analytic_macs(std::size_t n, std::size_t d,
                     const DilatedConfig& config);

/// 2*alpha/(alpha-1) * w0 * n * d, the series cap for geometric
/// schedules; nullopt when the config does not carry one.
std::optional<double> analytic_bound(std::size_t n, std::size_t d,
                                     const DilatedConfig& config);

}  // namespace dilattn
