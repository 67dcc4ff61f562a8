// Copyright (c) 2026 the dilattn authors
// SPDX-License-Identifier: Apache-2.0

#include "dilattn/flops.hpp"

#include "dilattn/dilated.hpp"
#include "json.hpp"

namespace dilattn {

double analytic_macs(std::size_t n, std::size_t d,
                     const DilatedConfig& config) {
  double total = 0.0;
  for (const auto& p : config.patterns) {
    const double w = static_cast<double>(p.segment_len);
    const double r = static_cast<double>(p.dilation);
    total += 2.0 * static_cast<double>(n) * static_cast<double>(d) * w / (r * r);
  }
  return total;
}

std::optional<double> analytic_bound(std::size_t n, std::size_t d,
                                     const DilatedConfig& config) {
  if (!config.geo.has_value()) return std::nullopt;
  const double alpha = config.geo->alpha;
  if (alpha <= 1.0) return std::nullopt;  // the series cap needs alpha > 1
  const double w0 = static_cast<double>(config.geo->w0);
  return 2.0 * alpha / (alpha - 1.0) * w0 * static_cast<double>(n) *
         static_cast<double>(d);
}

FlopsReport count_flops(std::size_t n, std::size_t d,
                        const DilatedConfig& config) {
  config.validate();
  if (config.heads == 0 || d % config.heads != 0)
    throw ConfigError("count_flops: d must be divisible by heads");

  FlopsReport report;
  report.n = n;
  report.d = d;
  report.config_summary = config.summary();
  report.analytic_flops = analytic_macs(n, d, config);
  report.bound = analytic_bound(n, d, config);

  // The analytic value is an integer exactly when the ceil in the
  // per-segment row count never rounds: r_i | w_i makes every head's
  // row count w_i/r_i, and w_i | n makes the segment count whole.
  bool exact = true;
  for (const auto& p : config.patterns) {
    if (n % p.segment_len != 0 || p.segment_len % p.dilation != 0) {
      exact = false;
      break;
    }
  }
  if (exact) {
    std::uint64_t total = 0;
    for (const auto& p : config.patterns) {
      const std::uint64_t segments = n / p.segment_len;
      const std::uint64_t rows = p.segment_len / p.dilation;
      total += 2ull * segments * rows * rows * static_cast<std::uint64_t>(d);
    }
    report.analytic_exact_macs = total;
  }

  // Probe pass: values are irrelevant to the counter, so zero inputs
  // keep it cheap. Counting is non-causal; the closed form prices the
  // full rows-x-rows rectangle per segment.
  DilatedConfig probe_config = config;
  probe_config.causal = false;
  Matrix<float> q(n, d), k(n, d), v(n, d);
  MacCounter counter;
  (void)dilated_forward(q, k, v, probe_config, ExecPolicy::parallel, &counter);
  report.measured_macs = counter.macs;
  return report;
}

std::string FlopsReport::to_json() const {
  nlohmann::json j;
  j["measured_macs"] = measured_macs;
  j["analytic_flops"] = analytic_flops;
  if (analytic_exact_macs.has_value())
    j["analytic_exact_macs"] = *analytic_exact_macs;
  else
    j["analytic_exact_macs"] = nullptr;
  if (bound.has_value())
    j["bound"] = *bound;
  else
    j["bound"] = nullptr;
  j["n"] = n;
  j["d"] = d;
  j["config_summary"] = config_summary;
  return j.dump(2);
}

}  // namespace dilattn
