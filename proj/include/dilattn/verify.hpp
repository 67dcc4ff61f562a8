// Copyright (c) 2026 the dilattn authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

namespace dilattn {

/// One verification check: an observed worst-case value against its
/// threshold. `observed <= threshold` must hold for a pass (checks that
/// assert equality or structure report observed 0 or 1 accordingly).
struct CheckResult {
  std::string suite;
  std::string name;
  bool pass{false};
  double observed{0.0};
  double threshold{0.0};
  std::string detail;
};

/// Suite selection and tolerance control for run_verification.
/// Suites: dense, mixture, gradient, flops, path, distributed, runtime.
/// `only` empty runs every suite except runtime (that one benchmarks
/// 32K-token kernels and takes minutes; select it explicitly or set
/// include_runtime). tolerance_override >= 0 replaces every
/// floating-point comparison threshold — 0 demands exact equality and
/// is expected to fail, which is itself a useful smoke test of the
/// harness.
struct VerifyOptions {
  std::string only;
  double tolerance_override{-1.0};
  bool include_runtime{false};
};

std::vector<CheckResult> run_verification(const VerifyOptions& options);

bool all_passed(const std::vector<CheckResult>& results);

/// Fixed-width pass/fail table with one line per check plus a summary
/// trailer line.
std::string format_report(const std::vector<CheckResult>& results);

}  // namespace dilattn
