// Copyright (c) 2026 the dilattn authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "dilattn/config.hpp"

namespace dilattn {

/// One benchmark measurement: a kernel at one sequence length. Wall
/// times are the median/min/max over `repeats` timed runs (after
/// warmups); measured_macs comes from an instrumented probe pass with
/// the same shapes, so it is deterministic across runs for equal seeds.
struct BenchRecord {
  std::string kernel;
  std::size_t n{0};
  std::size_t d{0};
  std::size_t heads{1};
  std::size_t world_size{1};
  double wall_ms_med{0.0};
  double wall_ms_min{0.0};
  double wall_ms_max{0.0};
  std::size_t repeats{0};
  std::uint64_t measured_macs{0};
  std::uint64_t seed{0};
};

/// Kernels: "dense" (parallel streaming kernel), "dense_ref" (serial
/// textbook reference), "dilated" (parallel), "dilated_serial". The
/// dilated kernels need a preset token; dense ones ignore it.
struct BenchOptions {
  std::string kernel{"dilated"};
  std::string preset{"geo:256,2"};
  std::vector<std::size_t> n_values;
  std::size_t d{64};
  std::size_t heads{1};
  bool causal{false};
  std::size_t world_size{1};  // > 1 runs the sequence-parallel simulation
  std::size_t repeats{5};
  std::size_t warmups{2};
  std::uint64_t seed{0};
  // Zero-pad an indivisible n up to the next length the schedule
  // accepts. Requires causal masking: end padding sits later in the
  // order than every real row, so masked attention of the real rows is
  // unchanged. Records keep the requested n; timings cover the padded
  // run.
  bool pad{false};
};

/// Run the selected kernel once per requested n. A row that cannot run
/// (indivisible n, bad preset) is reported into `errors` and skipped;
/// the sweep continues. 32-bit arithmetic throughout.
std::vector<BenchRecord> run_benchmark(const BenchOptions& options,
                                       std::vector<std::string>* errors = nullptr);

/// Versioned CSV, one line per record:
/// bench_v1,kernel,n,d,heads,world_size,wall_ms_med,wall_ms_min,
/// wall_ms_max,repeats,measured_macs,seed
std::string records_to_csv(const std::vector<BenchRecord>& records);

/// The same records as a JSON array.
std::string records_to_json(const std::vector<BenchRecord>& records);

/// Least-squares slope of log(y) against log(x); the growth exponent of
/// a runtime curve. Requires >= 2 points with positive coordinates.
double fit_loglog_exponent(const std::vector<std::pair<double, double>>& xy);

}  // namespace dilattn
