// Copyright (c) 2026 the dilattn authors
// SPDX-License-Identifier: Apache-2.0
//
// Benchmark and verification harness. Three modes:
//   bench (default): time a kernel across sequence lengths, emit CSV/JSON
//   --verify:        run the invariant suites, print a pass/fail table
//   --flops/--path:  emit analyzer reports for the requested lengths
// All modes are deterministic for a fixed --seed (wall times aside).

#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "dilattn/benchmark.hpp"
#include "dilattn/distributed.hpp"
#include "dilattn/flops.hpp"
#include "dilattn/pathlen.hpp"
#include "dilattn/verify.hpp"

namespace {

// A schedule without a dilation-1 pattern leaves some query rows with no
// keys at all; that is legal but usually a config mistake, so say so.
void warn_if_partial_coverage(const dilattn::DilatedConfig& config) {
  if (!config.has_full_coverage()) {
    std::cerr << "warning: no pattern has dilation 1; some rows attend to "
                 "nothing and their outputs stay zero ("
              << config.summary() << ")\n";
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dilated attention benchmark & verification harness"};

  dilattn::BenchOptions opt;
  std::string out_format = "csv";
  bool verify = false;
  std::string only;
  double tolerance = -1.0;
  bool flops_mode = false;
  bool path_mode = false;
  std::string transcript_path;

  app.add_option("--kernel", opt.kernel,
                 "Kernel to benchmark: dense, dense_ref (serial reference), "
                 "dilated, dilated_serial")
      ->check(CLI::IsMember({"dense", "dense_ref", "dilated", "dilated_serial"}))
      ->capture_default_str();
  app.add_option("--preset", opt.preset,
                 "Pattern schedule: longnet-32k, geo:w0,alpha, or file:path")
      ->capture_default_str();
  app.add_option("--n", opt.n_values, "Sequence lengths (comma separated)")
      ->delimiter(',');
  app.add_option("--d", opt.d, "Total feature width")->capture_default_str();
  app.add_option("--heads", opt.heads, "Attention heads")->capture_default_str();
  app.add_flag("--causal", opt.causal, "Apply causal masking");
  app.add_option("--world-size", opt.world_size,
                 "Virtual devices for the sequence-parallel simulation")
      ->capture_default_str();
  app.add_option("--repeats", opt.repeats, "Timed repeats per case (>= 3)")
      ->capture_default_str();
  app.add_option("--warmups", opt.warmups, "Untimed warmup runs per case")
      ->capture_default_str();
  app.add_option("--seed", opt.seed, "RNG seed for benchmark inputs")
      ->capture_default_str();
  app.add_flag("--pad", opt.pad,
               "Zero-pad each n up to the next length the schedule accepts "
               "(requires --causal, which masks the padding out of the real "
               "rows; timings cover the padded length)");
  app.add_option("--out", out_format, "Benchmark output format")
      ->check(CLI::IsMember({"csv", "json"}))
      ->capture_default_str();

  auto* verify_flag =
      app.add_flag("--verify", verify,
                   "Run the invariant suites instead of benchmarking "
                   "(dense, mixture, gradient, flops, path, distributed; "
                   "the runtime suite only via --only runtime)");
  app.add_option("--only", only,
                 "Restrict --verify to one suite: dense, mixture, gradient, "
                 "flops, path, distributed, runtime")
      ->needs(verify_flag);
  app.add_option("--tolerance", tolerance,
                 "Override the floating-point comparison thresholds in "
                 "--verify (0 demands exact equality)");

  app.add_flag("--flops", flops_mode,
               "Emit the cost-model report (JSON) for each --n instead of "
               "benchmarking");
  app.add_flag("--path", path_mode,
               "Emit the dependency-graph diameter (JSON) for each --n "
               "instead of benchmarking");
  app.add_option("--transcript", transcript_path,
                 "With --world-size > 1: write the communication transcript "
                 "(JSON lines) of one forward pass per --n to this file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (verify) {
      dilattn::VerifyOptions vopt;
      vopt.only = only;
      vopt.tolerance_override = tolerance;
      const auto results = dilattn::run_verification(vopt);
      std::cout << dilattn::format_report(results);
      return dilattn::all_passed(results) ? 0 : 1;
    }

    if (opt.n_values.empty()) {
      std::cerr << "error: --n is required outside --verify\n";
      return 2;
    }

    // One warning per invocation if the schedule never reaches some rows.
    for (const std::size_t n : opt.n_values) {
      try {
        warn_if_partial_coverage(
            dilattn::parse_preset(opt.preset, n, opt.heads, opt.causal));
        break;
      } catch (const dilattn::ConfigError&) {
        // this n is inadmissible; the mode below reports it properly
      }
    }

    if (flops_mode) {
      for (const std::size_t n : opt.n_values) {
        const auto config =
            dilattn::parse_preset(opt.preset, n, opt.heads, opt.causal);
        std::cout << dilattn::count_flops(n, opt.d, config).to_json() << '\n';
      }
      return 0;
    }

    if (path_mode) {
      for (const std::size_t n : opt.n_values) {
        const auto config =
            dilattn::parse_preset(opt.preset, n, opt.heads, opt.causal);
        const auto rep = dilattn::max_path_length(config, n);
        std::cout << "{\"n\": " << rep.n << ", \"infinite\": "
                  << (rep.infinite ? "true" : "false")
                  << ", \"hops\": " << rep.hops << ", \"lower_bound_only\": "
                  << (rep.lower_bound_only ? "true" : "false");
        if (config.geo.has_value())
          std::cout << ", \"bound\": " << dilattn::path_length_bound(config, n);
        std::cout << "}\n";
      }
      return 0;
    }

    if (!transcript_path.empty()) {
      if (opt.world_size < 2) {
        std::cerr << "error: --transcript needs --world-size > 1\n";
        return 2;
      }
      dilattn::CommTranscript transcript;
      for (const std::size_t n : opt.n_values) {
        const auto config =
            dilattn::parse_preset(opt.preset, n, opt.heads, opt.causal);
        dilattn::MatrixF q(n, opt.d), k(n, opt.d), v(n, opt.d);
        const auto shards = dilattn::shard_qkv(q, k, v, opt.world_size);
        (void)dilattn::distributed_dilated_forward(shards, config, &transcript);
      }
      std::ofstream file(transcript_path);
      if (!file) {
        std::cerr << "error: cannot write " << transcript_path << '\n';
        return 2;
      }
      file << transcript.to_jsonl();
      return 0;
    }

    std::vector<std::string> errors;
    const auto records = dilattn::run_benchmark(opt, &errors);
    for (const auto& e : errors)
      std::cerr << "bench error (row skipped): " << e << '\n';
    if (out_format == "json")
      std::cout << dilattn::records_to_json(records) << '\n';
    else
      std::cout << dilattn::records_to_csv(records);
    return records.empty() ? 1 : 0;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
}
