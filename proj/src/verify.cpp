// Copyright (c) 2026 the dilattn authors
// SPDX-License-Identifier: Apache-2.0

#include "dilattn/verify.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>
#include <sstream>

#include "dilattn/benchmark.hpp"
#include "dilattn/dilated.hpp"
#include "dilattn/distributed.hpp"
#include "dilattn/flops.hpp"
#include "dilattn/pathlen.hpp"
#include "dilattn/reference.hpp"

namespace dilattn {

namespace {

double tol_or(const VerifyOptions& opt, double fallback) {
  return opt.tolerance_override >= 0.0 ? opt.tolerance_override : fallback;
}

MatrixD random_matrix(std::size_t rows, std::size_t cols,
                      std::mt19937_64& rng) {
  MatrixD m(rows, cols);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  for (double& x : m.data) x = dist(rng);
  return m;
}

double max_abs_diff(const MatrixD& a, const MatrixD& b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i)
    worst = std::max(worst, std::abs(a.data[i] - b.data[i]));
  return worst;
}

// lse columns hold -inf on uncovered rows; treat matching -inf as zero
// deviation.
double max_abs_diff_lse(const MatrixD& a, const MatrixD& b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    const double x = a.data[i];
    const double y = b.data[i];
    if (std::isinf(x) && std::isinf(y) && x == y) continue;
    worst = std::max(worst, std::abs(x - y));
  }
  return worst;
}

// --- dense equivalence ----------------------------------------------------
// A single full-length pattern with no dilation must reproduce plain
// attention exactly (up to roundoff): checked per head against both the
// production dense kernel and the serial textbook reference.
void check_dense(std::vector<CheckResult>& out, const VerifyOptions& opt) {
  const double threshold = tol_or(opt, 1e-10);
  double worst = 0.0;
  std::string worst_case = "none";
  for (const std::size_t n : {8u, 16u, 32u, 64u, 128u, 256u}) {
    for (const std::size_t heads : {1u, 4u}) {
      for (const bool causal : {false, true}) {
        const std::size_t d = 8;
        const std::size_t dh = d / heads;
        const DilatedConfig config({Pattern{n, 1}}, heads, causal);
        for (std::uint64_t seed = 0; seed < 20; ++seed) {
          std::mt19937_64 rng(0x5eedf00dull + seed * 977 + n * 31 + heads +
                              (causal ? 7 : 0));
          const MatrixD q = random_matrix(n, d, rng);
          const MatrixD k = random_matrix(n, d, rng);
          const MatrixD v = random_matrix(n, d, rng);
          const auto got = dilated_forward(q, k, v, config);
          const double scale = config.scale.resolve<double>(dh);
          for (std::size_t h = 0; h < heads; ++h) {
            const MatrixD qh = q.slice_cols(h * dh, dh);
            const MatrixD kh = k.slice_cols(h * dh, dh);
            const MatrixD vh = v.slice_cols(h * dh, dh);
            const auto want = dense_attention(qh, kh, vh, causal, scale);
            const auto want_ref = ref::dense_attention(qh, kh, vh, causal, scale);
            const MatrixD got_h = got.output.slice_cols(h * dh, dh);
            double dev = max_abs_diff(got_h, want.output);
            dev = std::max(dev, max_abs_diff(got_h, want_ref.output));
            for (std::size_t p = 0; p < n; ++p)
              dev = std::max(dev,
                             std::abs(got.lse(p, h) - want.lse(p, 0)));
            if (dev > worst) {
              worst = dev;
              worst_case = "n=" + std::to_string(n) +
                           " heads=" + std::to_string(heads) +
                           (causal ? " causal" : " full") +
                           " seed=" + std::to_string(seed);
            }
          }
        }
      }
    }
  }
  out.push_back(CheckResult{"dense", "full_segment_matches_dense",
                            worst <= threshold, worst, threshold,
                            "worst at " + worst_case});
}

// --- mixture oracle ---------------------------------------------------------
// The denominator-weighted mixture must equal one softmax over the
// gathered multiset of keys.
void check_mixture(std::vector<CheckResult>& out, const VerifyOptions& opt) {
  const double threshold = tol_or(opt, 1e-10);
  double worst = 0.0;
  std::string worst_case = "none";
  std::mt19937_64 rng(0xa11ce5ull);
  const std::size_t ns[] = {16, 32, 64};
  for (std::size_t c = 0; c < 50; ++c) {
    const std::size_t n = ns[c % 3];
    // strictly increasing segment lengths drawn from the divisors of n
    std::vector<std::size_t> divisors;
    for (std::size_t w = 2; w <= n; ++w)
      if (n % w == 0) divisors.push_back(w);
    std::shuffle(divisors.begin(), divisors.end(), rng);
    const std::size_t num_patterns = 1 + c % 3;
    std::vector<std::size_t> ws(divisors.begin(),
                                divisors.begin() +
                                    std::min(num_patterns, divisors.size()));
    std::sort(ws.begin(), ws.end());
    std::vector<Pattern> patterns;
    std::size_t prev_r = 1;
    for (const std::size_t w : ws) {
      std::uniform_int_distribution<std::size_t> pick_r(prev_r, w);
      const std::size_t r = pick_r(rng);
      patterns.push_back(Pattern{w, r});
      prev_r = r;
    }
    const std::size_t heads = (c % 4 == 3) ? 2 : 1;
    const std::size_t d = heads * (1 + c % 3);
    const bool causal = c % 2 == 1;
    const DilatedConfig config(patterns, heads, causal);

    const MatrixD q = random_matrix(n, d, rng);
    const MatrixD k = random_matrix(n, d, rng);
    const MatrixD v = random_matrix(n, d, rng);
    const auto got = dilated_forward(q, k, v, config);
    const MatrixD want = gathered_softmax_oracle(q, k, v, config);
    const double dev = max_abs_diff(got.output, want);
    if (dev > worst) {
      worst = dev;
      worst_case = "case " + std::to_string(c) + " (" + config.summary() + ")";
    }
  }
  out.push_back(CheckResult{"mixture", "matches_gathered_softmax",
                            worst <= threshold, worst, threshold,
                            "50 cases, worst at " + worst_case});
}

// --- gradients ---------------------------------------------------------------
// Backward pass against central finite differences of the scalar
// probe <G, forward(q,k,v)>.
void check_gradient(std::vector<CheckResult>& out, const VerifyOptions& opt) {
  const double threshold = tol_or(opt, 1e-5);
  const double step = 1e-5;
  double worst = 0.0;
  std::string worst_case = "none";

  struct Case {
    std::size_t heads;
    bool causal;
  };
  const Case cases[] = {{1, false}, {2, true}};
  std::mt19937_64 rng(0xbadc0deull);

  for (const auto& cs : cases) {
    const std::size_t n = 8;
    const std::size_t d = 4;
    const DilatedConfig config({Pattern{4, 1}, Pattern{8, 2}}, cs.heads,
                               cs.causal);
    MatrixD q = random_matrix(n, d, rng);
    MatrixD k = random_matrix(n, d, rng);
    MatrixD v = random_matrix(n, d, rng);
    const MatrixD g = random_matrix(n, d, rng);

    const auto grads = dilated_backward(q, k, v, config, g);

    auto loss = [&]() {
      const auto res = dilated_forward(q, k, v, config);
      double acc = 0.0;
      for (std::size_t i = 0; i < res.output.data.size(); ++i)
        acc += g.data[i] * res.output.data[i];
      return acc;
    };

    std::uniform_int_distribution<int> pick_slab(0, 2);
    std::uniform_int_distribution<std::size_t> pick_idx(0, n * d - 1);
    for (int trial = 0; trial < 50; ++trial) {
      const int slab = pick_slab(rng);
      const std::size_t idx = pick_idx(rng);
      MatrixD* target = slab == 0 ? &q : slab == 1 ? &k : &v;
      const MatrixD* gslab = slab == 0   ? &grads.grad_q
                             : slab == 1 ? &grads.grad_k
                                         : &grads.grad_v;
      const double saved = target->data[idx];
      target->data[idx] = saved + step;
      const double lp = loss();
      target->data[idx] = saved - step;
      const double lm = loss();
      target->data[idx] = saved;

      const double fd = (lp - lm) / (2.0 * step);
      const double an = gslab->data[idx];
      const double denom = std::max({std::abs(fd), std::abs(an), 1e-6});
      const double rel = std::abs(fd - an) / denom;
      if (rel > worst) {
        worst = rel;
        worst_case = std::string(slab == 0   ? "q"
                                 : slab == 1 ? "k"
                                             : "v") +
                     "[" + std::to_string(idx) + "] heads=" +
                     std::to_string(cs.heads) + (cs.causal ? " causal" : "");
      }
    }
  }
  out.push_back(CheckResult{"gradient", "matches_finite_differences",
                            worst <= threshold, worst, threshold,
                            "100 coordinates, worst at " + worst_case});
}

// --- cost model ---------------------------------------------------------------
void check_flops(std::vector<CheckResult>& out, const VerifyOptions&) {
  struct Case {
    DilatedConfig config;
    std::size_t n, d;
  };
  std::vector<Case> cases;
  cases.push_back({DilatedConfig({Pattern{4, 2}}, 1, false), 8, 3});
  cases.push_back({DilatedConfig({Pattern{8, 4}}, 1, false), 16, 2});
  cases.push_back({DilatedConfig({Pattern{4, 1}, Pattern{8, 2}}, 1, false), 16, 2});
  cases.push_back({geometric_preset(4, 2, 16), 16, 1});
  cases.push_back({geometric_preset(4, 2, 32), 32, 2});
  cases.push_back({geometric_preset(8, 2, 64, 2), 64, 4});
  cases.push_back({geometric_preset(4, 4, 64), 64, 1});
  cases.push_back({DilatedConfig({Pattern{16, 8}}, 1, false), 32, 8});
  cases.push_back(
      {DilatedConfig({Pattern{2, 1}, Pattern{4, 2}, Pattern{8, 4}}, 4, false),
       32, 4});
  cases.push_back({DilatedConfig({Pattern{32, 1}}, 1, false), 32, 2});

  std::size_t mismatches = 0;
  std::string first_bad;
  for (const auto& cs : cases) {
    const FlopsReport rep = count_flops(cs.n, cs.d, cs.config);
    const bool ok = rep.analytic_exact_macs.has_value() &&
                    rep.measured_macs == *rep.analytic_exact_macs;
    if (!ok && first_bad.empty())
      first_bad = rep.config_summary + " measured=" +
                  std::to_string(rep.measured_macs);
    mismatches += ok ? 0 : 1;
  }
  out.push_back(CheckResult{
      "flops", "counter_matches_closed_form_exactly", mismatches == 0,
      static_cast<double>(mismatches), 0.0,
      first_bad.empty() ? "10 configs, all exact" : "first mismatch: " + first_bad});

  const FlopsReport named = count_flops(16, 1, geometric_preset(4, 2, 16));
  out.push_back(CheckResult{"flops", "geo_w0_4_alpha_2_n16_d1_is_224",
                            named.measured_macs == 224,
                            static_cast<double>(named.measured_macs), 224.0,
                            "closed-form sum over three levels"});

  bool bounds_ok = true;
  double worst_ratio = 0.0;
  for (const auto& cs : cases) {
    if (!cs.config.geo.has_value()) continue;
    const FlopsReport rep = count_flops(cs.n, cs.d, cs.config);
    if (!rep.bound.has_value()) {
      bounds_ok = false;
      continue;
    }
    const double ratio = static_cast<double>(rep.measured_macs) / *rep.bound;
    worst_ratio = std::max(worst_ratio, ratio);
    bounds_ok = bounds_ok && static_cast<double>(rep.measured_macs) <= *rep.bound;
  }
  out.push_back(CheckResult{"flops", "geometric_series_bound_holds", bounds_ok,
                            worst_ratio, 1.0,
                            "measured/bound over the geometric cases"});
}

// --- path length ---------------------------------------------------------------
void check_path(std::vector<CheckResult>& out, const VerifyOptions&) {
  bool ok = true;
  long worst_margin = -1000;
  std::string detail;
  struct Sched {
    std::size_t w0;
    double alpha;
    std::vector<std::size_t> ns;
  };
  const Sched scheds[] = {
      {4, 2.0, {16, 64, 256, 1024, 4096, 8192}},
      {16, 4.0, {256, 4096}},
  };
  for (const auto& sched : scheds) {
    for (const std::size_t n : sched.ns) {
      const DilatedConfig config = geometric_preset(sched.w0, sched.alpha, n);
      const PathLengthReport rep = max_path_length(config, n);
      const std::size_t bound = path_length_bound(config, n);
      if (rep.infinite || rep.lower_bound_only || rep.hops > bound) ok = false;
      const long margin = static_cast<long>(rep.hops) - static_cast<long>(bound);
      if (margin > worst_margin) {
        worst_margin = margin;
        detail = "n=" + std::to_string(n) + " w0=" + std::to_string(sched.w0) +
                 ": diameter " + std::to_string(rep.hops) + " vs bound " +
                 std::to_string(bound);
      }
    }
  }
  out.push_back(CheckResult{"path", "diameter_within_log_bound", ok,
                            static_cast<double>(worst_margin), 0.0,
                            "tightest case " + detail});
}

// --- distributed ----------------------------------------------------------------
void check_distributed(std::vector<CheckResult>& out,
                       const VerifyOptions& opt) {
  const double fwd_threshold = tol_or(opt, 1e-10);
  const double bwd_threshold = tol_or(opt, 1e-9);

  double worst_fwd = 0.0, worst_bwd = 0.0;
  std::string worst_fwd_case = "none", worst_bwd_case = "none";

  struct Case {
    std::size_t n, d, heads, w0;
    bool causal;
  };
  const Case cases[] = {
      {256, 8, 1, 8, false},
      {256, 8, 2, 8, true},
      {1024, 8, 1, 16, false},
  };
  std::mt19937_64 rng(0xd15717ull);
  for (const auto& cs : cases) {
    const DilatedConfig config =
        geometric_preset(cs.w0, 2, cs.n, cs.heads, cs.causal);
    const MatrixD q = random_matrix(cs.n, cs.d, rng);
    const MatrixD k = random_matrix(cs.n, cs.d, rng);
    const MatrixD v = random_matrix(cs.n, cs.d, rng);
    const MatrixD g = random_matrix(cs.n, cs.d, rng);
    const auto want = dilated_forward(q, k, v, config);
    const auto want_grads = dilated_backward(q, k, v, config, g);

    for (const std::size_t world : {1u, 2u, 4u, 8u}) {
      const auto shards = shard_qkv(q, k, v, world);
      const auto got = distributed_dilated_forward(shards, config);
      double dev = max_abs_diff(got.output, want.output);
      dev = std::max(dev, max_abs_diff_lse(got.lse, want.lse));
      if (dev > worst_fwd) {
        worst_fwd = dev;
        worst_fwd_case =
            "n=" + std::to_string(cs.n) + " D=" + std::to_string(world);
      }

      const auto gshards = shard_rows(g, world);
      const auto got_grads =
          distributed_dilated_backward(shards, config, gshards);
      std::vector<MatrixD> gq, gk, gv;
      for (const auto& dg : got_grads) {
        gq.push_back(dg.grad_q);
        gk.push_back(dg.grad_k);
        gv.push_back(dg.grad_v);
      }
      double bdev = max_abs_diff(concat_rows(gq), want_grads.grad_q);
      bdev = std::max(bdev, max_abs_diff(concat_rows(gk), want_grads.grad_k));
      bdev = std::max(bdev, max_abs_diff(concat_rows(gv), want_grads.grad_v));
      if (bdev > worst_bwd) {
        worst_bwd = bdev;
        worst_bwd_case =
            "n=" + std::to_string(cs.n) + " D=" + std::to_string(world);
      }
    }
  }
  out.push_back(CheckResult{"distributed", "forward_matches_single_device",
                            worst_fwd <= fwd_threshold, worst_fwd,
                            fwd_threshold, "worst at " + worst_fwd_case});
  out.push_back(CheckResult{"distributed", "backward_matches_single_device",
                            worst_bwd <= bwd_threshold, worst_bwd,
                            bwd_threshold, "worst at " + worst_bwd_case});

  // Determinism: identical inputs, two executions, bit-identical
  // outputs and transcripts.
  {
    const DilatedConfig config = geometric_preset(8, 2, 256, 2, true);
    std::mt19937_64 rng2(0x7ea9e2ull);
    const MatrixD q = random_matrix(256, 8, rng2);
    const MatrixD k = random_matrix(256, 8, rng2);
    const MatrixD v = random_matrix(256, 8, rng2);
    const MatrixD g = random_matrix(256, 8, rng2);
    const auto shards = shard_qkv(q, k, v, std::size_t{4});
    const auto gshards = shard_rows(g, std::size_t{4});

    CommTranscript t1, t2;
    const auto r1 = distributed_dilated_forward(shards, config, &t1);
    const auto r2 = distributed_dilated_forward(shards, config, &t2);
    const auto b1 = distributed_dilated_backward(shards, config, gshards, &t1);
    const auto b2 = distributed_dilated_backward(shards, config, gshards, &t2);
    bool same = r1.output.data == r2.output.data && r1.lse.data == r2.lse.data &&
                t1.to_jsonl() == t2.to_jsonl();
    for (std::size_t r = 0; same && r < b1.size(); ++r)
      same = b1[r].grad_q.data == b2[r].grad_q.data &&
             b1[r].grad_k.data == b2[r].grad_k.data &&
             b1[r].grad_v.data == b2[r].grad_v.data;
    out.push_back(CheckResult{"distributed", "bit_identical_reruns", same,
                              same ? 0.0 : 1.0, 0.0,
                              "forward+backward+transcript, D=4"});

    const std::uint64_t sent_g = t1.total_sent(CommPhase::gather);
    const std::uint64_t recv_g = t1.total_received(CommPhase::gather);
    const std::uint64_t sent_rs = t1.total_sent(CommPhase::reduce_scatter);
    const std::uint64_t recv_rs = t1.total_received(CommPhase::reduce_scatter);
    const bool symmetric = sent_g == recv_g && sent_rs == recv_rs &&
                           sent_g > 0 && sent_rs > 0;
    out.push_back(CheckResult{
        "distributed", "transcript_volume_symmetry", symmetric,
        static_cast<double>(sent_g) - static_cast<double>(recv_g), 0.0,
        "gather " + std::to_string(sent_g) + "=" + std::to_string(recv_g) +
            ", reduce_scatter " + std::to_string(sent_rs) + "=" +
            std::to_string(recv_rs)});
  }

  // Communication constancy: per-device gather volume does not grow
  // with n for the constant-ratio schedule.
  {
    const std::size_t d = 4, world = 4, w0 = 4;
    std::vector<std::pair<std::size_t, CommTranscript>> transcripts;
    for (const std::size_t n : {64u, 128u, 256u}) {
      const DilatedConfig config = geometric_preset(w0, 2, n);
      MatrixD q(n, d), k(n, d), v(n, d);
      const auto shards = shard_qkv(q, k, v, world);
      CommTranscript t;
      (void)distributed_dilated_forward(shards, config, &t);
      transcripts.emplace_back(n, std::move(t));
    }
    const auto rows = communication_report(transcripts);
    // totals per (n, device)
    bool constant = true;
    std::uint64_t expected_total = 0;
    bool per_pattern_ok = true;
    for (const std::size_t dev : {0u, 1u, 2u, 3u}) {
      std::uint64_t first = 0;
      bool have_first = false;
      for (const auto& [n, t] : transcripts) {
        std::uint64_t total = 0;
        for (const auto& row : rows)
          if (row.n == n && row.device == dev) {
            total += row.gathered_elements;
            if (row.gathered_elements != 0 &&
                row.gathered_elements != w0 * d)
              per_pattern_ok = false;
          }
        if (!have_first) {
          first = total;
          have_first = true;
          if (dev == 0) expected_total = total;
        } else if (total != first) {
          constant = false;
        }
      }
    }
    out.push_back(CheckResult{
        "distributed", "constant_gather_volume_per_device",
        constant && per_pattern_ok && expected_total > 0,
        static_cast<double>(expected_total), static_cast<double>(expected_total),
        "n in {64,128,256}, D=4, w0*d per gathered pattern"});
  }
}

// --- runtime shape -----------------------------------------------------------
// The long benchmark: quadratic dense growth vs near-linear dilated
// growth, and the wall-clock advantage at 32K tokens.
void check_runtime(std::vector<CheckResult>& out, const VerifyOptions& opt) {
  const std::vector<std::size_t> ns = {1024, 2048, 4096, 8192, 16384, 32768};

  BenchOptions dense;
  dense.kernel = "dense";
  dense.n_values = ns;
  dense.d = 64;
  dense.heads = 1;
  dense.repeats = 5;
  dense.warmups = 2;
  dense.seed = 7;

  BenchOptions dilated = dense;
  dilated.kernel = "dilated";
  dilated.preset = "geo:256,2";

  std::vector<std::string> errors;
  const auto dense_recs = run_benchmark(dense, &errors);
  const auto dilated_recs = run_benchmark(dilated, &errors);

  if (dense_recs.size() != ns.size() || dilated_recs.size() != ns.size()) {
    std::string msg = "benchmark rows missing";
    for (const auto& e : errors) msg += "; " + e;
    out.push_back(CheckResult{"runtime", "benchmark_completed", false, 0.0, 0.0,
                              msg});
    return;
  }

  std::vector<std::pair<double, double>> dense_xy, dilated_xy;
  for (std::size_t i = 0; i < ns.size(); ++i) {
    dense_xy.emplace_back(static_cast<double>(dense_recs[i].n),
                          dense_recs[i].wall_ms_med);
    dilated_xy.emplace_back(static_cast<double>(dilated_recs[i].n),
                            dilated_recs[i].wall_ms_med);
  }
  const double dense_exp = fit_loglog_exponent(dense_xy);
  const double dilated_exp = fit_loglog_exponent(dilated_xy);
  const double ratio =
      dilated_recs.back().wall_ms_med / dense_recs.back().wall_ms_med;

  out.push_back(CheckResult{"runtime", "dense_exponent_at_least_1.7",
                            dense_exp >= 1.7, dense_exp, 1.7,
                            "log-log slope over n in {1K..32K}"});
  out.push_back(CheckResult{"runtime", "dilated_exponent_at_most_1.3",
                            dilated_exp <= 1.3, dilated_exp, 1.3,
                            "log-log slope over n in {1K..32K}"});
  const double ratio_threshold = tol_or(opt, 0.2);
  out.push_back(CheckResult{
      "runtime", "dilated_to_dense_ratio_at_32k", ratio <= ratio_threshold,
      ratio, ratio_threshold,
      "median " + std::to_string(dilated_recs.back().wall_ms_med) + " ms vs " +
          std::to_string(dense_recs.back().wall_ms_med) + " ms"});
}

}  // namespace

std::vector<CheckResult> run_verification(const VerifyOptions& options) {
  static const char* kSuites[] = {"dense",      "mixture", "gradient", "flops",
                                  "path",       "distributed", "runtime"};
  if (!options.only.empty()) {
    bool known = false;
    for (const char* s : kSuites) known = known || options.only == s;
    if (!known)
      throw ConfigError("unknown suite '" + options.only +
                        "' (expected dense, mixture, gradient, flops, path, "
                        "distributed, or runtime)");
  }
  const auto want = [&](const char* suite) {
    if (!options.only.empty()) return options.only == suite;
    if (std::string(suite) == "runtime") return options.include_runtime;
    return true;
  };

  std::vector<CheckResult> results;
  if (want("dense")) check_dense(results, options);
  if (want("mixture")) check_mixture(results, options);
  if (want("gradient")) check_gradient(results, options);
  if (want("flops")) check_flops(results, options);
  if (want("path")) check_path(results, options);
  if (want("distributed")) check_distributed(results, options);
  if (want("runtime")) check_runtime(results, options);
  return results;
}

bool all_passed(const std::vector<CheckResult>& results) {
  for (const auto& r : results)
    if (!r.pass) return false;
  return !results.empty();
}

std::string format_report(const std::vector<CheckResult>& results) {
  std::ostringstream out;
  std::size_t passed = 0;
  for (const auto& r : results) {
    char obs[64], thr[64];
    std::snprintf(obs, sizeof obs, "%.3g", r.observed);
    std::snprintf(thr, sizeof thr, "%.3g", r.threshold);
    out << (r.pass ? "PASS" : "FAIL") << "  " << r.suite << "/" << r.name
        << "  observed=" << obs << " threshold=" << thr;
    if (!r.detail.empty()) out << "  (" << r.detail << ")";
    out << '\n';
    passed += r.pass ? 1 : 0;
  }
  out << (passed == results.size() ? "OK" : "FAILED") << ": " << passed << "/"
      << results.size() << " checks passed\n";
  return out.str();
}

}  // namespace dilattn
