// Copyright (c) 2026 the dilattn authors
// SPDX-License-Identifier: Apache-2.0

#include "dilattn/benchmark.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <random>
#include <sstream>

#include "dilattn/dilated.hpp"
#include "dilattn/distributed.hpp"
#include "dilattn/reference.hpp"
#include "json.hpp"

namespace dilattn {

namespace {

MatrixF random_matrix(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
  MatrixF m(rows, cols);
  std::uniform_real_distribution<float> dist(-1.0f, 1.0f);
  for (float& x : m.data) x = dist(rng);
  return m;
}

double elapsed_ms(std::chrono::steady_clock::time_point t0) {
  const auto t1 = std::chrono::steady_clock::now();
  return std::chrono::duration<double, std::milli>(t1 - t0).count();
}

// Copy into a taller zero matrix; the added rows are the padding.
MatrixF pad_rows(const MatrixF& m, std::size_t rows) {
  MatrixF out(rows, m.cols);
  std::copy(m.data.begin(), m.data.end(), out.data.begin());
  return out;
}

// Smallest n' >= n that the schedule accepts: the preset must parse at
// n' and every segment length must tile it. Linear scan is fine; the
// parse rejects most candidates in O(1).
std::size_t padded_length(const BenchOptions& opt, std::size_t n) {
  const std::size_t limit = std::max(4 * n, n + 256);
  for (std::size_t cand = n; cand <= limit; ++cand) {
    try {
      const DilatedConfig cfg =
          parse_preset(opt.preset, cand, opt.heads, opt.causal);
      bool tiles = true;
      for (const Pattern& p : cfg.patterns) tiles &= cand % p.segment_len == 0;
      if (tiles) return cand;
    } catch (const ConfigError&) {
      // candidate rejected by the preset; keep scanning
    }
  }
  throw ConfigError("bench: --pad found no admissible length in [" +
                    std::to_string(n) + ", " + std::to_string(limit) +
                    "]; choose n the schedule divides");
}

struct KernelRun {
  std::uint64_t macs{0};
  std::vector<double> times_ms;
  std::size_t heads{1};  // effective count; file presets carry their own
};

// One (kernel, n) measurement: a counted probe pass, then warmups and
// timed repeats without the counter in the way.
KernelRun run_case(const BenchOptions& opt, std::size_t n) {
  std::size_t n_run = n;
  if (opt.pad) {
    if (!opt.causal)
      throw ConfigError(
          "bench: --pad requires --causal; only the causal order masks "
          "end padding out of the real rows");
    n_run = padded_length(opt, n);
  }

  std::mt19937_64 rng(opt.seed ^ (0x9e3779b97f4a7c15ull * (n + 1)));
  MatrixF q = random_matrix(n, opt.d, rng);
  MatrixF k = random_matrix(n, opt.d, rng);
  MatrixF v = random_matrix(n, opt.d, rng);
  if (n_run != n) {
    q = pad_rows(q, n_run);
    k = pad_rows(k, n_run);
    v = pad_rows(v, n_run);
  }

  const bool dense_kernel = opt.kernel == "dense" || opt.kernel == "dense_ref";
  const bool serial = opt.kernel == "dense_ref" || opt.kernel == "dilated_serial";

  DilatedConfig config;
  if (dense_kernel) {
    // Per-head full-segment attention: with one pattern (n, 1) the
    // dilated path degenerates to plain dense attention per head.
    config = DilatedConfig({Pattern{n_run, 1}}, opt.heads, opt.causal);
  } else {
    config = parse_preset(opt.preset, n_run, opt.heads, opt.causal);
  }

  const ExecPolicy policy = serial ? ExecPolicy::serial : ExecPolicy::parallel;
  const float scale = config.scale.resolve<float>(opt.d / opt.heads);

  KernelRun out;
  out.heads = config.heads;

  auto run_once = [&](MacCounter* macs) {
    if (opt.world_size > 1) {
      const auto shards = shard_qkv(q, k, v, opt.world_size);
      (void)distributed_dilated_forward(shards, config);
      (void)macs;  // the simulation reuses the counted kernels below
      return;
    }
    if (opt.kernel == "dense" && opt.heads == 1) {
      (void)dense_attention(q, k, v, opt.causal, scale, {}, {}, policy, macs);
    } else if (opt.kernel == "dense_ref") {
      if (opt.heads != 1)
        throw ConfigError("bench: dense_ref supports a single head");
      (void)ref::dense_attention(q, k, v, opt.causal, scale);
    } else {
      (void)dilated_forward(q, k, v, config, policy, macs);
    }
  };

  // Probe for the counter. dense_ref has no instrumentation; its count
  // comes from the production dense kernel over the same shapes.
  {
    MacCounter counter;
    if (opt.kernel == "dense_ref") {
      (void)dense_attention(q, k, v, opt.causal, scale, {}, {},
                            ExecPolicy::parallel, &counter);
    } else if (opt.world_size > 1) {
      const auto shards = shard_qkv(q, k, v, opt.world_size);
      // Count on the equivalent single-device pass; the simulation
      // computes the same contractions.
      (void)dilated_forward(q, k, v, config, ExecPolicy::parallel, &counter);
    } else {
      run_once(&counter);
    }
    out.macs = counter.macs;
  }

  for (std::size_t i = 0; i < opt.warmups; ++i) run_once(nullptr);
  out.times_ms.reserve(opt.repeats);
  for (std::size_t i = 0; i < opt.repeats; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    run_once(nullptr);
    out.times_ms.push_back(elapsed_ms(t0));
  }
  return out;
}

}  // namespace

std::vector<BenchRecord> run_benchmark(const BenchOptions& options,
                                       std::vector<std::string>* errors) {
  if (options.repeats < 3)
    throw ConfigError("bench: at least 3 repeats required");
  if (options.n_values.empty())
    throw ConfigError("bench: no sequence lengths requested");
  if (options.heads == 0 || options.d % options.heads != 0)
    throw ConfigError("bench: d must be divisible by heads");

  std::vector<BenchRecord> records;
  for (const std::size_t n : options.n_values) {
    try {
      KernelRun run = run_case(options, n);
      std::sort(run.times_ms.begin(), run.times_ms.end());
      const std::size_t mid = run.times_ms.size() / 2;
      const double med =
          run.times_ms.size() % 2 == 1
              ? run.times_ms[mid]
              : 0.5 * (run.times_ms[mid - 1] + run.times_ms[mid]);
      BenchRecord rec;
      rec.kernel = options.kernel;
      rec.n = n;
      rec.d = options.d;
      rec.heads = run.heads;
      rec.world_size = options.world_size;
      rec.wall_ms_med = med;
      rec.wall_ms_min = run.times_ms.front();
      rec.wall_ms_max = run.times_ms.back();
      rec.repeats = options.repeats;
      rec.measured_macs = run.macs;
      rec.seed = options.seed;
      records.push_back(std::move(rec));
    } catch (const std::exception& e) {
      if (errors != nullptr) {
        errors->push_back("n=" + std::to_string(n) + ": " + e.what());
      }
    }
  }
  return records;
}

std::string records_to_csv(const std::vector<BenchRecord>& records) {
  std::ostringstream out;
  out << "bench_v1,kernel,n,d,heads,world_size,wall_ms_med,wall_ms_min,"
         "wall_ms_max,repeats,measured_macs,seed\n";
  for (const auto& r : records) {
    out << "bench_v1," << r.kernel << ',' << r.n << ',' << r.d << ','
        << r.heads << ',' << r.world_size << ',' << r.wall_ms_med << ','
        << r.wall_ms_min << ',' << r.wall_ms_max << ',' << r.repeats << ','
        << r.measured_macs << ',' << r.seed << '\n';
  }
  return out.str();
}

std::string records_to_json(const std::vector<BenchRecord>& records) {
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  for (const auto& r : records) {
    nlohmann::ordered_json j;
    j["kernel"] = r.kernel;
    j["n"] = r.n;
    j["d"] = r.d;
    j["heads"] = r.heads;
    j["world_size"] = r.world_size;
    j["wall_ms_med"] = r.wall_ms_med;
    j["wall_ms_min"] = r.wall_ms_min;
    j["wall_ms_max"] = r.wall_ms_max;
    j["repeats"] = r.repeats;
    j["measured_macs"] = r.measured_macs;
    j["seed"] = r.seed;
    arr.push_back(std::move(j));
  }
  return arr.dump(2);
}

double fit_loglog_exponent(const std::vector<std::pair<double, double>>& xy) {
  if (xy.size() < 2)
    throw ConfigError("fit_loglog_exponent: need at least two points");
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (const auto& [x, y] : xy) {
    if (x <= 0.0 || y <= 0.0)
      throw ConfigError("fit_loglog_exponent: coordinates must be positive");
    const double lx = std::log(x);
    const double ly = std::log(y);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  const double m = static_cast<double>(xy.size());
  const double denom = m * sxx - sx * sx;
  if (denom == 0.0)
    throw ConfigError("fit_loglog_exponent: degenerate abscissae");
  return (m * sxy - sx * sy) / denom;
}

}  // namespace dilattn
