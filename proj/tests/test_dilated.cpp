// Copyright (c) 2026 the dilattn authors
// SPDX-License-Identifier: Apache-2.0
//
// Dilated attention: index-map selection, per-pattern scatter, the
// denominator-weighted mixture, and the multi-head forward/backward.
// The load-bearing oracle is gathered_softmax_oracle: per row it pools
// every selected key (repeats included) into one flat softmax, a
// mathematically equal but arithmetically independent evaluation.

#include <cmath>
#include <random>
#include <vector>

#include "dilattn/attention.hpp"
#include "dilattn/dilated.hpp"
#include "dilattn/index_map.hpp"
#include "doctest.h"

using dilattn::AttentionResult;
using dilattn::ConfigError;
using dilattn::DilatedConfig;
using dilattn::ExecPolicy;
using dilattn::MatrixD;
using dilattn::Pattern;
using dilattn::PatternOutput;
using dilattn::ShapeError;
using dilattn::build_index_maps;
using dilattn::dense_attention;
using dilattn::dilated_backward;
using dilattn::dilated_forward;
using dilattn::gathered_softmax_oracle;
using dilattn::kNegInf;
using dilattn::mix_patterns;
using dilattn::single_pattern_attention;

namespace {

MatrixD random_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  MatrixD m(rows, cols);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  for (double& x : m.data) x = dist(rng);
  return m;
}

double max_abs_diff(const MatrixD& a, const MatrixD& b) {
  REQUIRE(a.same_shape(b));
  double worst = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i)
    worst = std::max(worst, std::fabs(a.data[i] - b.data[i]));
  return worst;
}

}  // namespace

TEST_CASE("index maps select strided positions per segment and head") {
  // n=4, one segment of w=4 with r=2: head 0 takes {0,2}, head 1 {1,3}.
  DilatedConfig cfg({{4, 2}}, 2, false);
  auto h0 = build_index_maps(cfg, 4, 0, 0);
  REQUIRE(h0.size() == 1);
  CHECK(h0[0].head_offset == 0);
  CHECK(h0[0].positions == std::vector<std::size_t>{0, 2});

  auto h1 = build_index_maps(cfg, 4, 0, 1);
  CHECK(h1[0].head_offset == 1);
  CHECK(h1[0].positions == std::vector<std::size_t>{1, 3});

  // n=8, w=4, r=1: two segments, every position once.
  DilatedConfig dense_cfg({{4, 1}}, 1, false);
  auto maps = build_index_maps(dense_cfg, 8, 0, 0);
  REQUIRE(maps.size() == 2);
  CHECK(maps[0].positions == std::vector<std::size_t>{0, 1, 2, 3});
  CHECK(maps[1].positions == std::vector<std::size_t>{4, 5, 6, 7});
  CHECK(maps[1].segment_index == 1);
}

TEST_CASE("index map sizes follow the ceil rule") {
  // |positions| = ceil((w - s) / r) for every offset s in [0, r).
  DilatedConfig cfg({{12, 5}}, 5, false);
  for (std::size_t head = 0; head < 5; ++head) {
    auto maps = build_index_maps(cfg, 24, 0, head);
    const std::size_t s = head % 5;
    for (const auto& m : maps) {
      CHECK(m.positions.size() == (12 - s + 5 - 1) / 5);
      for (std::size_t i = 0; i < m.positions.size(); ++i)
        CHECK(m.positions[i] == m.segment_index * 12 + s + i * 5);
    }
  }
}

TEST_CASE("distinct head offsets partition the segment") {
  // Offsets 0..r-1 together cover each position exactly once.
  DilatedConfig cfg({{8, 4}}, 4, false);
  std::vector<int> hits(16, 0);
  for (std::size_t head = 0; head < 4; ++head)
    for (const auto& m : build_index_maps(cfg, 16, 0, head))
      for (std::size_t p : m.positions) hits[p]++;
  for (int h : hits) CHECK(h == 1);
}

TEST_CASE("index maps require the segment to tile the sequence") {
  DilatedConfig cfg({{4, 1}}, 1, false);
  CHECK_THROWS_AS(build_index_maps(cfg, 6, 0, 0), ConfigError);
  CHECK_THROWS_WITH_AS(build_index_maps(cfg, 6, 0, 0),
                       doctest::Contains("not divisible"), ConfigError);
  CHECK_THROWS_AS(build_index_maps(cfg, 4, 1, 0), ConfigError);
  CHECK_THROWS_AS(build_index_maps(cfg, 4, 0, 1), ConfigError);
}

TEST_CASE("single full-coverage pattern reproduces dense attention") {
  const std::size_t n = 8, d = 4;
  const MatrixD q = random_matrix(n, d, 101);
  const MatrixD k = random_matrix(n, d, 102);
  const MatrixD v = random_matrix(n, d, 103);
  for (bool causal : {false, true}) {
    DilatedConfig cfg({{n, 1}}, 1, causal);
    auto po = single_pattern_attention(q, k, v, cfg, 0, 0);
    auto dense = dense_attention(q, k, v, causal, cfg.scale.resolve<double>(d));
    CHECK(max_abs_diff(po.scattered, dense.output) <= 1e-12);
    for (std::size_t p = 0; p < n; ++p)
      CHECK(std::fabs(po.row_lse[p] - dense.lse_at(p)) <= 1e-12);
  }
}

TEST_CASE("segmenting alone blocks attention across segments") {
  // n=4, w=2, r=1, causal: row 2 starts a fresh segment, so it sees
  // only itself and must return exactly v[2].
  const std::size_t n = 4, d = 3;
  const MatrixD q = random_matrix(n, d, 111);
  const MatrixD k = random_matrix(n, d, 112);
  const MatrixD v = random_matrix(n, d, 113);
  DilatedConfig cfg({{2, 1}}, 1, true);
  auto po = single_pattern_attention(q, k, v, cfg, 0, 0);
  for (std::size_t c = 0; c < d; ++c)
    CHECK(po.scattered(2, c) == doctest::Approx(v(2, c)).epsilon(1e-12));
}

TEST_CASE("scatter writes only the selected rows") {
  // w=4, r=2, head 0 selects rows {0, 2}; with constant V those rows
  // hold the constant and rows 1, 3 stay zero with lse = -inf.
  const std::size_t n = 4, d = 2;
  const MatrixD q = random_matrix(n, d, 121);
  const MatrixD k = random_matrix(n, d, 122);
  MatrixD v(n, d);
  for (double& x : v.data) x = 3.25;
  DilatedConfig cfg({{4, 2}}, 1, false);
  auto po = single_pattern_attention(q, k, v, cfg, 0, 0);
  for (std::size_t c = 0; c < d; ++c) {
    CHECK(po.scattered(0, c) == doctest::Approx(3.25).epsilon(1e-12));
    CHECK(po.scattered(2, c) == doctest::Approx(3.25).epsilon(1e-12));
    CHECK(po.scattered(1, c) == 0.0);
    CHECK(po.scattered(3, c) == 0.0);
  }
  CHECK(po.row_lse[1] == kNegInf<double>);
  CHECK(po.row_lse[3] == kNegInf<double>);

  // General sparsity property on a bigger random case: a row is
  // written iff its position is on the head's stride.
  DilatedConfig big({{8, 4}}, 4, false);
  const MatrixD q2 = random_matrix(16, 4, 123);
  const MatrixD k2 = random_matrix(16, 4, 124);
  const MatrixD v2 = random_matrix(16, 4, 125);
  for (std::size_t head = 0; head < 4; ++head) {
    auto out = single_pattern_attention(q2, k2, v2, big, 0, head);
    for (std::size_t p = 0; p < 16; ++p) {
      const bool selected = (p % 8) % 4 == head % 4;
      CHECK((out.row_lse[p] != kNegInf<double>) == selected);
      if (!selected)
        for (std::size_t c = 0; c < 4; ++c) CHECK(out.scattered(p, c) == 0.0);
    }
  }
}

TEST_CASE("mixing a single pattern is the identity") {
  const std::size_t n = 8, d = 4;
  const MatrixD q = random_matrix(n, d, 131);
  const MatrixD k = random_matrix(n, d, 132);
  const MatrixD v = random_matrix(n, d, 133);
  DilatedConfig cfg({{4, 1}}, 1, false);
  auto po = single_pattern_attention(q, k, v, cfg, 0, 0);
  std::vector<PatternOutput<double>> one;
  one.push_back(po);
  auto mixed = mix_patterns(std::span<const PatternOutput<double>>(one));
  CHECK(max_abs_diff(mixed.output, po.scattered) <= 1e-15);
  for (std::size_t p = 0; p < n; ++p)
    CHECK(mixed.lse_at(p) == doctest::Approx(po.row_lse[p]).epsilon(1e-15));
}

TEST_CASE("patterns with equal weight average their outputs") {
  // Two hand-built pattern outputs with identical lse mix to the mean.
  const std::size_t n = 4, d = 2;
  PatternOutput<double> a(n, d), b(n, d);
  for (std::size_t p = 0; p < n; ++p) {
    a.row_lse[p] = 0.5;
    b.row_lse[p] = 0.5;
    for (std::size_t c = 0; c < d; ++c) {
      a.scattered(p, c) = 2.0;
      b.scattered(p, c) = 6.0;
    }
  }
  std::vector<PatternOutput<double>> both{a, b};
  auto mixed = mix_patterns(std::span<const PatternOutput<double>>(both));
  for (std::size_t p = 0; p < n; ++p) {
    for (std::size_t c = 0; c < d; ++c)
      CHECK(mixed.output(p, c) == doctest::Approx(4.0));
    // Combined normalizer doubles: lse rises by log 2.
    CHECK(mixed.lse_at(p) == doctest::Approx(0.5 + std::log(2.0)));
    CHECK(mixed.covered_at(p));
  }

  // A row no pattern wrote stays uncovered.
  PatternOutput<double> empty_a(n, d), empty_b(n, d);
  std::vector<PatternOutput<double>> none{empty_a, empty_b};
  auto hole = mix_patterns(std::span<const PatternOutput<double>>(none));
  CHECK_FALSE(hole.covered_at(0));
  CHECK(hole.lse_at(0) == kNegInf<double>);

  std::vector<PatternOutput<double>> zero;
  CHECK_THROWS_AS(
      mix_patterns(std::span<const PatternOutput<double>>(zero)), ShapeError);
  std::vector<PatternOutput<double>> ragged{PatternOutput<double>(4, 2),
                                            PatternOutput<double>(4, 3)};
  CHECK_THROWS_AS(
      mix_patterns(std::span<const PatternOutput<double>>(ragged)),
      ShapeError);
}

TEST_CASE("mixture is invariant to pattern order") {
  const std::size_t n = 8, d = 4;
  const MatrixD q = random_matrix(n, d, 141);
  const MatrixD k = random_matrix(n, d, 142);
  const MatrixD v = random_matrix(n, d, 143);
  DilatedConfig cfg({{4, 1}, {8, 2}}, 1, false);
  auto p0 = single_pattern_attention(q, k, v, cfg, 0, 0);
  auto p1 = single_pattern_attention(q, k, v, cfg, 1, 0);
  std::vector<PatternOutput<double>> fwd{p0, p1};
  std::vector<PatternOutput<double>> rev{p1, p0};
  auto mfwd = mix_patterns(std::span<const PatternOutput<double>>(fwd));
  auto mrev = mix_patterns(std::span<const PatternOutput<double>>(rev));
  CHECK(max_abs_diff(mfwd.output, mrev.output) <= 1e-12);
  CHECK(max_abs_diff(mfwd.lse, mrev.lse) <= 1e-12);
}

TEST_CASE("pooled-softmax oracle: one pattern is plain dense attention") {
  const std::size_t n = 8, d = 4;
  const MatrixD q = random_matrix(n, d, 151);
  const MatrixD k = random_matrix(n, d, 152);
  const MatrixD v = random_matrix(n, d, 153);
  DilatedConfig cfg({{n, 1}}, 1, false);
  auto oracle = gathered_softmax_oracle(q, k, v, cfg);
  auto dense = dense_attention(q, k, v, false, cfg.scale.resolve<double>(d));
  CHECK(max_abs_diff(oracle, dense.output) <= 1e-12);
}

TEST_CASE("repeated keys double their softmax mass") {
  // Patterns (2,1) and (4,1) on n=4: rows 0,1 see keys {0,1} twice and
  // {2,3} once. With all logits equal the output must be
  // (2 v0 + 2 v1 + v2 + v3) / 6 — the mixture reproduces counting.
  const std::size_t n = 4, d = 2;
  MatrixD q(n, d), k(n, d);
  for (double& x : q.data) x = 0.5;  // all logits identical
  for (double& x : k.data) x = 0.5;
  const MatrixD v = random_matrix(n, d, 161);
  DilatedConfig cfg({{2, 1}, {4, 1}}, 1, false);

  auto oracle = gathered_softmax_oracle(q, k, v, cfg);
  auto fwd = dilated_forward(q, k, v, cfg);
  for (std::size_t c = 0; c < d; ++c) {
    const double want =
        (2 * v(0, c) + 2 * v(1, c) + v(2, c) + v(3, c)) / 6.0;
    CHECK(oracle(0, c) == doctest::Approx(want).epsilon(1e-12));
    CHECK(fwd.output(0, c) == doctest::Approx(want).epsilon(1e-12));
    CHECK(fwd.output(1, c) == doctest::Approx(want).epsilon(1e-12));
  }
}

TEST_CASE("forward matches the pooled-softmax oracle") {
  const std::size_t n = 16, d = 4;
  const MatrixD q = random_matrix(n, d, 171);
  const MatrixD k = random_matrix(n, d, 172);
  const MatrixD v = random_matrix(n, d, 173);
  for (bool causal : {false, true}) {
    DilatedConfig cfg({{4, 1}, {16, 2}}, 1, causal);
    auto fwd = dilated_forward(q, k, v, cfg);
    auto oracle = gathered_softmax_oracle(q, k, v, cfg);
    CHECK(max_abs_diff(fwd.output, oracle) <= 1e-10);
  }

  // Multi-head with distinct per-head feature slabs and offsets.
  const MatrixD q2 = random_matrix(n, 8, 174);
  const MatrixD k2 = random_matrix(n, 8, 175);
  const MatrixD v2 = random_matrix(n, 8, 176);
  DilatedConfig multi({{4, 1}, {8, 2}, {16, 4}}, 4, true);
  auto fwd = dilated_forward(q2, k2, v2, multi);
  auto oracle = gathered_softmax_oracle(q2, k2, v2, multi);
  CHECK(max_abs_diff(fwd.output, oracle) <= 1e-10);
}

TEST_CASE("forward with one full pattern equals dense attention per head") {
  const std::size_t n = 16, d = 8;
  const MatrixD q = random_matrix(n, d, 181);
  const MatrixD k = random_matrix(n, d, 182);
  const MatrixD v = random_matrix(n, d, 183);
  for (bool causal : {false, true}) {
    DilatedConfig cfg({{n, 1}}, 2, causal);
    auto fwd = dilated_forward(q, k, v, cfg);
    const double scale = cfg.scale.resolve<double>(d / 2);
    for (std::size_t h = 0; h < 2; ++h) {
      auto qh = q.slice_cols(h * 4, 4);
      auto kh = k.slice_cols(h * 4, 4);
      auto vh = v.slice_cols(h * 4, 4);
      auto dense = dense_attention(qh, kh, vh, causal, scale);
      auto out_h = fwd.output.slice_cols(h * 4, 4);
      CHECK(max_abs_diff(out_h, dense.output) <= 1e-10);
      for (std::size_t p = 0; p < n; ++p)
        CHECK(std::fabs(fwd.lse_at(p, h) - dense.lse_at(p)) <= 1e-10);
    }
  }
}

TEST_CASE("coverage flags follow the schedule") {
  const std::size_t n = 8, d = 4;
  const MatrixD q = random_matrix(n, d, 191);
  const MatrixD k = random_matrix(n, d, 192);
  const MatrixD v = random_matrix(n, d, 193);

  // r=2 with two heads: head j reaches exactly the rows on its offset.
  DilatedConfig sparse({{4, 2}}, 2, false);
  auto fwd = dilated_forward(q, k, v, sparse);
  for (std::size_t p = 0; p < n; ++p) {
    CHECK(fwd.covered_at(p, 0) == (p % 2 == 0));
    CHECK(fwd.covered_at(p, 1) == (p % 2 == 1));
    // Uncovered head slabs are exact zeros.
    const std::size_t h = p % 2 == 0 ? 1 : 0;
    for (std::size_t c = 0; c < 2; ++c) CHECK(fwd.output(p, h * 2 + c) == 0.0);
  }

  // A dilation-1 pattern anywhere covers every row for every head.
  DilatedConfig covered({{4, 1}, {8, 2}}, 2, true);
  auto full = dilated_forward(q, k, v, covered);
  for (std::size_t p = 0; p < n; ++p)
    for (std::size_t h = 0; h < 2; ++h) CHECK(full.covered_at(p, h));
}

TEST_CASE("forward is invariant to pattern order") {
  // The mixture is a sum over patterns, so listing them out of order
  // (bypassing the sortedness the constructor enforces) must not move
  // the result beyond roundoff.
  const std::size_t n = 8, d = 4;
  const MatrixD q = random_matrix(n, d, 201);
  const MatrixD k = random_matrix(n, d, 202);
  const MatrixD v = random_matrix(n, d, 203);
  DilatedConfig sorted_cfg({{4, 1}, {8, 2}}, 1, false);
  DilatedConfig shuffled;  // aggregate, skipping ordering validation
  shuffled.patterns = {Pattern{8, 2}, Pattern{4, 1}};
  shuffled.heads = 1;
  shuffled.causal = false;
  auto a = dilated_forward(q, k, v, sorted_cfg);
  auto b = dilated_forward(q, k, v, shuffled);
  CHECK(max_abs_diff(a.output, b.output) <= 1e-12);
  CHECK(max_abs_diff(a.lse, b.lse) <= 1e-12);
}

TEST_CASE("forward validates shapes") {
  DilatedConfig cfg({{4, 1}}, 2, false);
  MatrixD q(8, 4), k(8, 4), v(8, 4), ragged(8, 6);
  CHECK_NOTHROW(dilated_forward(q, k, v, cfg));
  CHECK_THROWS_AS(dilated_forward(q, k, ragged, cfg), ShapeError);
  MatrixD odd(8, 5);
  CHECK_THROWS_AS(dilated_forward(odd, odd, odd, cfg), ShapeError);
  MatrixD bad_n(6, 4);
  CHECK_THROWS_AS(dilated_forward(bad_n, bad_n, bad_n, cfg), ConfigError);
}

TEST_CASE("serial and parallel forward are bit-identical") {
  const std::size_t n = 16, d = 8;
  const MatrixD q = random_matrix(n, d, 211);
  const MatrixD k = random_matrix(n, d, 212);
  const MatrixD v = random_matrix(n, d, 213);
  DilatedConfig cfg({{4, 1}, {8, 2}, {16, 4}}, 2, true);
  auto par = dilated_forward(q, k, v, cfg, ExecPolicy::parallel);
  auto ser = dilated_forward(q, k, v, cfg, ExecPolicy::serial);
  CHECK(par.output.data == ser.output.data);
  CHECK(par.lse.data == ser.lse.data);
  CHECK(par.covered == ser.covered);
}

TEST_CASE("backward of zero cotangent is zero") {
  const std::size_t n = 8, d = 4;
  const MatrixD q = random_matrix(n, d, 221);
  const MatrixD k = random_matrix(n, d, 222);
  const MatrixD v = random_matrix(n, d, 223);
  MatrixD g(n, d);
  DilatedConfig cfg({{4, 1}, {8, 2}}, 2, true);
  auto grads = dilated_backward(q, k, v, cfg, g);
  for (double x : grads.grad_q.data) CHECK(x == 0.0);
  for (double x : grads.grad_k.data) CHECK(x == 0.0);
  for (double x : grads.grad_v.data) CHECK(x == 0.0);
}

TEST_CASE("backward with one full pattern equals dense backward") {
  const std::size_t n = 8, d = 4;
  const MatrixD q = random_matrix(n, d, 231);
  const MatrixD k = random_matrix(n, d, 232);
  const MatrixD v = random_matrix(n, d, 233);
  const MatrixD g = random_matrix(n, d, 234);
  for (bool causal : {false, true}) {
    DilatedConfig cfg({{n, 1}}, 1, causal);
    auto got = dilated_backward(q, k, v, cfg, g);
    auto want = dilattn::dense_attention_backward(
        q, k, v, causal, cfg.scale.resolve<double>(d), g);
    CHECK(max_abs_diff(got.grad_q, want.grad_q) <= 1e-12);
    CHECK(max_abs_diff(got.grad_k, want.grad_k) <= 1e-12);
    CHECK(max_abs_diff(got.grad_v, want.grad_v) <= 1e-12);
  }
}

namespace {

double dilated_loss(const MatrixD& q, const MatrixD& k, const MatrixD& v,
                    const DilatedConfig& cfg, const MatrixD& g) {
  auto res = dilated_forward(q, k, v, cfg, ExecPolicy::serial);
  double loss = 0.0;
  for (std::size_t i = 0; i < g.data.size(); ++i)
    loss += g.data[i] * res.output.data[i];
  return loss;
}

}  // namespace

TEST_CASE("backward matches finite differences through the mixture") {
  const std::size_t n = 8, d = 4;
  const MatrixD q = random_matrix(n, d, 241);
  const MatrixD k = random_matrix(n, d, 242);
  const MatrixD v = random_matrix(n, d, 243);
  const MatrixD g = random_matrix(n, d, 244);
  const double h = 1e-5;

  struct Case {
    DilatedConfig cfg;
  };
  std::vector<DilatedConfig> cases;
  cases.emplace_back(std::vector<Pattern>{{4, 1}, {8, 2}}, 1, false);
  cases.emplace_back(std::vector<Pattern>{{4, 1}, {8, 2}}, 2, true);

  for (const auto& cfg : cases) {
    auto grads = dilated_backward(q, k, v, cfg, g);
    std::mt19937_64 rng(251);
    std::uniform_int_distribution<std::size_t> pick_input(0, 2);
    std::uniform_int_distribution<std::size_t> pick_coord(0, n * d - 1);
    for (int trial = 0; trial < 40; ++trial) {
      const std::size_t which = pick_input(rng);
      const std::size_t at = pick_coord(rng);
      MatrixD qp = q, kp = k, vp = v;
      MatrixD& bumped = which == 0 ? qp : which == 1 ? kp : vp;
      const MatrixD& agrad = which == 0   ? grads.grad_q
                             : which == 1 ? grads.grad_k
                                          : grads.grad_v;
      bumped.data[at] += h;
      const double up = dilated_loss(qp, kp, vp, cfg, g);
      bumped.data[at] -= 2 * h;
      const double dn = dilated_loss(qp, kp, vp, cfg, g);
      const double fd = (up - dn) / (2 * h);
      const double an = agrad.data[at];
      const double rel =
          std::fabs(fd - an) / std::max({std::fabs(fd), std::fabs(an), 1e-6});
      CHECK(rel <= 1e-5);
    }
  }
}

TEST_CASE("backward validates shapes") {
  DilatedConfig cfg({{4, 1}}, 1, false);
  MatrixD q(8, 4), g_bad(8, 6);
  CHECK_THROWS_AS(dilated_backward(q, q, q, cfg, g_bad), ShapeError);
}
