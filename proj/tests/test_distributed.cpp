// Copyright (c) 2026 the dilattn authors
// SPDX-License-Identifier: Apache-2.0
//
// Sequence-parallel simulation. The contract under test: sharded
// forward/backward reproduce the single-device kernels, communication
// happens only for patterns wider than a shard, volumes balance between
// senders and receivers, mirrored in the backward pass, and per-device
// gather buffers stay constant in n for constant-ratio schedules.

#include <cmath>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "dilattn/dilated.hpp"
#include "dilattn/distributed.hpp"
#include "json.hpp"
#include "doctest.h"

using dilattn::AttentionGrads;
using dilattn::CommPhase;
using dilattn::CommTranscript;
using dilattn::ConfigError;
using dilattn::DilatedConfig;
using dilattn::MatrixD;
using dilattn::Pattern;
using dilattn::communication_report;
using dilattn::concat_rows;
using dilattn::dilated_backward;
using dilattn::dilated_forward;
using dilattn::distributed_dilated_backward;
using dilattn::distributed_dilated_forward;
using dilattn::geometric_preset;
using dilattn::matmul;
using dilattn::shard_and_project;
using dilattn::shard_qkv;
using dilattn::shard_rows;

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

TEST_CASE("sharding splits rows and projects locally") {
  const MatrixD x = random_matrix(8, 6, 301);
  const MatrixD wq = random_matrix(6, 4, 302);
  const MatrixD wk = random_matrix(6, 4, 303);
  const MatrixD wv = random_matrix(6, 4, 304);

  // One device is the identity layout.
  auto solo = shard_and_project(x, wq, wk, wv, 1);
  REQUIRE(solo.size() == 1);
  CHECK(solo[0].global_offset == 0);
  CHECK(solo[0].q.data == matmul(x, wq).data);

  // Row projection commutes with sharding: each shard's q/k/v equal
  // the corresponding row block of the global projection, bit for bit.
  auto shards = shard_and_project(x, wq, wk, wv, 4);
  REQUIRE(shards.size() == 4);
  const MatrixD gq = matmul(x, wq);
  std::vector<MatrixD> parts;
  for (const auto& s : shards) {
    CHECK(s.local_len == 2);
    parts.push_back(s.q);
  }
  CHECK(concat_rows(parts).data == gq.data);
  CHECK(shards[3].global_offset == 6);

  CHECK_THROWS_AS(shard_and_project(x, wq, wk, wv, 3), ConfigError);
  CHECK_THROWS_AS(shard_rows(x, 0), ConfigError);
}

TEST_CASE("one device reproduces the single-device kernel bit for bit") {
  const std::size_t n = 16, d = 4;
  const MatrixD q = random_matrix(n, d, 311);
  const MatrixD k = random_matrix(n, d, 312);
  const MatrixD v = random_matrix(n, d, 313);
  DilatedConfig cfg({{4, 1}, {16, 2}}, 2, true);
  auto fwd = distributed_dilated_forward(shard_qkv(q, k, v, 1), cfg);
  auto want = dilated_forward(q, k, v, cfg);
  CHECK(fwd.output.data == want.output.data);
  CHECK(fwd.lse.data == want.lse.data);
}

TEST_CASE("patterns that fit a shard need no communication") {
  const std::size_t n = 16, d = 3;
  const MatrixD q = random_matrix(n, d, 321);
  const MatrixD k = random_matrix(n, d, 322);
  const MatrixD v = random_matrix(n, d, 323);
  DilatedConfig cfg({{8, 1}}, 1, false);
  CommTranscript transcript;
  auto fwd =
      distributed_dilated_forward(shard_qkv(q, k, v, 2), cfg, &transcript);
  auto want = dilated_forward(q, k, v, cfg);
  CHECK(max_abs_diff(fwd.output, want.output) <= 1e-12);
  CHECK(transcript.total_sent(CommPhase::gather) == 0);
  CHECK(transcript.total_received(CommPhase::gather) == 0);
  CHECK(transcript.gathered_volume(0, 0) == 0);
  CHECK(transcript.gathered_volume(1, 0) == 0);
}

TEST_CASE("wide patterns gather sparsified keys with fixed volumes") {
  // N=16, D=2, pattern (16, 2), d=3: eight selected rows split 4/4, so
  // each device sends its 4x3 block once and receives the other.
  const std::size_t n = 16, d = 3;
  const MatrixD q = random_matrix(n, d, 331);
  const MatrixD k = random_matrix(n, d, 332);
  const MatrixD v = random_matrix(n, d, 333);
  DilatedConfig cfg({{8, 1}, {16, 2}}, 1, false);
  CommTranscript transcript;
  auto fwd =
      distributed_dilated_forward(shard_qkv(q, k, v, 2), cfg, &transcript);
  auto want = dilated_forward(q, k, v, cfg);
  CHECK(fwd.output.data == want.output.data);  // same arithmetic order

  CHECK(transcript.gathered_volume(0, 0) == 0);
  CHECK(transcript.gathered_volume(0, 1) == 24);
  CHECK(transcript.gathered_volume(1, 1) == 24);
  CHECK(transcript.total_sent(CommPhase::gather) == 24);
  CHECK(transcript.total_received(CommPhase::gather) == 24);
}

TEST_CASE("sharded forward matches single device across world sizes") {
  const std::size_t n = 64, d = 8;
  const MatrixD q = random_matrix(n, d, 341);
  const MatrixD k = random_matrix(n, d, 342);
  const MatrixD v = random_matrix(n, d, 343);
  for (bool causal : {false, true}) {
    auto cfg = geometric_preset(8, 2.0, n, 2, causal);
    auto want = dilated_forward(q, k, v, cfg);
    for (std::size_t world : {1ul, 2ul, 4ul, 8ul}) {
      std::vector<dilattn::AttentionResult<double>> out_shards;
      auto fwd = distributed_dilated_forward(shard_qkv(q, k, v, world), cfg,
                                             nullptr, &out_shards);
      CHECK(max_abs_diff(fwd.output, want.output) <= 1e-10);
      CHECK(max_abs_diff(fwd.lse, want.lse) <= 1e-10);
      // Per-device slices re-assemble to the same global answer.
      REQUIRE(out_shards.size() == world);
      std::vector<MatrixD> pieces;
      for (const auto& s : out_shards) pieces.push_back(s.output);
      CHECK(concat_rows(pieces).data == fwd.output.data);
    }
  }
}

TEST_CASE("sharded backward matches single device") {
  const std::size_t n = 16, d = 4;
  const MatrixD q = random_matrix(n, d, 351);
  const MatrixD k = random_matrix(n, d, 352);
  const MatrixD v = random_matrix(n, d, 353);
  const MatrixD g = random_matrix(n, d, 354);
  for (bool causal : {false, true}) {
    DilatedConfig cfg({{8, 1}, {16, 2}}, causal ? 2 : 1, causal);
    auto want = dilated_backward(q, k, v, cfg, g);
    for (std::size_t world : {1ul, 2ul, 4ul}) {
      auto grads = distributed_dilated_backward(
          shard_qkv(q, k, v, world), cfg, shard_rows(g, world));
      REQUIRE(grads.size() == world);
      std::vector<MatrixD> gq, gk, gv;
      for (const auto& gr : grads) {
        gq.push_back(gr.grad_q);
        gk.push_back(gr.grad_k);
        gv.push_back(gr.grad_v);
      }
      CHECK(max_abs_diff(concat_rows(gq), want.grad_q) <= 1e-9);
      CHECK(max_abs_diff(concat_rows(gk), want.grad_k) <= 1e-9);
      CHECK(max_abs_diff(concat_rows(gv), want.grad_v) <= 1e-9);
    }
  }
}

TEST_CASE("backward of zero cotangent is zero on every device") {
  const std::size_t n = 32, d = 4;
  const MatrixD q = random_matrix(n, d, 361);
  const MatrixD k = random_matrix(n, d, 362);
  const MatrixD v = random_matrix(n, d, 363);
  MatrixD g(n, d);
  auto cfg = geometric_preset(8, 2.0, n);
  auto grads = distributed_dilated_backward(shard_qkv(q, k, v, 4), cfg,
                                            shard_rows(g, 4));
  for (const auto& gr : grads) {
    for (double x : gr.grad_q.data) CHECK(x == 0.0);
    for (double x : gr.grad_k.data) CHECK(x == 0.0);
    for (double x : gr.grad_v.data) CHECK(x == 0.0);
  }
}

TEST_CASE("shard alignment is validated") {
  const std::size_t d = 2;
  // w < shard length but not dividing it: w=9 against l=12.
  {
    const MatrixD q = random_matrix(36, d, 371);
    DilatedConfig cfg({{9, 1}}, 1, false);
    CHECK_THROWS_AS(
        distributed_dilated_forward(shard_qkv(q, q, q, 3), cfg), ConfigError);
  }
  // w > shard length but not a multiple of it: w=12 against l=9.
  {
    const MatrixD q = random_matrix(36, d, 372);
    DilatedConfig cfg({{12, 1}, {36, 2}}, 1, false);
    CHECK_THROWS_AS(
        distributed_dilated_forward(shard_qkv(q, q, q, 4), cfg), ConfigError);
  }
  // World size must divide the sequence length at all.
  {
    const MatrixD q = random_matrix(16, d, 373);
    CHECK_THROWS_AS(shard_qkv(q, q, q, 3), ConfigError);
  }
}

TEST_CASE("runs are deterministic, transcript included") {
  const std::size_t n = 64, d = 8;
  const MatrixD q = random_matrix(n, d, 381);
  const MatrixD k = random_matrix(n, d, 382);
  const MatrixD v = random_matrix(n, d, 383);
  const MatrixD g = random_matrix(n, d, 384);
  auto cfg = geometric_preset(8, 2.0, n, 2, true);

  auto run = [&](CommTranscript* t) {
    auto shards = shard_qkv(q, k, v, 4);
    auto fwd = distributed_dilated_forward(shards, cfg, t);
    auto bwd = distributed_dilated_backward(shards, cfg, shard_rows(g, 4), t);
    return std::make_pair(std::move(fwd), std::move(bwd));
  };
  CommTranscript t1, t2;
  auto [f1, b1] = run(&t1);
  auto [f2, b2] = run(&t2);
  CHECK(f1.output.data == f2.output.data);
  CHECK(f1.lse.data == f2.lse.data);
  for (std::size_t r = 0; r < b1.size(); ++r) {
    CHECK(b1[r].grad_q.data == b2[r].grad_q.data);
    CHECK(b1[r].grad_k.data == b2[r].grad_k.data);
    CHECK(b1[r].grad_v.data == b2[r].grad_v.data);
  }
  CHECK(t1.to_jsonl() == t2.to_jsonl());
}

TEST_CASE("communication volumes balance and mirror across phases") {
  const std::size_t n = 64, d = 8;
  const MatrixD q = random_matrix(n, d, 391);
  const MatrixD k = random_matrix(n, d, 392);
  const MatrixD v = random_matrix(n, d, 393);
  const MatrixD g = random_matrix(n, d, 394);
  auto cfg = geometric_preset(8, 2.0, n, 2, false);

  CommTranscript transcript;
  auto shards = shard_qkv(q, k, v, 4);
  (void)distributed_dilated_forward(shards, cfg, &transcript);
  (void)distributed_dilated_backward(shards, cfg, shard_rows(g, 4),
                                     &transcript);

  // Every element sent is received by exactly one peer.
  CHECK(transcript.total_sent(CommPhase::gather) ==
        transcript.total_received(CommPhase::gather));
  CHECK(transcript.total_sent(CommPhase::reduce_scatter) ==
        transcript.total_received(CommPhase::reduce_scatter));
  CHECK(transcript.total_sent(CommPhase::gather) > 0);

  // The backward reduce-scatter moves exactly what the forward
  // gathered, per device and pattern, with send/receive roles swapped.
  for (const auto& rec : transcript.records) {
    if (rec.phase != CommPhase::gather) continue;
    for (const auto& mirror : transcript.records) {
      if (mirror.phase == CommPhase::reduce_scatter &&
          mirror.device == rec.device &&
          mirror.pattern_index == rec.pattern_index) {
        CHECK(mirror.elements_sent == rec.elements_received);
        CHECK(mirror.elements_received == rec.elements_sent);
        CHECK(mirror.elements_owned == rec.elements_owned);
      }
    }
  }
}

TEST_CASE("transcript serializes one json record per line") {
  const std::size_t n = 16, d = 2;
  const MatrixD q = random_matrix(n, d, 401);
  CommTranscript transcript;
  DilatedConfig cfg({{8, 1}, {16, 2}}, 1, false);
  (void)distributed_dilated_forward(shard_qkv(q, q, q, 2), cfg, &transcript);

  std::istringstream lines(transcript.to_jsonl());
  std::string line;
  std::size_t count = 0;
  while (std::getline(lines, line)) {
    auto j = nlohmann::json::parse(line);  // throws on malformed output
    CHECK(j.contains("device"));
    CHECK(j.contains("pattern_index"));
    CHECK(j.contains("elements_sent"));
    CHECK(j.contains("elements_received"));
    CHECK((j["phase"] == "gather" || j["phase"] == "reduce_scatter"));
    ++count;
  }
  // One gather record per (device, pattern) for the forward pass.
  CHECK(count == 2 * 2);
}

TEST_CASE("gather buffers are constant in n for constant-ratio schedules") {
  // w_i / r_i == w0 for geometric presets, so the sparsified segment a
  // device group shares always holds w0 rows: w0 * d elements per
  // device and pattern, no matter how long the sequence is.
  const std::size_t d = 2;
  std::vector<std::pair<std::size_t, CommTranscript>> by_n;
  for (std::size_t n : {16ul, 32ul, 64ul}) {
    const MatrixD q = random_matrix(n, d, 411);
    CommTranscript t;
    auto cfg = geometric_preset(4, 2.0, n);
    (void)distributed_dilated_forward(shard_qkv(q, q, q, 2), cfg, &t);
    by_n.emplace_back(n, std::move(t));
  }
  auto rows = communication_report(by_n);
  REQUIRE(!rows.empty());
  std::vector<std::uint64_t> per_n_totals;
  for (std::size_t i = 0; i < by_n.size(); ++i) {
    std::uint64_t device0_total = 0;
    bool saw_nonzero = false;
    for (const auto& row : rows) {
      if (row.n != by_n[i].first) continue;
      if (row.gathered_elements != 0) {
        // Every gathered pattern moves exactly w0 * d = 8 elements.
        CHECK(row.gathered_elements == 8);
        saw_nonzero = true;
      }
      if (row.device == 0) device0_total += row.gathered_elements;
    }
    CHECK(saw_nonzero);
    per_n_totals.push_back(device0_total);
  }
  // The per-device total is flat across sequence lengths.
  CHECK(per_n_totals[0] == per_n_totals[1]);
  CHECK(per_n_totals[1] == per_n_totals[2]);

  // Same n, more devices: per-device buffers stay w0 * d; the summed
  // volume grows with the device count.
  const std::size_t n = 64;
  const MatrixD q = random_matrix(n, d, 412);
  CommTranscript t2, t4;
  auto cfg = geometric_preset(4, 2.0, n);
  (void)distributed_dilated_forward(shard_qkv(q, q, q, 2), cfg, &t2);
  (void)distributed_dilated_forward(shard_qkv(q, q, q, 4), cfg, &t4);
  std::uint64_t total2 = 0, total4 = 0;
  for (const auto& rec : t2.records)
    total2 += rec.elements_owned + rec.elements_received;
  for (const auto& rec : t4.records)
    total4 += rec.elements_owned + rec.elements_received;
  CHECK(total2 == 2 * 8);       // one gathered pattern on two devices
  CHECK(total4 == 4 * (2 * 8)); // two gathered patterns on four devices
  CHECK(total4 > total2);
}
