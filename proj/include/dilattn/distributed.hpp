// Copyright (c) 2026 the dilattn authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "dilattn/dilated.hpp"

namespace dilattn {

/// One virtual device's slice of a sequence-parallel run: a contiguous
/// row shard of the input and its projections. Projection weights are
/// replicated; only the sequence dimension is partitioned.
template <typename T>
struct DeviceShard {
  std::size_t rank{0};
  std::size_t world_size{1};
  std::size_t local_len{0};      // l = n / world_size
  std::size_t global_offset{0};  // rank * l
  Matrix<T> x_local;             // raw input rows (empty when sharded post-projection)
  Matrix<T> q, k, v;             // [local_len x d_total]
};

enum class CommPhase { gather, reduce_scatter };

inline const char* comm_phase_name(CommPhase p) {
  return p == CommPhase::gather ? "gather" : "reduce_scatter";
}

/// One collective's accounting on one device for one pattern, element
/// counts in scalars (rows x feature width, summed over heads). The key
/// and value tensors always move together, so counts are per k/v pair
/// (one pair = one unit), which makes a backward reduce-scatter mirror
/// its forward gather exactly. A device sends its own block to each of
/// the other group_size-1 participants and receives every block it does
/// not own, so summing sent and received over the group gives the same
/// total.
struct CommRecord {
  std::size_t device{0};
  CommPhase phase{CommPhase::gather};
  std::size_t pattern_index{0};
  std::uint64_t elements_sent{0};
  std::uint64_t elements_received{0};
  std::uint64_t elements_owned{0};  // this device's block within the collective
  std::size_t group_size{1};
};

struct CommTranscript {
  std::vector<CommRecord> records;

  std::uint64_t total_sent(CommPhase phase) const {
    std::uint64_t s = 0;
    for (const auto& r : records)
      if (r.phase == phase) s += r.elements_sent;
    return s;
  }
  std::uint64_t total_received(CommPhase phase) const {
    std::uint64_t s = 0;
    for (const auto& r : records)
      if (r.phase == phase) s += r.elements_received;
    return s;
  }
  /// Gathered buffer a device materializes for a pattern: own block
  /// plus everything received. Zero for local-only patterns.
  std::uint64_t gathered_volume(std::size_t device, std::size_t pattern) const {
    std::uint64_t s = 0;
    for (const auto& r : records)
      if (r.device == device && r.pattern_index == pattern &&
          r.phase == CommPhase::gather)
        s += r.elements_owned + r.elements_received;
    return s;
  }

  /// JSON lines, one record per line, stable field order.
  std::string to_jsonl() const;
};

/// Split rows of a matrix into world_size contiguous shards.
template <typename T>
std::vector<Matrix<T>> shard_rows(const Matrix<T>& m, std::size_t world_size) {
  if (world_size == 0 || m.rows % world_size != 0)
    throw ConfigError("shard_rows: world size must divide row count");
  const std::size_t l = m.rows / world_size;
  std::vector<Matrix<T>> shards;
  shards.reserve(world_size);
  for (std::size_t r = 0; r < world_size; ++r) {
    Matrix<T> s(l, m.cols);
    for (std::size_t i = 0; i < l; ++i) {
      const T* src = m.row_ptr(r * l + i);
      T* dst = s.row_ptr(i);
      for (std::size_t c = 0; c < m.cols; ++c) dst[c] = src[c];
    }
    shards.push_back(std::move(s));
  }
  return shards;
}

/// Stack shards back into one matrix, rank order.
template <typename T>
Matrix<T> concat_rows(const std::vector<Matrix<T>>& parts) {
  if (parts.empty()) throw ShapeError("concat_rows: empty list");
  std::size_t rows = 0;
  for (const auto& p : parts) {
    if (p.cols != parts[0].cols)
      throw ShapeError("concat_rows: column widths disagree");
    rows += p.rows;
  }
  Matrix<T> out(rows, parts[0].cols);
  std::size_t at = 0;
  for (const auto& p : parts) {
    for (std::size_t i = 0; i < p.rows; ++i, ++at) {
      const T* src = p.row_ptr(i);
      T* dst = out.row_ptr(at);
      for (std::size_t c = 0; c < p.cols; ++c) dst[c] = src[c];
    }
  }
  return out;
}

/// Shard the raw input by rows, then project each shard with the
/// replicated weights. Row-local projections make the concatenation of
/// shard projections bit-identical to projecting the whole input.
template <typename T>
std::vector<DeviceShard<T>> shard_and_project(const Matrix<T>& x,
                                              const Matrix<T>& wq,
                                              const Matrix<T>& wk,
                                              const Matrix<T>& wv,
                                              std::size_t world_size) {
  if (world_size == 0 || x.rows % world_size != 0)
    throw ConfigError("shard_and_project: world size must divide sequence length");
  const std::size_t l = x.rows / world_size;
  std::vector<DeviceShard<T>> shards(world_size);
  for (std::size_t r = 0; r < world_size; ++r) {
    auto& s = shards[r];
    s.rank = r;
    s.world_size = world_size;
    s.local_len = l;
    s.global_offset = r * l;
    s.x_local = Matrix<T>(l, x.cols);
    for (std::size_t i = 0; i < l; ++i)
      for (std::size_t c = 0; c < x.cols; ++c)
        s.x_local(i, c) = x(r * l + i, c);
    s.q = matmul(s.x_local, wq);
    s.k = matmul(s.x_local, wk);
    s.v = matmul(s.x_local, wv);
  }
  return shards;
}

/// Shard pre-projected q/k/v directly (tests and benchmarks drive the
/// attention layer without a projection in front).
template <typename T>
std::vector<DeviceShard<T>> shard_qkv(const Matrix<T>& q, const Matrix<T>& k,
                                      const Matrix<T>& v,
                                      std::size_t world_size) {
  if (!q.same_shape(k) || !q.same_shape(v))
    throw ShapeError("shard_qkv: q/k/v must share [n x d]");
  auto qs = shard_rows(q, world_size);
  auto ks = shard_rows(k, world_size);
  auto vs = shard_rows(v, world_size);
  const std::size_t l = q.rows / world_size;
  std::vector<DeviceShard<T>> shards(world_size);
  for (std::size_t r = 0; r < world_size; ++r) {
    shards[r].rank = r;
    shards[r].world_size = world_size;
    shards[r].local_len = l;
    shards[r].global_offset = r * l;
    shards[r].q = std::move(qs[r]);
    shards[r].k = std::move(ks[r]);
    shards[r].v = std::move(vs[r]);
  }
  return shards;
}

namespace detail {

/// Validates shard bookkeeping and the segment/device alignment rules:
/// a segment no longer than a shard must tile it (w | l); a longer one
/// must span whole devices (l | w). Returns n.
template <typename T>
std::size_t check_shards(const std::vector<DeviceShard<T>>& shards,
                         const DilatedConfig& config) {
  if (shards.empty()) throw ConfigError("distributed: no device shards");
  const std::size_t world = shards.size();
  const std::size_t l = shards[0].local_len;
  for (std::size_t r = 0; r < world; ++r) {
    const auto& s = shards[r];
    if (s.rank != r || s.world_size != world || s.local_len != l ||
        s.global_offset != r * l)
      throw ConfigError("distributed: shard bookkeeping is inconsistent");
    if (s.q.rows != l || !s.q.same_shape(s.k) || !s.q.same_shape(s.v))
      throw ShapeError("distributed: shard q/k/v must be [local_len x d]");
    if (s.q.cols != shards[0].q.cols)
      throw ShapeError("distributed: shards disagree on feature width");
  }
  for (const auto& p : config.patterns) {
    if (p.segment_len <= l) {
      if (l % p.segment_len != 0)
        throw ConfigError(
            "distributed: segment length " + std::to_string(p.segment_len) +
            " does not tile the device shard length " + std::to_string(l));
    } else if (p.segment_len % l != 0) {
      throw ConfigError(
          "distributed: segment length " + std::to_string(p.segment_len) +
          " spans a fractional number of devices (shard length " +
          std::to_string(l) + ")");
    }
  }
  return world * l;
}

/// Per-device sparsified block for one (pattern, head): the local row
/// indices the pattern selects, in ascending global order.
inline std::vector<std::size_t> local_selection(std::size_t local_len,
                                                std::size_t global_offset,
                                                std::size_t segment_len,
                                                std::size_t dilation,
                                                std::size_t head_offset) {
  // Global positions p with (p - seg_start) % dilation == head_offset,
  // restricted to this shard. The shard sits inside one global segment
  // (l | w), so seg_start is constant across the shard.
  const std::size_t seg_start = (global_offset / segment_len) * segment_len;
  std::vector<std::size_t> local;
  const std::size_t phase = (global_offset - seg_start) % dilation;
  // first local index with (phase + idx) % dilation == head_offset
  const std::size_t first =
      (head_offset + dilation - phase) % dilation;
  for (std::size_t idx = first; idx < local_len; idx += dilation)
    local.push_back(idx);
  return local;
}

}  // namespace detail

/// Sequence-parallel dilated attention over virtual devices. Patterns
/// whose segments fit inside a shard run with no communication; longer
/// segments all-gather the dilation-sparsified keys and values across
/// the devices spanning each global segment (rank order, so the key
/// stream each query sees is identical to the single-device order and
/// the result is bit-equal). The mixture across patterns runs on each
/// device independently. Returns the rank-ordered assembly; per-device
/// outputs land in `out_shards` when non-null.
template <typename T>
AttentionResult<T> distributed_dilated_forward(
    const std::vector<DeviceShard<T>>& shards, const DilatedConfig& config,
    CommTranscript* transcript = nullptr,
    std::vector<AttentionResult<T>>* out_shards = nullptr) {
  config.validate();
  const std::size_t n = detail::check_shards(shards, config);
  const std::size_t world = shards.size();
  const std::size_t l = shards[0].local_len;
  const std::size_t d_total = shards[0].q.cols;
  if (d_total % config.heads != 0)
    throw ShapeError("distributed: feature dim not divisible by heads");
  const std::size_t heads = config.heads;
  const std::size_t dh = d_total / heads;
  const std::size_t num_patterns = config.patterns.size();

  // comm volumes accumulated over heads, keyed [device][pattern]
  std::vector<std::vector<CommRecord>> vol(
      world, std::vector<CommRecord>(num_patterns));

  std::vector<AttentionResult<T>> results;
  results.reserve(world);
  for (std::size_t r = 0; r < world; ++r)
    results.emplace_back(l, d_total, heads);

  for (std::size_t h = 0; h < heads; ++h) {
    // Head slices per device (device-local work).
    std::vector<Matrix<T>> qh(world), kh(world), vh(world);
    for (std::size_t r = 0; r < world; ++r) {
      if (heads == 1) {
        qh[r] = shards[r].q;
        kh[r] = shards[r].k;
        vh[r] = shards[r].v;
      } else {
        qh[r] = shards[r].q.slice_cols(h * dh, dh);
        kh[r] = shards[r].k.slice_cols(h * dh, dh);
        vh[r] = shards[r].v.slice_cols(h * dh, dh);
      }
    }
    const T scale = config.scale.resolve<T>(dh);

    // pattern_out[r][i]: this head's scattered output on device r.
    std::vector<std::vector<PatternOutput<T>>> pattern_out(world);
    for (std::size_t r = 0; r < world; ++r)
      pattern_out[r].reserve(num_patterns);

    for (std::size_t i = 0; i < num_patterns; ++i) {
      const auto& pat = config.patterns[i];
      if (pat.segment_len <= l) {
        // Local branch: shard boundaries tile segments, and the head
        // offset is invariant under the global shift because shard
        // starts are segment multiples. Plain per-device run.
        for (std::size_t r = 0; r < world; ++r)
          pattern_out[r].push_back(single_pattern_attention(
              qh[r], kh[r], vh[r], config, i, h, ExecPolicy::parallel));
        continue;
      }

      // Gathered branch: group = the w/l consecutive devices holding
      // one global segment.
      const std::size_t group = pat.segment_len / l;
      const std::size_t s = config.head_offset(i, h);

      // Phase 1 (device-local): sparsify own keys/values.
      std::vector<std::vector<std::size_t>> sel(world);
      std::vector<Matrix<T>> kt(world), vt(world);
      for (std::size_t r = 0; r < world; ++r) {
        sel[r] = detail::local_selection(l, shards[r].global_offset,
                                         pat.segment_len, pat.dilation, s);
        kt[r] = detail::gather_rows(kh[r], sel[r]);
        vt[r] = detail::gather_rows(vh[r], sel[r]);
      }

      // Phase 2 (collective): concatenate each group's blocks in rank
      // order together with their global positions.
      const std::size_t num_groups = world / group;
      std::vector<Matrix<T>> gk(num_groups), gv(num_groups);
      std::vector<std::vector<std::size_t>> gpos(num_groups);
      for (std::size_t gidx = 0; gidx < num_groups; ++gidx) {
        std::vector<Matrix<T>> kparts, vparts;
        for (std::size_t m = 0; m < group; ++m) {
          const std::size_t r = gidx * group + m;
          kparts.push_back(kt[r]);
          vparts.push_back(vt[r]);
          for (const std::size_t idx : sel[r])
            gpos[gidx].push_back(shards[r].global_offset + idx);
        }
        gk[gidx] = concat_rows(kparts);
        gv[gidx] = concat_rows(vparts);

        // Accounting: each member sends its block to the group minus
        // itself and receives every block it does not own.
        std::uint64_t total = 0;
        for (std::size_t m = 0; m < group; ++m)
          total += static_cast<std::uint64_t>(sel[gidx * group + m].size()) * dh;
        for (std::size_t m = 0; m < group; ++m) {
          const std::size_t r = gidx * group + m;
          const std::uint64_t own =
              static_cast<std::uint64_t>(sel[r].size()) * dh;
          auto& rec = vol[r][i];
          rec.elements_sent += own * (group - 1);
          rec.elements_received += total - own;
          rec.elements_owned += own;
          rec.group_size = group;
        }
      }

      // Phase 3 (device-local): attend own sparsified queries against
      // the gathered segment, scatter into local rows.
      for (std::size_t r = 0; r < world; ++r) {
        const std::size_t gidx = r / group;
        PatternOutput<T> po(l, dh);
        if (!sel[r].empty()) {
          const auto sub_q = detail::gather_rows(qh[r], sel[r]);
          std::vector<std::size_t> pos_q(sel[r].size());
          for (std::size_t j = 0; j < sel[r].size(); ++j)
            pos_q[j] = shards[r].global_offset + sel[r][j];
          const auto sub =
              dense_attention(sub_q, gk[gidx], gv[gidx], config.causal, scale,
                              pos_q, gpos[gidx], ExecPolicy::parallel);
          for (std::size_t j = 0; j < sel[r].size(); ++j) {
            const std::size_t p = sel[r][j];
            const T* src = sub.output.row_ptr(j);
            T* dst = po.scattered.row_ptr(p);
            for (std::size_t c = 0; c < dh; ++c) dst[c] = src[c];
            po.row_lse[p] = sub.lse(j, 0);
          }
        }
        pattern_out[r].push_back(std::move(po));
      }
    }

    // Mixture per device, then write this head's slice of the result.
    for (std::size_t r = 0; r < world; ++r) {
      const auto mixed = mix_patterns<T>(pattern_out[r], ExecPolicy::parallel);
      auto& res = results[r];
      for (std::size_t p = 0; p < l; ++p) {
        const T* src = mixed.output.row_ptr(p);
        T* dst = res.output.row_ptr(p) + h * dh;
        for (std::size_t c = 0; c < dh; ++c) dst[c] = src[c];
        res.lse(p, h) = mixed.lse(p, 0);
        res.set_covered(p, h, mixed.covered_at(p));
      }
    }
  }

  if (transcript != nullptr) {
    for (std::size_t r = 0; r < world; ++r) {
      for (std::size_t i = 0; i < num_patterns; ++i) {
        CommRecord rec = vol[r][i];
        rec.device = r;
        rec.phase = CommPhase::gather;
        rec.pattern_index = i;
        if (rec.group_size == 0) rec.group_size = 1;
        transcript->records.push_back(rec);
      }
    }
  }

  // Rank-ordered assembly.
  AttentionResult<T> global(n, d_total, heads);
  for (std::size_t r = 0; r < world; ++r) {
    const auto& res = results[r];
    for (std::size_t p = 0; p < l; ++p) {
      const std::size_t gp = shards[r].global_offset + p;
      const T* src = res.output.row_ptr(p);
      T* dst = global.output.row_ptr(gp);
      for (std::size_t c = 0; c < d_total; ++c) dst[c] = src[c];
      for (std::size_t hh = 0; hh < heads; ++hh) {
        global.lse(gp, hh) = res.lse(p, hh);
        global.set_covered(gp, hh, res.covered_at(p, hh));
      }
    }
  }
  if (out_shards != nullptr) *out_shards = std::move(results);
  return global;
}

/// Backward pass of the sequence-parallel run. Devices recompute their
/// forward state, push gradients through the mixture (output rows plus
/// the log-denominator channel), and run the attention VJP per segment.
/// For gathered patterns every device produces gradient contributions
/// for the whole gathered block; a reduce-scatter sums them in rank
/// order and returns each owner its slice — the collective dual of the
/// forward all-gather, with mirrored transcript volumes.
template <typename T>
std::vector<AttentionGrads<T>> distributed_dilated_backward(
    const std::vector<DeviceShard<T>>& shards, const DilatedConfig& config,
    const std::vector<Matrix<T>>& grad_shards,
    CommTranscript* transcript = nullptr) {
  config.validate();
  detail::check_shards(shards, config);
  const std::size_t world = shards.size();
  const std::size_t l = shards[0].local_len;
  const std::size_t d_total = shards[0].q.cols;
  if (grad_shards.size() != world)
    throw ShapeError("distributed backward: one grad shard per device required");
  for (std::size_t r = 0; r < world; ++r)
    if (grad_shards[r].rows != l || grad_shards[r].cols != d_total)
      throw ShapeError("distributed backward: grad shard shape mismatch");
  if (d_total % config.heads != 0)
    throw ShapeError("distributed: feature dim not divisible by heads");
  const std::size_t heads = config.heads;
  const std::size_t dh = d_total / heads;
  const std::size_t num_patterns = config.patterns.size();

  std::vector<AttentionGrads<T>> grads(world);
  for (std::size_t r = 0; r < world; ++r)
    grads[r] = AttentionGrads<T>{Matrix<T>(l, d_total), Matrix<T>(l, d_total),
                                 Matrix<T>(l, d_total)};

  std::vector<std::vector<CommRecord>> vol(
      world, std::vector<CommRecord>(num_patterns));

  for (std::size_t h = 0; h < heads; ++h) {
    std::vector<Matrix<T>> qh(world), kh(world), vh(world), gh(world);
    for (std::size_t r = 0; r < world; ++r) {
      if (heads == 1) {
        qh[r] = shards[r].q;
        kh[r] = shards[r].k;
        vh[r] = shards[r].v;
        gh[r] = grad_shards[r];
      } else {
        qh[r] = shards[r].q.slice_cols(h * dh, dh);
        kh[r] = shards[r].k.slice_cols(h * dh, dh);
        vh[r] = shards[r].v.slice_cols(h * dh, dh);
        gh[r] = grad_shards[r].slice_cols(h * dh, dh);
      }
    }
    const T scale = config.scale.resolve<T>(dh);

    // Recompute forward state (pattern outputs, gathered blocks, and
    // the per-device mixture) exactly as the forward pass built it.
    std::vector<std::vector<PatternOutput<T>>> pattern_out(world);
    std::vector<std::vector<std::vector<std::size_t>>> sel_of(
        num_patterns, std::vector<std::vector<std::size_t>>(world));
    std::vector<std::vector<Matrix<T>>> gk_of(num_patterns), gv_of(num_patterns);
    std::vector<std::vector<std::vector<std::size_t>>> gpos_of(num_patterns);

    for (std::size_t r = 0; r < world; ++r) pattern_out[r].reserve(num_patterns);
    for (std::size_t i = 0; i < num_patterns; ++i) {
      const auto& pat = config.patterns[i];
      if (pat.segment_len <= l) {
        for (std::size_t r = 0; r < world; ++r)
          pattern_out[r].push_back(single_pattern_attention(
              qh[r], kh[r], vh[r], config, i, h, ExecPolicy::parallel));
        continue;
      }
      const std::size_t group = pat.segment_len / l;
      const std::size_t s = config.head_offset(i, h);
      const std::size_t num_groups = world / group;
      auto& sel = sel_of[i];
      for (std::size_t r = 0; r < world; ++r)
        sel[r] = detail::local_selection(l, shards[r].global_offset,
                                         pat.segment_len, pat.dilation, s);
      gk_of[i].resize(num_groups);
      gv_of[i].resize(num_groups);
      gpos_of[i].resize(num_groups);
      for (std::size_t gidx = 0; gidx < num_groups; ++gidx) {
        std::vector<Matrix<T>> kparts, vparts;
        for (std::size_t m = 0; m < group; ++m) {
          const std::size_t r = gidx * group + m;
          kparts.push_back(detail::gather_rows(kh[r], sel[r]));
          vparts.push_back(detail::gather_rows(vh[r], sel[r]));
          for (const std::size_t idx : sel[r])
            gpos_of[i][gidx].push_back(shards[r].global_offset + idx);
        }
        gk_of[i][gidx] = concat_rows(kparts);
        gv_of[i][gidx] = concat_rows(vparts);
      }
      for (std::size_t r = 0; r < world; ++r) {
        const std::size_t gidx = r / group;
        PatternOutput<T> po(l, dh);
        if (!sel[r].empty()) {
          const auto sub_q = detail::gather_rows(qh[r], sel[r]);
          std::vector<std::size_t> pos_q(sel[r].size());
          for (std::size_t j = 0; j < sel[r].size(); ++j)
            pos_q[j] = shards[r].global_offset + sel[r][j];
          const auto sub = dense_attention(sub_q, gk_of[i][gidx], gv_of[i][gidx],
                                           config.causal, scale, pos_q,
                                           gpos_of[i][gidx], ExecPolicy::parallel);
          for (std::size_t j = 0; j < sel[r].size(); ++j) {
            const std::size_t p = sel[r][j];
            const T* src = sub.output.row_ptr(j);
            T* dst = po.scattered.row_ptr(p);
            for (std::size_t c = 0; c < dh; ++c) dst[c] = src[c];
            po.row_lse[p] = sub.lse(j, 0);
          }
        }
        pattern_out[r].push_back(std::move(po));
      }
    }

    std::vector<AttentionResult<T>> mixed(world);
    for (std::size_t r = 0; r < world; ++r)
      mixed[r] = mix_patterns<T>(pattern_out[r], ExecPolicy::parallel);

    // Per pattern: mixture backward on each device, then the VJP.
    for (std::size_t i = 0; i < num_patterns; ++i) {
      const auto& pat = config.patterns[i];

      // Upstream gradient for this pattern on each device: weight the
      // output rows by the mixture coefficient and add the channel for
      // the log-denominator (the weights' own dependence).
      std::vector<Matrix<T>> grad_scattered(world);
      std::vector<std::vector<T>> grad_lse(world);
      for (std::size_t r = 0; r < world; ++r) {
        const auto& po = pattern_out[r][i];
        grad_scattered[r] = Matrix<T>(l, dh);
        grad_lse[r].assign(l, T(0));
        for (std::size_t p = 0; p < l; ++p) {
          if (po.row_lse[p] == kNegInf<T>) continue;
          const T alpha = std::exp(po.row_lse[p] - mixed[r].lse(p, 0));
          const T* grow = gh[r].row_ptr(p);
          detail::axpy(alpha, grow, grad_scattered[r].row_ptr(p), dh);
          const T gdot_pattern =
              detail::dot(grow, po.scattered.row_ptr(p), dh);
          const T gdot_mixed =
              detail::dot(grow, mixed[r].output.row_ptr(p), dh);
          grad_lse[r][p] = alpha * (gdot_pattern - gdot_mixed);
        }
      }

      if (pat.segment_len <= l) {
        // Local VJP per device, scattered into local gradient slabs.
        for (std::size_t r = 0; r < world; ++r) {
          const auto maps = build_index_maps(config, l, i, h);
          for (const auto& map : maps) {
            const auto sub_q = detail::gather_rows(qh[r], map.positions);
            const auto sub_k = detail::gather_rows(kh[r], map.positions);
            const auto sub_v = detail::gather_rows(vh[r], map.positions);
            const auto sub_g =
                detail::gather_rows(grad_scattered[r], map.positions);
            std::vector<T> sub_glse(map.positions.size());
            for (std::size_t j = 0; j < map.positions.size(); ++j)
              sub_glse[j] = grad_lse[r][map.positions[j]];
            const auto g = dense_attention_vjp(sub_q, sub_k, sub_v,
                                               config.causal, scale,
                                               map.positions, map.positions,
                                               sub_g, sub_glse.data());
            for (std::size_t j = 0; j < map.positions.size(); ++j) {
              const std::size_t p = map.positions[j];
              detail::axpy(T(1), g.grad_q.row_ptr(j),
                           grads[r].grad_q.row_ptr(p) + h * dh, dh);
              detail::axpy(T(1), g.grad_k.row_ptr(j),
                           grads[r].grad_k.row_ptr(p) + h * dh, dh);
              detail::axpy(T(1), g.grad_v.row_ptr(j),
                           grads[r].grad_v.row_ptr(p) + h * dh, dh);
            }
          }
        }
        continue;
      }

      // Gathered pattern: each device runs the VJP of (own queries x
      // whole gathered block); q-gradients stay local, k/v-gradients
      // cover the whole block and are reduce-scattered to owners.
      const std::size_t group = pat.segment_len / l;
      const std::size_t num_groups = world / group;
      const auto& sel = sel_of[i];
      for (std::size_t gidx = 0; gidx < num_groups; ++gidx) {
        const std::size_t block_rows = gpos_of[i][gidx].size();
        // Summed k/v gradients for the gathered block, rank order.
        Matrix<T> acc_gk(block_rows, dh), acc_gv(block_rows, dh);
        for (std::size_t m = 0; m < group; ++m) {
          const std::size_t r = gidx * group + m;
          if (sel[r].empty()) continue;
          const auto sub_q = detail::gather_rows(qh[r], sel[r]);
          const auto sub_g = detail::gather_rows(grad_scattered[r], sel[r]);
          std::vector<std::size_t> pos_q(sel[r].size());
          std::vector<T> sub_glse(sel[r].size());
          for (std::size_t j = 0; j < sel[r].size(); ++j) {
            pos_q[j] = shards[r].global_offset + sel[r][j];
            sub_glse[j] = grad_lse[r][sel[r][j]];
          }
          const auto g = dense_attention_vjp(
              sub_q, gk_of[i][gidx], gv_of[i][gidx], config.causal, scale,
              pos_q, gpos_of[i][gidx], sub_g, sub_glse.data());
          for (std::size_t j = 0; j < sel[r].size(); ++j) {
            const std::size_t p = sel[r][j];
            detail::axpy(T(1), g.grad_q.row_ptr(j),
                         grads[r].grad_q.row_ptr(p) + h * dh, dh);
          }
          for (std::size_t b = 0; b < block_rows; ++b) {
            detail::axpy(T(1), g.grad_k.row_ptr(b), acc_gk.row_ptr(b), dh);
            detail::axpy(T(1), g.grad_v.row_ptr(b), acc_gv.row_ptr(b), dh);
          }
        }
        // Scatter each owner's slice back to its local slab.
        std::size_t b = 0;
        for (std::size_t m = 0; m < group; ++m) {
          const std::size_t r = gidx * group + m;
          for (const std::size_t idx : sel[r]) {
            detail::axpy(T(1), acc_gk.row_ptr(b),
                         grads[r].grad_k.row_ptr(idx) + h * dh, dh);
            detail::axpy(T(1), acc_gv.row_ptr(b),
                         grads[r].grad_v.row_ptr(idx) + h * dh, dh);
            ++b;
          }
        }
        // Accounting, mirrored from the forward gather: contributions
        // to blocks this device does not own go out; everyone else's
        // contributions to the owned slice come in. Two tensors (k, v)
        // per collective.
        std::uint64_t total = 0;
        for (std::size_t m = 0; m < group; ++m)
          total += static_cast<std::uint64_t>(sel[gidx * group + m].size()) * dh;
        for (std::size_t m = 0; m < group; ++m) {
          const std::size_t r = gidx * group + m;
          const std::uint64_t own =
              static_cast<std::uint64_t>(sel[r].size()) * dh;
          auto& rec = vol[r][i];
          rec.elements_sent += total - own;
          rec.elements_received += own * (group - 1);
          rec.elements_owned += own;
          rec.group_size = group;
        }
      }
    }
  }

  if (transcript != nullptr) {
    for (std::size_t r = 0; r < world; ++r) {
      for (std::size_t i = 0; i < num_patterns; ++i) {
        CommRecord rec = vol[r][i];
        rec.device = r;
        rec.phase = CommPhase::reduce_scatter;
        rec.pattern_index = i;
        if (rec.group_size == 0) rec.group_size = 1;
        transcript->records.push_back(rec);
      }
    }
  }
  return grads;
}

/// One line of the communication constancy table: the gathered buffer a
/// device materializes for a pattern at a given sequence length (own
/// block plus received blocks, summed over heads).
struct CommReportRow {
  std::size_t n{0};
  std::size_t device{0};
  std::size_t pattern_index{0};
  std::uint64_t gathered_elements{0};
};

/// Tabulate per-device gather volumes from forward transcripts taken at
/// several sequence lengths. For constant-ratio schedules (w_i/r_i ==
/// w0 for every gathered pattern) the volume per device and pattern is
/// w0 * d per owned segment, independent of n. One row per (n, device,
/// pattern) that appears in the transcript's gather records.
std::vector<CommReportRow> communication_report(
    const std::vector<std::pair<std::size_t, CommTranscript>>& transcripts_by_n);

}  // namespace dilattn
