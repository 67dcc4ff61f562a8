// Copyright (c) 2026 the dilattn authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "dilattn/attention.hpp"
#include "dilattn/config.hpp"
#include "dilattn/index_map.hpp"
#include "dilattn/matrix.hpp"

namespace dilattn {

/// Output of one (pattern, head) pass over the full sequence: segment
/// attention results scattered back to their original rows. Rows the
/// pattern did not select stay zero with row_lse = -inf.
template <typename T>
struct PatternOutput {
  Matrix<T> scattered;   // n x d, zeros off the selected rows
  std::vector<T> row_lse;  // n, -inf off the selected rows

  PatternOutput() = default;
  PatternOutput(std::size_t n, std::size_t d)
      : scattered(n, d), row_lse(n, kNegInf<T>) {}
};

namespace detail {

template <typename T>
Matrix<T> gather_rows(const Matrix<T>& m, std::span<const std::size_t> rows) {
  Matrix<T> out(rows.size(), m.cols);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const T* src = m.row_ptr(rows[i]);
    T* dst = out.row_ptr(i);
    for (std::size_t c = 0; c < m.cols; ++c) dst[c] = src[c];
  }
  return out;
}

}  // namespace detail

/// Segment, sparsify, attend, scatter for one pattern and head.
/// q, k, v are full-sequence [n x d] slabs (d is the per-head width
/// when called from dilated_forward). Causal masking inside each
/// gathered segment compares original sequence positions.
template <typename T>
PatternOutput<T> single_pattern_attention(const Matrix<T>& q,
                                          const Matrix<T>& k,
                                          const Matrix<T>& v,
                                          const DilatedConfig& config,
                                          std::size_t pattern_index,
                                          std::size_t head,
                                          ExecPolicy policy = ExecPolicy::parallel,
                                          MacCounter* macs = nullptr) {
  if (!q.same_shape(k) || !q.same_shape(v))
    throw ShapeError("single_pattern_attention: q/k/v must share [n x d]");
  const std::size_t n = q.rows;
  const auto maps = build_index_maps(config, n, pattern_index, head);
  const T scale = config.scale.resolve<T>(q.cols);

  PatternOutput<T> out(n, q.cols);

  // One segment delegates row-level parallelism to the kernel; many
  // segments parallelize here and run the kernel serially inside.
  const bool parallel_segments =
      policy == ExecPolicy::parallel && maps.size() > 1;
  const ExecPolicy inner =
      (policy == ExecPolicy::parallel && maps.size() == 1)
          ? ExecPolicy::parallel
          : ExecPolicy::serial;

  const std::int64_t num_maps = static_cast<std::int64_t>(maps.size());
#pragma omp parallel for schedule(dynamic) if (parallel_segments)
  for (std::int64_t mi = 0; mi < num_maps; ++mi) {
    const auto& map = maps[static_cast<std::size_t>(mi)];
    const auto sub_q = detail::gather_rows(q, map.positions);
    const auto sub_k = detail::gather_rows(k, map.positions);
    const auto sub_v = detail::gather_rows(v, map.positions);
    const auto sub = dense_attention(sub_q, sub_k, sub_v, config.causal, scale,
                                     map.positions, map.positions, inner, macs);
    for (std::size_t i = 0; i < map.positions.size(); ++i) {
      const std::size_t p = map.positions[i];
      const T* src = sub.output.row_ptr(i);
      T* dst = out.scattered.row_ptr(p);
      for (std::size_t c = 0; c < q.cols; ++c) dst[c] = src[c];
      out.row_lse[p] = sub.lse(i, 0);
    }
  }
  return out;
}

/// Denominator-weighted mixture of pattern outputs. Per row, weights
/// are softmax(lse_i) computed with max subtraction (-inf lse behaves
/// as weight zero); the mixed lse is the log-sum-exp over patterns, so
/// the result is exactly the softmax denominator a single gathered
/// softmax over all the patterns' keys would produce. Summation order
/// over patterns is fixed, so results are bit-stable.
template <typename T>
AttentionResult<T> mix_patterns(std::span<const PatternOutput<T>> outputs,
                                ExecPolicy policy = ExecPolicy::parallel) {
  if (outputs.empty()) throw ShapeError("mix_patterns: empty output list");
  const std::size_t n = outputs[0].scattered.rows;
  const std::size_t d = outputs[0].scattered.cols;
  for (const auto& po : outputs) {
    if (po.scattered.rows != n || po.scattered.cols != d ||
        po.row_lse.size() != n)
      throw ShapeError("mix_patterns: pattern outputs disagree on [n x d]");
  }

  AttentionResult<T> res(n, d, 1);
  const std::int64_t ni = static_cast<std::int64_t>(n);
#pragma omp parallel for schedule(static) if (policy == ExecPolicy::parallel)
  for (std::int64_t pi = 0; pi < ni; ++pi) {
    const std::size_t p = static_cast<std::size_t>(pi);
    T maxlse = kNegInf<T>;
    for (const auto& po : outputs)
      if (po.row_lse[p] > maxlse) maxlse = po.row_lse[p];
    if (maxlse == kNegInf<T>) continue;  // uncovered by every pattern

    T den = T(0);
    for (const auto& po : outputs) {
      if (po.row_lse[p] == kNegInf<T>) continue;
      den += std::exp(po.row_lse[p] - maxlse);
    }
    T* orow = res.output.row_ptr(p);
    for (const auto& po : outputs) {
      if (po.row_lse[p] == kNegInf<T>) continue;
      const T weight = std::exp(po.row_lse[p] - maxlse) / den;
      detail::axpy(weight, po.scattered.row_ptr(p), orow, d);
    }
    res.lse(p, 0) = maxlse + std::log(den);
    res.covered[p] = 1;
  }
  return res;
}

/// Full dilated attention: per head, run every pattern with that
/// head's offset (s_j = j mod r_i), mix them by softmax denominator,
/// and concatenate head outputs along the feature axis. q, k, v are
/// [n x d*heads]; the returned lse/covered carry one column per head.
template <typename T>
AttentionResult<T> dilated_forward(const Matrix<T>& q, const Matrix<T>& k,
                                   const Matrix<T>& v,
                                   const DilatedConfig& config,
                                   ExecPolicy policy = ExecPolicy::parallel,
                                   MacCounter* macs = nullptr) {
  if (!q.same_shape(k) || !q.same_shape(v))
    throw ShapeError("dilated_forward: q/k/v must share [n x d]");
  if (config.patterns.empty()) throw ConfigError("dilated_forward: no patterns");
  if (config.heads < 1) throw ConfigError("dilated_forward: heads must be >= 1");
  if (q.cols % config.heads != 0)
    throw ShapeError("dilated_forward: feature dim " + std::to_string(q.cols) +
                     " not divisible by heads " + std::to_string(config.heads));

  const std::size_t n = q.rows;
  const std::size_t heads = config.heads;
  const std::size_t dh = q.cols / heads;

  AttentionResult<T> res(n, q.cols, heads);
  for (std::size_t h = 0; h < heads; ++h) {
    const bool whole = (heads == 1);
    const Matrix<T> qh = whole ? Matrix<T>() : q.slice_cols(h * dh, dh);
    const Matrix<T> kh = whole ? Matrix<T>() : k.slice_cols(h * dh, dh);
    const Matrix<T> vh = whole ? Matrix<T>() : v.slice_cols(h * dh, dh);
    const Matrix<T>& qr = whole ? q : qh;
    const Matrix<T>& kr = whole ? k : kh;
    const Matrix<T>& vr = whole ? v : vh;

    std::vector<PatternOutput<T>> pattern_outputs;
    pattern_outputs.reserve(config.patterns.size());
    for (std::size_t i = 0; i < config.patterns.size(); ++i)
      pattern_outputs.push_back(
          single_pattern_attention(qr, kr, vr, config, i, h, policy, macs));

    const auto mixed = mix_patterns<T>(pattern_outputs, policy);
    for (std::size_t p = 0; p < n; ++p) {
      const T* src = mixed.output.row_ptr(p);
      T* dst = res.output.row_ptr(p) + h * dh;
      for (std::size_t c = 0; c < dh; ++c) dst[c] = src[c];
      res.lse(p, h) = mixed.lse(p, 0);
      res.set_covered(p, h, mixed.covered_at(p));
    }
  }
  return res;
}

/// Brute-force reference for the mixture semantics: per head and query
/// row, gather the multiset of key positions the row reaches across
/// all patterns (a key appearing in m patterns appears m times) and
/// take one softmax over all those logits. O(n^2); reference only.
/// Shares only the index-map construction with the production path;
/// the softmax and weighting arithmetic are written out independently.
template <typename T>
Matrix<T> gathered_softmax_oracle(const Matrix<T>& q, const Matrix<T>& k,
                                  const Matrix<T>& v,
                                  const DilatedConfig& config) {
  if (!q.same_shape(k) || !q.same_shape(v))
    throw ShapeError("gathered_softmax_oracle: q/k/v must share [n x d]");
  if (q.cols % config.heads != 0)
    throw ShapeError("gathered_softmax_oracle: feature dim not divisible by heads");

  const std::size_t n = q.rows;
  const std::size_t heads = config.heads;
  const std::size_t dh = q.cols / heads;
  Matrix<T> out(n, q.cols);

  for (std::size_t h = 0; h < heads; ++h) {
    const T scale = config.scale.resolve<T>(dh);
    const std::size_t col0 = h * dh;

    // keys_of[p]: multiset of key positions row p reaches in this head.
    std::vector<std::vector<std::size_t>> keys_of(n);
    for (std::size_t i = 0; i < config.patterns.size(); ++i) {
      for (const auto& map : build_index_maps(config, n, i, h)) {
        for (const std::size_t p : map.positions)
          keys_of[p].insert(keys_of[p].end(), map.positions.begin(),
                            map.positions.end());
      }
    }

    for (std::size_t p = 0; p < n; ++p) {
      std::vector<T> logits;
      std::vector<std::size_t> keys;
      for (const std::size_t t : keys_of[p]) {
        if (config.causal && t > p) continue;
        T s = T(0);
        for (std::size_t c = 0; c < dh; ++c)
          s += q(p, col0 + c) * k(t, col0 + c);
        logits.push_back(scale * s);
        keys.push_back(t);
      }
      if (logits.empty()) continue;

      T maxlogit = logits[0];
      for (const T z : logits) maxlogit = std::max(maxlogit, z);
      T den = T(0);
      for (T& z : logits) {
        z = std::exp(z - maxlogit);
        den += z;
      }
      for (std::size_t i = 0; i < keys.size(); ++i) {
        const T a = logits[i] / den;
        for (std::size_t c = 0; c < dh; ++c)
          out(p, col0 + c) += a * v(keys[i], col0 + c);
      }
    }
  }
  return out;
}

/// Exact reverse-mode gradient of dilated_forward. The mixture weights
/// are functions of the per-pattern softmax denominators, so gradient
/// flows both through each pattern's output rows and through its lse
/// channel. Patterns accumulate serially per head (fixed order);
/// segments within a pattern touch disjoint rows and run in parallel.
template <typename T>
AttentionGrads<T> dilated_backward(const Matrix<T>& q, const Matrix<T>& k,
                                   const Matrix<T>& v,
                                   const DilatedConfig& config,
                                   const Matrix<T>& grad_output,
                                   ExecPolicy policy = ExecPolicy::parallel) {
  if (!q.same_shape(k) || !q.same_shape(v))
    throw ShapeError("dilated_backward: q/k/v must share [n x d]");
  if (!grad_output.same_shape(q))
    throw ShapeError("dilated_backward: grad_output shape mismatch");
  if (q.cols % config.heads != 0)
    throw ShapeError("dilated_backward: feature dim not divisible by heads");

  const std::size_t n = q.rows;
  const std::size_t heads = config.heads;
  const std::size_t dh = q.cols / heads;
  const std::size_t num_patterns = config.patterns.size();

  AttentionGrads<T> grads{Matrix<T>(n, q.cols), Matrix<T>(n, q.cols),
                          Matrix<T>(n, q.cols)};

  for (std::size_t h = 0; h < heads; ++h) {
    const Matrix<T> qh = q.slice_cols(h * dh, dh);
    const Matrix<T> kh = k.slice_cols(h * dh, dh);
    const Matrix<T> vh = v.slice_cols(h * dh, dh);
    const Matrix<T> gh = grad_output.slice_cols(h * dh, dh);
    const T scale = config.scale.resolve<T>(dh);

    // Recompute the forward pattern outputs and the mixed result.
    std::vector<PatternOutput<T>> pattern_outputs;
    pattern_outputs.reserve(num_patterns);
    for (std::size_t i = 0; i < num_patterns; ++i)
      pattern_outputs.push_back(
          single_pattern_attention(qh, kh, vh, config, i, h, policy));
    const auto mixed = mix_patterns<T>(pattern_outputs, policy);

    for (std::size_t i = 0; i < num_patterns; ++i) {
      const auto& po = pattern_outputs[i];

      // Upstream gradients for this pattern: alpha-weighted output rows
      // plus the lse-channel term from differentiating the weights.
      Matrix<T> grad_scattered(n, dh);
      std::vector<T> grad_lse(n, T(0));
      for (std::size_t p = 0; p < n; ++p) {
        if (po.row_lse[p] == kNegInf<T>) continue;
        const T alpha = std::exp(po.row_lse[p] - mixed.lse(p, 0));
        const T* grow = gh.row_ptr(p);
        detail::axpy(alpha, grow, grad_scattered.row_ptr(p), dh);
        const T gdot_pattern = detail::dot(grow, po.scattered.row_ptr(p), dh);
        const T gdot_mixed = detail::dot(grow, mixed.output.row_ptr(p), dh);
        grad_lse[p] = alpha * (gdot_pattern - gdot_mixed);
      }

      const auto maps = build_index_maps(config, n, i, h);
      const std::int64_t num_maps = static_cast<std::int64_t>(maps.size());
#pragma omp parallel for schedule(dynamic) \
    if (policy == ExecPolicy::parallel && num_maps > 1)
      for (std::int64_t mi = 0; mi < num_maps; ++mi) {
        const auto& map = maps[static_cast<std::size_t>(mi)];
        const auto sub_q = detail::gather_rows(qh, map.positions);
        const auto sub_k = detail::gather_rows(kh, map.positions);
        const auto sub_v = detail::gather_rows(vh, map.positions);
        const auto sub_g = detail::gather_rows(grad_scattered, map.positions);
        std::vector<T> sub_glse(map.positions.size());
        for (std::size_t j = 0; j < map.positions.size(); ++j)
          sub_glse[j] = grad_lse[map.positions[j]];

        const auto g =
            dense_attention_vjp(sub_q, sub_k, sub_v, config.causal, scale,
                                map.positions, map.positions, sub_g,
                                sub_glse.data());

        // Segments of one pattern select disjoint rows, so this
        // scatter-add is race-free under the segment parallel loop.
        for (std::size_t j = 0; j < map.positions.size(); ++j) {
          const std::size_t p = map.positions[j];
          detail::axpy(T(1), g.grad_q.row_ptr(j),
                       grads.grad_q.row_ptr(p) + h * dh, dh);
          detail::axpy(T(1), g.grad_k.row_ptr(j),
                       grads.grad_k.row_ptr(p) + h * dh, dh);
          detail::axpy(T(1), g.grad_v.row_ptr(j),
                       grads.grad_v.row_ptr(p) + h * dh, dh);
        }
      }
    }
  }
  return grads;
}

}  // namespace dilattn
