// Copyright (c) 2026 the dilattn authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <span>
#include <vector>

#include "dilattn/attention.hpp"
#include "dilattn/matrix.hpp"

namespace dilattn::ref {

/// Serial reference attention. Materializes the full score matrix and
/// normalizes it in separate passes (classic max-subtraction softmax)
/// instead of the streaming rescale used by the production kernel.
/// Kept as an independent arithmetic route for the tests and as the
/// serial baseline in the benchmark.
template <typename T>
AttentionResult<T> dense_attention(const Matrix<T>& q, const Matrix<T>& k,
                                   const Matrix<T>& v, bool causal, T scale,
                                   std::span<const std::size_t> positions_q = {},
                                   std::span<const std::size_t> positions_k = {}) {
  if (q.cols != k.cols) throw ShapeError("ref::dense_attention: q.cols != k.cols");
  if (k.rows != v.rows) throw ShapeError("ref::dense_attention: k.rows != v.rows");

  std::vector<std::size_t> default_pq, default_pk;
  if (positions_q.empty() && q.rows > 0) {
    default_pq = detail::iota_positions(q.rows);
    positions_q = default_pq;
  }
  if (positions_k.empty() && k.rows > 0) {
    default_pk = detail::iota_positions(k.rows);
    positions_k = default_pk;
  }

  const std::size_t n = q.rows;
  const std::size_t m = k.rows;
  const std::size_t d = q.cols;
  const std::size_t dv = v.cols;

  AttentionResult<T> res(n, dv, 1);
  std::vector<T> scores(m);
  std::vector<std::uint8_t> masked(m);

  for (std::size_t p = 0; p < n; ++p) {
    std::size_t used = 0;
    T maxlogit = kNegInf<T>;
    for (std::size_t t = 0; t < m; ++t) {
      masked[t] = causal && positions_k[t] > positions_q[p];
      if (masked[t]) continue;
      T s = T(0);
      for (std::size_t c = 0; c < d; ++c) s += q(p, c) * k(t, c);
      scores[t] = scale * s;
      if (scores[t] > maxlogit) maxlogit = scores[t];
      ++used;
    }
    if (used == 0) continue;

    T den = T(0);
    for (std::size_t t = 0; t < m; ++t) {
      if (masked[t]) continue;
      scores[t] = std::exp(scores[t] - maxlogit);
      den += scores[t];
    }
    T* orow = res.output.row_ptr(p);
    for (std::size_t t = 0; t < m; ++t) {
      if (masked[t]) continue;
      const T a = scores[t] / den;
      for (std::size_t c = 0; c < dv; ++c) orow[c] += a * v(t, c);
    }
    res.lse(p, 0) = maxlogit + std::log(den);
    res.covered[p] = 1;
  }
  return res;
}

}  // namespace dilattn::ref
