// Copyright (c) 2026 the dilattn authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <type_traits>
#include <vector>

#include "dilattn/matrix.hpp"

namespace dilattn {

template <typename T>
inline constexpr T kNegInf = -std::numeric_limits<T>::infinity();

/// Attention output plus, per query row and head, the log-sum-exp of the
/// unmasked logits (the softmax denominator in log form) and a coverage
/// flag. Rows that attended to no key are zeroed, flagged uncovered, and
/// carry lse = -inf.
template <typename T>
struct AttentionResult {
  Matrix<T> output;                   // n x d_total
  Matrix<T> lse;                      // n x heads
  std::vector<std::uint8_t> covered;  // n x heads, row-major
  std::size_t heads{1};

  AttentionResult() = default;
  AttentionResult(std::size_t n, std::size_t d_total, std::size_t h)
      : output(n, d_total),
        lse(n, h),
        covered(n * h, 0),
        heads(h) {
    for (T& x : lse.data) x = kNegInf<T>;
  }

  bool covered_at(std::size_t row, std::size_t head = 0) const {
    return covered[row * heads + head] != 0;
  }
  void set_covered(std::size_t row, std::size_t head, bool value) {
    covered[row * heads + head] = value ? 1 : 0;
  }
  T lse_at(std::size_t row, std::size_t head = 0) const {
    return lse(row, head);
  }
};

template <typename T>
struct AttentionGrads {
  Matrix<T> grad_q, grad_k, grad_v;
};

namespace detail {

inline std::vector<std::size_t> iota_positions(std::size_t n) {
  std::vector<std::size_t> p(n);
  std::iota(p.begin(), p.end(), std::size_t{0});
  return p;
}

}  // namespace detail

/// softmax(scale * q k^T + mask) v with a streaming one-pass softmax.
///
/// The mask removes key t from query row p when `causal` and
/// positions_k[t] > positions_q[p]; positions carry the original
/// sequence coordinates, so gathered (sparsified) sub-matrices mask
/// exactly as their rows would in the full sequence. Row state is
/// rescaled on every new running maximum, which is the streaming form
/// of max subtraction. A row with zero unmasked keys is not an error:
/// it comes back zeroed with covered=false and lse=-inf.
///
/// Empty position spans default to 0..rows-1.
template <typename T>
AttentionResult<T> dense_attention(const Matrix<T>& q, const Matrix<T>& k,
                                   const Matrix<T>& v, bool causal, T scale,
                                   std::span<const std::size_t> positions_q = {},
                                   std::span<const std::size_t> positions_k = {},
                                   ExecPolicy policy = ExecPolicy::parallel,
                                   MacCounter* macs = nullptr) {
  if (q.cols != k.cols) throw ShapeError("dense_attention: q.cols != k.cols");
  if (k.rows != v.rows) throw ShapeError("dense_attention: k.rows != v.rows");
  if (scale <= T(0)) throw ConfigError("dense_attention: scale must be > 0");

  std::vector<std::size_t> default_pq, default_pk;
  if (positions_q.empty() && q.rows > 0) {
    default_pq = detail::iota_positions(q.rows);
    positions_q = default_pq;
  }
  if (positions_k.empty() && k.rows > 0) {
    default_pk = detail::iota_positions(k.rows);
    positions_k = default_pk;
  }
  if (positions_q.size() != q.rows)
    throw ShapeError("dense_attention: positions_q length != q.rows");
  if (positions_k.size() != k.rows)
    throw ShapeError("dense_attention: positions_k length != k.rows");

  const std::size_t n = q.rows;
  const std::size_t m = k.rows;
  const std::size_t d = q.cols;
  const std::size_t dv = v.cols;

  AttentionResult<T> res(n, dv, 1);
  std::uint64_t mac_total = 0;

  const std::int64_t ni = static_cast<std::int64_t>(n);
#pragma omp parallel for schedule(static) reduction(+ : mac_total) \
    if (policy == ExecPolicy::parallel)
  for (std::int64_t pi = 0; pi < ni; ++pi) {
    const std::size_t p = static_cast<std::size_t>(pi);
    const T* qrow = q.row_ptr(p);
    T* orow = res.output.row_ptr(p);

    T running_max = kNegInf<T>;
    T running_den = T(0);
    std::size_t used = 0;
    for (std::size_t t = 0; t < m; ++t) {
      if (causal && positions_k[t] > positions_q[p]) continue;
      const T logit = scale * detail::dot(qrow, k.row_ptr(t), d);
      mac_total += d;
      T weight;
      if (logit > running_max) {
        const T rescale =
            (running_max == kNegInf<T>) ? T(0) : std::exp(running_max - logit);
        running_den *= rescale;
        detail::scale_inplace(rescale, orow, dv);
        running_max = logit;
        weight = T(1);
      } else {
        weight = std::exp(logit - running_max);
      }
      running_den += weight;
      detail::axpy(weight, v.row_ptr(t), orow, dv);
      mac_total += dv;
      ++used;
    }

    if (used == 0) continue;  // stays zeroed / uncovered / -inf

    const T inv_den = T(1) / running_den;
    detail::scale_inplace(inv_den, orow, dv);
    res.lse(p, 0) = running_max + std::log(running_den);
    res.covered[p] = 1;
  }

  if (macs != nullptr) macs->add(mac_total);
  return res;
}

/// Reverse-mode gradients of dense_attention. grad_lse, when non-null,
/// carries an upstream gradient for the per-row log-sum-exp channel
/// (the mixture weights differentiate through it); the plain backward
/// entry point below passes null. Uncovered rows propagate nothing.
///
/// Runs serially over query rows: key/value gradient rows are shared
/// across queries, and a fixed accumulation order keeps results
/// bit-stable.
template <typename T>
AttentionGrads<T> dense_attention_vjp(
    const Matrix<T>& q, const Matrix<T>& k, const Matrix<T>& v, bool causal,
    T scale, std::span<const std::size_t> positions_q,
    std::span<const std::size_t> positions_k, const Matrix<T>& grad_output,
    const std::type_identity_t<T>* grad_lse = nullptr) {
  if (grad_output.rows != q.rows || grad_output.cols != v.cols)
    throw ShapeError("dense_attention_vjp: grad_output shape mismatch");
  if (q.cols != k.cols) throw ShapeError("dense_attention_vjp: q.cols != k.cols");
  if (k.rows != v.rows) throw ShapeError("dense_attention_vjp: k.rows != v.rows");

  std::vector<std::size_t> default_pq, default_pk;
  if (positions_q.empty() && q.rows > 0) {
    default_pq = detail::iota_positions(q.rows);
    positions_q = default_pq;
  }
  if (positions_k.empty() && k.rows > 0) {
    default_pk = detail::iota_positions(k.rows);
    positions_k = default_pk;
  }
  if (positions_q.size() != q.rows || positions_k.size() != k.rows)
    throw ShapeError("dense_attention_vjp: positions length mismatch");

  const std::size_t n = q.rows;
  const std::size_t m = k.rows;
  const std::size_t d = q.cols;
  const std::size_t dv = v.cols;

  AttentionGrads<T> grads{Matrix<T>(q.rows, q.cols), Matrix<T>(k.rows, k.cols),
                          Matrix<T>(v.rows, v.cols)};

  std::vector<T> prob(m);     // softmax weights for the current row
  std::vector<T> gv(m);       // <grad_out_p, v_t>
  std::vector<std::size_t> keys(m);

  for (std::size_t p = 0; p < n; ++p) {
    const T* qrow = q.row_ptr(p);
    const T* grow = grad_output.row_ptr(p);

    std::size_t used = 0;
    T maxlogit = kNegInf<T>;
    for (std::size_t t = 0; t < m; ++t) {
      if (causal && positions_k[t] > positions_q[p]) continue;
      keys[used] = t;
      const T logit = scale * detail::dot(qrow, k.row_ptr(t), d);
      prob[used] = logit;
      if (logit > maxlogit) maxlogit = logit;
      ++used;
    }
    if (used == 0) continue;

    T den = T(0);
    for (std::size_t i = 0; i < used; ++i) {
      prob[i] = std::exp(prob[i] - maxlogit);
      den += prob[i];
    }
    const T inv_den = T(1) / den;

    T gdot_out = T(0);  // <grad_out_p, out_p> = sum_t a_t <grad_out_p, v_t>
    for (std::size_t i = 0; i < used; ++i) {
      prob[i] *= inv_den;
      gv[i] = detail::dot(grow, v.row_ptr(keys[i]), dv);
      gdot_out += prob[i] * gv[i];
    }

    const T glse = (grad_lse != nullptr) ? grad_lse[p] : T(0);
    T* gq = grads.grad_q.row_ptr(p);
    for (std::size_t i = 0; i < used; ++i) {
      const std::size_t t = keys[i];
      // dv_t += a_t * grad_out_p
      detail::axpy(prob[i], grow, grads.grad_v.row_ptr(t), dv);
      // dz_t = a_t * (<g, v_t> - <g, out_p> + glse)
      const T dz = prob[i] * (gv[i] - gdot_out + glse);
      detail::axpy(scale * dz, k.row_ptr(t), gq, d);
      detail::axpy(scale * dz, qrow, grads.grad_k.row_ptr(t), d);
    }
  }
  return grads;
}

template <typename T>
AttentionGrads<T> dense_attention_backward(
    const Matrix<T>& q, const Matrix<T>& k, const Matrix<T>& v, bool causal,
    T scale, std::span<const std::size_t> positions_q,
    std::span<const std::size_t> positions_k, const Matrix<T>& grad_output) {
  return dense_attention_vjp(q, k, v, causal, scale, positions_q, positions_k,
                             grad_output, nullptr);
}

template <typename T>
AttentionGrads<T> dense_attention_backward(const Matrix<T>& q,
                                           const Matrix<T>& k,
                                           const Matrix<T>& v, bool causal,
                                           T scale,
                                           const Matrix<T>& grad_output) {
  return dense_attention_vjp(q, k, v, causal, scale, {}, {}, grad_output,
                             nullptr);
}

}  // namespace dilattn
