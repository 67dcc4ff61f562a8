// Copyright (c) 2026 the dilattn authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace dilattn {

/// Thrown for invalid configurations (bad pattern lists, indivisible
/// sequence lengths, malformed presets).
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

/// Thrown when matrix shapes do not line up.
class ShapeError : public std::runtime_error {
 public:
  explicit ShapeError(const std::string& what) : std::runtime_error(what) {}
};

/// Whether a kernel may spread its outer loop over OpenMP threads.
/// Serial execution follows the exact same arithmetic; results are
/// bit-identical either way because every output row is owned by a
/// single iteration.
enum class ExecPolicy { serial, parallel };

/// Multiply-accumulate counter threaded through the attention kernels.
/// Counts one unit per scalar product term in the score (QK^T) and
/// value (P.V) contractions; softmax and mixture arithmetic are not
/// counted. Accumulation is atomic, so totals are independent of
/// thread scheduling.
struct MacCounter {
  std::uint64_t macs{0};

  void add(std::uint64_t m) {
#pragma omp atomic
    macs += m;
  }
};

/// Dense row-major 2-D array. The single carrier type for Q/K/V/O
/// slabs and projection weights; T is float or double.
template <typename T>
struct Matrix {
  std::size_t rows{0};
  std::size_t cols{0};
  std::vector<T> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, T(0)) {}
  Matrix(std::size_t r, std::size_t c, std::vector<T> values)
      : rows(r), cols(c), data(std::move(values)) {
    if (data.size() != rows * cols) {
      throw ShapeError("Matrix: data length " + std::to_string(data.size()) +
                       " != rows*cols " + std::to_string(rows * cols));
    }
  }

  T& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  const T& operator()(std::size_t r, std::size_t c) const {
    return data[r * cols + c];
  }

  T* row_ptr(std::size_t r) { return data.data() + r * cols; }
  const T* row_ptr(std::size_t r) const { return data.data() + r * cols; }

  bool same_shape(const Matrix& other) const {
    return rows == other.rows && cols == other.cols;
  }

  bool all_finite() const {
    for (const T& x : data) {
      if (!std::isfinite(static_cast<double>(x))) return false;
    }
    return true;
  }

  static Matrix zeros(std::size_t r, std::size_t c) { return Matrix(r, c); }

  static Matrix identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = T(1);
    return m;
  }

  /// Column slice [col0, col0+width) as a new contiguous matrix.
  Matrix slice_cols(std::size_t col0, std::size_t width) const {
    if (col0 + width > cols) throw ShapeError("slice_cols out of range");
    Matrix out(rows, width);
    for (std::size_t r = 0; r < rows; ++r) {
      const T* src = row_ptr(r) + col0;
      T* dst = out.row_ptr(r);
      for (std::size_t c = 0; c < width; ++c) dst[c] = src[c];
    }
    return out;
  }
};

using MatrixF = Matrix<float>;
using MatrixD = Matrix<double>;

namespace detail {

/// Inner product of two contiguous spans. The simd pragma licenses the
/// compiler to vectorize the reduction; the lane order is fixed per
/// build, so results are reproducible run to run.
template <typename T>
inline T dot(const T* a, const T* b, std::size_t n) {
  T acc = T(0);
#pragma omp simd reduction(+ : acc)
  for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

/// y += alpha * x
template <typename T>
inline void axpy(T alpha, const T* x, T* y, std::size_t n) {
#pragma omp simd
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

/// y *= alpha
template <typename T>
inline void scale_inplace(T alpha, T* y, std::size_t n) {
#pragma omp simd
  for (std::size_t i = 0; i < n; ++i) y[i] *= alpha;
}

}  // namespace detail

/// Standard matrix product, accumulated in the working precision.
template <typename T>
Matrix<T> matmul(const Matrix<T>& a, const Matrix<T>& b) {
  if (a.cols != b.rows) {
    throw ShapeError("matmul: inner dimensions disagree (" +
                     std::to_string(a.cols) + " vs " + std::to_string(b.rows) +
                     ")");
  }
  Matrix<T> out(a.rows, b.cols);
  const std::int64_t n = static_cast<std::int64_t>(a.rows);
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < n; ++i) {
    const T* arow = a.row_ptr(static_cast<std::size_t>(i));
    T* orow = out.row_ptr(static_cast<std::size_t>(i));
    for (std::size_t t = 0; t < a.cols; ++t) {
      detail::axpy(arow[t], b.row_ptr(t), orow, b.cols);
    }
  }
  return out;
}

}  // namespace dilattn
