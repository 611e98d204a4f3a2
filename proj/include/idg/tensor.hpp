// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cblas.h>

#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "idg/rng.hpp"

namespace idg {

// Dense row-major N-d array. f32 carries training state, f64 carries
// verification state (finite-difference checks are meaningless at f32).
template <typename T>
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<T> data;

  Tensor() = default;

  explicit Tensor(std::vector<std::size_t> s) : shape(std::move(s)) {
    data.assign(numel_of(shape), T(0));
  }

  Tensor(std::vector<std::size_t> s, std::vector<T> d)
      : shape(std::move(s)), data(std::move(d)) {
    if (numel_of(shape) != data.size())
      throw std::invalid_argument("Tensor: shape/data size mismatch");
  }

  static std::size_t numel_of(const std::vector<std::size_t>& s) {
    return std::accumulate(s.begin(), s.end(), std::size_t(1),
                           std::multiplies<std::size_t>());
  }

  std::size_t numel() const { return data.size(); }
  std::size_t rows() const { return shape.size() == 2 ? shape[0] : 0; }
  std::size_t cols() const { return shape.size() == 2 ? shape[1] : 0; }

  T& at(std::size_t r, std::size_t c) { return data[r * shape[1] + c]; }
  const T& at(std::size_t r, std::size_t c) const {
    return data[r * shape[1] + c];
  }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  std::string shape_str() const {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < shape.size(); ++i)
      os << (i ? "x" : "") << shape[i];
    os << "]";
    return os.str();
  }

  bool all_finite() const {
    for (T v : data)
      if (!std::isfinite(double(v))) return false;
    return true;
  }

  static Tensor zeros(std::vector<std::size_t> s) { return Tensor(std::move(s)); }

  static Tensor full(std::vector<std::size_t> s, T v) {
    Tensor t(std::move(s));
    std::fill(t.data.begin(), t.data.end(), v);
    return t;
  }

  static Tensor identity(std::size_t n) {
    Tensor t({n, n});
    for (std::size_t i = 0; i < n; ++i) t.at(i, i) = T(1);
    return t;
  }

  static Tensor randn(std::vector<std::size_t> s, Rng& rng, double stddev = 1.0) {
    Tensor t(std::move(s));
    for (auto& v : t.data) v = T(rng.normal() * stddev);
    return t;
  }
};

template <typename T>
inline void check_same_shape(const Tensor<T>& a, const Tensor<T>& b,
                             const char* op) {
  if (!a.same_shape(b))
    throw std::invalid_argument(std::string(op) + ": shape mismatch " +
                                a.shape_str() + " vs " + b.shape_str());
}

namespace detail {
inline void gemm(bool ta, bool tb, std::size_t m, std::size_t n, std::size_t k,
                 const float* a, std::size_t lda, const float* b,
                 std::size_t ldb, float* c, std::size_t ldc, float beta = 0.0f) {
  cblas_sgemm(CblasRowMajor, ta ? CblasTrans : CblasNoTrans,
              tb ? CblasTrans : CblasNoTrans, int(m), int(n), int(k), 1.0f, a,
              int(lda), b, int(ldb), beta, c, int(ldc));
}
inline void gemm(bool ta, bool tb, std::size_t m, std::size_t n, std::size_t k,
                 const double* a, std::size_t lda, const double* b,
                 std::size_t ldb, double* c, std::size_t ldc, double beta = 0.0) {
  cblas_dgemm(CblasRowMajor, ta ? CblasTrans : CblasNoTrans,
              tb ? CblasTrans : CblasNoTrans, int(m), int(n), int(k), 1.0, a,
              int(lda), b, int(ldb), beta, c, int(ldc));
}
}  // namespace detail

// C = op(A) * op(B), shapes checked against the *logical* (post-transpose)
// extents. 2-D only.
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b, bool trans_a = false,
                 bool trans_b = false) {
  if (a.shape.size() != 2 || b.shape.size() != 2)
    throw std::invalid_argument("matmul: operands must be 2-D, got " +
                                a.shape_str() + " and " + b.shape_str());
  std::size_t m = trans_a ? a.shape[1] : a.shape[0];
  std::size_t ka = trans_a ? a.shape[0] : a.shape[1];
  std::size_t kb = trans_b ? b.shape[1] : b.shape[0];
  std::size_t n = trans_b ? b.shape[0] : b.shape[1];
  if (ka != kb)
    throw std::invalid_argument("matmul: inner extent mismatch " +
                                a.shape_str() + " vs " + b.shape_str());
  Tensor<T> c({m, n});
  if (m && n && ka)
    detail::gemm(trans_a, trans_b, m, n, ka, a.data.data(), a.shape[1],
                 b.data.data(), b.shape[1], c.data.data(), n);
  return c;
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  check_same_shape(a, b, "add");
  Tensor<T> r = a;
  for (std::size_t i = 0; i < r.numel(); ++i) r.data[i] += b.data[i];
  return r;
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  check_same_shape(a, b, "sub");
  Tensor<T> r = a;
  for (std::size_t i = 0; i < r.numel(); ++i) r.data[i] -= b.data[i];
  return r;
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  check_same_shape(a, b, "mul");
  Tensor<T> r = a;
  for (std::size_t i = 0; i < r.numel(); ++i) r.data[i] *= b.data[i];
  return r;
}

template <typename T>
Tensor<T> abs(const Tensor<T>& a) {
  Tensor<T> r = a;
  for (auto& v : r.data) v = std::abs(v);
  return r;
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T s) {
  Tensor<T> r = a;
  for (auto& v : r.data) v *= s;
  return r;
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& a, std::vector<std::size_t> s) {
  if (Tensor<T>::numel_of(s) != a.numel())
    throw std::invalid_argument("reshape: element count mismatch");
  Tensor<T> r = a;
  r.shape = std::move(s);
  return r;
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& a) {
  if (a.shape.size() != 2)
    throw std::invalid_argument("transpose: 2-D only, got " + a.shape_str());
  Tensor<T> r({a.shape[1], a.shape[0]});
  for (std::size_t i = 0; i < a.shape[0]; ++i)
    for (std::size_t j = 0; j < a.shape[1]; ++j) r.at(j, i) = a.at(i, j);
  return r;
}

template <typename T>
void assert_finite(const Tensor<T>& t, const std::string& name) {
  if (!t.all_finite())
    throw std::runtime_error("non-finite values in tensor '" + name + "'");
}

template <typename T>
double max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
  check_same_shape(a, b, "max_abs_diff");
  double m = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i)
    m = std::max(m, std::abs(double(a.data[i]) - double(b.data[i])));
  return m;
}

}  // namespace idg
