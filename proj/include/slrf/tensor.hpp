#pragma once

#include <cassert>
#include <cstdint>
#include <cstring>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace slrf {

// Dense row-major tensor. Real is float for training, double for the
// finite-difference verification path.
template <class Real>
struct Tensor {
  std::vector<int64_t> shape;
  std::vector<Real> v;

  Tensor() = default;
  explicit Tensor(std::vector<int64_t> s) : shape(std::move(s)) {
    v.assign(static_cast<size_t>(numel_of(shape)), Real(0));
  }

  static int64_t numel_of(const std::vector<int64_t>& s) {
    int64_t n = 1;
    for (int64_t d : s) {
      if (d < 0) throw std::invalid_argument("tensor: negative dim");
      n *= d;
    }
    return n;
  }

  static Tensor zeros(std::vector<int64_t> s) { return Tensor(std::move(s)); }

  static Tensor scalar(Real x) {
    Tensor t{std::vector<int64_t>{}};
    t.v[0] = x;
    return t;
  }

  static Tensor full(std::vector<int64_t> s, Real value) {
    Tensor t(std::move(s));
    std::fill(t.v.begin(), t.v.end(), value);
    return t;
  }

  int64_t numel() const { return static_cast<int64_t>(v.size()); }
  int rank() const { return static_cast<int>(shape.size()); }
  int64_t dim(int i) const { return shape[static_cast<size_t>(i)]; }

  // leading dims collapsed: rows() x cols() view of the last axis
  int64_t cols() const { return shape.empty() ? 1 : shape.back(); }
  int64_t rows() const { return cols() == 0 ? 0 : numel() / cols(); }

  Real* data() { return v.data(); }
  const Real* data() const { return v.data(); }

  Real& at(int64_t r, int64_t c) { return v[static_cast<size_t>(r * cols() + c)]; }
  Real at(int64_t r, int64_t c) const { return v[static_cast<size_t>(r * cols() + c)]; }

  void fill(Real x) { std::fill(v.begin(), v.end(), x); }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  template <class Other>
  Tensor<Other> cast() const {
    Tensor<Other> t;
    t.shape = shape;
    t.v.resize(v.size());
    for (size_t i = 0; i < v.size(); ++i) t.v[i] = static_cast<Other>(v[i]);
    return t;
  }
};

// C[R x N] += A[R x K] * B[K x N].  k-middle / n-inner so the hot loop is a
// contiguous saxpy, which vectorizes without -ffast-math.
template <class Real>
void mm_acc(Real* c, const Real* a, const Real* b, int64_t R, int64_t K, int64_t N) {
  for (int64_t r = 0; r < R; ++r) {
    Real* crow = c + r * N;
    const Real* arow = a + r * K;
    for (int64_t k = 0; k < K; ++k) {
      Real s = arow[k];
      if (s == Real(0)) continue;
      const Real* brow = b + k * N;
      for (int64_t n = 0; n < N; ++n) crow[n] += s * brow[n];
    }
  }
}

// C[K x N] += A^T * B with A[R x K], B[R x N].
template <class Real>
void mm_acc_ta(Real* c, const Real* a, const Real* b, int64_t R, int64_t K, int64_t N) {
  for (int64_t r = 0; r < R; ++r) {
    const Real* arow = a + r * K;
    const Real* brow = b + r * N;
    for (int64_t k = 0; k < K; ++k) {
      Real s = arow[k];
      if (s == Real(0)) continue;
      Real* crow = c + k * N;
      for (int64_t n = 0; n < N; ++n) crow[n] += s * brow[n];
    }
  }
}

template <class Real>
void transpose(Real* dst, const Real* src, int64_t R, int64_t C) {
  for (int64_t r = 0; r < R; ++r)
    for (int64_t c = 0; c < C; ++c) dst[c * R + r] = src[r * C + c];
}

template <class Real>
void axpy(Real* y, Real a, const Real* x, int64_t n) {
  for (int64_t i = 0; i < n; ++i) y[i] += a * x[i];
}

template <class Real>
Real dot(const Real* a, const Real* b, int64_t n) {
  Real s = 0;
  for (int64_t i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

}  // namespace slrf
