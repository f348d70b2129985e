#pragma once

#include <algorithm>
#include <array>
#include <cassert>
#include <cmath>
#include <initializer_list>
#include <span>
#include <string>

#include "fracdim/error.hpp"

namespace fracdim {

inline constexpr int kMaxDim = 8;

/// Point or direction in R^d, d <= kMaxDim, stored inline.
class Vec {
 public:
  Vec() = default;
  explicit Vec(int d) : d_(d) { check_dim(d); }
  Vec(std::initializer_list<double> xs) : d_(static_cast<int>(xs.size())) {
    check_dim(d_);
    std::copy(xs.begin(), xs.end(), x_.begin());
  }
  static Vec from(std::span<const double> xs) {
    Vec v(static_cast<int>(xs.size()));
    std::copy(xs.begin(), xs.end(), v.x_.begin());
    return v;
  }

  int dim() const noexcept { return d_; }
  double& operator[](int i) noexcept { return x_[i]; }
  double operator[](int i) const noexcept { return x_[i]; }
  std::span<const double> values() const noexcept { return {x_.data(), static_cast<size_t>(d_)}; }

  Vec& operator+=(const Vec& o) noexcept {
    for (int i = 0; i < d_; ++i) x_[i] += o.x_[i];
    return *this;
  }
  Vec& operator-=(const Vec& o) noexcept {
    for (int i = 0; i < d_; ++i) x_[i] -= o.x_[i];
    return *this;
  }
  Vec& operator*=(double a) noexcept {
    for (int i = 0; i < d_; ++i) x_[i] *= a;
    return *this;
  }
  friend Vec operator+(Vec a, const Vec& b) noexcept { return a += b; }
  friend Vec operator-(Vec a, const Vec& b) noexcept { return a -= b; }
  friend Vec operator*(double s, Vec a) noexcept { return a *= s; }
  friend bool operator==(const Vec& a, const Vec& b) noexcept {
    if (a.d_ != b.d_) return false;
    for (int i = 0; i < a.d_; ++i)
      if (a.x_[i] != b.x_[i]) return false;
    return true;
  }

  double dot(const Vec& o) const noexcept {
    double s = 0.0;
    for (int i = 0; i < d_; ++i) s += x_[i] * o.x_[i];
    return s;
  }
  double norm() const noexcept {
    double m = 0.0;
    for (int i = 0; i < d_; ++i) m = std::max(m, std::abs(x_[i]));
    if (m == 0.0) return 0.0;
    double s = 0.0;
    for (int i = 0; i < d_; ++i) s += (x_[i] / m) * (x_[i] / m);
    return m * std::sqrt(s);
  }
  bool all_finite() const noexcept {
    for (int i = 0; i < d_; ++i)
      if (!std::isfinite(x_[i])) return false;
    return true;
  }

 private:
  static void check_dim(int d) {
    if (d < 1 || d > kMaxDim)
      throw Error(ErrorCode::InvalidArgument, "dimension must be in [1, 8], got " + std::to_string(d));
  }

  int d_ = 0;
  std::array<double, kMaxDim> x_{};
};

using Point = Vec;

inline double distance(const Vec& a, const Vec& b) noexcept { return (a - b).norm(); }

/// Dense d x d real matrix, row-major, d <= kMaxDim.
class SmallMatrix {
 public:
  SmallMatrix() = default;
  explicit SmallMatrix(int d) : d_(d) {
    if (d < 1 || d > kMaxDim)
      throw Error(ErrorCode::InvalidArgument, "matrix dimension must be in [1, 8], got " + std::to_string(d));
  }
  SmallMatrix(std::initializer_list<std::initializer_list<double>> rows) : SmallMatrix(static_cast<int>(rows.size())) {
    int r = 0;
    for (const auto& row : rows) {
      if (static_cast<int>(row.size()) != d_)
        throw Error(ErrorCode::InvalidArgument, "matrix rows must all have length d");
      int c = 0;
      for (double x : row) (*this)(r, c++) = x;
      ++r;
    }
  }

  static SmallMatrix identity(int d) {
    SmallMatrix m(d);
    for (int i = 0; i < d; ++i) m(i, i) = 1.0;
    return m;
  }
  static SmallMatrix diagonal(std::span<const double> diag) {
    SmallMatrix m(static_cast<int>(diag.size()));
    for (int i = 0; i < m.d_; ++i) m(i, i) = diag[i];
    return m;
  }
  static SmallMatrix diagonal(std::initializer_list<double> diag) {
    return diagonal(std::span<const double>(diag.begin(), diag.size()));
  }
  static SmallMatrix from_row_major(int d, std::span<const double> values) {
    SmallMatrix m(d);
    if (values.size() != static_cast<size_t>(d * d))
      throw Error(ErrorCode::InvalidArgument, "expected d*d entries");
    for (int r = 0; r < d; ++r)
      for (int c = 0; c < d; ++c) m(r, c) = values[r * d + c];
    return m;
  }

  int dim() const noexcept { return d_; }
  double& operator()(int r, int c) noexcept { return a_[r * kMaxDim + c]; }
  double operator()(int r, int c) const noexcept { return a_[r * kMaxDim + c]; }

  Vec column(int c) const {
    Vec v(d_);
    for (int r = 0; r < d_; ++r) v[r] = (*this)(r, c);
    return v;
  }
  Vec row(int r) const {
    Vec v(d_);
    for (int c = 0; c < d_; ++c) v[c] = (*this)(r, c);
    return v;
  }

  SmallMatrix transposed() const {
    SmallMatrix t(d_);
    for (int r = 0; r < d_; ++r)
      for (int c = 0; c < d_; ++c) t(c, r) = (*this)(r, c);
    return t;
  }

  double max_abs() const noexcept {
    double m = 0.0;
    for (int r = 0; r < d_; ++r)
      for (int c = 0; c < d_; ++c) m = std::max(m, std::abs((*this)(r, c)));
    return m;
  }

  bool all_finite() const noexcept {
    for (int r = 0; r < d_; ++r)
      for (int c = 0; c < d_; ++c)
        if (!std::isfinite((*this)(r, c))) return false;
    return true;
  }

  SmallMatrix& operator*=(double s) noexcept {
    for (int r = 0; r < d_; ++r)
      for (int c = 0; c < d_; ++c) (*this)(r, c) *= s;
    return *this;
  }
  SmallMatrix& operator+=(const SmallMatrix& o) noexcept {
    for (int r = 0; r < d_; ++r)
      for (int c = 0; c < d_; ++c) (*this)(r, c) += o(r, c);
    return *this;
  }

  friend SmallMatrix operator*(const SmallMatrix& a, const SmallMatrix& b) noexcept {
    assert(a.d_ == b.d_);
    SmallMatrix m;
    m.d_ = a.d_;
    for (int r = 0; r < a.d_; ++r)
      for (int k = 0; k < a.d_; ++k) {
        const double ark = a(r, k);
        if (ark == 0.0) continue;
        for (int c = 0; c < a.d_; ++c) m(r, c) += ark * b(k, c);
      }
    return m;
  }
  friend Vec operator*(const SmallMatrix& a, const Vec& v) noexcept {
    Vec out(a.d_);
    for (int r = 0; r < a.d_; ++r) {
      double s = 0.0;
      for (int c = 0; c < a.d_; ++c) s += a(r, c) * v[c];
      out[r] = s;
    }
    return out;
  }
  friend bool operator==(const SmallMatrix& a, const SmallMatrix& b) noexcept {
    if (a.d_ != b.d_) return false;
    for (int r = 0; r < a.d_; ++r)
      for (int c = 0; c < a.d_; ++c)
        if (a(r, c) != b(r, c)) return false;
    return true;
  }

  /// log|det| by LU with partial pivoting; -inf for exactly singular input.
  double log_abs_det() const noexcept {
    SmallMatrix lu = *this;
    double acc = 0.0;
    for (int k = 0; k < d_; ++k) {
      int p = k;
      for (int r = k + 1; r < d_; ++r)
        if (std::abs(lu(r, k)) > std::abs(lu(p, k))) p = r;
      if (lu(p, k) == 0.0) return -INFINITY;
      if (p != k)
        for (int c = 0; c < d_; ++c) std::swap(lu(p, c), lu(k, c));
      acc += std::log(std::abs(lu(k, k)));
      for (int r = k + 1; r < d_; ++r) {
        const double f = lu(r, k) / lu(k, k);
        for (int c = k; c < d_; ++c) lu(r, c) -= f * lu(k, c);
      }
    }
    return acc;
  }

 private:
  int d_ = 0;
  std::array<double, kMaxDim * kMaxDim> a_{};
};

}  // namespace fracdim
