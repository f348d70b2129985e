#pragma once

// Singular values, the singular value function phi^s, and log-domain spectra
// of long matrix products.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <limits>
#include <numeric>
#include <span>
#include <vector>

#include "fracdim/error.hpp"
#include "fracdim/linalg.hpp"

namespace fracdim {

/// Log singular values, descending.
struct SingularSpectrum {
  int d = 0;
  std::array<double, kMaxDim> log_alpha{};

  std::span<const double> values() const noexcept { return {log_alpha.data(), static_cast<size_t>(d)}; }
  double operator[](int i) const noexcept { return log_alpha[i]; }
  double log_abs_det() const noexcept {
    double s = 0.0;
    for (int i = 0; i < d; ++i) s += log_alpha[i];
    return s;
  }
  friend bool operator==(const SingularSpectrum& a, const SingularSpectrum& b) noexcept {
    if (a.d != b.d) return false;
    for (int i = 0; i < a.d; ++i)
      if (a.log_alpha[i] != b.log_alpha[i]) return false;
    return true;
  }
};

/// Full decomposition X = U diag(exp(log_sigma)) V^T.
struct LogSvd {
  SmallMatrix u;
  SingularSpectrum spectrum;
  SmallMatrix v;
};

namespace detail {

inline constexpr double kDetFloor = 1e-300;
inline constexpr double kLogDetFloor = -690.7755278982137;  // log(1e-300)

// One-sided (Hestenes) Jacobi on X = Xhat * diag(exp(logscale)). Columns are
// kept unit-normalized with their magnitude in logscale, so the rotation never
// forms exp of a large scale difference; this gives singular values with high
// relative accuracy for column-graded matrices of any dynamic range.
inline LogSvd scaled_jacobi_svd(SmallMatrix xhat, std::array<double, kMaxDim> logscale) {
  const int d = xhat.dim();
  SmallMatrix v = SmallMatrix::identity(d);

  auto renormalize = [&](int j) {
    const double n = xhat.column(j).norm();
    if (n == 0.0) {
      logscale[j] = -INFINITY;
      return;
    }
    for (int i = 0; i < d; ++i) xhat(i, j) /= n;
    logscale[j] += std::log(n);
  };
  for (int j = 0; j < d; ++j) renormalize(j);

  constexpr double kTol = 1e-15;
  for (int sweep = 0; sweep < 80; ++sweep) {
    bool rotated = false;
    for (int p = 0; p < d - 1; ++p) {
      for (int q = p + 1; q < d; ++q) {
        // Larger column plays the role of p so that rho <= 1.
        int a = p, b = q;
        if (logscale[b] > logscale[a]) std::swap(a, b);
        if (logscale[b] == -INFINITY) continue;
        double gamma = 0.0, alpha = 0.0, beta = 0.0;
        for (int i = 0; i < d; ++i) {
          gamma += xhat(i, a) * xhat(i, b);
          alpha += xhat(i, a) * xhat(i, a);
          beta += xhat(i, b) * xhat(i, b);
        }
        if (std::abs(gamma) <= kTol * std::sqrt(alpha * beta)) continue;
        rotated = true;
        const double rho = std::exp(logscale[b] - logscale[a]);
        const double w = (rho * rho * beta - alpha) / (2.0 * gamma);
        const double tau = (w >= 0.0 ? 1.0 : -1.0) / (std::abs(w) + std::sqrt(rho * rho + w * w));
        const double t = rho * tau;
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = c * t;
        for (int i = 0; i < d; ++i) {
          const double xa = xhat(i, a);
          const double xb = xhat(i, b);
          xhat(i, a) = c * xa - c * rho * rho * tau * xb;
          xhat(i, b) = c * tau * xa + c * xb;
          const double va = v(i, a);
          const double vb = v(i, b);
          v(i, a) = c * va - s * vb;
          v(i, b) = s * va + c * vb;
        }
        renormalize(a);
        renormalize(b);
      }
    }
    if (!rotated) break;
  }

  std::array<int, kMaxDim> order{};
  std::iota(order.begin(), order.begin() + d, 0);
  std::stable_sort(order.begin(), order.begin() + d, [&](int i, int j) { return logscale[i] > logscale[j]; });

  LogSvd out{SmallMatrix(d), SingularSpectrum{d, {}}, SmallMatrix(d)};
  for (int k = 0; k < d; ++k) {
    const int j = order[k];
    out.spectrum.log_alpha[k] = logscale[j];
    for (int i = 0; i < d; ++i) {
      out.u(i, k) = xhat(i, j);
      out.v(i, k) = v(i, j);
    }
  }
  return out;
}

inline void check_invertible(const SmallMatrix& t) {
  if (!t.all_finite()) throw Error(ErrorCode::NonFinite, "matrix has NaN or Inf entries");
  if (t.log_abs_det() < kLogDetFloor) throw Error(ErrorCode::SingularMatrix, "|det| below 1e-300");
}

}  // namespace detail

/// Singular value decomposition of an invertible matrix, log-domain singular values.
inline LogSvd svd(const SmallMatrix& t) {
  detail::check_invertible(t);
  std::array<double, kMaxDim> scale{};
  return detail::scaled_jacobi_svd(t, scale);
}

/// log alpha_i(T), descending.
inline SingularSpectrum singular_values(const SmallMatrix& t) { return svd(t).spectrum; }

inline double operator_norm(const SmallMatrix& t) {
  if (!t.all_finite()) throw Error(ErrorCode::NonFinite, "matrix has NaN or Inf entries");
  std::array<double, kMaxDim> scale{};
  return std::exp(detail::scaled_jacobi_svd(t, scale).spectrum[0]);
}

/// log phi^s: alpha_1 ... alpha_k alpha_{k+1}^{s-k} for s <= d, det^{s/d} above.
inline double log_phi_s(const SingularSpectrum& spec, double s) {
  if (!(s >= 0.0)) throw Error(ErrorCode::NegativeS, "s must be non-negative");
  const int d = spec.d;
  if (s > d) return (s / d) * spec.log_abs_det();
  const int k = static_cast<int>(std::floor(s));
  double acc = 0.0;
  for (int i = 0; i < k; ++i) acc += spec.log_alpha[i];
  if (k < d && s > k) acc += (s - k) * spec.log_alpha[k];
  return acc;
}

/// Running product P = B_m ... B_1 kept as Q * diag(exp(logd)) * T with Q
/// orthogonal and T well-conditioned, refactored by column-pivoted QR after
/// every left multiplication. Never forms P itself.
class GradedProduct {
 public:
  GradedProduct() = default;
  explicit GradedProduct(int d) : q_(SmallMatrix::identity(d)), t_(SmallMatrix::identity(d)), d_(d) {}

  int dim() const noexcept { return d_; }

  /// P <- exp(log_scale) * B * P.
  void left_multiply(const SmallMatrix& b, double log_scale = 0.0) {
    const int d = d_;
    SmallMatrix c = b * q_;
    // Column j of C carries magnitude exp(logd_j); fold column norms into it.
    std::array<double, kMaxDim> ls{};
    for (int j = 0; j < d; ++j) {
      const double n = c.column(j).norm();
      if (n == 0.0) throw Error(ErrorCode::SingularMatrix, "product factor annihilated a direction");
      for (int i = 0; i < d; ++i) c(i, j) /= n;
      ls[j] = logd_[j] + std::log(n) + log_scale;
    }

    std::array<int, kMaxDim> perm{};
    std::iota(perm.begin(), perm.begin() + d, 0);
    SmallMatrix qacc = SmallMatrix::identity(d);

    for (int k = 0; k < d; ++k) {
      // Pivot: largest remaining trailing column norm, compared in log domain.
      int best = k;
      double best_log = -INFINITY;
      for (int j = k; j < d; ++j) {
        double s = 0.0;
        for (int i = k; i < d; ++i) s += c(i, j) * c(i, j);
        const double lg = s > 0.0 ? ls[j] + 0.5 * std::log(s) : -INFINITY;
        if (lg > best_log) {
          best_log = lg;
          best = j;
        }
      }
      if (best != k) {
        for (int i = 0; i < d; ++i) std::swap(c(i, best), c(i, k));
        std::swap(ls[best], ls[k]);
        std::swap(perm[best], perm[k]);
      }
      // Householder reflector zeroing c(k+1.., k).
      double sigma = 0.0;
      for (int i = k; i < d; ++i) sigma += c(i, k) * c(i, k);
      sigma = std::sqrt(sigma);
      if (sigma == 0.0) throw Error(ErrorCode::SingularMatrix, "rank-deficient product");
      const double alpha = c(k, k) > 0 ? -sigma : sigma;
      std::array<double, kMaxDim> hv{};
      for (int i = k; i < d; ++i) hv[i] = c(i, k);
      hv[k] -= alpha;
      double vnorm2 = 0.0;
      for (int i = k; i < d; ++i) vnorm2 += hv[i] * hv[i];
      if (vnorm2 > 0.0) {
        for (int j = k; j < d; ++j) {
          double dotp = 0.0;
          for (int i = k; i < d; ++i) dotp += hv[i] * c(i, j);
          const double f = 2.0 * dotp / vnorm2;
          for (int i = k; i < d; ++i) c(i, j) -= f * hv[i];
        }
        for (int r = 0; r < d; ++r) {
          double dotp = 0.0;
          for (int i = k; i < d; ++i) dotp += qacc(r, i) * hv[i];
          const double f = 2.0 * dotp / vnorm2;
          for (int i = k; i < d; ++i) qacc(r, i) -= f * hv[i];
        }
      }
    }

    // R(i,j) = chat(i,j) * exp(ls[j]) for the permuted columns.
    std::array<double, kMaxDim> new_logd{};
    SmallMatrix unit(d);  // D'^{-1} R', unit diagonal up to sign
    for (int i = 0; i < d; ++i) {
      const double rii = c(i, i);
      if (rii == 0.0) throw Error(ErrorCode::SingularMatrix, "rank-deficient product");
      new_logd[i] = ls[i] + std::log(std::abs(rii));
      for (int j = i; j < d; ++j) {
        if (c(i, j) == 0.0) continue;
        const double mag = std::exp(ls[j] + std::log(std::abs(c(i, j))) - new_logd[i]);
        unit(i, j) = (c(i, j) < 0 ? -mag : mag) * (rii < 0 ? -1.0 : 1.0);
      }
      if (rii < 0)
        for (int r = 0; r < d; ++r) qacc(r, i) = -qacc(r, i);
    }

    // T' = unit * Pi^T * T, where row perm[j] of T lands in position j.
    SmallMatrix permuted_t(d);
    for (int j = 0; j < d; ++j)
      for (int col = 0; col < d; ++col) permuted_t(j, col) = t_(perm[j], col);
    t_ = unit * permuted_t;
    q_ = qacc;
    logd_ = new_logd;
  }

  /// Log singular values of the accumulated product.
  SingularSpectrum spectrum() const {
    // sv(Q D T) = sv(D T) = sv(T^T D): column i of T^T D is d_i * row_i(T).
    SmallMatrix xhat = t_.transposed();
    return detail::scaled_jacobi_svd(xhat, logd_).spectrum;
  }

  /// FNV-1a over the stored factors; equal products hash equally.
  std::uint64_t hash() const noexcept {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto mix = [&h](double x) {
      std::uint64_t bits;
      std::memcpy(&bits, &x, sizeof bits);
      for (int b = 0; b < 8; ++b) {
        h ^= (bits >> (8 * b)) & 0xffU;
        h *= 0x100000001b3ULL;
      }
    };
    for (int i = 0; i < d_; ++i) mix(logd_[i]);
    for (int r = 0; r < d_; ++r)
      for (int c = 0; c < d_; ++c) {
        mix(q_(r, c));
        mix(t_(r, c));
      }
    return h;
  }

  friend bool operator==(const GradedProduct& a, const GradedProduct& b) noexcept {
    return a.d_ == b.d_ && a.logd_ == b.logd_ && a.q_ == b.q_ && a.t_ == b.t_;
  }

 private:
  SmallMatrix q_;
  SmallMatrix t_;
  std::array<double, kMaxDim> logd_{};
  int d_ = 0;
};

inline constexpr int kDefaultRenormEvery = 16;

/// A block is also closed early once the bound on its condition number
/// reaches exp(kBlockLogCond), so its smallest direction survives rounding.
inline constexpr double kBlockLogCond = 13.8;

namespace detail {

// log of ||A||_F^d / |det A|, an upper bound on log cond(A).
inline double log_condition_bound(const SmallMatrix& a) {
  double f = 0.0;
  for (int i = 0; i < a.dim(); ++i)
    for (int j = 0; j < a.dim(); ++j) f += a(i, j) * a(i, j);
  return 0.5 * a.dim() * std::log(f) - a.log_abs_det();
}

}  // namespace detail

/// Log singular spectrum of mats[0] * mats[1] * ... * mats[n-1].
inline SingularSpectrum product_spectrum(std::span<const SmallMatrix> mats, int renorm_every = kDefaultRenormEvery) {
  if (mats.empty()) throw Error(ErrorCode::InvalidArgument, "product_spectrum needs at least one matrix");
  if (renorm_every < 1) throw Error(ErrorCode::InvalidArgument, "renorm_every must be >= 1");
  const int d = mats.front().dim();
  std::vector<double> cond(mats.size());
  for (std::size_t i = 0; i < mats.size(); ++i) {
    if (mats[i].dim() != d) throw Error(ErrorCode::InvalidArgument, "mixed matrix dimensions in product");
    detail::check_invertible(mats[i]);
    cond[i] = detail::log_condition_bound(mats[i]);
  }
  if (mats.size() == 1) return singular_values(mats.front());

  GradedProduct acc(d);
  // Consume from the right end so that each block is a left multiplication.
  std::ptrdiff_t hi = static_cast<std::ptrdiff_t>(mats.size());
  while (hi > 0) {
    std::ptrdiff_t lo = hi - 1;
    double block_cond = cond[lo];
    while (lo > 0 && hi - lo < renorm_every && block_cond + cond[lo - 1] <= kBlockLogCond) block_cond += cond[--lo];
    SmallMatrix block = mats[lo];
    double log_scale = 0.0;
    for (std::ptrdiff_t i = lo + 1; i < hi; ++i) {
      block = block * mats[i];
      const double m = block.max_abs();
      if (m < 1e-100 || m > 1e100) {
        block *= 1.0 / m;
        log_scale += std::log(m);
      }
    }
    acc.left_multiply(block, log_scale);
    hi = lo;
  }
  return acc.spectrum();
}

inline SingularSpectrum product_spectrum(const std::vector<SmallMatrix>& mats, int renorm_every = kDefaultRenormEvery) {
  return product_spectrum(std::span<const SmallMatrix>(mats), renorm_every);
}

}  // namespace fracdim
