#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <thread>
#include <vector>

namespace fracdim::detail {

/// Streaming log(sum exp(x_i)) with compensated summation of the scaled terms.
/// Merging two accumulators is associative up to rounding; callers combine
/// partial results in a fixed order for reproducibility.
class LogSumExp {
 public:
  void add(double x) noexcept {
    if (x == -INFINITY) return;
    if (x > max_) {
      const double f = std::exp(max_ - x);
      sum_ *= f;
      comp_ *= f;
      max_ = x;
      add_scaled(1.0);
    } else {
      add_scaled(std::exp(x - max_));
    }
  }

  void merge(const LogSumExp& o) noexcept {
    if (o.max_ == -INFINITY) return;
    if (o.max_ > max_) {
      const double f = std::exp(max_ - o.max_);
      sum_ *= f;
      comp_ *= f;
      max_ = o.max_;
      add_scaled(o.sum_);
      add_scaled(o.comp_);
    } else {
      const double f = std::exp(o.max_ - max_);
      add_scaled(o.sum_ * f);
      add_scaled(o.comp_ * f);
    }
  }

  double value() const noexcept {
    if (max_ == -INFINITY) return -INFINITY;
    return max_ + std::log(sum_ + comp_);
  }

 private:
  void add_scaled(double y) noexcept {
    // Neumaier's variant of Kahan summation.
    const double t = sum_ + y;
    if (std::abs(sum_) >= std::abs(y))
      comp_ += (sum_ - t) + y;
    else
      comp_ += (y - t) + sum_;
    sum_ = t;
  }

  double max_ = -INFINITY;
  double sum_ = 0.0;
  double comp_ = 0.0;
};

inline double log_sum_exp(std::span<const double> xs) noexcept {
  LogSumExp acc;
  for (double x : xs) acc.add(x);
  return acc.value();
}

/// splitmix64 finalizer, used to derive independent per-task seeds.
inline std::uint64_t mix_seed(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) noexcept {
  return mix_seed(mix_seed(seed) ^ mix_seed(stream + 0x632be59bd9b4e019ULL));
}

/// Uniform double in [0, 1) from a 64-bit generator output.
inline double unit_double(std::uint64_t bits) noexcept { return static_cast<double>(bits >> 11) * 0x1.0p-53; }

/// Runs fn(i) for i in [0, count) on up to `threads` workers. Work items are
/// claimed in index order; results must be written to per-index slots.
inline void parallel_for(std::size_t count, int threads, const std::function<void(std::size_t)>& fn) {
  const std::size_t workers = std::min<std::size_t>(std::max(threads, 1), count);
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w)
    pool.emplace_back([&, w] {
      for (std::size_t i = w; i < count; i += workers) fn(i);
    });
  for (auto& t : pool) t.join();
}

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
  double residual = 0.0;  // root-mean-square residual
};

inline LinearFit least_squares(std::span<const double> x, std::span<const double> y) {
  const std::size_t n = x.size();
  LinearFit fit;
  if (n < 2) return fit;
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  fit.slope = sxx > 0 ? sxy / sxx : 0.0;
  fit.intercept = my - fit.slope * mx;
  double ss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double r = y[i] - fit.intercept - fit.slope * x[i];
    ss += r * r;
  }
  fit.residual = std::sqrt(ss / n);
  return fit;
}

}  // namespace fracdim::detail
