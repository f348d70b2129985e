#pragma once

// Entropy, Lyapunov exponents of Jacobian cocycles, Lyapunov dimension, and
// local dimensions of sampled measures.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <ostream>
#include <span>
#include <type_traits>
#include <vector>

#include "fracdim/detail/numeric.hpp"
#include "fracdim/error.hpp"
#include "fracdim/measure.hpp"
#include "fracdim/svf.hpp"
#include "fracdim/systems.hpp"

namespace fracdim {

inline double entropy(const ShiftMeasure& m) {
  auto plogp = [](double p) { return p > 0.0 ? p * std::log(p) : 0.0; };
  double h = 0.0;
  if (m.kind() == ShiftMeasure::Kind::Bernoulli) {
    for (int i = 0; i < m.alphabet(); ++i) h -= plogp(m.stationary(i));
  } else {
    for (int i = 0; i < m.alphabet(); ++i) {
      double row = 0.0;
      for (int j = 0; j < m.alphabet(); ++j) row -= plogp(m.transition(i, j));
      h += m.stationary(i) * row;
    }
  }
  return h;
}

struct LyapunovSpectrum {
  std::vector<double> lambda;          // descending
  std::vector<double> ci_half_width;   // 95%
  int n_orbit = 0;
  int n_samples = 0;
};

inline constexpr int kDefaultOrbit = 200;
inline constexpr int kDefaultSamples = 64;

/// Monte Carlo estimate of the Lyapunov exponents of m: the mean over sampled
/// words I of (1/n) log alpha_i(D f_I) at the coding point of a sampled tail.
template <class System>
LyapunovSpectrum lyapunov_exponents(const System& sys, const ShiftMeasure& m, int n_orbit = kDefaultOrbit,
                                    int n_samples = kDefaultSamples, std::uint64_t seed = 1, int threads = 1) {
  if (n_orbit < 1 || n_samples < 2) throw Error(ErrorCode::InvalidArgument, "need n_orbit >= 1 and n_samples >= 2");
  m.check_support(sys.shift());
  const int d = sys.dim();
  const int tail = tail_length(sys);
  std::vector<SingularSpectrum> per(n_samples);
  detail::parallel_for(n_samples, threads, [&](std::size_t i) {
    Rng rng(detail::derive_seed(seed, i));
    const Word x = m.sample_word(n_orbit + tail, rng);
    const Word head = x.prefix(n_orbit);
    const Word rest = x.suffix_from(n_orbit);
    const Vec p = code_point(sys, rest, sys.base_point(rest.back())).point;
    per[i] = product_spectrum(jacobians_along(sys, head, p, rest.front()));
  });
  LyapunovSpectrum out;
  out.n_orbit = n_orbit;
  out.n_samples = n_samples;
  for (int k = 0; k < d; ++k) {
    std::vector<double> v(n_samples);
    for (int i = 0; i < n_samples; ++i) v[i] = per[i][k] / n_orbit;
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= n_samples;
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    const double sd = std::sqrt(ss / (n_samples - 1));
    out.lambda.push_back(mean);
    out.ci_half_width.push_back(1.96 * sd / std::sqrt(static_cast<double>(n_samples)));
  }
  return out;
}

/// h + lambda_1 + ... + lambda_[s] + (s - [s]) lambda_{[s]+1} for s <= d,
/// (s/d) sum(lambda) + h above d.
inline double lyapunov_potential(double s, std::span<const double> lambda) {
  const int d = static_cast<int>(lambda.size());
  double sum = 0.0;
  for (double l : lambda) sum += l;
  if (s > d) return (s / d) * sum;
  const int k = static_cast<int>(std::floor(s));
  double acc = 0.0;
  for (int i = 0; i < k; ++i) acc += lambda[i];
  if (k < d) acc += (s - k) * lambda[k];
  return acc;
}

inline double lyapunov_dimension(double h, std::span<const double> lambda) {
  if (!(h >= 0.0)) throw Error(ErrorCode::InvalidArgument, "entropy must be non-negative");
  if (lambda.empty()) throw Error(ErrorCode::InvalidArgument, "no exponents");
  for (std::size_t i = 0; i < lambda.size(); ++i) {
    if (!(lambda[i] < 0.0)) throw Error(ErrorCode::NonNegativeExponent, "Lyapunov exponents must be negative");
    if (i > 0 && lambda[i] > lambda[i - 1]) throw Error(ErrorCode::InvalidArgument, "exponents must be non-increasing");
  }
  if (h == 0.0) return 0.0;
  double acc = h;
  double sum = 0.0;
  for (std::size_t k = 0; k < lambda.size(); ++k) {
    if (acc + lambda[k] <= 0.0) return static_cast<double>(k) + acc / (-lambda[k]);
    acc += lambda[k];
    sum += lambda[k];
  }
  return static_cast<double>(lambda.size()) * h / (-sum);
}

inline double lyapunov_dimension(double h, const std::vector<double>& lambda) {
  return lyapunov_dimension(h, std::span<const double>(lambda));
}

struct LocalDimension {
  std::size_t point_index = 0;
  double slope = 0.0;
  double fit_r_min = 0.0;
  double fit_r_max = 0.0;
};

struct LocalDimOptions {
  std::vector<double> r_grid;  // empty: 25 radii over three decades below diam/8
  double quantile = 0.99;
  std::size_t n_probe = 2000;
  std::size_t min_count = 100;
  int threads = 1;
};

struct LocalDimResult {
  std::vector<LocalDimension> points;
  std::vector<double> r_grid;
  double quantile = 0.99;
  double estimate = 0.0;
  std::size_t min_count = 0;
};

namespace detail {

inline Box bounding_box(const PointCloud& cloud) {
  Vec lo(cloud.d), hi(cloud.d);
  for (int j = 0; j < cloud.d; ++j) {
    lo[j] = INFINITY;
    hi[j] = -INFINITY;
  }
  for (std::size_t i = 0; i < cloud.size(); ++i)
    for (int j = 0; j < cloud.d; ++j) {
      lo[j] = std::min(lo[j], cloud.coords[i * cloud.d + j]);
      hi[j] = std::max(hi[j], cloud.coords[i * cloud.d + j]);
    }
  return {lo, hi};
}

inline double quantile_of(std::vector<double> v, double q) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const auto rank = static_cast<std::size_t>(std::ceil(q * v.size()));
  return v[std::clamp<std::size_t>(rank, 1, v.size()) - 1];
}

/// Uniform grid over a point cloud; points sorted by cell for range lookups.
class CellIndex {
 public:
  CellIndex(const PointCloud& cloud, double cell) : cloud_(&cloud), cell_(cell), box_(bounding_box(cloud)) {
    const int d = cloud.d;
    // Keep the packed cell key within 60 bits.
    const double per_axis = std::floor(std::pow(2.0, 60.0 / d)) - 2.0;
    for (int j = 0; j < d; ++j) cell_ = std::max(cell_, (box_.hi[j] - box_.lo[j]) / per_axis);
    for (int j = 0; j < d; ++j) {
      dims_[j] = static_cast<std::int64_t>(std::floor((box_.hi[j] - box_.lo[j]) / cell_)) + 1;
    }
    order_.resize(cloud.size());
    keys_.resize(cloud.size());
    std::vector<std::pair<std::uint64_t, std::uint32_t>> tmp(cloud.size());
    for (std::size_t i = 0; i < cloud.size(); ++i) tmp[i] = {key_of(cloud.point(i)), static_cast<std::uint32_t>(i)};
    std::sort(tmp.begin(), tmp.end());
    for (std::size_t i = 0; i < tmp.size(); ++i) {
      keys_[i] = tmp[i].first;
      order_[i] = tmp[i].second;
    }
  }

  /// Calls fn(index) for every point whose cell touches the ball B(c, r). A
  /// callback returning bool stops the scan by returning true.
  template <class Fn>
  void for_each_near(const Vec& c, double r, Fn&& fn) const {
    const int d = cloud_->d;
    std::array<std::int64_t, kMaxDim> lo{}, hi{}, idx{};
    for (int j = 0; j < d; ++j) {
      lo[j] = std::max<std::int64_t>(0, static_cast<std::int64_t>(std::floor((c[j] - r - box_.lo[j]) / cell_)));
      hi[j] = std::min<std::int64_t>(dims_[j] - 1, static_cast<std::int64_t>(std::floor((c[j] + r - box_.lo[j]) / cell_)));
      if (lo[j] > hi[j]) return;
      idx[j] = lo[j];
    }
    for (;;) {
      std::uint64_t key = 0;
      for (int j = d - 1; j >= 0; --j) key = key * static_cast<std::uint64_t>(dims_[j]) + static_cast<std::uint64_t>(idx[j]);
      auto range = std::equal_range(keys_.begin(), keys_.end(), key);
      for (auto it = range.first; it != range.second; ++it) {
        if constexpr (std::is_same_v<std::invoke_result_t<Fn&, std::size_t>, bool>) {
          if (fn(static_cast<std::size_t>(order_[it - keys_.begin()]))) return;
        } else {
          fn(static_cast<std::size_t>(order_[it - keys_.begin()]));
        }
      }
      int j = 0;
      while (j < d && ++idx[j] > hi[j]) {
        idx[j] = lo[j];
        ++j;
      }
      if (j == d) break;
    }
  }

 private:
  std::uint64_t key_of(const Vec& z) const {
    std::uint64_t key = 0;
    for (int j = cloud_->d - 1; j >= 0; --j) {
      auto c = static_cast<std::int64_t>(std::floor((z[j] - box_.lo[j]) / cell_));
      c = std::clamp<std::int64_t>(c, 0, dims_[j] - 1);
      key = key * static_cast<std::uint64_t>(dims_[j]) + static_cast<std::uint64_t>(c);
    }
    return key;
  }

  const PointCloud* cloud_;
  double cell_;
  Box box_;
  std::array<std::int64_t, kMaxDim> dims_{};
  std::vector<std::uint64_t> keys_;
  std::vector<std::uint32_t> order_;
};

}  // namespace detail

/// Per-point slopes of log mass(B(x, r)) against log r over the radii where
/// the ball holds at least min_count points; the q-quantile of the slopes
/// estimates the upper packing dimension.
inline LocalDimResult local_dims(const PointCloud& cloud, LocalDimOptions opt = {}) {
  if (cloud.size() == 0) throw Error(ErrorCode::InvalidArgument, "empty point cloud");
  if (!(opt.quantile > 0.0 && opt.quantile <= 1.0)) throw Error(ErrorCode::InvalidArgument, "quantile must be in (0, 1]");
  const Box bb = detail::bounding_box(cloud);
  const double diam = bb.diameter();
  LocalDimResult out;
  out.quantile = opt.quantile;
  out.min_count = opt.min_count;
  std::vector<double> grid = opt.r_grid;
  if (grid.empty()) {
    const double r_max = diam > 0.0 ? diam / 8.0 : 1.0;
    const double r_min = std::max(r_max * 1e-3, 10.0 * cloud.error_bound);
    const int steps = 24;
    for (int i = 0; i <= steps; ++i) grid.push_back(r_max * std::pow(r_min / r_max, static_cast<double>(i) / steps));
  }
  std::sort(grid.begin(), grid.end());
  if (grid.front() <= 0.0) throw Error(ErrorCode::InvalidArgument, "radii must be positive");
  if (grid.front() < 10.0 * cloud.error_bound)
    throw Error(ErrorCode::InsufficientResolution, "smallest radius is below ten times the sampling error bound");
  out.r_grid = grid;
  const double r_max = grid.back();
  const std::size_t n = cloud.size();
  const std::size_t probes = std::min(opt.n_probe, n);
  const detail::CellIndex index(cloud, std::max(r_max, 1e-300));
  const std::size_t nr = grid.size();
  std::vector<double> log_r(nr);
  std::vector<double> r2(nr);
  for (std::size_t j = 0; j < nr; ++j) {
    log_r[j] = std::log(grid[j]);
    r2[j] = grid[j] * grid[j];
  }

  std::vector<std::optional<LocalDimension>> slots(probes);
  detail::parallel_for(probes, opt.threads, [&](std::size_t p) {
    const std::size_t i = p * n / probes;
    const Vec x = cloud.point(i);
    const double* xs0 = cloud.coords.data() + i * cloud.d;
    std::vector<std::size_t> hist(nr + 1, 0);
    index.for_each_near(x, r_max, [&](std::size_t k) {
      const double* y = cloud.coords.data() + k * cloud.d;
      double d2 = 0.0;
      for (int j = 0; j < cloud.d; ++j) d2 += (y[j] - xs0[j]) * (y[j] - xs0[j]);
      if (d2 > r2.back()) return;
      hist[std::lower_bound(r2.begin(), r2.end(), d2) - r2.begin()]++;
    });
    std::vector<double> xs, ys;
    std::size_t cum = 0;
    for (std::size_t j = 0; j < nr; ++j) {
      cum += hist[j];
      if (cum >= opt.min_count) {
        xs.push_back(log_r[j]);
        ys.push_back(std::log(static_cast<double>(cum) / n));
      }
    }
    if (xs.size() < 3) return;
    const detail::LinearFit fit = detail::least_squares(xs, ys);
    slots[p] = LocalDimension{i, fit.slope, std::exp(xs.front()), std::exp(xs.back())};
  });
  std::vector<double> slopes;
  for (const auto& s : slots)
    if (s) {
      out.points.push_back(*s);
      slopes.push_back(s->slope);
    }
  if (out.points.empty())
    throw Error(ErrorCode::InsufficientResolution, "no probe point has three radii holding min_count neighbours");
  out.estimate = detail::quantile_of(slopes, opt.quantile);
  return out;
}

inline void write_local_dims_csv(std::ostream& os, const LocalDimResult& r) {
  const auto old = os.precision(17);
  os << "point_index,slope,fit_r_min,fit_r_max\n";
  for (const auto& p : r.points) os << p.point_index << ',' << p.slope << ',' << p.fit_r_min << ',' << p.fit_r_max << '\n';
  os.precision(old);
}

}  // namespace fracdim
