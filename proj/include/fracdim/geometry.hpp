#pragma once

// Ball covers of cylinder images and grid box counting.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <ostream>
#include <vector>

#include "fracdim/detail/numeric.hpp"
#include "fracdim/ergodic.hpp"
#include "fracdim/error.hpp"
#include "fracdim/linalg.hpp"
#include "fracdim/shift.hpp"
#include "fracdim/svf.hpp"
#include "fracdim/systems.hpp"

namespace fracdim {

struct Ball {
  Vec center;
  double radius = 0.0;
};

struct BallCover {
  std::vector<Ball> balls;
  Word word;
  int k = 0;
  double certified_count_bound = 0.0;  // C1 * prod G
  double certified_radius = 0.0;       // r_base * prod H
  double base_count = 1.0;             // C1
  double base_radius = 0.0;
};

namespace detail {

inline void tile_ellipsoid(const LogSvd& f, const Vec& center, double r, int k, std::vector<Ball>& out) {
  const int d = f.u.dim();
  const double la_k = f.spectrum[k];
  const double side = 2.0 / std::sqrt(static_cast<double>(d)) * std::exp(la_k) * r;
  const double radius = std::exp(la_k) * r;
  std::array<int, kMaxDim> m{};
  for (int i = 0; i < d; ++i) {
    const double need = d * std::exp(f.spectrum[i] - la_k);
    m[i] = std::max(1, static_cast<int>(std::ceil(need * (1.0 - 1e-12))));
  }
  std::array<int, kMaxDim> idx{};
  for (;;) {
    Vec c = center;
    for (int i = 0; i < d; ++i) {
      const double off = (idx[i] - 0.5 * (m[i] - 1)) * side;
      for (int row = 0; row < d; ++row) c[row] += off * f.u(row, i);
    }
    out.push_back({c, radius});
    int i = 0;
    while (i < d && ++idx[i] == m[i]) idx[i++] = 0;
    if (i == d) break;
  }
}

}  // namespace detail

/// Covers y + J B(0, sqrt(d) r) by balls of radius alpha_{k+1}(J) r: the
/// enclosing box in the singular frame is tiled by cubes of side
/// (2/sqrt(d)) alpha_{k+1} r, each inside one ball.
inline BallCover ellipsoid_cover(const SmallMatrix& j, const Vec& center, double r, int k) {
  const int d = j.dim();
  if (k < 0 || k >= d) throw Error(ErrorCode::InvalidArgument, "k must lie in [0, d-1]");
  if (!(r > 0.0)) throw Error(ErrorCode::InvalidArgument, "radius must be positive");
  const LogSvd f = svd(j);
  const double la_k = f.spectrum[k];
  BallCover out;
  out.k = k;
  out.certified_radius = std::exp(la_k) * r;
  double log_bound = std::log(std::pow(2.0 * d, d));
  for (int i = 0; i < k; ++i) log_bound += f.spectrum[i] - la_k;
  out.certified_count_bound = std::exp(log_bound);
  out.base_radius = r;
  detail::tile_ellipsoid(f, center, r, k, out.balls);
  return out;
}

/// Fraction of points lying in some ball with radius + tolerance.
inline double verify_cover(const BallCover& cover, const std::vector<Vec>& points, double tolerance = 0.0) {
  if (points.empty()) return 1.0;
  if (cover.balls.empty()) return 0.0;
  PointCloud centers;
  centers.d = points.front().dim();
  double rmax = 0.0;
  for (const Ball& b : cover.balls) {
    centers.push_back(b.center, 0);
    rmax = std::max(rmax, b.radius + tolerance);
  }
  const detail::CellIndex index(centers, std::max(rmax, 1e-300));
  std::size_t inside = 0;
  for (const Vec& p : points) {
    bool hit = false;
    index.for_each_near(p, rmax, [&](std::size_t b) {
      hit = distance(p, cover.balls[b].center) <= cover.balls[b].radius + tolerance;
      return hit;
    });
    inside += hit;
  }
  return static_cast<double>(inside) / points.size();
}

/// A cover together with a certified enclosure of the set it covers: every
/// point of the set is within enclosure_radius of some enclosure point.
struct CoverState {
  BallCover cover;
  std::vector<Vec> enclosure;
  double enclosure_radius = 0.0;
  double log_count_bound = 0.0;
  double log_radius = 0.0;
};

/// Recursive covers of cylinder images, built from the tail of the word: the
/// cover of sigma(I) is pushed through the first map, each ball replaced by an
/// ellipsoid cover, and balls missing the enclosure of the image are dropped.
template <class System>
class CoverBuilder {
 public:
  CoverBuilder(const System& sys, int k) : sys_(&sys), k_(k), d_(sys.dim()) {
    if (k < 0 || k >= d_) throw Error(ErrorCode::InvalidArgument, "k must lie in [0, d-1]");
    if (!sys.is_affine() && d_ < 2) throw Error(ErrorCode::InvalidArgument, "covers of non-affine maps need d >= 2");
    const int ell = sys.alphabet();
    enc_len_ = 1;
    while (std::pow(static_cast<double>(ell), enc_len_ + 1) <= 4096.0) ++enc_len_;
    r0_ = sys.is_affine() ? INFINITY : probe_r0();
  }

  /// Radius below which the one-step linearization is trusted.
  double r0() const noexcept { return r0_; }

  /// Cover of the attractor (IFS) or of the region part coded by `letter`
  /// (repeller); the recursion root.
  CoverState root(int letter = -1) const {
    const System& sys = *sys_;
    CoverState st;
    Box box = sys.domain();
    if constexpr (System::kPairBranches) {
      if (letter < 0) throw Error(ErrorCode::InvalidArgument, "repeller covers start from a letter");
      box = sys.region(letter);
      st.cover.word = Word{letter};
    }
    // Enclosure from coding points of all admissible words of length enc_len_.
    const Subshift& x = sys.shift();
    const double err = std::pow(sys.gamma(), enc_len_) * box.diameter();
    st.enclosure_radius = err;
    for (int a = 0; a < x.alphabet(); ++a) {
      if constexpr (System::kPairBranches) {
        if (!x.allowed(letter, a)) continue;
      }
      for (const Word& w : words(x, enc_len_, a)) {
        if constexpr (System::kPairBranches) {
          st.enclosure.push_back(code_point(sys, Word{letter}.concat(w), sys.base_point(w.back())).point);
        } else {
          st.enclosure.push_back(code_point(sys, w, sys.base_point(w.back())).point);
        }
      }
    }
    const double rb = 0.5 * box.diameter();
    if (rb <= r0_) {
      st.cover.balls.push_back({box.center(), rb});
      st.cover.base_radius = rb;
    } else {
      // Mesh of r0-balls over the box, keeping those that meet the enclosure.
      const double side = 2.0 * r0_ / std::sqrt(static_cast<double>(d_));
      std::array<int, kMaxDim> m{}, idx{};
      for (int i = 0; i < d_; ++i) m[i] = std::max(1, static_cast<int>(std::ceil((box.hi[i] - box.lo[i]) / side)));
      for (;;) {
        Vec c(d_);
        for (int i = 0; i < d_; ++i) c[i] = box.lo[i] + (idx[i] + 0.5) * side;
        st.cover.balls.push_back({c, r0_});
        int i = 0;
        while (i < d_ && ++idx[i] == m[i]) idx[i++] = 0;
        if (i == d_) break;
      }
      st.cover.base_radius = r0_;
      prune(st);
    }
    st.cover.k = k_;
    st.cover.base_count = static_cast<double>(st.cover.balls.size());
    st.cover.certified_radius = st.cover.base_radius;
    st.cover.certified_count_bound = st.cover.base_count;
    st.log_radius = std::log(st.cover.base_radius);
    st.log_count_bound = std::log(st.cover.base_count);
    return st;
  }

  /// Cover of the image under the map of `letter` of what `tail` covers.
  CoverState extend(const CoverState& tail, int letter) const {
    const System& sys = *sys_;
    int next = -1;
    if constexpr (System::kPairBranches) {
      next = tail.cover.word.front();
    } else {
      if (!tail.cover.word.empty()) next = tail.cover.word.front();
    }
    if (next >= 0 && !sys.shift().allowed(letter, next))
      throw Error(ErrorCode::InadmissibleWord, "letter cannot precede the tail word");
    CoverState st;
    st.cover.k = k_;
    st.cover.word = Word{letter}.concat(tail.cover.word);
    st.cover.base_count = tail.cover.base_count;
    st.cover.base_radius = tail.cover.base_radius;
    const double rho = tail.cover.certified_radius;

    // Per-ball Jacobians; H and G are the maxima over the balls used. An
    // affine step has one Jacobian.
    const bool affine = sys.is_affine();
    std::vector<LogSvd> fac;
    double log_h = -INFINITY, log_g = -INFINITY;
    const double log_c = std::log(std::pow(2.0 * d_, d_));
    auto account = [&](const SingularSpectrum& sp) {
      log_h = std::max(log_h, sp[k_]);
      double g = log_c;
      for (int i = 0; i < k_; ++i) g += sp[i] - sp[k_];
      log_g = std::max(log_g, g);
    };
    if (affine || tail.cover.balls.empty()) {
      const Vec z = tail.cover.balls.empty() ? sys.base_point(std::max(next, 0)) : tail.cover.balls.front().center;
      fac.push_back(svd(sys.step_jacobian(letter, next, z)));
      account(fac.back().spectrum);
    } else {
      for (const Ball& b : tail.cover.balls) {
        fac.push_back(svd(sys.step_jacobian(letter, next, b.center)));
        account(fac.back().spectrum);
      }
    }
    st.log_radius = tail.log_radius + log_h;
    st.log_count_bound = tail.log_count_bound + log_g;
    st.cover.certified_radius = std::exp(st.log_radius);
    st.cover.certified_count_bound = std::exp(st.log_count_bound);
    for (std::size_t i = 0; i < tail.cover.balls.size(); ++i) {
      const Ball& b = tail.cover.balls[i];
      const std::size_t first = st.cover.balls.size();
      detail::tile_ellipsoid(fac[affine ? 0 : i], sys.step(letter, next, b.center), rho, k_, st.cover.balls);
      for (std::size_t j = first; j < st.cover.balls.size(); ++j) st.cover.balls[j].radius = st.cover.certified_radius;
    }
    st.enclosure.reserve(tail.enclosure.size());
    for (const Vec& p : tail.enclosure) st.enclosure.push_back(sys.step(letter, next, p));
    st.enclosure_radius = tail.enclosure_radius * sys.step_gamma(letter, next);
    dedupe(st);
    prune(st);
    return st;
  }

  BallCover cover(const Word& w) const {
    const System& sys = *sys_;
    if (!sys.shift().admissible(w)) throw Error(ErrorCode::InadmissibleWord, "word " + w.to_string() + " is not admissible");
    if constexpr (System::kPairBranches) {
      if (w.empty()) throw Error(ErrorCode::InvalidArgument, "repeller covers need a non-empty word");
      CoverState st = root(w.back());
      for (std::size_t i = w.size() - 1; i-- > 0;) st = extend(st, w[i]);
      return st.cover;
    } else {
      CoverState st = root();
      for (std::size_t i = w.size(); i-- > 0;) st = extend(st, w[i]);
      return st.cover;
    }
  }

 private:
  // Balls share one radius after extension; drop repeated centers.
  void dedupe(CoverState& st) const {
    auto& balls = st.cover.balls;
    auto less = [&](const Ball& a, const Ball& b) {
      for (int i = 0; i < d_; ++i)
        if (a.center[i] != b.center[i]) return a.center[i] < b.center[i];
      return false;
    };
    std::sort(balls.begin(), balls.end(), less);
    balls.erase(std::unique(balls.begin(), balls.end(),
                            [&](const Ball& a, const Ball& b) { return !less(a, b) && !less(b, a) && a.radius == b.radius; }),
                balls.end());
  }

  void prune(CoverState& st) const {
    if (st.enclosure.empty()) return;
    PointCloud pts;
    pts.d = d_;
    for (const Vec& p : st.enclosure) pts.push_back(p, 0);
    double reach = st.enclosure_radius;
    for (const Ball& b : st.cover.balls) reach = std::max(reach, b.radius + st.enclosure_radius);
    const detail::CellIndex index(pts, std::max(reach, 1e-300));
    std::vector<Ball> kept;
    for (const Ball& b : st.cover.balls) {
      bool hit = false;
      index.for_each_near(b.center, b.radius + st.enclosure_radius, [&](std::size_t i) {
        hit = distance(b.center, st.enclosure[i]) <= b.radius + st.enclosure_radius;
        return hit;
      });
      if (hit) kept.push_back(b);
    }
    st.cover.balls = std::move(kept);
  }

  // Largest r (halving from diam/2) such that every map stays within the
  // sqrt(d) slack of its linearization on balls of radius r around a mesh.
  double probe_r0() const {
    const System& sys = *sys_;
    const Box& u = sys.domain();
    std::vector<Vec> centers = detail::box_samples(u);
    if (centers.size() > 256) {
      std::vector<Vec> thin;
      for (std::size_t i = 0; i < centers.size(); i += centers.size() / 256) thin.push_back(centers[i]);
      centers = std::move(thin);
    }
    Rng rng(0x0c0ffee);
    std::vector<Vec> dirs;
    for (int t = 0; t < 16; ++t) {
      Vec v(d_);
      for (int i = 0; i < d_; ++i) v[i] = 2.0 * detail::unit_double(rng()) - 1.0;
      dirs.push_back((1.0 / v.norm()) * v);
    }
    const double slack = std::sqrt(static_cast<double>(d_)) - 1.0;
    double r = 0.5 * u.diameter();
    for (int it = 0; it < 40; ++it, r *= 0.5) {
      bool ok = true;
      for (int a = 0; a < sys.alphabet() && ok; ++a) {
        for (int b : sys.shift().successors(a)) {
          for (const Vec& c : centers) {
            const SmallMatrix j = sys.step_jacobian(a, b, c);
            const double amin = std::exp(singular_values(j)[d_ - 1]);
            const Vec fc = sys.step(a, b, c);
            for (const Vec& v : dirs) {
              const Vec z = c + r * v;
              const Vec e = sys.step(a, b, z) - fc - j * (r * v);
              if (e.norm() > 0.5 * slack * amin * r) {
                ok = false;
                break;
              }
            }
            if (!ok) break;
          }
          if (!ok || !System::kPairBranches) break;
        }
      }
      if (ok) return r;
    }
    throw Error(ErrorCode::InvalidArgument, "no admissible base radius found");
  }

  const System* sys_;
  int k_;
  int d_;
  int enc_len_ = 1;
  double r0_ = INFINITY;
};

template <class System>
BallCover cover_word(const System& sys, const Word& w, int k) {
  return CoverBuilder<System>(sys, k).cover(w);
}

struct CylinderSample {
  std::vector<Vec> points;
  double error_bound = 0.0;
};

/// Samples of cylinder images: a pool of coded points per first symbol, each
/// pushed through the maps of a word. Point i of every cylinder uses pool
/// point i, so samples differ across words only by the word's maps.
template <class System>
class CylinderSampler {
 public:
  CylinderSampler(const System& sys, std::size_t n, std::uint64_t seed) : sys_(&sys), pool_(sys.alphabet()) {
    const Subshift& x = sys.shift();
    const int len = tail_length(sys);
    for (int j = 0; j < x.alphabet(); ++j) {
      Rng rng(detail::derive_seed(seed, static_cast<std::uint64_t>(j)));
      for (std::size_t p = 0; p < n; ++p) {
        Word tail{j};
        while (static_cast<int>(tail.size()) < len) {
          const std::vector<int> s = x.successors(tail.back());
          tail.push_back(s[rng() % s.size()]);
        }
        const CodedPoint c = code_point(sys, tail, sys.base_point(tail.back()));
        pool_[j].push_back(c.point);
        err_ = std::max(err_, c.error_bound);
      }
    }
    n_ = n;
  }

  /// n points coded by w followed by a sampled tail.
  CylinderSample sample(const Word& w) const {
    const System& sys = *sys_;
    const Subshift& x = sys.shift();
    if (!x.admissible(w)) throw Error(ErrorCode::InadmissibleWord, "word " + w.to_string() + " is not admissible");
    CylinderSample out;
    out.points.reserve(n_);
    if constexpr (System::kPairBranches) {
      if (w.empty()) throw Error(ErrorCode::InvalidArgument, "repeller cylinders need a non-empty word");
      const Word head = w.prefix(w.size() - 1);
      for (const Vec& q : pool_[w.back()]) out.points.push_back(apply_word(sys, head, w.back(), q));
      out.error_bound = std::pow(sys.gamma(), static_cast<double>(head.size())) * err_;
    } else {
      std::vector<int> tails;
      for (int j = 0; j < x.alphabet(); ++j)
        if (w.empty() || x.allowed(w.back(), j)) tails.push_back(j);
      for (std::size_t p = 0; p < n_; ++p) {
        const Vec& q = pool_[tails[p % tails.size()]][p];
        out.points.push_back(apply_word(sys, w, -1, q));
      }
      out.error_bound = std::pow(sys.gamma(), static_cast<double>(w.size())) * err_;
    }
    return out;
  }

 private:
  const System* sys_;
  std::vector<std::vector<Vec>> pool_;
  std::size_t n_ = 0;
  double err_ = 0.0;
};

template <class System>
CylinderSample cylinder_sample(const System& sys, const Word& w, std::size_t n, std::uint64_t seed) {
  return CylinderSampler<System>(sys, n, seed).sample(w);
}

inline void write_cover_csv(std::ostream& os, const BallCover& cover) {
  const auto old = os.precision(17);
  if (!cover.balls.empty()) {
    for (int i = 0; i < cover.balls.front().center.dim(); ++i) os << 'x' << (i + 1) << ',';
    os << "radius\n";
  }
  for (const Ball& b : cover.balls) {
    for (int i = 0; i < b.center.dim(); ++i) os << b.center[i] << ',';
    os << b.radius << '\n';
  }
  os.precision(old);
}

struct BoxCountSeries {
  std::vector<double> delta;  // strictly decreasing
  std::vector<std::size_t> count;
  double slope = 0.0;
  double residual = 0.0;
  std::size_t fit_begin = 0;  // fit uses [fit_begin, fit_end)
  std::size_t fit_end = 0;
};

namespace detail {

inline Box anchor_box(const PointCloud& cloud) {
  if (cloud.domain.dim() == cloud.d && cloud.d > 0) return cloud.domain;
  return bounding_box(cloud);
}

}  // namespace detail

/// Occupied cells of the delta-grid anchored at the domain corner.
inline std::size_t box_count(const PointCloud& cloud, double delta, int threads = 1) {
  if (!(delta > 0.0)) throw Error(ErrorCode::InvalidArgument, "delta must be positive");
  const std::size_t n = cloud.size();
  if (n == 0) return 0;
  const int d = cloud.d;
  const Box anchor = detail::anchor_box(cloud);
  std::array<std::int64_t, kMaxDim> lo{}, hi{};
  for (int j = 0; j < d; ++j) {
    lo[j] = INT64_MAX;
    hi[j] = INT64_MIN;
  }
  auto cell = [&](std::size_t i, int j) {
    return static_cast<std::int64_t>(std::floor((cloud.coords[i * d + j] - anchor.lo[j]) / delta));
  };
  for (std::size_t i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) {
      const std::int64_t c = cell(i, j);
      lo[j] = std::min(lo[j], c);
      hi[j] = std::max(hi[j], c);
    }
  double range = 1.0;
  for (int j = 0; j < d; ++j) range *= static_cast<double>(hi[j] - lo[j] + 1);
  const std::size_t chunks = std::max<std::size_t>(1, std::min<std::size_t>(64, n / 65536 + 1));
  if (range < 0x1p62) {
    std::vector<std::vector<std::uint64_t>> parts(chunks);
    detail::parallel_for(chunks, threads, [&](std::size_t c) {
      const std::size_t b = c * n / chunks, e = (c + 1) * n / chunks;
      auto& keys = parts[c];
      keys.reserve(e - b);
      for (std::size_t i = b; i < e; ++i) {
        std::uint64_t key = 0;
        for (int j = d - 1; j >= 0; --j)
          key = key * static_cast<std::uint64_t>(hi[j] - lo[j] + 1) + static_cast<std::uint64_t>(cell(i, j) - lo[j]);
        keys.push_back(key);
      }
      std::sort(keys.begin(), keys.end());
      keys.erase(std::unique(keys.begin(), keys.end()), keys.end());
    });
    std::vector<std::uint64_t> all;
    for (auto& p : parts) all.insert(all.end(), p.begin(), p.end());
    std::sort(all.begin(), all.end());
    return static_cast<std::size_t>(std::unique(all.begin(), all.end()) - all.begin());
  }
  std::vector<std::array<std::int64_t, kMaxDim>> keys(n);
  for (std::size_t i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) keys[i][j] = cell(i, j);
  std::sort(keys.begin(), keys.end());
  return static_cast<std::size_t>(std::unique(keys.begin(), keys.end()) - keys.begin());
}

/// Slope of log N against log(1/delta), dropping the largest delta and the two
/// smallest. The default grid halves from the longest side of the domain until
/// N exceeds n/20 (at least six deltas).
inline BoxCountSeries box_dimension(const PointCloud& cloud, std::vector<double> delta_grid = {}, int threads = 1) {
  if (cloud.size() == 0) throw Error(ErrorCode::InvalidArgument, "empty point cloud");
  BoxCountSeries out;
  if (delta_grid.empty()) {
    const Box anchor = detail::anchor_box(cloud);
    double side = 0.0;
    for (int j = 0; j < cloud.d; ++j) side = std::max(side, anchor.hi[j] - anchor.lo[j]);
    if (side <= 0.0) side = 1.0;
    for (int m = 0; m < 60; ++m) {
      const double delta = std::ldexp(side, -m);
      if (delta < 10.0 * cloud.error_bound) break;
      const std::size_t nb = box_count(cloud, delta, threads);
      out.delta.push_back(delta);
      out.count.push_back(nb);
      if (out.delta.size() >= 6 && static_cast<double>(nb) > cloud.size() / 20.0) break;
    }
  } else {
    std::sort(delta_grid.begin(), delta_grid.end(), std::greater<>());
    if (delta_grid.back() < 10.0 * cloud.error_bound)
      throw Error(ErrorCode::InsufficientResolution, "smallest delta is below ten times the sampling error bound");
    for (double delta : delta_grid) {
      out.delta.push_back(delta);
      out.count.push_back(box_count(cloud, delta, threads));
    }
  }
  const std::size_t m = out.delta.size();
  if (m < 2) throw Error(ErrorCode::InsufficientResolution, "need at least two deltas");
  out.fit_begin = m >= 5 ? 1 : 0;
  out.fit_end = m >= 5 ? m - 2 : m;
  std::vector<double> xs, ys;
  for (std::size_t i = out.fit_begin; i < out.fit_end; ++i) {
    xs.push_back(-std::log(out.delta[i]));
    ys.push_back(std::log(static_cast<double>(out.count[i])));
  }
  const detail::LinearFit fit = detail::least_squares(xs, ys);
  out.slope = fit.slope;
  out.residual = fit.residual;
  return out;
}

inline void write_box_csv(std::ostream& os, const BoxCountSeries& s) {
  const auto old = os.precision(17);
  os << "delta,N\n";
  for (std::size_t i = 0; i < s.delta.size(); ++i) os << s.delta[i] << ',' << s.count[i] << '\n';
  os.precision(old);
}

}  // namespace fracdim
