#pragma once

// Contracting IFSs and repellers given by inverse branches, with coding-map
// evaluation, Jacobian cocycles and attractor sampling.

#include <cmath>
#include <cstdint>
#include <iomanip>
#include <numbers>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "fracdim/detail/numeric.hpp"
#include "fracdim/error.hpp"
#include "fracdim/linalg.hpp"
#include "fracdim/measure.hpp"
#include "fracdim/shift.hpp"
#include "fracdim/svf.hpp"

namespace fracdim {

/// Axis-aligned box [lo, hi].
struct Box {
  Vec lo;
  Vec hi;

  int dim() const noexcept { return lo.dim(); }
  Vec center() const { return 0.5 * (lo + hi); }
  double diameter() const { return (hi - lo).norm(); }
  bool contains(const Vec& z, double slack = 0.0) const noexcept {
    for (int i = 0; i < lo.dim(); ++i)
      if (z[i] < lo[i] - slack || z[i] > hi[i] + slack) return false;
    return true;
  }
  static Box unit(int d) {
    Vec lo(d), hi(d);
    for (int i = 0; i < d; ++i) hi[i] = 1.0;
    return {lo, hi};
  }
  static Box hull(const std::vector<Box>& boxes) {
    Box b = boxes.at(0);
    for (const Box& o : boxes)
      for (int i = 0; i < b.dim(); ++i) {
        b.lo[i] = std::min(b.lo[i], o.lo[i]);
        b.hi[i] = std::max(b.hi[i], o.hi[i]);
      }
    return b;
  }
};

namespace detail {

/// Deterministic sample of a box: a regular grid with ~4096 nodes.
inline std::vector<Vec> box_samples(const Box& box) {
  const int d = box.dim();
  const int m = std::max(2, static_cast<int>(std::floor(std::pow(4096.0, 1.0 / d))));
  std::vector<Vec> pts;
  std::vector<int> idx(d, 0);
  for (;;) {
    Vec z(d);
    for (int i = 0; i < d; ++i) z[i] = box.lo[i] + (box.hi[i] - box.lo[i]) * idx[i] / (m - 1);
    pts.push_back(z);
    int k = 0;
    while (k < d && ++idx[k] == m) idx[k++] = 0;
    if (k == d) break;
  }
  return pts;
}

}  // namespace detail

enum class Perturbation { None, Sine };

/// z -> A z + b + delta(z). The sine family perturbs coordinate j by
/// eps * sin(2 pi z_{(j+1) mod d}).
class SmoothMap {
 public:
  static SmoothMap affine(SmallMatrix a, Vec b, Box domain) {
    return SmoothMap(std::move(a), std::move(b), Perturbation::None, 0.0, std::move(domain));
  }
  static SmoothMap perturbed(SmallMatrix a, Vec b, double eps, Box domain, Perturbation kind = Perturbation::Sine) {
    return SmoothMap(std::move(a), std::move(b), kind, eps, std::move(domain));
  }

  int dim() const noexcept { return a_.dim(); }
  bool is_affine() const noexcept { return kind_ == Perturbation::None || eps_ == 0.0; }
  const SmallMatrix& linear() const noexcept { return a_; }
  const Vec& translation() const noexcept { return b_; }
  Perturbation perturbation() const noexcept { return kind_; }
  double epsilon() const noexcept { return eps_; }
  const Box& domain() const noexcept { return domain_; }
  /// Largest sampled Jacobian operator norm on the domain.
  double gamma() const noexcept { return gamma_; }

  Vec operator()(const Vec& z) const {
    Vec w = a_ * z + b_;
    if (!is_affine()) {
      const int d = dim();
      for (int j = 0; j < d; ++j) w[j] += eps_ * std::sin(2.0 * std::numbers::pi * z[(j + 1) % d]);
    }
    return w;
  }

  SmallMatrix jacobian(const Vec& z) const {
    if (is_affine()) return a_;
    SmallMatrix j = a_;
    const int d = dim();
    for (int r = 0; r < d; ++r) {
      const int c = (r + 1) % d;
      j(r, c) += 2.0 * std::numbers::pi * eps_ * std::cos(2.0 * std::numbers::pi * z[c]);
    }
    return j;
  }

 private:
  SmoothMap(SmallMatrix a, Vec b, Perturbation kind, double eps, Box domain)
      : a_(std::move(a)), b_(std::move(b)), kind_(kind), eps_(eps), domain_(std::move(domain)) {
    if (b_.dim() != a_.dim() || domain_.dim() != a_.dim())
      throw Error(ErrorCode::InvalidArgument, "map dimension mismatch");
    if (!a_.all_finite() || !b_.all_finite() || !std::isfinite(eps_))
      throw Error(ErrorCode::NonFinite, "map coefficients must be finite");
    if (is_affine()) {
      gamma_ = operator_norm(a_);
    } else {
      for (const Vec& z : detail::box_samples(domain_)) {
        const SmallMatrix j = jacobian(z);
        if (!j.all_finite()) throw Error(ErrorCode::NonFinite, "Jacobian not finite on the domain");
        gamma_ = std::max(gamma_, operator_norm(j));
      }
    }
    if (!(gamma_ < 1.0))
      throw Error(ErrorCode::InvalidArgument, "map is not a contraction on its domain (gamma = " + std::to_string(gamma_) + ")");
  }

  SmallMatrix a_;
  Vec b_;
  Perturbation kind_;
  double eps_;
  Box domain_;
  double gamma_ = 0.0;
};

/// Finite family of contractions of a box U, coded by a subshift.
class IfsSystem {
 public:
  static constexpr bool kPairBranches = false;

  IfsSystem(std::vector<SmoothMap> maps, std::optional<Subshift> code_space = std::nullopt)
      : maps_(std::move(maps)), shift_(code_space ? *code_space : Subshift::full(std::max<int>(1, maps_.size()))) {
    if (maps_.size() < 2) throw Error(ErrorCode::InvalidArgument, "an IFS needs at least two maps");
    if (shift_.alphabet() != alphabet()) throw Error(ErrorCode::InvalidArgument, "subshift alphabet differs from the number of maps");
    domain_ = maps_[0].domain();
    for (const SmoothMap& f : maps_) {
      if (f.dim() != dim()) throw Error(ErrorCode::InvalidArgument, "all maps must share the dimension");
      if (!(f.domain().lo == domain_.lo) || !(f.domain().hi == domain_.hi))
        throw Error(ErrorCode::InvalidArgument, "all maps must share the domain");
      gamma_ = std::max(gamma_, f.gamma());
      affine_ = affine_ && f.is_affine();
    }
    const double slack = 1e-9 * domain_.diameter();
    for (std::size_t i = 0; i < maps_.size(); ++i)
      for (const Vec& z : detail::box_samples(domain_))
        if (!domain_.contains(maps_[i](z), slack))
          throw Error(ErrorCode::PointOutsideDomain, "map " + std::to_string(i + 1) + " does not send the domain into itself");
  }

  int dim() const noexcept { return domain_.dim(); }
  int alphabet() const noexcept { return static_cast<int>(maps_.size()); }
  const Subshift& shift() const noexcept { return shift_; }
  const Box& domain() const noexcept { return domain_; }
  double gamma() const noexcept { return gamma_; }
  double diameter() const { return domain_.diameter(); }
  bool is_affine() const noexcept { return affine_; }
  const SmoothMap& map(int i) const { return maps_.at(i); }
  const std::vector<SmoothMap>& maps() const noexcept { return maps_; }

  Vec step(int i, int /*next*/, const Vec& z) const { return maps_[i](z); }
  SmallMatrix step_jacobian(int i, int /*next*/, const Vec& z) const { return maps_[i].jacobian(z); }
  const SmallMatrix& linear(int i, int /*next*/) const { return maps_[i].linear(); }
  double step_gamma(int i, int /*next*/) const { return maps_[i].gamma(); }
  bool has_step(int i, int /*next*/) const noexcept { return i >= 0 && i < alphabet(); }
  /// Starting point for tails whose first symbol is j.
  Vec base_point(int /*j*/) const { return domain_.center(); }
  const Box& region(int /*j*/) const noexcept { return domain_; }

 private:
  std::vector<SmoothMap> maps_;
  Subshift shift_;
  Box domain_;
  double gamma_ = 0.0;
  bool affine_ = true;
};

/// One local inverse f_{i,j}: R_j -> R_i of an expanding map.
struct Branch {
  int from = 0;
  int to = 0;
  SmoothMap map;
};

/// Repeller coded by an SFT; the branch (i, j) exists iff a_ij = 1.
class RepellerSystem {
 public:
  static constexpr bool kPairBranches = true;

  RepellerSystem(Subshift shift, std::vector<Box> regions, std::vector<Branch> branches)
      : shift_(std::move(shift)), regions_(std::move(regions)) {
    const int ell = shift_.alphabet();
    if (static_cast<int>(regions_.size()) != ell) throw Error(ErrorCode::InvalidArgument, "need one region per symbol");
    domain_ = Box::hull(regions_);
    slots_.assign(static_cast<std::size_t>(ell) * ell, -1);
    for (Branch& b : branches) {
      if (b.from < 0 || b.from >= ell || b.to < 0 || b.to >= ell)
        throw Error(ErrorCode::InvalidArgument, "branch symbol out of range");
      if (!shift_.allowed(b.from, b.to))
        throw Error(ErrorCode::InvalidArgument, "branch " + std::to_string(b.from + 1) + "," + std::to_string(b.to + 1) +
                                                    " given for a forbidden transition");
      if (b.map.dim() != dim()) throw Error(ErrorCode::InvalidArgument, "branch dimension mismatch");
      int& slot = slots_[static_cast<std::size_t>(b.from) * ell + b.to];
      if (slot >= 0) throw Error(ErrorCode::InvalidArgument, "duplicate branch");
      slot = static_cast<int>(branches_.size());
      gamma_ = std::max(gamma_, b.map.gamma());
      affine_ = affine_ && b.map.is_affine();
      const double slack = 1e-9 * regions_[b.from].diameter();
      for (const Vec& z : detail::box_samples(regions_[b.to]))
        if (!regions_[b.from].contains(b.map(z), slack))
          throw Error(ErrorCode::PointOutsideDomain, "branch " + std::to_string(b.from + 1) + "," +
                                                         std::to_string(b.to + 1) + " leaves its target region");
      branches_.push_back(std::move(b));
    }
    for (int i = 0; i < ell; ++i)
      for (int j = 0; j < ell; ++j)
        if (shift_.allowed(i, j) && slots_[static_cast<std::size_t>(i) * ell + j] < 0)
          throw Error(ErrorCode::InvalidArgument, "missing branch for an allowed transition");
  }

  int dim() const noexcept { return domain_.dim(); }
  int alphabet() const noexcept { return shift_.alphabet(); }
  const Subshift& shift() const noexcept { return shift_; }
  const Box& domain() const noexcept { return domain_; }
  double gamma() const noexcept { return gamma_; }
  double diameter() const { return domain_.diameter(); }
  bool is_affine() const noexcept { return affine_; }
  const std::vector<Branch>& branches() const noexcept { return branches_; }
  const Box& region(int j) const { return regions_.at(j); }

  const SmoothMap& branch(int i, int j) const {
    const int s = slots_[static_cast<std::size_t>(i) * alphabet() + j];
    if (s < 0) throw Error(ErrorCode::InadmissibleWord, "no branch for this transition");
    return branches_[s].map;
  }
  Vec step(int i, int next, const Vec& z) const { return branch(i, next)(z); }
  SmallMatrix step_jacobian(int i, int next, const Vec& z) const { return branch(i, next).jacobian(z); }
  const SmallMatrix& linear(int i, int next) const { return branch(i, next).linear(); }
  double step_gamma(int i, int next) const { return branch(i, next).gamma(); }
  bool has_step(int i, int next) const noexcept { return next >= 0 && shift_.allowed(i, next); }
  Vec base_point(int j) const { return regions_.at(j).center(); }

 private:
  Subshift shift_;
  std::vector<Box> regions_;
  Box domain_;
  std::vector<Branch> branches_;
  std::vector<int> slots_;
  double gamma_ = 0.0;
  bool affine_ = true;
};

/// Point of the attractor together with a guaranteed distance bound.
struct CodedPoint {
  Vec point;
  double error_bound = 0.0;
};

/// Applies the letters of w right to left; the last letter is followed by
/// `next` (ignored for IFSs).
template <class System>
Vec apply_word(const System& sys, const Word& w, int next, Vec z) {
  for (std::size_t k = w.size(); k-- > 0;) {
    const int nxt = k + 1 < w.size() ? w[k + 1] : next;
    z = sys.step(w[k], nxt, z);
  }
  return z;
}

/// Approximates Pi(x) for x in [I]. For an IFS this is f_I(z0) with z0 in U;
/// for a repeller z0 lies in R_{i_n} and the n-1 branches along I are applied.
template <class System>
CodedPoint code_point(const System& sys, const Word& w, const Vec& z0) {
  if (!sys.shift().admissible(w)) throw Error(ErrorCode::InadmissibleWord, "word " + w.to_string() + " is not admissible");
  if (z0.dim() != sys.dim()) throw Error(ErrorCode::InvalidArgument, "point dimension mismatch");
  if constexpr (System::kPairBranches) {
    if (w.empty()) throw Error(ErrorCode::InvalidArgument, "repeller coding needs a non-empty word");
    const Box& r = sys.region(w.back());
    if (!r.contains(z0, 1e-9 * r.diameter())) throw Error(ErrorCode::PointOutsideDomain, "start point outside the last region");
    const Vec p = apply_word(sys, w.prefix(w.size() - 1), w.back(), z0);
    return {p, std::pow(sys.gamma(), static_cast<double>(w.size() - 1)) * r.diameter()};
  } else {
    const Box& u = sys.domain();
    if (!u.contains(z0, 1e-9 * u.diameter())) throw Error(ErrorCode::PointOutsideDomain, "start point outside the domain");
    return {apply_word(sys, w, -1, z0), std::pow(sys.gamma(), static_cast<double>(w.size())) * u.diameter()};
  }
}

/// One-step Jacobians along the orbit of tail_point under f_I, in the order
/// whose product is D f_I(tail_point). For a repeller `next` is the first
/// symbol of the tail; when omitted it is inferred from the regions.
template <class System>
std::vector<SmallMatrix> jacobians_along(const System& sys, const Word& w, const Vec& tail_point, int next = -1) {
  if (!sys.shift().admissible(w)) throw Error(ErrorCode::InadmissibleWord, "word " + w.to_string() + " is not admissible");
  if constexpr (System::kPairBranches) {
    if (!w.empty() && next < 0) {
      for (int j : sys.shift().successors(w.back()))
        if (sys.region(j).contains(tail_point, 1e-9 * sys.region(j).diameter())) {
          next = j;
          break;
        }
      if (next < 0) throw Error(ErrorCode::PointOutsideDomain, "tail point lies in no successor region");
    }
    if (!w.empty() && !sys.shift().allowed(w.back(), next))
      throw Error(ErrorCode::InadmissibleWord, "tail symbol cannot follow the word");
  }
  std::vector<SmallMatrix> out(w.size());
  Vec z = tail_point;
  for (std::size_t k = w.size(); k-- > 0;) {
    const int nxt = k + 1 < w.size() ? w[k + 1] : next;
    out[k] = sys.step_jacobian(w[k], nxt, z);
    if (k > 0) z = sys.step(w[k], nxt, z);
  }
  return out;
}

/// A coding point of some tail, standing in for Pi(sigma^n x) when taking
/// suprema over a cylinder.
struct Probe {
  Vec point;
  int first = -1;  // first symbol of the tail
};

inline constexpr int kDefaultProbes = 4;
inline constexpr double kCodingTolerance = 1e-12;

/// Tail length L with gamma^L * diam(U) below the coding tolerance.
template <class System>
int tail_length(const System& sys) {
  const double g = sys.gamma();
  if (g <= 0.0) return 1;
  const double need = std::log(kCodingTolerance / std::max(sys.diameter(), 1e-300)) / std::log(g);
  return std::clamp(static_cast<int>(std::ceil(need)) + 1, 1, 4096);
}

/// For each symbol i, k random tails that may follow i. Shared by all words
/// ending in i so that sweeps over s see the same probes.
template <class System>
std::vector<std::vector<Probe>> random_probes(const System& sys, const Subshift& x, int k, std::uint64_t seed) {
  const int len = tail_length(sys);
  std::vector<std::vector<Probe>> out(x.alphabet());
  for (int i = 0; i < x.alphabet(); ++i) {
    Rng rng(detail::derive_seed(seed, static_cast<std::uint64_t>(i)));
    const std::vector<int> succ = x.successors(i);
    for (int p = 0; p < k; ++p) {
      Word tail;
      tail.push_back(succ[rng() % succ.size()]);
      while (static_cast<int>(tail.size()) < len) {
        const std::vector<int> s = x.successors(tail.back());
        tail.push_back(s[rng() % s.size()]);
      }
      out[i].push_back({code_point(sys, tail, sys.base_point(tail.back())).point, tail.front()});
    }
  }
  return out;
}

template <class System>
std::vector<std::vector<Probe>> random_probes(const System& sys, int k, std::uint64_t seed) {
  return random_probes(sys, sys.shift(), k, seed);
}

/// Pi(I^infinity) when the periodic sequence is admissible.
template <class System>
std::optional<Probe> periodic_probe(const System& sys, const Word& w) {
  if (w.empty() || !sys.shift().allowed(w.back(), w.front())) return std::nullopt;
  const int reps = tail_length(sys) / static_cast<int>(w.size()) + 2;
  Vec z = sys.base_point(w.front());
  for (int r = 0; r < reps; ++r) {
    const Vec prev = z;
    z = apply_word(sys, w, w.front(), z);
    if ((z - prev).norm() < kCodingTolerance * 1e-2) break;
  }
  return Probe{z, w.front()};
}

/// Sampled attractor points; first_symbol[i] is the first letter of a code of
/// point i.
struct PointCloud {
  int d = 0;
  std::vector<double> coords;
  std::vector<int> first_symbol;
  double error_bound = 0.0;
  Box domain;

  std::size_t size() const noexcept { return d == 0 ? 0 : coords.size() / d; }
  Vec point(std::size_t i) const { return Vec::from({coords.data() + i * d, static_cast<std::size_t>(d)}); }
  void push_back(const Vec& z, int first) {
    coords.insert(coords.end(), z.values().begin(), z.values().end());
    first_symbol.push_back(first);
  }
};

inline constexpr std::size_t kChaosChunk = 1 << 14;

/// Random-iteration sampling of the push-forward of m. Each chunk of points
/// runs its own chain seeded from (seed, chunk index), so the cloud does not
/// depend on the thread count. Letters are prepended using the time-reversed
/// chain of m, which keeps Markov codes distributed as m.
template <class System>
PointCloud chaos_game(const System& sys, const ShiftMeasure& m, std::size_t n_points, int burn_in, std::uint64_t seed,
                      int threads = 1) {
  if (n_points < 1) throw Error(ErrorCode::InvalidArgument, "n_points must be positive");
  if (burn_in < 1) throw Error(ErrorCode::InvalidArgument, "burn_in must be positive");
  m.check_support(sys.shift());
  const std::size_t chunks = (n_points + kChaosChunk - 1) / kChaosChunk;
  std::vector<PointCloud> parts(chunks);
  detail::parallel_for(chunks, threads, [&](std::size_t c) {
    Rng rng(detail::derive_seed(seed, c));
    const std::size_t count = std::min(kChaosChunk, n_points - c * kChaosChunk);
    PointCloud& part = parts[c];
    part.d = sys.dim();
    part.coords.reserve(count * sys.dim());
    part.first_symbol.reserve(count);
    int first = m.sample_initial(rng);
    Vec z = sys.base_point(first);
    auto advance = [&] {
      const int prev = m.sample_previous(first, rng);
      z = sys.step(prev, first, z);
      first = prev;
    };
    for (int b = 0; b < burn_in; ++b) advance();
    for (std::size_t k = 0; k < count; ++k) {
      advance();
      part.push_back(z, first);
    }
  });
  PointCloud cloud;
  cloud.d = sys.dim();
  cloud.domain = sys.domain();
  cloud.error_bound = std::pow(sys.gamma(), burn_in) * sys.diameter();
  cloud.coords.reserve(n_points * sys.dim());
  for (const PointCloud& p : parts) {
    cloud.coords.insert(cloud.coords.end(), p.coords.begin(), p.coords.end());
    cloud.first_symbol.insert(cloud.first_symbol.end(), p.first_symbol.begin(), p.first_symbol.end());
  }
  return cloud;
}

inline void write_cloud_csv(std::ostream& os, const PointCloud& cloud) {
  const auto old = os.precision(17);
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    for (int j = 0; j < cloud.d; ++j) os << (j ? "," : "") << cloud.coords[i * cloud.d + j];
    os << '\n';
  }
  os.precision(old);
}

}  // namespace fracdim
