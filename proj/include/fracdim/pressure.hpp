#pragma once

// Sub-additive pressure from word-partition sums, and the dimension solvers
// built on it.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <unordered_map>
#include <vector>

#include "fracdim/detail/numeric.hpp"
#include "fracdim/ergodic.hpp"
#include "fracdim/error.hpp"
#include "fracdim/measure.hpp"
#include "fracdim/shift.hpp"
#include "fracdim/svf.hpp"
#include "fracdim/systems.hpp"

namespace fracdim {

struct PressureOptions {
  double budget = 2e7;         // leaf evaluations (word x candidate) per level
  int probes = kDefaultProbes;  // random tails per cylinder, non-affine systems only
  bool periodic_probe = true;
  std::uint64_t seed = 0x5eed;
  int threads = 1;
  int max_n = 64;
  std::size_t merge_cap = 1 << 15;  // distinct product states kept by the affine recursion
};

struct PressureEstimate {
  double s = 0.0;
  std::vector<int> n_list;
  std::vector<double> Pn;
  std::vector<double> word_count;
  std::vector<double> elapsed_ms;
  double value = 0.0;
  double upper = 0.0;
  double bracket_width = 0.0;
  bool extrapolated = false;
};

namespace detail {

/// Words of one length, grouped: each group carries a log multiplicity, its
/// first and last letters, and the candidate spectra whose max realizes the
/// cylinder supremum.
struct LevelTable {
  int d = 0;
  std::vector<double> log_weight;
  std::vector<int> first;
  std::vector<int> last;
  std::vector<std::size_t> offset{0};
  std::vector<double> la;

  std::size_t groups() const noexcept { return log_weight.size(); }

  void add(double lw, int f, int l, std::span<const SingularSpectrum> cands) {
    log_weight.push_back(lw);
    first.push_back(f);
    last.push_back(l);
    for (const SingularSpectrum& c : cands) la.insert(la.end(), c.log_alpha.begin(), c.log_alpha.begin() + d);
    offset.push_back(offset.back() + cands.size());
  }

  void append(const LevelTable& o) {
    const std::size_t base = offset.back();
    log_weight.insert(log_weight.end(), o.log_weight.begin(), o.log_weight.end());
    first.insert(first.end(), o.first.begin(), o.first.end());
    last.insert(last.end(), o.last.begin(), o.last.end());
    la.insert(la.end(), o.la.begin(), o.la.end());
    for (std::size_t g = 1; g < o.offset.size(); ++g) offset.push_back(base + o.offset[g]);
  }

  void candidates(std::size_t g, std::vector<SingularSpectrum>& out) const {
    out.clear();
    for (std::size_t c = offset[g]; c < offset[g + 1]; ++c) {
      SingularSpectrum s;
      s.d = d;
      std::copy(la.begin() + c * d, la.begin() + (c + 1) * d, s.log_alpha.begin());
      out.push_back(s);
    }
  }
};

inline constexpr std::size_t kTableDoubles = std::size_t{1} << 24;

/// Aitken delta-squared on the last three terms when they are monotone.
inline std::pair<double, bool> aitken(std::span<const double> p) {
  const std::size_t m = p.size();
  if (m < 3) return {p.back(), false};
  const double a = p[m - 3], b = p[m - 2], c = p[m - 1];
  const bool monotone = (a >= b && b >= c) || (a <= b && b <= c);
  if (!monotone) return {c, false};
  const double d1 = b - a, d2 = c - b;
  const double den = d2 - d1;
  if (den == 0.0 || d2 == 0.0) return {c, d2 == 0.0};
  const double v = c - d2 * d2 / den;
  if (!std::isfinite(v)) return {c, false};
  return {v, true};
}

/// log of the spectral radius of a non-negative matrix given by log entries.
inline double log_spectral_radius(const std::vector<double>& log_b, int n) {
  double mx = -INFINITY;
  for (double x : log_b) mx = std::max(mx, x);
  if (mx == -INFINITY) return -INFINITY;
  std::vector<double> b(log_b.size());
  for (std::size_t i = 0; i < b.size(); ++i) b[i] = std::exp(log_b[i] - mx);
  std::vector<double> v(n, 1.0), w(n);
  double lambda = 0.0, prev = -1.0;
  for (int it = 0; it < 10000; ++it) {
    double norm = 0.0;
    for (int i = 0; i < n; ++i) {
      double s = 0.0;
      for (int j = 0; j < n; ++j) s += b[i * n + j] * v[j];
      w[i] = s;
      norm = std::max(norm, s);
    }
    if (norm == 0.0) return -INFINITY;
    for (int i = 0; i < n; ++i) v[i] = w[i] / norm;
    lambda = norm;
    if (std::abs(lambda - prev) <= 1e-15 * lambda) break;
    prev = lambda;
  }
  return mx + std::log(lambda);
}

}  // namespace detail

/// Word-sum machinery for one (subshift, system) pair: builds, for a ladder of
/// word lengths, the grouped candidate spectra of every cylinder and evaluates
/// log partition sums from them for any s.
///
/// Affine systems are exact. Products are built by prepending letters, and
/// words whose products agree bit for bit are merged, which keeps systems
/// with shared linear parts linear in n. Non-affine systems take the max over
/// probe tails per cylinder.
template <class System>
class PressureModel {
 public:
  PressureModel(const Subshift& x, const System& sys, PressureOptions opt = {})
      : x_(x), sys_(&sys), opt_(opt), d_(sys.dim()), ell_(x.alphabet()) {
    if (ell_ != sys.alphabet()) throw Error(ErrorCode::InvalidArgument, "subshift alphabet differs from the system's");
    for (int i = 0; i < ell_; ++i)
      for (int j = 0; j < ell_; ++j)
        if (x_.allowed(i, j) && !sys.shift().allowed(i, j))
          throw Error(ErrorCode::InvalidArgument, "subshift is not contained in the system's code space");
    if (!sys.is_affine()) probes_ = random_probes(sys, x_, std::max(1, opt_.probes), opt_.seed);
  }

  const Subshift& shift() const noexcept { return x_; }
  const System& system() const noexcept { return *sys_; }
  const PressureOptions& options() const noexcept { return opt_; }
  bool exact() const noexcept { return sys_->is_affine(); }
  const std::vector<int>& ladder() const noexcept { return ladder_; }

  /// Candidate spectra per cylinder.
  int candidates_per_word() const {
    if (sys_->is_affine()) {
      if constexpr (System::kPairBranches) {
        int m = 0;
        for (int i = 0; i < ell_; ++i) m = std::max<int>(m, x_.successors(i).size());
        return m;
      }
      return 1;
    }
    return std::max(1, opt_.probes) + (opt_.periodic_probe ? 1 : 0);
  }

  double leaf_estimate(int n) const { return x_.word_count(n) * candidates_per_word(); }

  /// Tabulates the given lengths; an empty list picks the doubling ladder
  /// 1, 2, 4, ... as far as the budget allows.
  void prepare(std::vector<int> n_list = {}) {
    const auto t0 = std::chrono::steady_clock::now();
    const bool automatic = n_list.empty();
    if (automatic)
      for (int n = 1; n <= opt_.max_n; n *= 2) n_list.push_back(n);
    std::sort(n_list.begin(), n_list.end());
    n_list.erase(std::unique(n_list.begin(), n_list.end()), n_list.end());
    if (n_list.front() < 1) throw Error(ErrorCode::InvalidArgument, "word lengths must be >= 1");

    int merged_up_to = 0;
    if (sys_->is_affine()) merged_up_to = run_merged(n_list, t0);

    std::vector<int> rest;
    for (int n : n_list) {
      if (n <= merged_up_to) continue;
      if (leaf_estimate(n) > opt_.budget) {
        if (automatic) break;
        throw Error(ErrorCode::BudgetExceeded, "length " + std::to_string(n) + " needs about " +
                                                   std::to_string(leaf_estimate(n)) + " leaf evaluations");
      }
      rest.push_back(n);
    }
    if (!rest.empty()) run_enumerated(rest, t0);
    ladder_.clear();
    for (int n : n_list)
      if (n <= merged_up_to || std::find(rest.begin(), rest.end(), n) != rest.end()) ladder_.push_back(n);
    if (ladder_.empty()) throw Error(ErrorCode::BudgetExceeded, "no word length fits the budget");
  }

  /// Per (first, last) class, log sum over groups of weight * exp(value(cands)).
  template <class F>
  std::vector<double> class_sums(int n, F&& value) const {
    std::vector<detail::LogSumExp> acc(static_cast<std::size_t>(ell_) * ell_);
    auto it = tables_.find(n);
    if (it != tables_.end()) {
      const detail::LevelTable& t = it->second;
      std::vector<SingularSpectrum> cands;
      for (std::size_t g = 0; g < t.groups(); ++g) {
        t.candidates(g, cands);
        acc[t.first[g] * ell_ + t.last[g]].add(t.log_weight[g] + value(std::span<const SingularSpectrum>(cands)));
      }
    } else if (streamed_.count(n)) {
      struct Sink {
        std::vector<detail::LogSumExp> acc;
        const F* value;
        int ell;
        void record(int, double lw, int f, int l, std::span<const SingularSpectrum> c) {
          acc[f * ell + l].add(lw + (*value)(c));
        }
      };
      auto sinks = enumerate<Sink>(n, {n}, [&] { return Sink{std::vector<detail::LogSumExp>(acc.size()), &value, ell_}; });
      for (const Sink& s : sinks)
        for (std::size_t c = 0; c < acc.size(); ++c) acc[c].merge(s.acc[c]);
    } else {
      throw Error(ErrorCode::InvalidArgument, "length " + std::to_string(n) + " was not prepared");
    }
    std::vector<double> out(acc.size());
    for (std::size_t c = 0; c < acc.size(); ++c) out[c] = acc[c].value();
    return out;
  }

  /// log Lambda_n(s): log sum over X_n^* of the cylinder sup of phi^s.
  double log_partition_sum(double s, int n) const {
    if (!(s >= 0.0)) throw Error(ErrorCode::NegativeS, "s must be non-negative");
    const auto sums = class_sums(n, [s](std::span<const SingularSpectrum> c) {
      double best = -INFINITY;
      for (const SingularSpectrum& sp : c) best = std::max(best, log_phi_s(sp, s));
      return best;
    });
    return detail::log_sum_exp(sums);
  }

  PressureEstimate estimate(double s) const {
    PressureEstimate e;
    e.s = s;
    e.n_list = ladder_;
    for (int n : ladder_) {
      const auto t0 = std::chrono::steady_clock::now();
      e.Pn.push_back(log_partition_sum(s, n) / n);
      e.word_count.push_back(x_.word_count(n));
      const double eval_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
      e.elapsed_ms.push_back(build_ms_.at(n) + eval_ms);
    }
    const auto [v, ok] = detail::aitken(e.Pn);
    e.value = v;
    e.extrapolated = ok;
    e.upper = *std::min_element(e.Pn.begin(), e.Pn.end());
    e.bracket_width = std::abs(e.Pn.back() - e.value);
    return e;
  }

 private:
  struct Node {
    std::vector<GradedProduct> prods;
    std::vector<Vec> points;
    std::vector<int> rev;  // letters, last letter first
    int first = 0;
    int last = 0;
    double log_weight = 0.0;
  };

  Node root(int i) const {
    Node node;
    node.first = node.last = i;
    node.rev = {i};
    const System& sys = *sys_;
    auto push = [&](const SmallMatrix& j, const Vec& p) {
      detail::check_invertible(j);
      GradedProduct g(d_);
      g.left_multiply(j);
      node.prods.push_back(g);
      node.points.push_back(p);
    };
    if (sys.is_affine()) {
      if constexpr (System::kPairBranches) {
        for (int j : x_.successors(i)) push(sys.linear(i, j), sys.base_point(i));
      } else {
        push(sys.linear(i, -1), sys.base_point(i));
      }
    } else {
      for (const Probe& p : probes_[i]) push(sys.step_jacobian(i, p.first, p.point), sys.step(i, p.first, p.point));
    }
    return node;
  }

  void prepend(Node& node, int b) const {
    const System& sys = *sys_;
    const int a = node.first;
    for (std::size_t c = 0; c < node.prods.size(); ++c) {
      if (sys.is_affine()) {
        node.prods[c].left_multiply(sys.linear(b, a));
      } else {
        const SmallMatrix j = sys.step_jacobian(b, a, node.points[c]);
        detail::check_invertible(j);
        node.prods[c].left_multiply(j);
        node.points[c] = sys.step(b, a, node.points[c]);
      }
    }
    node.first = b;
    node.rev.push_back(b);
  }

  void spectra(const Node& node, std::vector<SingularSpectrum>& out) const {
    out.clear();
    for (const GradedProduct& g : node.prods) out.push_back(g.spectrum());
    if (!sys_->is_affine() && opt_.periodic_probe) {
      const Word w(std::vector<int>(node.rev.rbegin(), node.rev.rend()));
      if (auto p = periodic_probe(*sys_, w)) out.push_back(product_spectrum(jacobians_along(*sys_, w, p->point, p->first)));
    }
  }

  // Breadth-first over lengths with bitwise merging of equal products.
  // Returns the largest length completed within merge_cap.
  int run_merged(const std::vector<int>& n_list, std::chrono::steady_clock::time_point t0) {
    const int target = n_list.back();
    const bool keep_last = !x_.is_full();
    std::vector<Node> level;
    for (int i = 0; i < ell_; ++i) level.push_back(root(i));
    std::vector<SingularSpectrum> cands;
    for (int n = 1;; ++n) {
      if (std::binary_search(n_list.begin(), n_list.end(), n)) {
        detail::LevelTable t;
        t.d = d_;
        for (const Node& node : level) {
          spectra(node, cands);
          t.add(node.log_weight, node.first, node.last, cands);
        }
        tables_[n] = std::move(t);
        build_ms_[n] = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
      }
      if (n == target) return n;
      std::vector<Node> next;
      std::unordered_map<std::uint64_t, std::vector<std::size_t>> index;
      for (const Node& node : level) {
        for (int b = 0; b < ell_; ++b) {
          if (!x_.allowed(b, node.first)) continue;
          Node child = node;
          prepend(child, b);
          std::uint64_t h = static_cast<std::uint64_t>(b) * 0x9e3779b97f4a7c15ULL;
          if (keep_last) h ^= static_cast<std::uint64_t>(child.last + 1) * 0xc2b2ae3d27d4eb4fULL;
          for (const GradedProduct& g : child.prods) h = detail::mix_seed(h ^ g.hash());
          auto& bucket = index[h];
          bool merged = false;
          for (std::size_t k : bucket) {
            Node& o = next[k];
            if (o.first != child.first || (keep_last && o.last != child.last) || o.prods != child.prods) continue;
            detail::LogSumExp lse;
            lse.add(o.log_weight);
            lse.add(child.log_weight);
            o.log_weight = lse.value();
            merged = true;
            break;
          }
          if (!merged) {
            bucket.push_back(next.size());
            next.push_back(std::move(child));
          }
        }
      }
      if (next.size() > opt_.merge_cap) return n;
      level = std::move(next);
    }
  }

  // Depth-first over all words, splitting the tree into tasks rooted at the
  // words of length <= 2 so results are combined in a fixed order.
  template <class Sink, class Make>
  std::vector<Sink> enumerate(int max_depth, const std::vector<int>& record, Make&& make) const {
    std::vector<char> want(max_depth + 1, 0);
    for (int n : record) want[n] = 1;
    std::vector<std::pair<int, int>> tasks;
    for (int i = 0; i < ell_; ++i) {
      if (want[1]) tasks.push_back({i, -1});
      if (max_depth >= 2)
        for (int b = 0; b < ell_; ++b)
          if (x_.allowed(b, i)) tasks.push_back({i, b});
    }
    std::vector<Sink> sinks;
    for (std::size_t t = 0; t < tasks.size(); ++t) sinks.push_back(make());
    detail::parallel_for(tasks.size(), opt_.threads, [&](std::size_t t) {
      Sink& sink = sinks[t];
      std::vector<SingularSpectrum> cands;
      Node node = root(tasks[t].first);
      if (tasks[t].second < 0) {
        spectra(node, cands);
        sink.record(1, 0.0, node.first, node.last, cands);
        return;
      }
      prepend(node, tasks[t].second);
      auto rec = [&](auto&& self, const Node& cur, int depth) -> void {
        if (want[depth]) {
          spectra(cur, cands);
          sink.record(depth, 0.0, cur.first, cur.last, cands);
        }
        if (depth == max_depth) return;
        for (int b = 0; b < ell_; ++b) {
          if (!x_.allowed(b, cur.first)) continue;
          Node child = cur;
          prepend(child, b);
          self(self, child, depth + 1);
        }
      };
      rec(rec, node, 2);
    });
    return sinks;
  }

  void run_enumerated(const std::vector<int>& ns, std::chrono::steady_clock::time_point t0) {
    std::vector<int> tabulate;
    for (int n : ns) {
      const double doubles = leaf_estimate(n) * d_;
      if (doubles <= static_cast<double>(detail::kTableDoubles))
        tabulate.push_back(n);
      else
        streamed_.insert({n, true});
      build_ms_[n] = 0.0;
    }
    if (tabulate.empty()) return;
    struct Sink {
      std::map<int, detail::LevelTable> tables;
      int d;
      void record(int depth, double lw, int f, int l, std::span<const SingularSpectrum> c) {
        auto& t = tables[depth];
        t.d = d;
        t.add(lw, f, l, c);
      }
    };
    auto sinks = enumerate<Sink>(tabulate.back(), tabulate, [&] { return Sink{{}, d_}; });
    for (int n : tabulate) {
      detail::LevelTable t;
      t.d = d_;
      for (const Sink& s : sinks) {
        auto it = s.tables.find(n);
        if (it != s.tables.end()) t.append(it->second);
      }
      tables_[n] = std::move(t);
      build_ms_[n] = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    }
  }

  Subshift x_;
  const System* sys_;
  PressureOptions opt_;
  int d_;
  int ell_;
  std::vector<std::vector<Probe>> probes_;
  std::vector<int> ladder_;
  std::map<int, detail::LevelTable> tables_;
  std::map<int, bool> streamed_;
  std::map<int, double> build_ms_;
};

template <class System>
double log_partition_sum(const Subshift& x, const System& sys, double s, int n, PressureOptions opt = {}) {
  PressureModel<System> model(x, sys, opt);
  model.prepare({n});
  return model.log_partition_sum(s, n);
}

template <class System>
PressureEstimate pressure(const Subshift& x, const System& sys, double s, std::vector<int> n_list = {},
                          PressureOptions opt = {}) {
  PressureModel<System> model(x, sys, opt);
  model.prepare(std::move(n_list));
  return model.estimate(s);
}

struct DimensionSolveResult {
  double s_star = 0.0;
  double pressure_at_root = 0.0;
  int iterations = 0;
  double s_lo = 0.0;
  double s_hi = 0.0;
  int n_used = 0;
  double s_upper = 0.0;       // root of min_n P_n, a conservative companion
  double bracket_width = 0.0;  // pressure bracket at the root
  bool exact = false;
  bool degenerate = false;     // pressure(0) < 0: reported as s_star = 0
};

inline constexpr double kTolSExact = 1e-6;
inline constexpr double kTolSProbed = 1e-3;

namespace detail {

template <class F>
std::tuple<double, double, int> bisect_decreasing(F&& f, double lo, double hi, double tol) {
  int it = 0;
  while (f(hi) > 0.0) {
    lo = hi;
    hi *= 2.0;
    if (++it > 60) throw Error(ErrorCode::InvalidArgument, "no sign change found while expanding the bracket");
  }
  while (hi - lo > tol) {
    const double mid = 0.5 * (lo + hi);
    (f(mid) > 0.0 ? lo : hi) = mid;
    ++it;
  }
  return {lo, hi, it};
}

}  // namespace detail

/// Zero of s -> P(X, sigma, log phi^s(D f)) by bisection on [0, 2d].
template <class System>
DimensionSolveResult solve_dim_s(const PressureModel<System>& model, double tol_s = 0.0) {
  if (tol_s <= 0.0) tol_s = model.exact() ? kTolSExact : kTolSProbed;
  const int d = model.system().dim();
  DimensionSolveResult r;
  r.exact = model.exact();
  r.n_used = model.ladder().back();
  const PressureEstimate p0 = model.estimate(0.0);
  if (p0.value < 0.0) {
    r.degenerate = true;
    r.pressure_at_root = p0.value;
    return r;
  }
  auto f = [&](double s) { return model.estimate(s).value; };
  auto [lo, hi, it] = detail::bisect_decreasing(f, 0.0, 2.0 * d, tol_s);
  r.s_lo = lo;
  r.s_hi = hi;
  r.iterations = it;
  r.s_star = 0.5 * (lo + hi);
  const PressureEstimate at = model.estimate(r.s_star);
  r.pressure_at_root = at.value;
  r.bracket_width = at.bracket_width;
  if (p0.upper >= 0.0) {
    auto g = [&](double s) { return model.estimate(s).upper; };
    auto [ulo, uhi, uit] = detail::bisect_decreasing(g, 0.0, 2.0 * d, tol_s);
    (void)uit;
    r.s_upper = 0.5 * (ulo + uhi);
  }
  return r;
}

template <class System>
DimensionSolveResult solve_dim_s(const Subshift& x, const System& sys, double tol_s = 0.0, PressureOptions opt = {}) {
  PressureModel<System> model(x, sys, opt);
  model.prepare();
  return solve_dim_s(model, tol_s);
}

/// Covering constant (2d)^d.
inline double covering_constant(int d) { return std::pow(2.0 * d, d); }

/// t_n: zero in t of the pressure of log G_n + t log H_n on the n-block shift,
/// with G_n = C phi^k / alpha_{k+1}^k and H_n = alpha_{k+1} of D f_I.
template <class System>
double solve_tn(const PressureModel<System>& model, int n, int k, double tol = 1e-10) {
  const int d = model.system().dim();
  if (k < 0 || k >= d) throw Error(ErrorCode::InvalidArgument, "k must lie in [0, d-1]");
  const double log_c = std::log(covering_constant(d));
  const Subshift& x = model.shift();
  const int ell = x.alphabet();
  auto log_g = [&](const SingularSpectrum& sp) {
    double acc = log_c;
    for (int i = 0; i < k; ++i) acc += sp[i] - sp[k];
    return acc;
  };
  // Pressure of a one-block potential on the block shift: log spectral radius
  // of B[a][a'] = sum over blocks J starting with a whose last letter may be
  // followed by a'.
  auto block_pressure = [&](double t) {
    const auto sums = model.class_sums(n, [&](std::span<const SingularSpectrum> c) {
      double g = -INFINITY, h = -INFINITY;
      for (const SingularSpectrum& sp : c) {
        g = std::max(g, log_g(sp));
        h = std::max(h, sp[k]);
      }
      if (h >= 0.0) throw Error(ErrorCode::NonContractiveH, "alpha_{k+1} >= 1 on a block");
      return g + t * h;
    });
    if (x.is_full()) return detail::log_sum_exp(sums);
    std::vector<double> b(static_cast<std::size_t>(ell) * ell, -INFINITY);
    for (int a = 0; a < ell; ++a)
      for (int a2 = 0; a2 < ell; ++a2) {
        detail::LogSumExp acc;
        for (int l = 0; l < ell; ++l)
          if (x.allowed(l, a2)) acc.add(sums[a * ell + l]);
        b[a * ell + a2] = acc.value();
      }
    return detail::log_spectral_radius(b, ell);
  };
  if (block_pressure(0.0) < 0.0) return 0.0;
  auto [lo, hi, it] = detail::bisect_decreasing(block_pressure, 0.0, 2.0 * d, tol);
  (void)it;
  return 0.5 * (lo + hi);
}

template <class System>
double solve_tn(const Subshift& x, const System& sys, int n, int k, PressureOptions opt = {}) {
  PressureModel<System> model(x, sys, opt);
  model.prepare({n});
  return solve_tn(model, n, k);
}

struct ThetaSlopeResult {
  double t = 0.0;
  std::vector<double> r_grid;
  std::vector<double> log_theta;
  std::size_t fit_begin = 0;  // first index of r_grid used by the fit
  double residual = 0.0;
};

inline std::vector<double> default_r_grid() {
  std::vector<double> r;
  for (int m = 5; m <= 18; ++m) r.push_back(std::ldexp(1.0, -m));
  return r;
}

/// log Theta_r for letter potentials g, h: the log sum of exp(S_{|I|} g) over
/// the stopping family A_r. Words are merged by (last letter, letter counts),
/// which determines both Birkhoff sums.
inline double log_theta(const Subshift& x, std::span<const double> g, std::span<const double> h, double r,
                        double max_states = 1e7) {
  const int ell = x.alphabet();
  if (static_cast<int>(g.size()) != ell || static_cast<int>(h.size()) != ell)
    throw Error(ErrorCode::InvalidArgument, "potentials need one value per letter");
  for (double v : h)
    if (!(v < 0.0)) throw Error(ErrorCode::NonContractiveH, "h must be negative on every letter");
  if (!(r > 0.0 && r < 1.0)) throw Error(ErrorCode::InvalidArgument, "r must lie in (0, 1)");
  const double log_r = std::log(r);
  struct State {
    int last;
    std::vector<int> counts;
    auto operator<=>(const State&) const = default;
  };
  std::map<State, detail::LogSumExp> level;
  for (int i = 0; i < ell; ++i) {
    State s{i, std::vector<int>(ell, 0)};
    s.counts[i] = 1;
    level[s].add(0.0);
  }
  detail::LogSumExp theta;
  while (!level.empty()) {
    std::map<State, detail::LogSumExp> next;
    for (const auto& [st, lw] : level) {
      double sg = 0.0, sh = 0.0;
      for (int i = 0; i < ell; ++i) {
        sg += st.counts[i] * g[i];
        sh += st.counts[i] * h[i];
      }
      if (below_threshold(sh, log_r)) {
        theta.add(lw.value() + sg);
        continue;
      }
      for (int b : x.successors(st.last)) {
        State c = st;
        c.last = b;
        c.counts[b]++;
        next[c].merge(lw);
      }
    }
    if (static_cast<double>(next.size()) > max_states) throw Error(ErrorCode::BudgetExceeded, "too many stopping-family states");
    level = std::move(next);
  }
  return theta.value();
}

/// Slope estimate of t in log Theta_r ~ -t log r; the two largest radii are
/// dropped from the fit.
inline ThetaSlopeResult theta_slope(const Subshift& x, std::span<const double> g, std::span<const double> h,
                                    std::vector<double> r_grid = {}) {
  if (r_grid.empty()) r_grid = default_r_grid();
  std::sort(r_grid.begin(), r_grid.end(), std::greater<>());
  if (r_grid.size() < 4) throw Error(ErrorCode::InvalidArgument, "r_grid needs at least four radii");
  ThetaSlopeResult out;
  out.r_grid = r_grid;
  for (double r : r_grid) out.log_theta.push_back(log_theta(x, g, h, r));
  out.fit_begin = 2;
  std::vector<double> xs, ys;
  for (std::size_t i = out.fit_begin; i < r_grid.size(); ++i) {
    xs.push_back(std::log(r_grid[i]));
    ys.push_back(out.log_theta[i]);
  }
  const detail::LinearFit fit = detail::least_squares(xs, ys);
  out.t = -fit.slope;
  out.residual = fit.residual;
  return out;
}

/// Per-letter potentials log G and log H of an affine IFS for index k.
inline std::pair<std::vector<double>, std::vector<double>> letter_potentials(const IfsSystem& sys, int k) {
  if (!sys.is_affine()) throw Error(ErrorCode::InvalidArgument, "letter potentials need an affine system");
  const int d = sys.dim();
  if (k < 0 || k >= d) throw Error(ErrorCode::InvalidArgument, "k must lie in [0, d-1]");
  std::vector<double> g, h;
  for (int i = 0; i < sys.alphabet(); ++i) {
    const SingularSpectrum sp = singular_values(sys.map(i).linear());
    double acc = std::log(covering_constant(d));
    for (int j = 0; j < k; ++j) acc += sp[j] - sp[k];
    g.push_back(acc);
    h.push_back(sp[k]);
  }
  return {g, h};
}

struct VariationalGap {
  double gap = 0.0;
  double pressure = 0.0;
  double entropy = 0.0;
  double lyapunov_term = 0.0;
  double slack = 0.0;  // pressure bracket plus the Monte Carlo half-widths
};

/// P(s) - (h_m + G^s_*(m)); non-negative up to numerical slack.
template <class System>
VariationalGap variational_gap(const PressureModel<System>& model, double s, const ShiftMeasure& m,
                               int n_orbit = kDefaultOrbit, int n_samples = kDefaultSamples, std::uint64_t seed = 1) {
  m.check_support(model.shift());
  const PressureEstimate p = model.estimate(s);
  const LyapunovSpectrum ls = lyapunov_exponents(model.system(), m, n_orbit, n_samples, seed, model.options().threads);
  VariationalGap v;
  v.pressure = p.value;
  v.entropy = entropy(m);
  v.lyapunov_term = lyapunov_potential(s, ls.lambda);
  v.gap = v.pressure - (v.entropy + v.lyapunov_term);
  v.slack = p.bracket_width;
  for (double c : ls.ci_half_width) v.slack += c * std::max(1.0, s);
  return v;
}

}  // namespace fracdim
