#pragma once

// Shift-invariant Bernoulli and Markov measures.

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "fracdim/detail/numeric.hpp"
#include "fracdim/error.hpp"
#include "fracdim/shift.hpp"

namespace fracdim {

using Rng = std::mt19937_64;

class ShiftMeasure {
 public:
  enum class Kind { Bernoulli, Markov };

  static ShiftMeasure bernoulli(std::vector<double> p) {
    validate_row(p, "Bernoulli probabilities");
    ShiftMeasure m;
    m.kind_ = Kind::Bernoulli;
    m.ell_ = static_cast<int>(p.size());
    m.pi_ = p;
    m.p_.assign(p.size(), p);
    m.finish();
    return m;
  }

  /// Markov measure with transition matrix P and its stationary vector.
  static ShiftMeasure markov(std::vector<std::vector<double>> transition) {
    const std::vector<double> pi = stationary_vector(transition);
    return markov(std::move(transition), pi);
  }

  static ShiftMeasure markov(std::vector<std::vector<double>> transition, std::vector<double> pi) {
    const int ell = static_cast<int>(transition.size());
    if (ell < 1) throw Error(ErrorCode::InvalidArgument, "empty transition matrix");
    for (const auto& row : transition) {
      if (static_cast<int>(row.size()) != ell) throw Error(ErrorCode::InvalidArgument, "transition matrix must be square");
      validate_row(row, "transition row");
    }
    validate_row(pi, "stationary vector");
    if (static_cast<int>(pi.size()) != ell) throw Error(ErrorCode::InvalidArgument, "stationary vector has wrong length");
    for (int j = 0; j < ell; ++j) {
      double s = 0.0;
      for (int i = 0; i < ell; ++i) s += pi[i] * transition[i][j];
      if (std::abs(s - pi[j]) > 1e-10) throw Error(ErrorCode::InvalidArgument, "pi * P != pi");
    }
    ShiftMeasure m;
    m.kind_ = Kind::Markov;
    m.ell_ = ell;
    m.p_ = std::move(transition);
    m.pi_ = std::move(pi);
    m.finish();
    return m;
  }

  Kind kind() const noexcept { return kind_; }
  int alphabet() const noexcept { return ell_; }
  double transition(int i, int j) const noexcept { return p_[i][j]; }
  double stationary(int i) const noexcept { return pi_[i]; }
  const std::vector<double>& stationary() const noexcept { return pi_; }
  const std::vector<std::vector<double>>& transition_matrix() const noexcept { return p_; }

  /// Throws MeasureSupportMismatch unless every positive-probability
  /// transition is admissible in x.
  void check_support(const Subshift& x) const {
    if (x.alphabet() != ell_)
      throw Error(ErrorCode::MeasureSupportMismatch, "measure alphabet " + std::to_string(ell_) +
                                                         " differs from subshift alphabet " +
                                                         std::to_string(x.alphabet()));
    for (int i = 0; i < ell_; ++i) {
      if (pi_[i] <= 0.0) continue;
      for (int j = 0; j < ell_; ++j)
        if (p_[i][j] > 0.0 && !x.allowed(i, j))
          throw Error(ErrorCode::MeasureSupportMismatch, "transition " + std::to_string(i + 1) + "->" +
                                                             std::to_string(j + 1) + " is not admissible");
    }
  }

  int sample_initial(Rng& rng) const { return draw(pi_cdf_, rng); }
  int sample_next(int i, Rng& rng) const { return draw(cdf_[i], rng); }
  /// Draws x_k given x_{k+1} = j under the time-reversed chain.
  int sample_previous(int j, Rng& rng) const { return draw(reverse_cdf_[j], rng); }

  Word sample_word(int n, Rng& rng) const {
    Word w;
    if (n <= 0) return w;
    w.push_back(sample_initial(rng));
    for (int k = 1; k < n; ++k) w.push_back(sample_next(w.back(), rng));
    return w;
  }

 private:
  static void validate_row(const std::vector<double>& p, const char* what) {
    if (p.empty()) throw Error(ErrorCode::InvalidArgument, std::string(what) + " is empty");
    double s = 0.0;
    for (double x : p) {
      if (!(x >= 0.0) || !std::isfinite(x)) throw Error(ErrorCode::InvalidArgument, std::string(what) + " has a negative or non-finite entry");
      s += x;
    }
    if (std::abs(s - 1.0) > 1e-12) throw Error(ErrorCode::InvalidArgument, std::string(what) + " does not sum to 1");
  }

  static std::vector<double> stationary_vector(const std::vector<std::vector<double>>& p) {
    const int n = static_cast<int>(p.size());
    // Solve pi (P - I) = 0 with the last equation replaced by sum(pi) = 1.
    std::vector<std::vector<double>> a(n, std::vector<double>(n + 1, 0.0));
    for (int j = 0; j < n; ++j) {
      for (int i = 0; i < n; ++i) a[j][i] = (j < static_cast<int>(p[i].size()) ? p[i][j] : 0.0) - (i == j ? 1.0 : 0.0);
    }
    for (int i = 0; i < n; ++i) a[n - 1][i] = 1.0;
    a[n - 1][n] = 1.0;
    for (int k = 0; k < n; ++k) {
      int piv = k;
      for (int r = k + 1; r < n; ++r)
        if (std::abs(a[r][k]) > std::abs(a[piv][k])) piv = r;
      if (std::abs(a[piv][k]) < 1e-14) throw Error(ErrorCode::InvalidArgument, "transition matrix has no unique stationary vector");
      std::swap(a[piv], a[k]);
      for (int r = 0; r < n; ++r) {
        if (r == k) continue;
        const double f = a[r][k] / a[k][k];
        for (int c = k; c <= n; ++c) a[r][c] -= f * a[k][c];
      }
    }
    std::vector<double> pi(n);
    double s = 0.0;
    for (int i = 0; i < n; ++i) {
      pi[i] = std::max(0.0, a[i][n] / a[i][i]);
      s += pi[i];
    }
    for (double& x : pi) x /= s;
    return pi;
  }

  static int draw(const std::vector<double>& cdf, Rng& rng) {
    const double u = detail::unit_double(rng());
    for (std::size_t i = 0; i + 1 < cdf.size(); ++i)
      if (u < cdf[i]) return static_cast<int>(i);
    // Last positive-mass index absorbs rounding at the top of the cdf.
    for (std::size_t i = cdf.size(); i-- > 0;)
      if (i == 0 || cdf[i] > cdf[i - 1]) return static_cast<int>(i);
    return 0;
  }

  static std::vector<double> cumulative(const std::vector<double>& w) {
    std::vector<double> c(w.size());
    double s = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) c[i] = (s += w[i]);
    return c;
  }

  void finish() {
    pi_cdf_ = cumulative(pi_);
    cdf_.clear();
    for (const auto& row : p_) cdf_.push_back(cumulative(row));
    reverse_cdf_.assign(ell_, {});
    for (int j = 0; j < ell_; ++j) {
      std::vector<double> w(ell_, 0.0);
      if (pi_[j] > 0.0) {
        double s = 0.0;
        for (int i = 0; i < ell_; ++i) s += (w[i] = pi_[i] * p_[i][j]);
        for (double& x : w) x /= s;
      } else {
        w = pi_;
      }
      reverse_cdf_[j] = cumulative(w);
    }
  }

  Kind kind_ = Kind::Bernoulli;
  int ell_ = 0;
  std::vector<std::vector<double>> p_;
  std::vector<double> pi_;
  std::vector<double> pi_cdf_;
  std::vector<std::vector<double>> cdf_;
  std::vector<std::vector<double>> reverse_cdf_;
};

}  // namespace fracdim
