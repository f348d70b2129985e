#pragma once

// Symbolic dynamics: words, full shifts and subshifts of finite type, block
// shifts and stopping families. Letters are 0-based in the API; the 1-based
// convention appears only at the wire level (configs, reports).

#include <algorithm>
#include <cmath>
#include <compare>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <iterator>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fracdim/error.hpp"

namespace fracdim {

class Word {
 public:
  Word() = default;
  Word(std::initializer_list<int> letters) : letters_(letters) {}
  explicit Word(std::vector<int> letters) : letters_(std::move(letters)) {}

  std::size_t size() const noexcept { return letters_.size(); }
  int length() const noexcept { return static_cast<int>(letters_.size()); }
  bool empty() const noexcept { return letters_.empty(); }
  int operator[](std::size_t i) const noexcept { return letters_[i]; }
  int& operator[](std::size_t i) noexcept { return letters_[i]; }
  int front() const { return letters_.front(); }
  int back() const { return letters_.back(); }
  auto begin() const noexcept { return letters_.begin(); }
  auto end() const noexcept { return letters_.end(); }
  std::span<const int> letters() const noexcept { return letters_; }

  void push_back(int a) { letters_.push_back(a); }
  void pop_back() { letters_.pop_back(); }
  void resize(std::size_t n, int fill = 0) { letters_.resize(n, fill); }

  Word prefix(std::size_t n) const { return Word(std::vector<int>(letters_.begin(), letters_.begin() + n)); }
  Word suffix_from(std::size_t k) const { return Word(std::vector<int>(letters_.begin() + k, letters_.end())); }
  Word concat(const Word& tail) const {
    Word w = *this;
    w.letters_.insert(w.letters_.end(), tail.letters_.begin(), tail.letters_.end());
    return w;
  }

  /// 1-based rendering: "123" for alphabets below 10 letters, "1.12.3" otherwise.
  std::string to_string() const {
    const bool compact = std::all_of(letters_.begin(), letters_.end(), [](int a) { return a < 9; });
    std::string out;
    for (std::size_t i = 0; i < letters_.size(); ++i) {
      if (!compact && i > 0) out += '.';
      out += std::to_string(letters_[i] + 1);
    }
    return out;
  }

  friend bool operator==(const Word&, const Word&) = default;
  friend auto operator<=>(const Word&, const Word&) = default;

 private:
  std::vector<int> letters_;
};

class Subshift {
 public:
  static Subshift full(int ell) {
    if (ell < 1) throw Error(ErrorCode::InvalidArgument, "alphabet must be non-empty");
    Subshift x;
    x.ell_ = ell;
    x.full_ = true;
    x.a_.assign(static_cast<std::size_t>(ell) * ell, 1);
    return x;
  }

  /// Subshift of finite type; a(i,j) = 1 allows j to follow i.
  static Subshift sft(const std::vector<std::vector<int>>& transfer) {
    const int ell = static_cast<int>(transfer.size());
    if (ell < 1) throw Error(ErrorCode::InvalidArgument, "transfer matrix is empty");
    Subshift x;
    x.ell_ = ell;
    x.a_.assign(static_cast<std::size_t>(ell) * ell, 0);
    bool all_ones = true;
    for (int i = 0; i < ell; ++i) {
      if (static_cast<int>(transfer[i].size()) != ell)
        throw Error(ErrorCode::InvalidArgument, "transfer matrix must be square");
      for (int j = 0; j < ell; ++j) {
        const int v = transfer[i][j];
        if (v != 0 && v != 1) throw Error(ErrorCode::InvalidArgument, "transfer matrix entries must be 0 or 1");
        x.a_[i * ell + j] = static_cast<std::uint8_t>(v);
        all_ones = all_ones && v == 1;
      }
    }
    for (int i = 0; i < ell; ++i) {
      bool row = false, col = false;
      for (int j = 0; j < ell; ++j) {
        row = row || x.allowed(i, j);
        col = col || x.allowed(j, i);
      }
      if (!row || !col)
        throw Error(ErrorCode::InvalidArgument,
                    "transfer matrix has an all-zero row or column at symbol " + std::to_string(i + 1));
    }
    x.full_ = all_ones;
    return x;
  }

  int alphabet() const noexcept { return ell_; }
  bool is_full() const noexcept { return full_; }
  bool allowed(int i, int j) const noexcept { return a_[static_cast<std::size_t>(i) * ell_ + j] != 0; }

  std::vector<std::vector<int>> transfer_matrix() const {
    std::vector<std::vector<int>> m(ell_, std::vector<int>(ell_));
    for (int i = 0; i < ell_; ++i)
      for (int j = 0; j < ell_; ++j) m[i][j] = allowed(i, j) ? 1 : 0;
    return m;
  }

  std::vector<int> successors(int i) const {
    std::vector<int> s;
    for (int j = 0; j < ell_; ++j)
      if (allowed(i, j)) s.push_back(j);
    return s;
  }

  bool admissible(const Word& w) const noexcept {
    for (int a : w)
      if (a < 0 || a >= ell_) return false;
    for (std::size_t k = 1; k < w.size(); ++k)
      if (!allowed(w[k - 1], w[k])) return false;
    return true;
  }

  /// |X_n^*| as a double (exact below 2^53), by transfer-matrix powers.
  double word_count(int n) const {
    if (n <= 0) return 1.0;
    std::vector<double> ends(ell_, 1.0);  // words of current length ending in each symbol
    for (int step = 1; step < n; ++step) {
      std::vector<double> next(ell_, 0.0);
      for (int i = 0; i < ell_; ++i)
        for (int j = 0; j < ell_; ++j)
          if (allowed(i, j)) next[j] += ends[i];
      ends = std::move(next);
    }
    double total = 0.0;
    for (double e : ends) total += e;
    return total;
  }

  /// Same count restricted to words beginning with `first`.
  double word_count_from(int first, int n) const {
    if (n <= 0) return 1.0;
    std::vector<double> ends(ell_, 0.0);
    ends[first] = 1.0;
    for (int step = 1; step < n; ++step) {
      std::vector<double> next(ell_, 0.0);
      for (int i = 0; i < ell_; ++i)
        for (int j = 0; j < ell_; ++j)
          if (allowed(i, j)) next[j] += ends[i];
      ends = std::move(next);
    }
    double total = 0.0;
    for (double e : ends) total += e;
    return total;
  }

 private:
  int ell_ = 0;
  bool full_ = false;
  std::vector<std::uint8_t> a_;
};

/// Lexicographic cursor over X_n^*, optionally restricted to one leading symbol.
class WordCursor {
 public:
  WordCursor(const Subshift& x, int n, int first = -1) : x_(&x), n_(n), first_(first) {
    if (n < 1) throw Error(ErrorCode::InvalidArgument, "word length must be >= 1");
    word_.resize(n);
    word_[0] = first_ >= 0 ? first_ : 0;
    valid_ = fill_from(1);
  }

  bool valid() const noexcept { return valid_; }
  const Word& word() const noexcept { return word_; }

  void next() {
    for (int k = n_ - 1; k >= 0; --k) {
      if (k == 0 && first_ >= 0) break;
      for (int c = word_[k] + 1; c < x_->alphabet(); ++c) {
        if (k > 0 && !x_->allowed(word_[k - 1], c)) continue;
        word_[k] = c;
        if (fill_from(k + 1)) return;
      }
    }
    valid_ = false;
  }

 private:
  // Smallest admissible completion of positions [k, n); always exists because
  // every symbol has a successor.
  bool fill_from(int k) {
    for (int p = k; p < n_; ++p) {
      int c = 0;
      while (c < x_->alphabet() && !x_->allowed(word_[p - 1], c)) ++c;
      if (c == x_->alphabet()) return false;
      word_[p] = c;
    }
    return true;
  }

  const Subshift* x_;
  int n_;
  int first_;
  Word word_;
  bool valid_ = false;
};

/// Input range over X_n^* in lexicographic order; `for (const Word& w : words(x, n))`.
class WordRange {
 public:
  WordRange(const Subshift& x, int n, int first = -1) : x_(&x), n_(n), first_(first) {}

  class iterator {
   public:
    using value_type = Word;
    using difference_type = std::ptrdiff_t;
    iterator() = default;
    explicit iterator(WordCursor c) : cursor_(std::move(c)), end_(!cursor_->valid()) {}
    const Word& operator*() const noexcept { return cursor_->word(); }
    const Word* operator->() const noexcept { return &cursor_->word(); }
    iterator& operator++() {
      cursor_->next();
      end_ = !cursor_->valid();
      return *this;
    }
    void operator++(int) { ++*this; }
    friend bool operator==(const iterator& it, std::default_sentinel_t) noexcept { return it.end_; }

   private:
    std::optional<WordCursor> cursor_;
    bool end_ = true;
  };

  iterator begin() const { return iterator(WordCursor(*x_, n_, first_)); }
  std::default_sentinel_t end() const noexcept { return {}; }

 private:
  const Subshift* x_;
  int n_;
  int first_;
};

inline WordRange words(const Subshift& x, int n, int first = -1) { return WordRange(x, n, first); }

/// Calls fn(word) for every admissible word of length n, depth-first in
/// lexicographic order; fn sees a reference to a reused buffer.
inline void for_each_word(const Subshift& x, int n, const std::function<void(const Word&)>& fn, int first = -1) {
  if (n < 1) throw Error(ErrorCode::InvalidArgument, "word length must be >= 1");
  Word w;
  w.resize(n);
  std::function<void(int)> rec = [&](int k) {
    if (k == n) {
      fn(w);
      return;
    }
    for (int c = 0; c < x.alphabet(); ++c) {
      if (k == 0 && first >= 0 && c != first) continue;
      if (k > 0 && !x.allowed(w[k - 1], c)) continue;
      w[k] = c;
      rec(k + 1);
    }
  };
  rec(0);
}

/// The n-block recoding: a full shift on X_n^* plus the table back to words.
struct BlockShift {
  Subshift shift;
  std::vector<Word> symbols;
};

inline constexpr double kMaxBlockSymbols = 1e7;

inline BlockShift block_shift(const Subshift& x, int n) {
  if (n < 1) throw Error(ErrorCode::InvalidArgument, "block length must be >= 1");
  const double count = x.word_count(n);
  if (count > kMaxBlockSymbols)
    throw Error(ErrorCode::BudgetExceeded, "block alphabet too large to tabulate: " + std::to_string(count));
  BlockShift b{Subshift::full(1), {}};
  b.symbols.reserve(static_cast<std::size_t>(count));
  for (const Word& w : words(x, n)) b.symbols.push_back(w);
  b.shift = Subshift::full(static_cast<int>(b.symbols.size()));
  return b;
}

struct StoppingFamily {
  std::vector<Word> words;  // sorted
  double r = 0.0;
  int min_length = 0;
  int max_length = 0;

  /// Number of prefixes of w that belong to the family.
  int prefix_count(const Word& w) const {
    int hits = 0;
    for (int len = min_length; len <= std::min<int>(max_length, w.length()); ++len)
      if (std::binary_search(words.begin(), words.end(), w.prefix(len))) ++hits;
    return hits;
  }
};

/// Log of the supremum of exp(S_{|I|} h) over the cylinder [I].
using CylinderSup = std::function<double(const Word&)>;

/// Strict-inequality test used when comparing Birkhoff sums with log r; a
/// relative slack of 1e-12 keeps exact boundary cases on the "not below" side.
inline bool below_threshold(double value, double log_r) noexcept {
  return value < log_r - 1e-12 * std::max(1.0, std::abs(log_r));
}

inline StoppingFamily stopping_family(const Subshift& x, const CylinderSup& sup_snh, double r,
                                      double max_words = 5e7) {
  if (!(r > 0.0 && r < 1.0)) throw Error(ErrorCode::InvalidArgument, "r must lie in (0, 1)");
  const double log_r = std::log(r);
  StoppingFamily fam;
  fam.r = r;
  fam.min_length = std::numeric_limits<int>::max();
  Word w;
  std::function<void(double)> rec = [&](double parent) {
    for (int c = 0; c < x.alphabet(); ++c) {
      if (!w.empty() && !x.allowed(w.back(), c)) continue;
      w.push_back(c);
      const double v = sup_snh(w);
      if (!(v < parent))
        throw Error(ErrorCode::NonContractiveH, "cylinder sup did not decrease at word " + w.to_string());
      if (below_threshold(v, log_r)) {
        fam.words.push_back(w);
        if (static_cast<double>(fam.words.size()) > max_words)
          throw Error(ErrorCode::BudgetExceeded, "stopping family exceeds word budget");
        fam.min_length = std::min(fam.min_length, w.length());
        fam.max_length = std::max(fam.max_length, w.length());
      } else {
        rec(v);
      }
      w.pop_back();
    }
  };
  rec(0.0);
  std::sort(fam.words.begin(), fam.words.end());
  return fam;
}

/// Birkhoff-sum sup for a potential depending only on the first letter.
inline CylinderSup letter_birkhoff_sup(std::vector<double> per_letter) {
  return [h = std::move(per_letter)](const Word& w) {
    double s = 0.0;
    for (int a : w) s += h[a];
    return s;
  };
}

}  // namespace fracdim
