#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "fracdim/error.hpp"
#include "fracdim/measure.hpp"
#include "fracdim/shift.hpp"
#include "fracdim/systems.hpp"

namespace fracdim {

using Json = nlohmann::json;

inline constexpr int kSchemaVersion = 1;

struct NamedMeasure {
  std::string name;
  ShiftMeasure measure;
};

enum class SystemKind { Ifs, Repeller };

struct RunConfig {
  std::string source;  // file name used in messages
  std::string name;
  SystemKind kind = SystemKind::Ifs;
  std::optional<IfsSystem> ifs;
  std::optional<RepellerSystem> repeller;
  Subshift shift = Subshift::full(1);
  std::vector<NamedMeasure> measures;

  // solver knobs
  double tol_s = 0.0;  // 0 picks the default for the system class
  double budget = 2e7;
  std::uint64_t seed = 1;
  int probes = kDefaultProbes;
  int max_n = 64;
  double wide_bracket = 1e-2;
  std::vector<int> tn_n{5, 10, 20, 40};
  std::vector<int> tn_k;  // empty: every k in [0, d-1]
  int theta_k = 0;
  std::vector<double> theta_r_grid;
  std::vector<double> theta_g, theta_h;
  std::vector<double> s_grid;
  std::size_t chaos_points = 1000000;
  int burn_in = 60;
  std::vector<double> box_deltas;
  double quantile = 0.99;
  std::size_t n_probe = 2000;
  std::size_t min_count = 100;
  std::vector<double> local_r_grid;
  int n_orbit = 200;
  int n_samples = 64;
  std::vector<Word> cover_words;
  int cover_k = 0;
  std::size_t cover_points = 10000;
  double verify_tolerance = 0.1;
  std::optional<double> override_dim_s;

  int dim() const { return kind == SystemKind::Ifs ? ifs->dim() : repeller->dim(); }
  int alphabet() const { return shift.alphabet(); }
};

namespace detail {

/// Locates the value addressed by a JSON pointer in the raw text; returns
/// its 1-based line, or the line of the deepest ancestor found.
class JsonLocator {
 public:
  explicit JsonLocator(const std::string& text) : s_(text) {}

  int line_of(const std::string& pointer) const {
    std::size_t pos = 0;
    try {
      pos = find(pointer);
    } catch (...) {
      pos = best_;
    }
    int line = 1;
    for (std::size_t i = 0; i < pos && i < s_.size(); ++i)
      if (s_[i] == '\n') ++line;
    return line;
  }

 private:
  std::size_t find(const std::string& pointer) const {
    std::vector<std::string> tokens;
    std::size_t at = 1;
    while (at <= pointer.size() && !pointer.empty()) {
      const std::size_t next = pointer.find('/', at);
      tokens.push_back(pointer.substr(at, next == std::string::npos ? std::string::npos : next - at));
      if (next == std::string::npos) break;
      at = next + 1;
    }
    i_ = 0;
    ws();
    best_ = i_;
    for (const std::string& tok : tokens) {
      if (s_.at(i_) == '{') {
        ++i_;
        for (;;) {
          ws();
          if (s_.at(i_) == '}') return best_;
          const std::size_t key_begin = i_;
          skip_string();
          const std::string key = s_.substr(key_begin + 1, i_ - key_begin - 2);
          ws();
          ++i_;  // ':'
          ws();
          if (key == tok) break;
          skip_value();
          ws();
          if (s_.at(i_) == ',') ++i_;
        }
      } else if (s_.at(i_) == '[') {
        ++i_;
        const long idx = std::stol(tok);
        for (long k = 0; k < idx; ++k) {
          ws();
          skip_value();
          ws();
          if (s_.at(i_) != ',') return best_;
          ++i_;
        }
        ws();
      } else {
        return best_;
      }
      best_ = i_;
    }
    return best_;
  }

  void ws() const {
    while (i_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[i_]))) ++i_;
  }
  void skip_string() const {
    ++i_;
    while (s_.at(i_) != '"') i_ += s_[i_] == '\\' ? 2 : 1;
    ++i_;
  }
  void skip_value() const {
    const char c = s_.at(i_);
    if (c == '"') {
      skip_string();
    } else if (c == '{' || c == '[') {
      int depth = 0;
      do {
        const char ch = s_.at(i_);
        if (ch == '"') {
          skip_string();
          continue;
        }
        if (ch == '{' || ch == '[') ++depth;
        if (ch == '}' || ch == ']') --depth;
        ++i_;
      } while (depth > 0);
    } else {
      while (i_ < s_.size() && s_[i_] != ',' && s_[i_] != '}' && s_[i_] != ']' &&
             !std::isspace(static_cast<unsigned char>(s_[i_])))
        ++i_;
    }
  }

  const std::string& s_;
  mutable std::size_t i_ = 0;
  mutable std::size_t best_ = 0;
};

class ConfigReader {
 public:
  ConfigReader(const Json& root, const std::string& text, std::string source)
      : root_(root), loc_(text), source_(std::move(source)) {}

  [[noreturn]] void fail(const std::string& ptr, const std::string& msg) const {
    throw Error(ErrorCode::Config,
                source_ + ":" + std::to_string(loc_.line_of(ptr)) + ": " + (ptr.empty() ? "/" : ptr) + ": " + msg);
  }

  const Json& at(const std::string& ptr) const { return root_.at(Json::json_pointer(ptr)); }
  bool has(const std::string& ptr) const { return root_.contains(Json::json_pointer(ptr)); }

  const Json& require(const std::string& ptr) const {
    if (!has(ptr)) fail(parent(ptr), "missing field '" + leaf(ptr) + "'");
    return at(ptr);
  }

  double number(const std::string& ptr) const {
    const Json& v = require(ptr);
    if (!v.is_number()) fail(ptr, "expected a number");
    const double x = v.get<double>();
    if (!std::isfinite(x)) fail(ptr, "expected a finite number");
    return x;
  }
  double number(const std::string& ptr, double fallback, double lo, double hi) const {
    if (!has(ptr)) return fallback;
    const double x = number(ptr);
    if (x < lo || x > hi) fail(ptr, "value " + fmt(x) + " outside [" + fmt(lo) + ", " + fmt(hi) + "]");
    return x;
  }
  long long integer(const std::string& ptr) const {
    const Json& v = require(ptr);
    if (!v.is_number_integer()) fail(ptr, "expected an integer");
    return v.get<long long>();
  }
  long long integer(const std::string& ptr, long long fallback, long long lo, long long hi) const {
    if (!has(ptr)) return fallback;
    const long long x = integer(ptr);
    if (x < lo || x > hi) fail(ptr, "value " + std::to_string(x) + " outside [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
    return x;
  }
  std::string string(const std::string& ptr) const {
    const Json& v = require(ptr);
    if (!v.is_string()) fail(ptr, "expected a string");
    return v.get<std::string>();
  }
  std::size_t array_size(const std::string& ptr) const {
    const Json& v = require(ptr);
    if (!v.is_array()) fail(ptr, "expected an array");
    return v.size();
  }
  std::vector<double> numbers(const std::string& ptr) const {
    std::vector<double> out;
    for (std::size_t i = 0; i < array_size(ptr); ++i) out.push_back(number(ptr + "/" + std::to_string(i)));
    return out;
  }
  std::vector<double> positive_numbers(const std::string& ptr) const {
    std::vector<double> out = numbers(ptr);
    for (std::size_t i = 0; i < out.size(); ++i)
      if (!(out[i] > 0.0)) fail(ptr + "/" + std::to_string(i), "expected a positive number");
    return out;
  }
  std::vector<std::vector<double>> matrix(const std::string& ptr) const {
    std::vector<std::vector<double>> out;
    for (std::size_t i = 0; i < array_size(ptr); ++i) out.push_back(numbers(ptr + "/" + std::to_string(i)));
    return out;
  }

  static std::string parent(const std::string& ptr) { return ptr.substr(0, ptr.rfind('/')); }
  static std::string leaf(const std::string& ptr) { return ptr.substr(ptr.rfind('/') + 1); }

 private:
  static std::string fmt(double x) {
    std::ostringstream os;
    os << x;
    return os.str();
  }

  const Json& root_;
  JsonLocator loc_;
  std::string source_;
};

inline Box read_box(const ConfigReader& r, const std::string& ptr, int d) {
  const std::vector<double> lo = r.numbers(ptr + "/lo"), hi = r.numbers(ptr + "/hi");
  if (static_cast<int>(lo.size()) != d) r.fail(ptr + "/lo", "expected " + std::to_string(d) + " coordinates");
  if (static_cast<int>(hi.size()) != d) r.fail(ptr + "/hi", "expected " + std::to_string(d) + " coordinates");
  for (int j = 0; j < d; ++j)
    if (!(lo[j] < hi[j])) r.fail(ptr, "lo must be below hi in every coordinate");
  return Box{Vec::from(lo), Vec::from(hi)};
}

inline SmoothMap read_map(const ConfigReader& r, const std::string& ptr, int d, const Box& domain) {
  const std::vector<double> a = r.numbers(ptr + "/linear");
  if (static_cast<int>(a.size()) != d * d)
    r.fail(ptr + "/linear", "expected a row-major " + std::to_string(d) + "x" + std::to_string(d) + " matrix");
  const std::vector<double> b = r.numbers(ptr + "/translation");
  if (static_cast<int>(b.size()) != d) r.fail(ptr + "/translation", "expected " + std::to_string(d) + " entries");
  const SmallMatrix m = SmallMatrix::from_row_major(d, a);
  try {
    if (r.has(ptr + "/perturbation")) {
      const std::string kind = r.string(ptr + "/perturbation/kind");
      if (kind != "sine") r.fail(ptr + "/perturbation/kind", "unknown perturbation '" + kind + "'");
      const double eps = r.number(ptr + "/perturbation/epsilon", 0.0, 0.0, 1.0);
      return SmoothMap::perturbed(m, Vec::from(b), eps, domain);
    }
    return SmoothMap::affine(m, Vec::from(b), domain);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::Config) throw;
    r.fail(ptr, e.what());
  }
}

inline Subshift read_subshift(const ConfigReader& r, const std::string& ptr, int ell) {
  if (!r.has(ptr)) return Subshift::full(ell);
  const std::string type = r.string(ptr + "/type");
  if (type == "full") return Subshift::full(ell);
  if (type != "sft") r.fail(ptr + "/type", "expected 'full' or 'sft'");
  const auto m = r.matrix(ptr + "/transfer");
  if (static_cast<int>(m.size()) != ell) r.fail(ptr + "/transfer", "expected " + std::to_string(ell) + " rows");
  std::vector<std::vector<int>> a(ell, std::vector<int>(ell, 0));
  for (int i = 0; i < ell; ++i) {
    if (static_cast<int>(m[i].size()) != ell) r.fail(ptr + "/transfer/" + std::to_string(i), "row is not square");
    for (int j = 0; j < ell; ++j) {
      if (m[i][j] != 0.0 && m[i][j] != 1.0)
        r.fail(ptr + "/transfer/" + std::to_string(i) + "/" + std::to_string(j), "entries must be 0 or 1");
      a[i][j] = static_cast<int>(m[i][j]);
    }
  }
  try {
    return Subshift::sft(a);
  } catch (const Error& e) {
    r.fail(ptr + "/transfer", e.what());
  }
}

inline std::vector<int> read_int_list(const ConfigReader& r, const std::string& ptr, long long lo, long long hi) {
  std::vector<int> out;
  for (std::size_t i = 0; i < r.array_size(ptr); ++i) {
    const std::string p = ptr + "/" + std::to_string(i);
    const long long v = r.integer(p);
    if (v < lo || v > hi) r.fail(p, "value " + std::to_string(v) + " outside [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
    out.push_back(static_cast<int>(v));
  }
  return out;
}

}  // namespace detail

/// Parses and validates a run configuration. Words and symbols are 1-based
/// in the file and 0-based in memory. Errors carry the file line.
inline RunConfig parse_config(const std::string& text, const std::string& source = "config") {
  Json root;
  try {
    root = Json::parse(text);
  } catch (const Json::parse_error& e) {
    // byte offset into a line number
    int line = 1;
    for (std::size_t i = 0; i < e.byte && i < text.size(); ++i)
      if (text[i] == '\n') ++line;
    throw Error(ErrorCode::Config, source + ":" + std::to_string(line) + ": malformed JSON: " + e.what());
  }
  const detail::ConfigReader r(root, text, source);
  if (!root.is_object()) r.fail("", "expected a JSON object");
  const long long version = r.integer("/schema_version");
  if (version != kSchemaVersion)
    r.fail("/schema_version", "unsupported schema_version " + std::to_string(version) + " (expected " +
                                   std::to_string(kSchemaVersion) + ")");

  RunConfig c;
  c.source = source;
  c.name = r.has("/name") ? r.string("/name") : std::string("unnamed");
  const std::string type = r.string("/system/type");
  const long long d = r.integer("/system/dim");
  if (d < 1 || d > kMaxDim) r.fail("/system/dim", "dimension must lie in [1, " + std::to_string(kMaxDim) + "]");
  const int dim = static_cast<int>(d);

  if (type == "ifs") {
    c.kind = SystemKind::Ifs;
    const Box domain = detail::read_box(r, "/system/domain", dim);
    std::vector<SmoothMap> maps;
    const std::size_t n = r.array_size("/system/maps");
    for (std::size_t i = 0; i < n; ++i) maps.push_back(detail::read_map(r, "/system/maps/" + std::to_string(i), dim, domain));
    c.shift = detail::read_subshift(r, "/subshift", static_cast<int>(n));
    try {
      c.ifs.emplace(std::move(maps), c.shift);
    } catch (const Error& e) {
      r.fail("/system/maps", e.what());
    }
  } else if (type == "repeller") {
    c.kind = SystemKind::Repeller;
    std::vector<Box> regions;
    const std::size_t ell = r.array_size("/system/regions");
    for (std::size_t i = 0; i < ell; ++i) regions.push_back(detail::read_box(r, "/system/regions/" + std::to_string(i), dim));
    if (!r.has("/subshift")) r.fail("", "a repeller needs a 'subshift' entry");
    c.shift = detail::read_subshift(r, "/subshift", static_cast<int>(ell));
    std::vector<Branch> branches;
    for (std::size_t b = 0; b < r.array_size("/system/branches"); ++b) {
      const std::string p = "/system/branches/" + std::to_string(b);
      const long long from = r.integer(p + "/from"), to = r.integer(p + "/to");
      if (from < 1 || from > static_cast<long long>(ell)) r.fail(p + "/from", "symbol outside the alphabet");
      if (to < 1 || to > static_cast<long long>(ell)) r.fail(p + "/to", "symbol outside the alphabet");
      branches.push_back({static_cast<int>(from - 1), static_cast<int>(to - 1), detail::read_map(r, p, dim, regions[to - 1])});
    }
    try {
      c.repeller.emplace(c.shift, regions, branches);
    } catch (const Error& e) {
      r.fail("/system/branches", e.what());
    }
  } else {
    r.fail("/system/type", "expected 'ifs' or 'repeller'");
  }

  const int ell = c.shift.alphabet();
  if (r.has("/measures")) {
    for (std::size_t i = 0; i < r.array_size("/measures"); ++i) {
      const std::string p = "/measures/" + std::to_string(i);
      const std::string name = r.has(p + "/name") ? r.string(p + "/name") : "measure" + std::to_string(i + 1);
      const std::string mt = r.string(p + "/type");
      try {
        if (mt == "bernoulli") {
          const std::vector<double> prob = r.numbers(p + "/p");
          if (static_cast<int>(prob.size()) != ell) r.fail(p + "/p", "expected " + std::to_string(ell) + " probabilities");
          c.measures.push_back({name, ShiftMeasure::bernoulli(prob)});
        } else if (mt == "markov") {
          const auto tm = r.matrix(p + "/transition");
          if (static_cast<int>(tm.size()) != ell) r.fail(p + "/transition", "expected " + std::to_string(ell) + " rows");
          c.measures.push_back({name, ShiftMeasure::markov(tm)});
        } else {
          r.fail(p + "/type", "expected 'bernoulli' or 'markov'");
        }
        c.measures.back().measure.check_support(c.shift);
      } catch (const Error& e) {
        if (e.code() == ErrorCode::Config) throw;
        r.fail(p, e.what());
      }
    }
  }

  const std::string s = "/solver";
  c.tol_s = r.number(s + "/tol_s", 0.0, 0.0, 0.1);
  c.budget = r.number(s + "/budget", c.budget, 1e3, 1e10);
  c.seed = static_cast<std::uint64_t>(r.integer(s + "/seed", 1, 0, (1LL << 62)));
  c.probes = static_cast<int>(r.integer(s + "/probes", c.probes, 1, 64));
  c.max_n = static_cast<int>(r.integer(s + "/max_n", c.max_n, 1, 1024));
  c.wide_bracket = r.number(s + "/wide_bracket", c.wide_bracket, 0.0, 10.0);
  if (r.has(s + "/tn/n")) c.tn_n = detail::read_int_list(r, s + "/tn/n", 1, 1024);
  if (r.has(s + "/tn/k")) c.tn_k = detail::read_int_list(r, s + "/tn/k", 0, dim - 1);
  c.theta_k = static_cast<int>(r.integer(s + "/theta/k", 0, 0, dim - 1));
  if (r.has(s + "/theta/r_grid")) c.theta_r_grid = r.positive_numbers(s + "/theta/r_grid");
  if (r.has(s + "/theta/g") || r.has(s + "/theta/h")) {
    c.theta_g = r.numbers(s + "/theta/g");
    c.theta_h = r.numbers(s + "/theta/h");
    if (static_cast<int>(c.theta_g.size()) != ell) r.fail(s + "/theta/g", "expected one value per letter");
    if (static_cast<int>(c.theta_h.size()) != ell) r.fail(s + "/theta/h", "expected one value per letter");
  }
  if (r.has(s + "/pressure_curve/s")) c.s_grid = r.numbers(s + "/pressure_curve/s");
  for (std::size_t i = 0; i < c.s_grid.size(); ++i)
    if (c.s_grid[i] < 0.0) r.fail(s + "/pressure_curve/s/" + std::to_string(i), "s must be non-negative");
  c.chaos_points = static_cast<std::size_t>(r.integer(s + "/chaos/points", static_cast<long long>(c.chaos_points), 1000, 100000000));
  c.burn_in = static_cast<int>(r.integer(s + "/chaos/burn_in", c.burn_in, 1, 10000));
  if (r.has(s + "/box/deltas")) c.box_deltas = r.positive_numbers(s + "/box/deltas");
  c.quantile = r.number(s + "/local_dims/quantile", c.quantile, 1e-6, 1.0);
  c.n_probe = static_cast<std::size_t>(r.integer(s + "/local_dims/n_probe", static_cast<long long>(c.n_probe), 1, 1000000));
  c.min_count = static_cast<std::size_t>(r.integer(s + "/local_dims/min_count", static_cast<long long>(c.min_count), 1, 100000000));
  if (r.has(s + "/local_dims/r_grid")) c.local_r_grid = r.positive_numbers(s + "/local_dims/r_grid");
  c.n_orbit = static_cast<int>(r.integer(s + "/lyapunov/n_orbit", c.n_orbit, 1, 1000000));
  c.n_samples = static_cast<int>(r.integer(s + "/lyapunov/n_samples", c.n_samples, 2, 1000000));

  if (r.has("/cover/words")) {
    for (std::size_t i = 0; i < r.array_size("/cover/words"); ++i) {
      const std::string p = "/cover/words/" + std::to_string(i);
      std::vector<int> letters;
      for (int v : detail::read_int_list(r, p, 1, ell)) letters.push_back(v - 1);
      Word w(letters);
      if (!c.shift.admissible(w)) r.fail(p, "word " + w.to_string() + " is not admissible");
      c.cover_words.push_back(std::move(w));
    }
  }
  c.cover_k = static_cast<int>(r.integer("/cover/k", 0, 0, dim - 1));
  c.cover_points = static_cast<std::size_t>(r.integer("/cover/points", static_cast<long long>(c.cover_points), 10, 10000000));
  c.verify_tolerance = r.number("/verify/tolerance", c.verify_tolerance, 0.0, 10.0);
  if (r.has("/verify/override_dim_s")) c.override_dim_s = r.number("/verify/override_dim_s");
  return c;
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Config, path + ": cannot open configuration file");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path);
}

}  // namespace fracdim
