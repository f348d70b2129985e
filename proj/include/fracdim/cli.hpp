#pragma once

// Command-line orchestration: one subcommand per quantity, JSON reports.

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "fracdim/config.hpp"
#include "fracdim/ergodic.hpp"
#include "fracdim/geometry.hpp"
#include "fracdim/pressure.hpp"

namespace fracdim::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kWarnings = 2, kViolation = 3, kConfigError = 4 };

inline const std::vector<std::string>& commands() {
  static const std::vector<std::string> names{"dim-s",          "dim-l", "box-dim", "pack-dim", "tn-bound", "theta-slope",
                                              "pressure-curve", "cover", "verify"};
  return names;
}

struct Options {
  std::string command;
  std::string config;
  std::string out = ".";
  int threads = 1;
  bool series = false;
  std::optional<std::uint64_t> seed;
  std::optional<double> tol_s;
  std::optional<double> budget;
};

/// Markov measure with uniform transitions over the allowed successors.
inline ShiftMeasure uniform_measure(const Subshift& x) {
  const int ell = x.alphabet();
  if (x.is_full()) return ShiftMeasure::bernoulli(std::vector<double>(ell, 1.0 / ell));
  std::vector<std::vector<double>> p(ell, std::vector<double>(ell, 0.0));
  for (int i = 0; i < ell; ++i) {
    const std::vector<int> s = x.successors(i);
    for (int j : s) p[i][j] = 1.0 / s.size();
  }
  return ShiftMeasure::markov(p);
}

namespace detail {

inline Json num(double x) { return std::isfinite(x) ? Json(x) : Json(nullptr); }

inline Json nums(const std::vector<double>& v) {
  Json a = Json::array();
  for (double x : v) a.push_back(num(x));
  return a;
}

inline std::string safe_name(const std::string& s) {
  std::string out;
  for (char c : s) out += std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' ? c : '_';
  return out;
}

class Runner {
 public:
  Runner(RunConfig cfg, Options opt) : c_(std::move(cfg)), o_(std::move(opt)) {
    if (o_.seed) c_.seed = *o_.seed;
    if (o_.tol_s) c_.tol_s = *o_.tol_s;
    if (o_.budget) c_.budget = *o_.budget;
    report_["schema_version"] = kSchemaVersion;
    report_["command"] = o_.command;
    report_["system"] = {{"name", c_.name},
                         {"type", c_.kind == SystemKind::Ifs ? "ifs" : "repeller"},
                         {"dim", c_.dim()},
                         {"alphabet", c_.alphabet()},
                         {"affine", c_.kind == SystemKind::Ifs ? c_.ifs->is_affine() : c_.repeller->is_affine()},
                         {"full_shift", c_.shift.is_full()}};
    report_["seed"] = c_.seed;
    report_["warnings"] = Json::array();
  }

  int run() {
    const auto t0 = Clock::now();
    const std::string& cmd = o_.command;
    std::filesystem::create_directories(o_.out);
    if (cmd == "dim-s") report_["dim_s"] = dim_s();
    else if (cmd == "dim-l") report_["dim_l"] = dim_l();
    else if (cmd == "box-dim") report_["box_dim"] = box_dim();
    else if (cmd == "pack-dim") report_["pack_dim"] = pack_dim();
    else if (cmd == "tn-bound") report_["tn_bound"] = tn_bound();
    else if (cmd == "theta-slope") report_["theta_slope"] = theta_slope_stage();
    else if (cmd == "pressure-curve") report_["pressure_curve"] = pressure_curve();
    else if (cmd == "cover") report_["cover"] = cover();
    else if (cmd == "verify") verify();
    else throw Error(ErrorCode::InvalidArgument, "unknown command '" + cmd + "'");
    timings_["command"] = cmd;
    timings_["threads"] = o_.threads;
    timings_["total_ms"] = ms_since(t0);

    write_json(o_.out + "/report.json", report_);
    write_json(o_.out + "/timings.json", timings_);
    if (violation_) return kViolation;
    if (!report_["warnings"].empty()) return kWarnings;
    return kOk;
  }

  const Json& report() const noexcept { return report_; }

 private:
  using Clock = std::chrono::steady_clock;

  static double ms_since(Clock::time_point t0) {
    return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
  }

  static void write_json(const std::string& path, const Json& j) {
    std::ofstream os(path);
    if (!os) throw Error(ErrorCode::InvalidArgument, "cannot write " + path);
    os << j.dump(2) << '\n';
  }

  std::ofstream series_file(const std::string& name) const {
    std::ofstream os(o_.out + "/" + name);
    if (!os) throw Error(ErrorCode::InvalidArgument, "cannot write " + o_.out + "/" + name);
    return os;
  }

  void warn(const std::string& msg) { report_["warnings"].push_back(msg); }

  template <class F>
  decltype(auto) timed(const std::string& stage, F&& f) {
    const auto t0 = Clock::now();
    struct Done {
      Runner* self;
      std::string stage;
      Clock::time_point t0;
      ~Done() { self->timings_["stages"][stage] = Runner::ms_since(t0); }
    } done{this, stage, t0};
    return f();
  }

  template <class F>
  decltype(auto) visit(F&& f) const {
    if (c_.kind == SystemKind::Ifs) return f(*c_.ifs);
    return f(*c_.repeller);
  }

  PressureOptions pressure_options() const {
    PressureOptions p;
    p.budget = c_.budget;
    p.probes = c_.probes;
    p.seed = fracdim::detail::derive_seed(c_.seed, 0x70);
    p.threads = o_.threads;
    p.max_n = c_.max_n;
    return p;
  }

  std::vector<NamedMeasure> measures() const {
    if (!c_.measures.empty()) return c_.measures;
    return {{"uniform", uniform_measure(c_.shift)}};
  }

  // ---- stages

  Json dim_s() {
    return timed("dim_s", [&] {
      const DimensionSolveResult r = visit([&](const auto& sys) {
        PressureModel model(c_.shift, sys, pressure_options());
        model.prepare();
        return solve_dim_s(model, c_.tol_s);
      });
      dim_s_value_ = r.s_star;
      Json j{{"method", r.exact ? "exact-linear-parts" : "probed-jacobians"},
             {"value", num(r.s_star)},
             {"bracket", nums({r.s_lo, r.s_hi})},
             {"s_upper", num(r.s_upper)},
             {"pressure_at_root", num(r.pressure_at_root)},
             {"pressure_bracket_width", num(r.bracket_width)},
             {"n_used", r.n_used},
             {"iterations", r.iterations},
             {"degenerate", r.degenerate}};
      if (r.degenerate) warn("dim_s: pressure at s = 0 is negative; reported as 0");
      if (r.bracket_width > c_.wide_bracket) warn("dim_s: wide pressure bracket");
      return j;
    });
  }

  Json dim_l() {
    return timed("dim_l", [&] {
      Json out = Json::array();
      const auto ms = measures();
      for (std::size_t i = 0; i < ms.size(); ++i) {
        const ShiftMeasure& m = ms[i].measure;
        const LyapunovSpectrum ls = visit([&](const auto& sys) {
          return lyapunov_exponents(sys, m, c_.n_orbit, c_.n_samples, fracdim::detail::derive_seed(c_.seed, 0x100 + i),
                                    o_.threads);
        });
        const double h = entropy(m);
        const double value = lyapunov_dimension(h, ls.lambda);
        std::vector<double> lo = ls.lambda, hi = ls.lambda;
        for (std::size_t k = 0; k < lo.size(); ++k) {
          lo[k] -= ls.ci_half_width[k];
          hi[k] += ls.ci_half_width[k];
        }
        const double d_lo = lyapunov_dimension(h, lo);
        double d_hi = INFINITY;
        try {
          d_hi = lyapunov_dimension(h, hi);
        } catch (const Error&) {
        }
        dim_l_values_[ms[i].name] = value;
        out.push_back({{"measure", ms[i].name},
                       {"method", "monte-carlo-exponents"},
                       {"entropy", num(h)},
                       {"lyapunov_exponents", nums(ls.lambda)},
                       {"ci_half_width", nums(ls.ci_half_width)},
                       {"value", num(value)},
                       {"interval", nums({d_lo, d_hi})},
                       {"n_orbit", ls.n_orbit},
                       {"n_samples", ls.n_samples}});
        if (!(d_hi - d_lo <= c_.wide_bracket)) warn("dim_l: wide interval for measure " + ms[i].name);
      }
      return out;
    });
  }

  PointCloud sample(const ShiftMeasure& m, std::uint64_t stream) const {
    return visit([&](const auto& sys) {
      return chaos_game(sys, m, c_.chaos_points, c_.burn_in, fracdim::detail::derive_seed(c_.seed, stream), o_.threads);
    });
  }

  Json box_dim() {
    return timed("box_dim", [&] {
      const NamedMeasure nm = measures().front();
      const PointCloud cloud = sample(nm.measure, 0x200);
      const BoxCountSeries s = box_dimension(cloud, c_.box_deltas, o_.threads);
      box_value_ = s.slope;
      if (o_.series) {
        auto os = series_file("box.csv");
        write_box_csv(os, s);
      }
      Json counts = Json::array();
      for (std::size_t v : s.count) counts.push_back(v);
      return Json{{"method", "grid-count"},
                  {"measure", nm.name},
                  {"points", cloud.size()},
                  {"error_bound", num(cloud.error_bound)},
                  {"value", num(s.slope)},
                  {"residual", num(s.residual)},
                  {"delta", nums(s.delta)},
                  {"count", counts},
                  {"fit_window", {s.fit_begin, s.fit_end}}};
    });
  }

  Json pack_dim() {
    return timed("pack_dim", [&] {
      Json out = Json::array();
      const auto ms = measures();
      for (std::size_t i = 0; i < ms.size(); ++i) {
        const PointCloud cloud = sample(ms[i].measure, 0x300 + i);
        LocalDimOptions lo;
        lo.r_grid = c_.local_r_grid;
        lo.quantile = c_.quantile;
        lo.n_probe = c_.n_probe;
        lo.min_count = c_.min_count;
        lo.threads = o_.threads;
        const LocalDimResult r = local_dims(cloud, lo);
        pack_values_[ms[i].name] = r.estimate;
        if (o_.series) {
          auto os = series_file("local_dims_" + safe_name(ms[i].name) + ".csv");
          write_local_dims_csv(os, r);
        }
        std::vector<double> slopes;
        for (const auto& p : r.points) slopes.push_back(p.slope);
        out.push_back({{"measure", ms[i].name},
                       {"method", "local-slope-quantile"},
                       {"points", cloud.size()},
                       {"probes", r.points.size()},
                       {"quantile", r.quantile},
                       {"value", num(r.estimate)},
                       {"median_slope", num(fracdim::detail::quantile_of(slopes, 0.5))},
                       {"r_grid", nums({r.r_grid.front(), r.r_grid.back()})},
                       {"min_count", r.min_count}});
      }
      return out;
    });
  }

  Json tn_bound() {
    return timed("tn_bound", [&] {
      std::vector<int> ks = c_.tn_k;
      if (ks.empty())
        for (int k = 0; k < c_.dim(); ++k) ks.push_back(k);
      Json rows = Json::array();
      std::ostringstream csv;
      csv.precision(17);
      csv << "n,k,t_n\n";
      visit([&](const auto& sys) {
        for (int n : c_.tn_n) {
          PressureModel model(c_.shift, sys, pressure_options());
          try {
            model.prepare({n});
          } catch (const Error& e) {
            if (e.code() != ErrorCode::BudgetExceeded) throw;
            warn("tn_bound: n = " + std::to_string(n) + " exceeds the word budget");
            rows.push_back({{"n", n}, {"status", "budget_exceeded"}});
            continue;
          }
          for (int k : ks) {
            const double t = solve_tn(model, n, k);
            rows.push_back({{"n", n}, {"k", k}, {"t_n", num(t)}, {"status", "ok"}, {"exact", model.exact()}});
            csv << n << ',' << k << ',' << t << '\n';
          }
        }
        return 0;
      });
      if (o_.series) series_file("tn.csv") << csv.str();
      return Json{{"method", "block-shift-pressure"}, {"covering_constant", covering_constant(c_.dim())}, {"table", rows}};
    });
  }

  Json theta_slope_stage() {
    return timed("theta_slope", [&] {
      std::vector<double> g = c_.theta_g, h = c_.theta_h;
      std::string source = "configured";
      if (g.empty()) {
        if (c_.kind != SystemKind::Ifs || !c_.ifs->is_affine())
          throw Error(ErrorCode::Config, c_.source + ": theta-slope needs solver.theta.g/h unless the system is an affine IFS");
        std::tie(g, h) = letter_potentials(*c_.ifs, c_.theta_k);
        source = "letter-singular-values";
      }
      const ThetaSlopeResult r = theta_slope(c_.shift, g, h, c_.theta_r_grid);
      if (o_.series) {
        auto os = series_file("theta.csv");
        os.precision(17);
        os << "r,log_theta\n";
        for (std::size_t i = 0; i < r.r_grid.size(); ++i) os << r.r_grid[i] << ',' << r.log_theta[i] << '\n';
      }
      return Json{{"method", "stopping-family-count"},
                  {"potentials", source},
                  {"k", c_.theta_k},
                  {"value", num(r.t)},
                  {"residual", num(r.residual)},
                  {"r_grid", nums(r.r_grid)},
                  {"log_theta", nums(r.log_theta)},
                  {"fit_begin", r.fit_begin}};
    });
  }

  Json pressure_curve() {
    return timed("pressure_curve", [&] {
      std::vector<double> grid = c_.s_grid;
      if (grid.empty())
        for (int i = 0; i <= 16; ++i) grid.push_back(c_.dim() * i / 16.0);
      Json rows = Json::array();
      std::ostringstream csv;
      csv.precision(17);
      csv << "s,pressure,upper,bracket_width\n";
      std::vector<int> ladder;
      visit([&](const auto& sys) {
        PressureModel model(c_.shift, sys, pressure_options());
        model.prepare();
        ladder = model.ladder();
        for (double s : grid) {
          const PressureEstimate p = model.estimate(s);
          rows.push_back({{"s", s},
                          {"value", num(p.value)},
                          {"upper", num(p.upper)},
                          {"bracket_width", num(p.bracket_width)},
                          {"extrapolated", p.extrapolated},
                          {"pn", nums(p.Pn)}});
          csv << s << ',' << p.value << ',' << p.upper << ',' << p.bracket_width << '\n';
          if (p.bracket_width > c_.wide_bracket) warn("pressure_curve: wide bracket at s = " + std::to_string(s));
        }
        return 0;
      });
      if (o_.series) series_file("pressure_curve.csv") << csv.str();
      return Json{{"method", "word-sum-ladder"}, {"n_list", ladder}, {"curve", rows}};
    });
  }

  Json cover() {
    return timed("cover", [&] {
      std::vector<Word> ws = c_.cover_words;
      if (ws.empty()) {
        if (c_.kind == SystemKind::Repeller) ws.push_back(Word{0});
        else ws.push_back(Word{});
      }
      Json rows = Json::array();
      visit([&](const auto& sys) {
        CoverBuilder builder(sys, c_.cover_k);
        const CylinderSampler sampler(sys, c_.cover_points, fracdim::detail::derive_seed(c_.seed, 0x400));
        for (std::size_t i = 0; i < ws.size(); ++i) {
          const BallCover cov = builder.cover(ws[i]);
          const CylinderSample pts = sampler.sample(ws[i]);
          const double frac = verify_cover(cov, pts.points, pts.error_bound);
          const std::string label = ws[i].empty() ? "empty" : ws[i].to_string();
          {
            auto os = series_file("cover_" + safe_name(label) + ".csv");
            write_cover_csv(os, cov);
          }
          rows.push_back({{"word", label},
                          {"k", cov.k},
                          {"balls", cov.balls.size()},
                          {"radius", num(cov.certified_radius)},
                          {"count_bound", num(cov.certified_count_bound)},
                          {"base_count", num(cov.base_count)},
                          {"base_radius", num(cov.base_radius)},
                          {"r0", num(builder.r0())},
                          {"sample_points", pts.points.size()},
                          {"covered_fraction", num(frac)}});
          if (frac < 1.0) {
            violation_ = true;
            warn("cover: word " + label + " leaves sample points uncovered");
          }
        }
        return 0;
      });
      return Json{{"method", "recursive-ellipsoid-cover"}, {"covers", rows}};
    });
  }

  Json check(const std::string& name, const std::string& lhs_name, double lhs, const std::string& rhs_name, double rhs) {
    const double tol = c_.verify_tolerance;
    const double slack = rhs + tol - lhs;
    const bool pass = slack >= 0.0;
    if (!pass) violation_ = true;
    return Json{{"check", name},        {"lhs", lhs_name},      {"lhs_value", num(lhs)},
                {"rhs", rhs_name},      {"rhs_value", num(rhs)}, {"tolerance", tol},
                {"slack", num(slack)},  {"verdict", pass ? "PASS" : "FAIL"}};
  }

  static Json not_applicable(const std::string& name, const std::string& why) {
    return Json{{"check", name}, {"verdict", "N/A"}, {"reason", why}};
  }

  void verify() {
    report_["dim_s"] = dim_s();
    report_["box_dim"] = box_dim();
    report_["dim_l"] = dim_l();
    report_["pack_dim"] = pack_dim();
    const double s_used = c_.override_dim_s.value_or(dim_s_value_);
    if (c_.override_dim_s) report_["dim_s"]["override"] = *c_.override_dim_s;
    const bool ifs = c_.kind == SystemKind::Ifs;
    Json rows = Json::array();
    const std::string box_name = ifs ? "attractor_box_vs_singularity" : "repeller_box_vs_singularity";
    const std::string pack_name = ifs ? "measure_packing_vs_lyapunov" : "repeller_packing_vs_lyapunov";
    if (ifs) {
      rows.push_back(check(box_name, "box_dim", box_value_, "dim_s", s_used));
      for (const auto& [name, pack] : pack_values_)
        rows.push_back(check(pack_name + ":" + name, "pack_dim", pack, "dim_l", dim_l_values_.at(name)));
      rows.push_back(not_applicable("repeller_box_vs_singularity", "system is an IFS"));
      rows.push_back(not_applicable("repeller_packing_vs_lyapunov", "system is an IFS"));
    } else {
      rows.push_back(not_applicable("attractor_box_vs_singularity", "system is a repeller"));
      rows.push_back(not_applicable("measure_packing_vs_lyapunov", "system is a repeller"));
      rows.push_back(check(box_name, "box_dim", box_value_, "dim_s", s_used));
      for (const auto& [name, pack] : pack_values_)
        rows.push_back(check(pack_name + ":" + name, "pack_dim", pack, "dim_l", dim_l_values_.at(name)));
    }
    report_["verdicts"] = rows;
  }

  RunConfig c_;
  Options o_;
  Json report_;
  Json timings_ = Json::object();
  bool violation_ = false;
  double dim_s_value_ = 0.0;
  double box_value_ = 0.0;
  std::map<std::string, double> dim_l_values_;
  std::map<std::string, double> pack_values_;
};

}  // namespace detail

/// Runs one subcommand; returns the process exit code.
inline int run(const Options& opt, std::ostream& err = std::cerr) {
  try {
    RunConfig cfg = load_config(opt.config);
    detail::Runner runner(std::move(cfg), opt);
    return runner.run();
  } catch (const Error& e) {
    err << "fracdim: " << e.what() << '\n';
    return e.code() == ErrorCode::Config ? kConfigError : kUsage;
  } catch (const std::exception& e) {
    err << "fracdim: " << e.what() << '\n';
    return kUsage;
  }
}

inline int main(int argc, char** argv) {
  CLI::App app{"Dimension estimates for attractors and repellers"};
  Options opt;
  app.add_option("command", opt.command, "Subcommand")->required()->check(CLI::IsMember(commands()));
  app.add_option("--config", opt.config, "JSON configuration")->required();
  app.add_option("--out", opt.out, "Output directory")->capture_default_str();
  app.add_option("--threads", opt.threads, "Worker threads")->check(CLI::Range(1, 1024))->capture_default_str();
  app.add_flag("--series", opt.series, "Write CSV series");
  app.add_option("--seed", opt.seed, "Override the configured seed");
  app.add_option("--tol-s", opt.tol_s, "Bisection tolerance in s")->check(CLI::Range(1e-15, 0.1));
  app.add_option("--budget", opt.budget, "Word-enumeration budget")->check(CLI::Range(1e3, 1e10));
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }
  return run(opt);
}

}  // namespace fracdim::cli
