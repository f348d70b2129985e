// Acceptance gate: one PASS/FAIL line per criterion. Exits 1 if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "fracdim/config.hpp"
#include "property_suites.hpp"

using namespace fracdim;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(double x, int digits = 10) {
  std::ostringstream s;
  s.precision(digits);
  s << x;
  return s.str();
}

fs::path config(const std::string& name) { return fs::path(FRACDIM_CONFIG_DIR) / (name + ".json"); }

const fs::path& work_dir() {
  static const fs::path dir = [] {
    fs::path p = fs::temp_directory_path() / "fracdim_acceptance";
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
  }();
  return dir;
}

struct CliRun {
  int exit_code = -1;
  double seconds = 0.0;
  Json report;
};

// Runs the fracdim binary and parses its report.
CliRun cli(const std::string& command, const fs::path& cfg, const std::string& extra = "") {
  static int counter = 0;
  const fs::path out = work_dir() / (command + "_" + std::to_string(counter++));
  const std::string line = std::string("\"") + FRACDIM_CLI + "\" " + command + " --config \"" + cfg.string() +
                           "\" --out \"" + out.string() + "\" " + extra + " 2>\"" + (out.string() + ".err") + "\"";
  CliRun r;
  const auto t0 = Clock::now();
  const int status = std::system(line.c_str());
  r.seconds = seconds_since(t0);
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  std::ifstream in(out / "report.json");
  if (in) r.report = Json::parse(in);
  return r;
}

// Value recorded for a named measure in a per-measure report array.
double measure_value(const Json& rows, const std::string& name) {
  for (const Json& m : rows)
    if (m["measure"] == name) return m["value"].is_number() ? m["value"].get<double>() : NAN;
  return NAN;
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void criterion(int id, const std::function<Outcome()>& body) {
  Outcome o;
  const auto t0 = Clock::now();
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("error: ") + e.what()};
  }
  const double secs = seconds_since(t0);
  if (!o.pass) ++failures;
  std::cout << "criterion " << id << ": " << (o.pass ? "PASS" : "FAIL") << "  " << o.detail << " [" << fmt(secs, 3)
            << " s]" << std::endl;
}

bool within(double x, double target, double tol) { return std::abs(x - target) <= tol; }

Outcome self_similar_dim_s(const std::string& name, double target, double max_seconds) {
  const CliRun r = cli("dim-s", config(name));
  const double v = r.report["dim_s"]["value"].get<double>();
  const bool pass = r.exit_code == 0 && within(v, target, 1e-6) && r.seconds < max_seconds;
  return {pass, name + " dim_s=" + fmt(v, 12) + " target=" + fmt(target, 12) + " tol=1e-6 exit=" +
                    std::to_string(r.exit_code) + " runtime=" + fmt(r.seconds, 3) + "s (limit " + fmt(max_seconds) + "s)"};
}

// Pooled covered fraction of all cylinder covers up to depth max_len, with the
// radii as built and halved. Covers and samples are both grown by prepending
// letters along a depth-first walk.
struct SweepResult {
  std::size_t words = 0;
  std::size_t words_not_covered = 0;
  double min_fraction = 1.0;
  double halved_pooled = 0.0;
};

SweepResult cover_sweep(const IfsSystem& sys, int k, int max_len, std::size_t n_points, std::uint64_t seed) {
  const CoverBuilder<IfsSystem> builder(sys, k);
  const CylinderSampler<IfsSystem> sampler(sys, n_points, seed);
  SweepResult out;
  std::size_t halved_in = 0, total = 0;
  std::function<void(const CoverState&, int)> walk = [&](const CoverState& tail, int depth) {
    for (int a = 0; a < sys.alphabet(); ++a) {
      if (!tail.cover.word.empty() && !sys.shift().allowed(a, tail.cover.word.front())) continue;
      const CoverState st = builder.extend(tail, a);
      const CylinderSample s = sampler.sample(st.cover.word);
      const double frac = verify_cover(st.cover, s.points, s.error_bound);
      BallCover half = st.cover;
      for (Ball& b : half.balls) b.radius *= 0.5;
      const double hf = verify_cover(half, s.points, s.error_bound);
      ++out.words;
      if (frac < 1.0) ++out.words_not_covered;
      out.min_fraction = std::min(out.min_fraction, frac);
      halved_in += static_cast<std::size_t>(std::llround(hf * s.points.size()));
      total += s.points.size();
      if (depth + 1 < max_len) walk(st, depth + 1);
    }
  };
  walk(builder.root(), 0);
  out.halved_pooled = static_cast<double>(halved_in) / static_cast<double>(total);
  return out;
}

// Random Markov measure supported on the allowed transitions of x.
ShiftMeasure random_markov(const Subshift& x, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.02, 1.0);
  const int ell = x.alphabet();
  std::vector<std::vector<double>> p(ell, std::vector<double>(ell, 0.0));
  for (int i = 0; i < ell; ++i) {
    double sum = 0.0;
    for (int j : x.successors(i)) sum += (p[i][j] = u(rng));
    for (double& v : p[i]) v /= sum;
  }
  return ShiftMeasure::markov(p);
}

template <class System>
std::pair<double, std::size_t> worst_gap(const System& sys, const Subshift& x, int measures, std::uint64_t seed) {
  PressureModel<System> model(x, sys);
  model.prepare();
  const double s = solve_dim_s(model).s_star;
  std::mt19937_64 rng(seed);
  double worst = INFINITY;
  for (int i = 0; i < measures; ++i) {
    const ShiftMeasure m = random_markov(x, rng);
    worst = std::min(worst, variational_gap(model, s, m, kDefaultOrbit, kDefaultSamples, seed + i).gap);
  }
  return {worst, static_cast<std::size_t>(measures)};
}

}  // namespace

int main() {
  const double log2 = std::log(2.0), log3 = std::log(3.0);
  std::cout << "fracdim acceptance (cli: " << FRACDIM_CLI << ")" << std::endl;

  criterion(1, [&] { return self_similar_dim_s("sierpinski", log3 / log2, 5.0); });

  criterion(2, [&] { return self_similar_dim_s("diag3", 1.0 + std::log(1.5) / log3, 10.0); });

  criterion(3, [&] {
    bool pass = true;
    std::string detail;
    for (const std::string name : {"sierpinski", "diag3", "diag3_perturbed"}) {
      const CliRun s = cli("dim-s", config(name));
      const CliRun b = cli("box-dim", config(name));
      const double dim_s = s.report["dim_s"]["value"].get<double>();
      const double box = b.report["box_dim"]["value"].get<double>();
      const std::size_t points = b.report["box_dim"]["points"].get<std::size_t>();
      const bool ok = box <= dim_s + 0.1 && points == 1000000 && b.seconds < 60.0 && b.exit_code == 0;
      pass = pass && ok;
      detail += name + ": box=" + fmt(box, 6) + " dim_s=" + fmt(dim_s, 8) + " points=" + std::to_string(points) +
                " runtime=" + fmt(b.seconds, 3) + "s" + (ok ? "" : " (fails)") + "; ";
    }
    return Outcome{pass, detail + "bound box <= dim_s + 0.1, runtime < 60 s"};
  });

  criterion(4, [&] {
    const CliRun r = cli("tn-bound", config("diag3"));
    bool pass = r.exit_code == 0;
    double prev = INFINITY, worst = 0.0;
    std::string detail;
    int rows = 0;
    for (const Json& row : r.report["tn_bound"]["table"]) {
      if (row["k"] != 1) continue;
      const int n = row["n"].get<int>();
      const double t = row["t_n"].get<double>();
      const double expect = 1.0 + std::log(1.5) / log3 + std::log(16.0) / (n * log3);
      worst = std::max(worst, std::abs(t - expect));
      pass = pass && std::abs(t - expect) <= 1e-6 && t < prev;
      prev = t;
      ++rows;
      detail += "t_" + std::to_string(n) + "=" + fmt(t, 10) + " ";
    }
    pass = pass && rows == 4;
    return Outcome{pass, detail + "max |t_n - closed form|=" + fmt(worst, 3) + " (tol 1e-6), decreasing"};
  });

  criterion(5, [&] {
    const Subshift x = fixtures::golden_mean();
    const IfsSystem sys = fixtures::interval_ifs(1.0 / 3.0, {0.0, 2.0 / 3.0}, x);
    std::vector<int> ns;
    for (int n = 2; n <= 24; ++n) ns.push_back(n);
    PressureModel<IfsSystem> model(x, sys);
    model.prepare(ns);
    bool monotone = true;
    double prev = INFINITY, last = 0.0;
    for (int n : ns) {
      const double pn = model.log_partition_sum(0.0, n) / n;
      monotone = monotone && pn <= prev + 1e-12;
      prev = last = pn;
    }
    const double golden = std::log(0.5 * (1.0 + std::sqrt(5.0)));
    const bool close = within(last, golden, 2e-2);
    return Outcome{monotone && close, "P_24=" + fmt(last, 8) + " log(golden)=" + fmt(golden, 8) + " (tol 0.02)" +
                                          (monotone ? ", non-increasing over n=2..24" : ", NOT non-increasing")};
  });

  criterion(6, [&] {
    const auto t0 = Clock::now();
    const std::vector<double> g(3, 0.0), h(3, std::log(0.5));
    const ThetaSlopeResult r = theta_slope(Subshift::full(3), g, h, default_r_grid());
    const double secs = seconds_since(t0);
    const bool pass = within(r.t, log3 / log2, 0.02) && secs < 10.0 && r.r_grid.front() == std::ldexp(1.0, -5) &&
                      r.r_grid.back() == std::ldexp(1.0, -18);
    return Outcome{pass, "t=" + fmt(r.t, 8) + " target=" + fmt(log3 / log2, 8) + " (tol 0.02) over r=2^-5..2^-18, runtime=" +
                             fmt(secs, 3) + "s (limit 10s)"};
  });

  criterion(7, [&] {
    const CliRun l = cli("dim-l", config("diag_pair"));
    const CliRun p = cli("pack-dim", config("diag_pair"));
    const double dl_u = measure_value(l.report["dim_l"], "uniform");
    const double dl_b = measure_value(l.report["dim_l"], "biased");
    const double pk_u = measure_value(p.report["pack_dim"], "uniform");
    const double pk_b = measure_value(p.report["pack_dim"], "biased");
    const bool a = within(dl_u, 1.0, 1e-6);
    const bool b = pk_u <= 1.1;
    const bool c = pk_b <= dl_b + 0.1;
    std::string detail = "uniform: dim_l=" + fmt(dl_u, 10) + (a ? " ok" : " (fails 1 +- 1e-6)") + ", pack=" + fmt(pk_u, 6) +
                         (b ? " ok" : " (fails <= 1.1)") + "; biased(0.7,0.3): dim_l=" + fmt(dl_b, 6) + ", pack=" +
                         fmt(pk_b, 6) + (c ? " ok" : " (fails pack <= dim_l + 0.1)");
    return Outcome{a && b && c, detail};
  });

  criterion(8, [&] {
    const fs::path cfg = config("repeller_2x3y");
    const CliRun s = cli("dim-s", cfg), b = cli("box-dim", cfg), l = cli("dim-l", cfg), p = cli("pack-dim", cfg);
    const double ds = s.report["dim_s"]["value"].get<double>();
    const double box = b.report["box_dim"]["value"].get<double>();
    const double dl = measure_value(l.report["dim_l"], "uniform");
    const double pk = measure_value(p.report["pack_dim"], "uniform");
    const bool ok_s = within(ds, 2.0, 1e-6), ok_b = within(box, 2.0, 0.1), ok_l = within(dl, 2.0, 1e-6), ok_p = pk <= 2.1;
    return Outcome{ok_s && ok_b && ok_l && ok_p,
                   "dim_s*=" + fmt(ds, 10) + (ok_s ? "" : " (fails)") + " box=" + fmt(box, 6) + (ok_b ? "" : " (fails)") +
                       " dim_l*=" + fmt(dl, 10) + (ok_l ? "" : " (fails)") + " pack=" + fmt(pk, 6) +
                       (ok_p ? "" : " (fails)") + "; tolerances 1e-6, 0.1, 1e-6, <= 2.1"};
  });

  criterion(9, [&] {
    bool pass = true;
    std::string detail;
    const std::vector<std::pair<std::string, IfsSystem>> systems{{"sierpinski", fixtures::sierpinski()},
                                                                 {"diag3", fixtures::diag3()}};
    for (const auto& [name, sys] : systems) {
      const SweepResult r = cover_sweep(sys, 1, 8, 10000, 0x51);
      const bool ok = r.words_not_covered == 0 && r.halved_pooled < 0.95;
      pass = pass && ok;
      detail += name + ": words=" + std::to_string(r.words) + " min covered=" + fmt(r.min_fraction, 6) +
                " halved pooled=" + fmt(r.halved_pooled, 4) + (ok ? "" : " (fails)") + "; ";
    }
    return Outcome{pass, detail + "all words of length 1..8, k=1, 1e4 points each"};
  });

  criterion(10, [&] {
    bool pass = true;
    std::string detail;
    std::uint64_t seed = 1000;
    for (const std::string name :
         {"sierpinski", "diag3", "diag3_perturbed", "diag_pair", "golden_mean", "repeller_2x3y"}) {
      const RunConfig c = load_config(config(name).string());
      const auto [worst, n] = c.kind == SystemKind::Ifs ? worst_gap(*c.ifs, c.shift, 100, seed)
                                                        : worst_gap(*c.repeller, c.shift, 100, seed);
      seed += 1000;
      const bool ok = worst >= -0.02;
      pass = pass && ok;
      detail += name + " min gap=" + fmt(worst, 4) + (ok ? "" : " (fails)") + "; ";
      (void)n;
    }
    return Outcome{pass, detail + "100 random Markov measures each, bound gap >= -0.02"};
  });

  criterion(11, [&] {
    const auto t0 = Clock::now();
    const fixtures::SuiteResult a = fixtures::submultiplicativity_suite(10000, 1);
    const fixtures::SuiteResult b = fixtures::product_spectrum_suite(2000, 2);
    const fixtures::SuiteResult c = fixtures::stopping_partition_suite(1000, 3);
    const double secs = seconds_since(t0);
    const bool pass = a.failures == 0 && b.failures == 0 && c.failures == 0 && secs < 60.0;
    return Outcome{pass, "sub-multiplicativity " + std::to_string(a.failures) + "/" + std::to_string(a.cases) +
                             " failed, dense-product " + std::to_string(b.failures) + "/" + std::to_string(b.cases) +
                             " failed, partition " + std::to_string(c.failures) + "/" + std::to_string(c.cases) +
                             " failed, runtime=" + fmt(secs, 3) + "s (limit 60s)"};
  });

  std::cout << (failures == 0 ? "all criteria PASS" : std::to_string(failures) + " criterion/criteria FAIL") << std::endl;
  return failures == 0 ? 0 : 1;
}
