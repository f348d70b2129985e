#include <gtest/gtest.h>

#include <chrono>
#include <filesystem>
#include <cmath>
#include <map>
#include <tuple>
#include <random>

#include "property_suites.hpp"

using namespace fracdim;
using namespace fracdim::fixtures;

TEST(Properties, PhiSubmultiplicative) {
  const SuiteResult r = submultiplicativity_suite(10000, 1);
  EXPECT_EQ(r.cases, 10000u);
  EXPECT_EQ(r.failures, 0u) << r.first_failure;
}

TEST(Properties, ProductSpectrumMatchesDenseProduct) {
  const SuiteResult r = product_spectrum_suite(2000, 2);
  EXPECT_EQ(r.failures, 0u) << r.first_failure;
}

TEST(Properties, StoppingFamilyPartitions) {
  const SuiteResult r = stopping_partition_suite(1000, 3);
  EXPECT_GE(r.cases, 1000u);
  EXPECT_EQ(r.failures, 0u) << r.first_failure;
}

TEST(Properties, SpectraDescendAndConserveDeterminant) {
  std::mt19937_64 rng(4);
  for (int t = 0; t < 500; ++t) {
    const int d = 1 + t % 5;
    std::vector<SmallMatrix> mats;
    double det = 0.0;
    for (int i = 0; i < 1 + t % 40; ++i) {
      mats.push_back(random_matrix(rng, d, 0.6));
      det += mats.back().log_abs_det();
    }
    const SingularSpectrum s = product_spectrum(mats);
    for (int i = 1; i < d; ++i) ASSERT_LE(s[i], s[i - 1]);
    ASSERT_NEAR(s.log_abs_det(), det, 1e-8 * std::max(1.0, std::abs(det)));
  }
}

TEST(Properties, SftWordCountsMatchTransferPowers) {
  std::mt19937_64 rng(5);
  for (int t = 0; t < 50; ++t) {
    const int ell = 2 + t % 3;
    std::vector<std::vector<int>> a(ell, std::vector<int>(ell));
    for (auto& row : a) {
      for (int& v : row) v = static_cast<int>(rng() % 2);
      row[rng() % ell] = 1;
    }
    // Every symbol must also be entered.
    for (int j = 0; j < ell; ++j) a[rng() % ell][j] = 1;
    const Subshift x = Subshift::sft(a);
    Eigen::MatrixXd m(ell, ell);
    for (int i = 0; i < ell; ++i)
      for (int j = 0; j < ell; ++j) m(i, j) = a[i][j];
    Eigen::MatrixXd p = Eigen::MatrixXd::Identity(ell, ell);
    for (int n = 1; n <= 12; ++n) {
      EXPECT_EQ(x.word_count(n), p.sum()) << t << ' ' << n;
      p = p * m;
    }
  }
}

TEST(Properties, StoppingFamilyDepthBounds) {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(0.2, 0.5);
  for (int t = 0; t < 30; ++t) {
    std::vector<double> h(3);
    for (double& v : h) v = std::log(u(rng));
    const double worst = *std::max_element(h.begin(), h.end()), best = *std::min_element(h.begin(), h.end());
    const double r = std::pow(10.0, -1.0 - (t % 3));
    const StoppingFamily f = stopping_family(Subshift::full(3), letter_birkhoff_sup(h), r);
    EXPECT_GE(f.min_length, std::floor(std::log(r) / best));
    EXPECT_LE(f.max_length, std::ceil(std::log(r) / worst) + 1);
  }
}

TEST(Properties, EllipsoidCoverCountBound) {
  std::mt19937_64 rng(7);
  for (int t = 0; t < 400; ++t) {
    const int d = 1 + t % 3;
    const SmallMatrix j = random_matrix(rng, d, 0.1 + (t % 7));
    const int k = static_cast<int>(rng() % d);
    const BallCover c = ellipsoid_cover(j, Vec(d), 1.0, k);
    ASSERT_LE(static_cast<double>(c.balls.size()), c.certified_count_bound * (1.0 + 1e-12));
    for (const Ball& b : c.balls) ASSERT_NEAR(b.radius, c.certified_radius, 1e-12 * c.certified_radius);
  }
}

TEST(Properties, CoverWordProductFormula) {
  // Random admissible words up to length 12 on the shipped affine systems.
  std::mt19937_64 rng(8);
  // Covers for k = 1 on the diagonal system reach about 10^6 balls at length
  // 12, so that case gets one word per length.
  const std::vector<std::tuple<IfsSystem, int, int>> systems{
      {sierpinski(), 0, 48}, {sierpinski(), 1, 48}, {diag3(), 0, 48}, {diag3(), 1, 12}};
  for (const auto& [sys, k, trials] : systems) {
    const CoverBuilder<IfsSystem> b(sys, k);
    for (int t = 0; t < trials; ++t) {
      const Word w = random_admissible(sys.shift(), 1 + t % 12, rng);
      const BallCover c = b.cover(w);
      double log_r = std::log(c.base_radius), log_n = std::log(c.base_count);
      for (int a : w) {
        const SingularSpectrum sp = singular_values(sys.map(a).linear());
        log_r += sp[k];
        log_n += std::log(covering_constant(2));
        for (int i = 0; i < k; ++i) log_n += sp[i] - sp[k];
      }
      ASSERT_NEAR(std::log(c.certified_radius), log_r, 1e-12 * std::abs(log_r));
      ASSERT_LE(static_cast<double>(c.balls.size()), std::exp(log_n) * (1.0 + 1e-9));
      for (const Ball& ball : c.balls) ASSERT_NEAR(ball.radius, c.certified_radius, 1e-12 * c.certified_radius);
    }
  }
}

TEST(Properties, RepellerCoverWordProductFormula) {
  std::mt19937_64 rng(9);
  const RepellerSystem sys = repeller_2x3();
  const CoverBuilder<RepellerSystem> b(sys, 1);
  for (int t = 0; t < 20; ++t) {
    const Word w = random_admissible(sys.shift(), 1 + t % 8, rng);
    const BallCover c = b.cover(w);
    const double expect = std::log(c.base_radius) + (w.size() - 1) * std::log(1.0 / 3.0);
    ASSERT_NEAR(std::log(c.certified_radius), expect, 1e-12 * std::abs(expect));
  }
}

TEST(Properties, BoxCountMonotone) {
  for (std::uint64_t seed : {1u, 2u}) {
    const PointCloud c = chaos_game(diag3_perturbed(1e-2), uniform(3), 100000, 60, seed, 1);
    std::size_t prev = 0;
    for (int m = 0; m < 14; ++m) {
      const std::size_t n = box_count(c, std::ldexp(1.2, -m));
      ASSERT_GE(n, prev);
      prev = n;
    }
  }
}

TEST(Properties, LyapunovOutputsOrderedAndNegative) {
  std::mt19937_64 rng(10);
  for (int t = 0; t < 10; ++t) {
    const double eps = 0.002 * t;
    const IfsSystem sys = diag3_perturbed(eps);
    std::vector<double> p{1.0 + rng() % 5, 1.0 + rng() % 5, 1.0 + rng() % 5};
    const double sum = p[0] + p[1] + p[2];
    for (double& v : p) v /= sum;
    const LyapunovSpectrum ls = lyapunov_exponents(sys, ShiftMeasure::bernoulli(p), 60, 8, t);
    ASSERT_GE(ls.lambda[0], ls.lambda[1]);
    ASSERT_LT(ls.lambda[0], 0.0);
  }
}

TEST(Properties, AffinePressureSubadditiveOnDivisorChains) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-0.08, 0.08);
  for (int t = 0; t < 5; ++t) {
    const Box box = Box::unit(2);
    std::vector<SmoothMap> maps;
    for (int i = 0; i < 3; ++i) {
      const SmallMatrix a{{0.25 + u(rng), u(rng)}, {u(rng), 0.25 + u(rng)}};
      maps.push_back(SmoothMap::affine(a, {0.1 + 0.225 * i, 0.1 + 0.4 * (i % 2)}, box));
    }
    const IfsSystem sys(maps);
    PressureModel<IfsSystem> model(sys.shift(), sys);
    model.prepare({1, 2, 3, 4, 6, 8, 12});
    for (double s : {0.5, 1.2, 1.9, 2.6})
      for (auto [n, m] : {std::pair{1, 2}, {2, 4}, {4, 8}, {1, 3}, {3, 6}, {6, 12}, {4, 12}})
        ASSERT_LE(model.log_partition_sum(s, m) / m, model.log_partition_sum(s, n) / n + 1e-9) << s << ' ' << n << ' ' << m;
  }
}

TEST(Properties, VariationalGapOnRandomMarkovMeasures) {
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> u(0.05, 1.0);
  const IfsSystem sys = diag3();
  PressureModel<IfsSystem> model(sys.shift(), sys);
  model.prepare();
  const double s = solve_dim_s(model).s_star;
  for (int t = 0; t < 20; ++t) {
    std::vector<std::vector<double>> p(3, std::vector<double>(3));
    for (auto& row : p) {
      double sum = 0.0;
      for (double& v : row) sum += (v = u(rng));
      for (double& v : row) v /= sum;
    }
    EXPECT_GE(variational_gap(model, s, ShiftMeasure::markov(p), 100, 16, t).gap, -0.02);
  }
}

// Statistical: the q-quantile packing estimate of every configured measure
// against its Lyapunov dimension plus the verify tolerance. Registered as its
// own ctest entry.
TEST(Statistical, PackingBelowLyapunovDimensionOnShippedConfigs) {
  for (const auto& e : std::filesystem::directory_iterator(FRACDIM_CONFIG_DIR)) {
    if (e.path().extension() != ".json") continue;
    const RunConfig c = load_config(e.path().string());
    for (std::size_t i = 0; i < c.measures.size(); ++i) {
      const ShiftMeasure& m = c.measures[i].measure;
      auto estimate = [&](const auto& sys) {
        const LyapunovSpectrum ls = lyapunov_exponents(sys, m, kDefaultOrbit, kDefaultSamples, c.seed + i);
        const PointCloud cloud = chaos_game(sys, m, c.chaos_points, c.burn_in, c.seed + 100 + i);
        return std::pair{lyapunov_dimension(entropy(m), ls.lambda), local_dims(cloud).estimate};
      };
      const auto [dim_l, pack] = c.kind == SystemKind::Ifs ? estimate(*c.ifs) : estimate(*c.repeller);
      EXPECT_LE(pack, dim_l + c.verify_tolerance) << c.name << ':' << c.measures[i].name << " dim_l=" << dim_l;
    }
  }
}
