#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "support.hpp"

using namespace fracdim;

namespace {

// Points of y + J B(0, sqrt(d) r), boundary included.
std::vector<Vec> ellipsoid_points(const SmallMatrix& j, const Vec& y, double r, std::size_t n, std::uint64_t seed) {
  const int d = j.dim();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  std::uniform_real_distribution<double> u;
  std::vector<Vec> out;
  for (std::size_t i = 0; i < n; ++i) {
    Vec v(d);
    double norm = 0.0;
    for (int k = 0; k < d; ++k) {
      v[k] = g(rng);
      norm += v[k] * v[k];
    }
    const double rad = (i % 4 == 0 ? 1.0 : std::pow(u(rng), 1.0 / d)) * std::sqrt(static_cast<double>(d)) * r;
    v = (rad / std::sqrt(norm)) * v;
    out.push_back(y + j * v);
  }
  return out;
}

PointCloud uniform_square(std::size_t n, std::uint64_t seed) {
  PointCloud c;
  c.d = 2;
  c.domain = Box::unit(2);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u;
  for (std::size_t i = 0; i < n; ++i) c.push_back(Vec{u(rng), u(rng)}, 0);
  return c;
}

double log_ratio(std::size_t a, double b) { return std::abs(std::log(static_cast<double>(a) / b)); }

}  // namespace

TEST(EllipsoidCover, Identity) {
  const BallCover c = ellipsoid_cover(SmallMatrix::identity(2), Vec{0.0, 0.0}, 1.0, 0);
  EXPECT_LE(c.balls.size(), 16u);
  EXPECT_NEAR(c.certified_count_bound, 16.0, 1e-12);
  EXPECT_EQ(verify_cover(c, ellipsoid_points(SmallMatrix::identity(2), Vec{0.0, 0.0}, 1.0, 5000, 1), 1e-12), 1.0);
}

TEST(EllipsoidCover, DiagonalSecondIndex) {
  const double r = 0.7;
  const BallCover c = ellipsoid_cover(fixtures::diag23(), Vec{0.3, 0.2}, r, 1);
  EXPECT_LE(c.balls.size(), 24u);
  EXPECT_NEAR(c.certified_count_bound, 24.0, 1e-12);
  for (const Ball& b : c.balls) EXPECT_NEAR(b.radius, r / 3.0, 1e-15);
  EXPECT_EQ(verify_cover(c, ellipsoid_points(fixtures::diag23(), Vec{0.3, 0.2}, r, 5000, 2), 1e-12), 1.0);
}

TEST(EllipsoidCover, ConformalAnyIndex) {
  const SmallMatrix rot{{0.0, -0.4}, {0.4, 0.0}};
  for (int k = 0; k < 2; ++k) {
    const BallCover c = ellipsoid_cover(rot, Vec{0.0, 0.0}, 1.0, k);
    EXPECT_LE(c.balls.size(), 16u);
    EXPECT_EQ(verify_cover(c, ellipsoid_points(rot, Vec{0.0, 0.0}, 1.0, 5000, 3), 1e-12), 1.0);
  }
}

TEST(EllipsoidCover, RandomMatricesRespectBound) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int d = 1; d <= 3; ++d)
    for (int trial = 0; trial < 30; ++trial) {
      SmallMatrix j(d);
      for (int a = 0; a < d; ++a)
        for (int b = 0; b < d; ++b) j(a, b) = u(rng) + (a == b ? 1.2 : 0.0);
      const int k = trial % d;
      const Vec y(d);
      const BallCover c = ellipsoid_cover(j, y, 0.5, k);
      EXPECT_LE(static_cast<double>(c.balls.size()), c.certified_count_bound * (1.0 + 1e-12));
      EXPECT_EQ(verify_cover(c, ellipsoid_points(j, y, 0.5, 2000, 10 + trial), 1e-12), 1.0);
    }
}

TEST(CoverWord, SimilaritiesShrinkGeometrically) {
  const IfsSystem sys = fixtures::sierpinski();
  const CoverBuilder<IfsSystem> b(sys, 0);
  const BallCover base = b.cover(Word{});
  for (const Word& w : {Word{0}, Word{1, 2}, Word{2, 0, 1, 1}}) {
    const BallCover c = b.cover(w);
    const double n = static_cast<double>(w.size());
    EXPECT_NEAR(c.certified_radius, std::pow(0.5, n) * base.base_radius, 1e-15);
    EXPECT_LE(static_cast<double>(c.balls.size()), base.base_count * std::pow(16.0, n));
    EXPECT_NEAR(c.certified_count_bound, base.base_count * std::pow(16.0, n), 1e-9);
  }
}

TEST(CoverWord, SharedDiagonalSecondIndex) {
  const IfsSystem sys = fixtures::diag3();
  const CoverBuilder<IfsSystem> b(sys, 1);
  const BallCover base = b.cover(Word{});
  for (const Word& w : {Word{0}, Word{1, 2}, Word{2, 0, 1}}) {
    const BallCover c = b.cover(w);
    const double n = static_cast<double>(w.size());
    EXPECT_NEAR(c.certified_radius, std::pow(1.0 / 3.0, n) * base.base_radius, 1e-15);
    EXPECT_LE(static_cast<double>(c.balls.size()), base.base_count * std::pow(24.0, n) * (1.0 + 1e-12));
  }
}

TEST(CoverWord, EmptyWordIsBaseCover) {
  const IfsSystem sys = fixtures::sierpinski();
  const BallCover c = cover_word(sys, Word{}, 0);
  EXPECT_EQ(static_cast<double>(c.balls.size()), c.base_count);
  EXPECT_EQ(c.certified_radius, c.base_radius);
}

TEST(CoverWord, InadmissibleWordThrows) {
  const IfsSystem sys = fixtures::interval_ifs(1.0 / 3.0, {0.0, 2.0 / 3.0}, fixtures::golden_mean());
  EXPECT_THROW(cover_word(sys, Word{1, 1}, 0), Error);
}

TEST(VerifyCover, SierpinskiCylinder) {
  const IfsSystem sys = fixtures::sierpinski();
  const Word w{0, 2, 1, 1, 0};
  const BallCover c = cover_word(sys, w, 0);
  const CylinderSample s = cylinder_sample(sys, w, 10000, 3);
  EXPECT_EQ(verify_cover(c, s.points, s.error_bound), 1.0);
  BallCover half = c;
  for (Ball& b : half.balls) b.radius *= 0.5;
  EXPECT_LT(verify_cover(half, s.points, s.error_bound), 1.0);
}

TEST(VerifyCover, EmptyWordCoversWholeCloud) {
  const IfsSystem sys = fixtures::diag3();
  const BallCover c = cover_word(sys, Word{}, 1);
  const PointCloud cloud = chaos_game(sys, fixtures::uniform(3), 20000, 60, 2, 1);
  std::vector<Vec> pts;
  for (std::size_t i = 0; i < cloud.size(); ++i) pts.push_back(cloud.point(i));
  EXPECT_EQ(verify_cover(c, pts, cloud.error_bound), 1.0);
}

TEST(VerifyCover, RepellerCylinder) {
  const RepellerSystem sys = fixtures::repeller_2x3();
  const Word w{0, 4, 3, 5};
  const BallCover c = cover_word(sys, w, 1);
  const CylinderSample s = cylinder_sample(sys, w, 5000, 4);
  EXPECT_EQ(verify_cover(c, s.points, s.error_bound), 1.0);
}

TEST(CylinderSample, PointsLieInCylinder) {
  const IfsSystem sys = fixtures::interval_ifs(1.0 / 3.0, {0.0, 2.0 / 3.0});
  const CylinderSample s = cylinder_sample(sys, Word{1, 0}, 1000, 9);
  for (const Vec& p : s.points) {
    EXPECT_GE(p[0], 2.0 / 3.0 - 1e-12);
    EXPECT_LE(p[0], 2.0 / 3.0 + 1.0 / 9.0 + 1e-12);
  }
}

TEST(BoxCount, UniformSquare) {
  const PointCloud c = uniform_square(1000000, 1);
  for (int n = 0; n <= 8; ++n) EXPECT_EQ(box_count(c, std::ldexp(1.0, -n)), std::size_t{1} << (2 * n)) << n;
}

TEST(BoxCount, SinglePoint) {
  PointCloud c;
  c.d = 2;
  c.push_back(Vec{0.3, 0.7}, 0);
  for (double delta : {1.0, 1e-3, 1e-9}) EXPECT_EQ(box_count(c, delta), 1u);
}

TEST(BoxCount, SierpinskiGrowth) {
  const PointCloud c = chaos_game(fixtures::sierpinski(), fixtures::uniform(3), 1000000, 60, 3, 1);
  std::size_t prev = 0;
  for (int n = 0; n <= 10; ++n) {
    const std::size_t nb = box_count(c, std::ldexp(1.0, -n));
    EXPECT_LE(log_ratio(nb, std::pow(3.0, n)), std::log(2.0)) << n;
    EXPECT_GE(nb, prev);
    prev = nb;
  }
}

TEST(BoxCount, ThreadCountDoesNotMatter) {
  const PointCloud c = chaos_game(fixtures::diag3(), fixtures::uniform(3), 300000, 60, 3, 1);
  for (double delta : {0.1, 0.01, 0.001}) EXPECT_EQ(box_count(c, delta, 1), box_count(c, delta, 3));
}

TEST(BoxDimension, UniformSquare) {
  EXPECT_NEAR(box_dimension(uniform_square(1000000, 2)).slope, 2.0, 0.05);
}

TEST(BoxDimension, Sierpinski) {
  const PointCloud c = chaos_game(fixtures::sierpinski(), fixtures::uniform(3), 1000000, 60, 4, 1);
  EXPECT_NEAR(box_dimension(c).slope, std::log(3.0) / std::log(2.0), 0.05);
}

TEST(BoxDimension, SinglePoint) {
  PointCloud c;
  c.d = 2;
  c.domain = Box::unit(2);
  for (int i = 0; i < 100; ++i) c.push_back(Vec{0.3, 0.7}, 0);
  EXPECT_NEAR(box_dimension(c).slope, 0.0, 1e-12);
}

TEST(BoxDimension, GridBelowResolutionRejected) {
  PointCloud c = chaos_game(fixtures::sierpinski(), fixtures::uniform(3), 1000, 10, 1, 1);
  try {
    box_dimension(c, {0.5, 0.25, c.error_bound});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::InsufficientResolution);
  }
}

TEST(CoverConsistency, CertifiedCountBoundsBoxSlope) {
  // log N(delta) grows no faster than the log count bound per unit of log(1/radius).
  const IfsSystem sys = fixtures::diag3();
  const CoverBuilder<IfsSystem> b(sys, 1);
  const PointCloud c = chaos_game(sys, fixtures::uniform(3), 1000000, 60, 6, 1);
  const double box = box_dimension(c).slope;
  const Word w{0, 1, 2, 0, 1, 2};
  const BallCover cov = b.cover(w);
  const double per_letter = std::log(cov.certified_count_bound / cov.base_count) / w.size();
  const double rate = per_letter + std::log(3.0);  // 3 cylinders per level
  EXPECT_GE(rate / std::log(3.0), box - 0.1);
}
