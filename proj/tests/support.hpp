#pragma once

// Systems shared by the test binaries.

#include <cmath>
#include <vector>

#include "fracdim/fracdim.hpp"

namespace fracdim::fixtures {

inline SmallMatrix diag23() { return SmallMatrix::diagonal({0.5, 1.0 / 3.0}); }

inline IfsSystem sierpinski() {
  const Box u = Box::unit(2);
  const SmallMatrix s = SmallMatrix::diagonal({0.5, 0.5});
  return IfsSystem({SmoothMap::affine(s, {0, 0}, u), SmoothMap::affine(s, {0.5, 0}, u), SmoothMap::affine(s, {0, 0.5}, u)});
}

inline IfsSystem diag3() {
  const Box u = Box::unit(2);
  const SmallMatrix t = diag23();
  return IfsSystem({SmoothMap::affine(t, {0, 0}, u), SmoothMap::affine(t, {0.5, 0}, u), SmoothMap::affine(t, {0, 1.0 / 3.0}, u)});
}

inline IfsSystem diag3_perturbed(double eps) {
  const Box u{{-0.1, -0.1}, {1.1, 1.1}};
  const SmallMatrix t = diag23();
  return IfsSystem({SmoothMap::perturbed(t, {0, 0}, eps, u), SmoothMap::perturbed(t, {0.5, 0}, eps, u),
                    SmoothMap::perturbed(t, {0, 1.0 / 3.0}, eps, u)});
}

inline IfsSystem diag_pair() {
  const Box u = Box::unit(2);
  const SmallMatrix t = diag23();
  return IfsSystem({SmoothMap::affine(t, {0, 0}, u), SmoothMap::affine(t, {0.5, 2.0 / 3.0}, u)});
}

/// Inverse branches of (x, y) -> (2x, 3y) mod 1 on the 2 x 3 rectangle grid.
inline RepellerSystem repeller_2x3() {
  std::vector<Box> regions;
  for (int a = 0; a < 2; ++a)
    for (int b = 0; b < 3; ++b) regions.push_back(Box{{a / 2.0, b / 3.0}, {(a + 1) / 2.0, (b + 1) / 3.0}});
  std::vector<Branch> branches;
  for (int i = 0; i < 6; ++i)
    for (int j = 0; j < 6; ++j)
      branches.push_back({i, j, SmoothMap::affine(diag23(), {(i / 3) / 2.0, (i % 3) / 3.0}, regions[j])});
  return RepellerSystem(Subshift::full(6), regions, branches);
}

inline Subshift golden_mean() { return Subshift::sft({{1, 1}, {1, 0}}); }

inline IfsSystem interval_ifs(double ratio, std::vector<double> offsets, std::optional<Subshift> x = std::nullopt) {
  const Box u{{0.0}, {1.0}};
  std::vector<SmoothMap> maps;
  for (double b : offsets) maps.push_back(SmoothMap::affine(SmallMatrix{{ratio}}, {b}, u));
  return IfsSystem(std::move(maps), std::move(x));
}

inline ShiftMeasure uniform(int ell) { return ShiftMeasure::bernoulli(std::vector<double>(ell, 1.0 / ell)); }

inline double fib(int n) {
  double a = 0, b = 1;
  for (int i = 0; i < n; ++i) {
    const double c = a + b;
    a = b;
    b = c;
  }
  return a;
}

}  // namespace fracdim::fixtures
