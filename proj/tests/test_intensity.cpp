#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include <gtest/gtest.h>

#include "stpp/intensity.hpp"
#include "stpp/simulate.hpp"
#include "stpp/voronoi.hpp"

using namespace stpp;

namespace {
const Window kUnit(Rect{0, 1, 0, 1}, Interval{0, 1});

// brute-force kernel mass of N(c, b^2 I) inside the rectangle by 2D Simpson
double mass_simpson(const Vec2& c, double b, const Rect& r, int n = 400) {
  auto w = [n](int i) { return (i == 0 || i == n) ? 1.0 : (i % 2 ? 4.0 : 2.0); };
  const double hx = r.width() / n, hy = r.height() / n;
  double s = 0.0;
  for (int i = 0; i <= n; ++i)
    for (int j = 0; j <= n; ++j) {
      const double x = r.lo1 + i * hx, y = r.lo2 + j * hy;
      const double d2 = (x - c.x1) * (x - c.x1) + (y - c.x2) * (y - c.x2);
      s += w(i) * w(j) * std::exp(-0.5 * d2 / (b * b));
    }
  return s * hx * hy / 9.0 / (2.0 * std::numbers::pi * b * b);
}
}  // namespace

TEST(DiggleCorrection, InteriorEdgeAndCorner) {
  const KernelSpec k{0.01};
  EXPECT_NEAR(diggle_correction(Vec2{0.5, 0.5}, k, kUnit), 1.0, 1e-12);
  EXPECT_NEAR(diggle_correction(Vec2{0.5, 0.0}, k, kUnit), 0.5, 1e-12);
  EXPECT_NEAR(diggle_correction(Vec2{0.0, 0.0}, k, kUnit), 0.25, 1e-12);
  EXPECT_NEAR(diggle_correction_time(0.0, k, Interval{0, 1}), 0.5, 1e-12);
}

TEST(DiggleCorrection, MatchesNumericalIntegration) {
  const KernelSpec k{0.2};
  for (Vec2 c : {Vec2{0.1, 0.3}, Vec2{0.9, 0.95}, Vec2{0.5, 0.5}})
    EXPECT_NEAR(diggle_correction(c, k, kUnit), mass_simpson(c, 0.2, kUnit.rect()), 1e-8);
}

TEST(DiggleCorrection, MaskedWindowMatchesAnalyticRectangle) {
  // a rectangle given as a mask goes through the raster path
  const auto masked = Window::from_polygon(rect_polygon(Rect{0, 1, 0, 1}), Interval{0, 1});
  ASSERT_TRUE(masked.has_mask());
  const KernelSpec k{0.1};
  for (Vec2 c : {Vec2{0.05, 0.5}, Vec2{0.0, 0.0}, Vec2{0.3, 0.7}})
    EXPECT_NEAR(diggle_correction(c, k, masked), diggle_correction(c, k, kUnit), 1e-3);
}

TEST(DiggleCorrection, MaskedTriangleMatchesNumericalIntegration) {
  Polygon tri{{0, 0}, {1, 0}, {0, 1}};
  const auto w = Window::from_polygon(tri, Interval{0, 1});
  const KernelSpec k{0.15};
  const Vec2 c{0.3, 0.3};
  // independent: fine midpoint sum over points with x1 + x2 <= 1
  const int n = 2000;
  double s = 0.0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      const double x = (i + 0.5) / n, y = (j + 0.5) / n;
      if (x + y <= 1.0) s += gaussian2((x - c.x1) * (x - c.x1) + (y - c.x2) * (y - c.x2), 0.15);
    }
  s /= double(n) * n;
  EXPECT_NEAR(diggle_correction(c, k, w), s, 2e-3);
}

TEST(DiggleCorrection, ThrowsWhenKernelMassVanishes) {
  EXPECT_THROW(diggle_correction(Vec2{5.0, 5.0}, KernelSpec{0.01}, kUnit), Error);
  EXPECT_THROW(diggle_correction_time(3.0, KernelSpec{0.01}, Interval{0, 1}), Error);
  EXPECT_THROW(diggle_correction(Vec2{0.5, 0.5}, KernelSpec{0.0}, kUnit), Error);
}

TEST(EstimateLambdaS, MassEqualsCount) {
  for (std::uint64_t s = 0; s < 5; ++s) {
    const auto p = project(simulate_poisson(ConstantIntensity{300}, kUnit, s)).first;
    for (double b : {0.02, 0.05, 0.15}) {
      const auto est = estimate_lambda_s(p, KernelSpec{b}, spatial_grid(kUnit, 128, 128));
      EXPECT_NEAR(est.field.integrate(), static_cast<double>(p.size()), 5e-3 * static_cast<double>(p.size()));
    }
  }
}

TEST(EstimateLambdaS, MassEqualsCountOnMaskedWindow) {
  Polygon L{{0, 0}, {1, 0}, {1, 0.5}, {0.5, 0.5}, {0.5, 1}, {0, 1}};
  const auto w = Window::from_polygon(L, Interval{0, 1});
  const auto p = project(simulate_poisson(ConstantIntensity{400}, w, 3)).first;
  const auto est = estimate_lambda_s(p, KernelSpec{0.05}, spatial_grid(w, 128, 128));
  EXPECT_NEAR(est.field.integrate(), static_cast<double>(p.size()), 5e-3 * static_cast<double>(p.size()));
}

TEST(EstimateLambdaT, MassEqualsCount) {
  for (std::uint64_t s = 0; s < 5; ++s) {
    const auto t = project(simulate_poisson(ConstantIntensity{300}, kUnit, s)).second;
    for (double b : {0.01, 0.05, 0.2}) {
      const auto est = estimate_lambda_t(t, KernelSpec{b}, temporal_grid(kUnit, 1000));
      EXPECT_NEAR(est.field.integrate(), static_cast<double>(t.size()), 1e-3 * static_cast<double>(t.size()));
    }
  }
}

TEST(EstimateLambdaSt, MassEqualsCount) {
  const auto p = simulate_poisson(ConstantIntensity{500}, kUnit, 7);
  const auto est = estimate_lambda_st(p, KernelSpec{0.05}, KernelSpec{0.05}, spacetime_grid(kUnit, 64, 64, 100));
  EXPECT_NEAR(est.field.integrate(), static_cast<double>(p.size()), 5e-3 * static_cast<double>(p.size()));
}

TEST(EstimateLambda, EmptyPatternIsZeroWithWarning) {
  const SpaceTimePattern empty(kUnit);
  const auto est = estimate_lambda_st(empty, KernelSpec{0.1}, KernelSpec{0.1}, spacetime_grid(kUnit, 8, 8, 8));
  EXPECT_TRUE(est.empty_input);
  EXPECT_FALSE(est.warnings.empty());
  EXPECT_EQ(est.field.max(), 0.0);
  const auto s = estimate_lambda_s(SpatialPattern{{}, kUnit}, KernelSpec{0.1}, spatial_grid(kUnit, 8, 8));
  EXPECT_TRUE(s.empty_input);
}

TEST(EstimateLambdaS, SinglePointMatchesKernelFormula) {
  const SpatialPattern p{{Vec2{0.5, 0.5}}, kUnit};
  const double b = 0.1;
  const auto g = spatial_grid(kUnit, 50, 50);
  const auto est = estimate_lambda_s(p, KernelSpec{b}, g);
  const double e = diggle_correction_grid(Vec2{0.5, 0.5}, KernelSpec{b}, g);
  for (std::size_t ix : {0u, 20u, 24u, 49u}) {
    const Vec2 c{g.x1.center(ix), g.x2.center(31)};
    const double d2 = (c.x1 - 0.5) * (c.x1 - 0.5) + (c.x2 - 0.5) * (c.x2 - 0.5);
    EXPECT_NEAR(est.field[g.flat(ix, 31)], gaussian2(d2, b) / e, 1e-9);
  }
}

TEST(EstimateLambdaS, ReflectionEquivariance) {
  const auto p = project(simulate_poisson(ConstantIntensity{200}, kUnit, 12)).first;
  SpatialPattern q{{}, kUnit};
  for (const auto& x : p.points) q.points.push_back({1.0 - x.x1, x.x2});
  const auto g = spatial_grid(kUnit, 40, 40);
  const auto a = estimate_lambda_s(p, KernelSpec{0.07}, g);
  const auto b = estimate_lambda_s(q, KernelSpec{0.07}, g);
  for (std::size_t iy = 0; iy < 40; iy += 7)
    for (std::size_t ix = 0; ix < 40; ++ix)
      EXPECT_NEAR(a.field[g.flat(ix, iy)], b.field[g.flat(39 - ix, iy)], 1e-9 * (1.0 + a.field[g.flat(ix, iy)]));
}

TEST(EstimateLambdaSt, RetentionCorrectionRecoversIntensity) {
  double mean = 0.0;
  const int reps = 20;
  for (int s = 0; s < reps; ++s) {
    const auto p = simulate_poisson(ConstantIntensity{2000}, kUnit, static_cast<std::uint64_t>(s));
    const auto x = thin(p, ConstantRetention{0.025}, static_cast<std::uint64_t>(s) + 1000);
    SpaceTimeEstimateOptions o;
    o.retention = ConstantRetention{0.025};
    const auto est = estimate_lambda_st(x, KernelSpec{0.2}, KernelSpec{0.2}, spacetime_grid(kUnit, 16, 16, 16), o);
    mean += est.field.mean() / reps;
  }
  EXPECT_NEAR(mean, 2000.0, 200.0);
}

TEST(EstimateLambdaSt, RejectsOversizedGrid) {
  const auto p = simulate_poisson(ConstantIntensity{10}, kUnit, 1);
  SpaceTimeEstimateOptions o;
  o.memory_cap_bytes = 1024;
  EXPECT_THROW(estimate_lambda_st(p, KernelSpec{0.1}, KernelSpec{0.1}, spacetime_grid(kUnit, 16, 16, 16), o), Error);
}

TEST(KernelEvaluator, MatchesDirectSum) {
  const auto p = project(simulate_poisson(ConstantIntensity{300}, kUnit, 2)).first;
  const KernelSpec k{0.05};
  KernelEvaluator ev(p.points, k, kUnit);
  for (std::size_t q : {0u, 17u, 100u}) {
    if (q >= p.size()) continue;
    double direct = 0.0, loo = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double d2 = dist2(p.points[q], p.points[i]);
      if (d2 > std::pow(kernel_truncation * 0.05, 2)) continue;  // same support as the evaluator
      const double v = gaussian2(d2, 0.05) / diggle_correction(p.points[i], k, kUnit);
      direct += v;
      if (i != q) loo += v;
    }
    EXPECT_NEAR(ev(p.points[q]), direct, 1e-9 * direct);
    EXPECT_NEAR(ev(p.points[q], q), loo, 1e-9 * direct);
  }
}

TEST(Voronoi, CellsPartitionTheWindow) {
  const auto p = project(simulate_poisson(ConstantIntensity{500}, kUnit, 4)).first;
  const auto tess = voronoi_tessellation(p);
  double total = 0.0;
  for (const auto& c : tess.cells) total += c.area;
  EXPECT_NEAR(total, 1.0, 1e-9);
  // every generator lies inside its own cell
  for (std::size_t i = 0; i < p.size(); i += 37) EXPECT_TRUE(point_in_polygon(tess.cells[i].polygon, p.points[i]));
}

TEST(Voronoi, SinglePointCellIsTheWindow) {
  const Window w(Rect{0, 2, 0, 3}, Interval{0, 1});
  const auto tess = voronoi_tessellation(SpatialPattern{{Vec2{0.4, 0.4}}, w});
  ASSERT_EQ(tess.size(), 1u);
  EXPECT_NEAR(tess.cells[0].area, 6.0, 1e-12);
  EXPECT_NEAR(tess.cells[0].value, 1.0 / 6.0, 1e-12);
}

TEST(Voronoi, TwoPointsSplitAtBisector) {
  const auto tess = voronoi_tessellation(SpatialPattern{{Vec2{0.2, 0.5}, Vec2{0.6, 0.5}}, kUnit});
  EXPECT_NEAR(tess.cells[0].area, 0.4, 1e-12);
  EXPECT_NEAR(tess.cells[1].area, 0.6, 1e-12);
}

TEST(Voronoi, MedianEstimateNearTrueIntensity) {
  double acc = 0.0;
  for (std::uint64_t s = 0; s < 50; ++s) {
    const auto p = project(simulate_poisson(ConstantIntensity{1000}, kUnit, s)).first;
    const auto est = voronoi_intensity(p, 64, 64);
    std::vector<double> v(est.estimate.field.values().begin(), est.estimate.field.values().end());
    std::nth_element(v.begin(), v.begin() + v.size() / 2, v.end());
    acc += v[v.size() / 2] / 50;
  }
  EXPECT_NEAR(acc, 1000.0, 250.0);
}

TEST(Voronoi, MaskedWindowAreasSumToMaskArea) {
  Polygon L{{0, 0}, {1, 0}, {1, 0.5}, {0.5, 0.5}, {0.5, 1}, {0, 1}};
  const auto w = Window::from_polygon(L, Interval{0, 1});
  const auto p = project(simulate_poisson(ConstantIntensity{300}, w, 6)).first;
  const auto tess = voronoi_tessellation(p);
  double total = 0.0;
  for (const auto& c : tess.cells) total += c.area;
  EXPECT_NEAR(total, 0.75, 1e-9);
}

TEST(Voronoi, DuplicatesAndEmptyInputAreErrors) {
  EXPECT_THROW(voronoi_tessellation(SpatialPattern{{Vec2{0.1, 0.1}, Vec2{0.1, 0.1}}, kUnit}), Error);
  EXPECT_THROW(voronoi_tessellation(SpatialPattern{{}, kUnit}), Error);
}
