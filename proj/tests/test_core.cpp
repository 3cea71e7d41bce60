#include <cmath>
#include <numbers>
#include <stdexcept>

#include <gtest/gtest.h>

#include "stpp/core.hpp"
#include "stpp/simulate.hpp"

using namespace stpp;

namespace {
Window unit_window() { return Window(Rect{0, 1, 0, 1}, Interval{0, 1}); }
}  // namespace

TEST(BallVolume, KnownValues) {
  EXPECT_NEAR(ball_volume(1.0, 1.0), 2.0 * std::numbers::pi, 1e-15);
  EXPECT_EQ(ball_volume(0.0, 5.0), 0.0);
  EXPECT_NEAR(ball_volume(2.0, 0.5), 4.0 * std::numbers::pi, 1e-14);
}

TEST(BallVolume, NegativeInputIsDomainError) {
  EXPECT_THROW(ball_volume(-1.0, 1.0), std::domain_error);
  EXPECT_THROW(ball_volume(1.0, -0.1), std::domain_error);
}

TEST(Window, RejectsDegenerateBounds) {
  EXPECT_THROW(Window(Rect{0, 0, 0, 1}, Interval{0, 1}), Error);
  EXPECT_THROW(Window(Rect{0, 1, 0, 1}, Interval{1, 1}), Error);
}

TEST(Window, MaskAreaAndContainment) {
  // L-shape: unit square minus the top-right quarter
  Polygon L{{0, 0}, {1, 0}, {1, 0.5}, {0.5, 0.5}, {0.5, 1}, {0, 1}};
  const auto w = Window::from_polygon(L, Interval{0, 2});
  EXPECT_NEAR(w.area(), 0.75, 1e-15);
  EXPECT_NEAR(w.volume(), 1.5, 1e-15);
  EXPECT_TRUE(w.contains(Vec2{0.25, 0.75}));
  EXPECT_FALSE(w.contains(Vec2{0.75, 0.75}));
  EXPECT_NEAR(w.boundary_distance(Vec2{0.45, 0.1}), 0.1, 1e-12);
  EXPECT_NEAR(w.boundary_distance(Vec2{0.4, 0.4}), std::sqrt(0.02), 1e-12);
}

TEST(Pattern, SortedByTimeThenSpace) {
  SpaceTimePattern p({{0.5, 0.5, 0.7}, {0.2, 0.1, 0.3}, {0.1, 0.9, 0.3}}, unit_window());
  ASSERT_EQ(p.size(), 3u);
  EXPECT_EQ(p[0], (SpaceTimePoint{0.1, 0.9, 0.3}));
  EXPECT_EQ(p[1], (SpaceTimePoint{0.2, 0.1, 0.3}));
  EXPECT_EQ(p[2].t, 0.7);
}

TEST(Pattern, RejectsOutsideAndNonFinite) {
  EXPECT_THROW(SpaceTimePattern({{1.5, 0.5, 0.5}}, unit_window()), Error);
  EXPECT_THROW(SpaceTimePattern({{NAN, 0.5, 0.5}}, unit_window()), Error);
}

TEST(Pattern, DuplicatesRejectedUnlessJitterEnabled) {
  std::vector<SpaceTimePoint> pts{{0.5, 0.5, 0.5}, {0.5, 0.5, 0.5}, {0.2, 0.2, 0.2}};
  EXPECT_THROW(SpaceTimePattern(pts, unit_window()), Error);
  SpaceTimePattern p(pts, unit_window(), PatternOptions{DuplicatePolicy::jitter, 7});
  ASSERT_EQ(p.size(), 3u);
  EXPECT_FALSE(p[1] == p[2]);
  for (const auto& y : p.points()) {
    if (y.t > 0.4) {
      EXPECT_NEAR(y.x1, 0.5, 1e-9);
      EXPECT_NEAR(y.t, 0.5, 1e-9);
    }
  }
}

TEST(CountIn, EmptyAndFullWindow) {
  const SpaceTimePattern empty(unit_window());
  EXPECT_EQ(count_in(empty, Box{Rect{0, 1, 0, 1}, Interval{0, 1}}), 0u);
  SpaceTimePattern p({{0.1, 0.1, 0.1}, {0.2, 0.3, 0.4}, {0.3, 0.3, 0.5}}, unit_window());
  EXPECT_EQ(count_in(p, Box{Rect{0, 0.5, 0, 0.5}, Interval{0, 0.6}}), 3u);
  const auto sim = simulate_poisson(ConstantIntensity{500}, unit_window(), 3);
  EXPECT_EQ(count_in(sim, Box{Rect{0, 1, 0, 1}, Interval{0, 1}}), sim.size());
}

TEST(CountIn, AdditiveOverDisjointRegions) {
  const auto sim = simulate_poisson(ConstantIntensity{800}, unit_window(), 11);
  const auto a = count_in(sim, Box{Rect{0, 0.4, 0, 1}, Interval{0, 1}});
  const auto b = count_in(sim, Box{Rect{0.4, 1, 0, 1}, Interval{0, 1}});
  // the shared edge has probability zero of holding a point
  EXPECT_EQ(a + b, sim.size());
  const auto c = count_in(sim, Box{Rect{0, 1, 0, 1}, Interval{0, 0.25}});
  const auto d = count_in(sim, Box{Rect{0, 1, 0, 1}, Interval{0.25, 1}});
  EXPECT_EQ(c + d, sim.size());
}

TEST(Project, EmptyAndExample) {
  auto [s0, t0] = project(SpaceTimePattern(unit_window()));
  EXPECT_TRUE(s0.empty());
  EXPECT_TRUE(t0.empty());
  const Window w(Rect{0, 1, 0, 1}, Interval{0, 10});
  auto [s, t] = project(SpaceTimePattern({{0.1, 0.2, 5}, {0.3, 0.4, 7}}, w));
  ASSERT_EQ(s.size(), 2u);
  EXPECT_EQ(s.points[0], (Vec2{0.1, 0.2}));
  EXPECT_EQ(s.points[1], (Vec2{0.3, 0.4}));
  EXPECT_EQ(t.times, (std::vector<double>{5, 7}));
}

TEST(Project, CardinalityMatchesPattern) {
  const auto sim = simulate_poisson(ConstantIntensity{300}, unit_window(), 5);
  auto [s, t] = project(sim);
  EXPECT_EQ(s.size(), sim.size());
  EXPECT_EQ(t.size(), sim.size());
}

TEST(ScalarField, ConstantIntegratesToArea) {
  const Window w(Rect{-1, 2, 0, 0.5}, Interval{0, 4});
  ScalarField f(spatial_grid(w, 37, 23), 1.0);
  EXPECT_NEAR(f.integrate(), w.area(), 1e-6 * w.area());
  ScalarField g(spacetime_grid(w, 10, 10, 8), 1.0);
  EXPECT_NEAR(g.integrate(), w.volume(), 1e-6 * w.volume());
  ScalarField h(temporal_grid(w, 13), 1.0);
  EXPECT_NEAR(h.integrate(), 4.0, 1e-12);
}

TEST(ScalarField, IntegrateIsLinearAndExactForCellConstant) {
  const Window w(Rect{0, 1, 0, 1}, Interval{0, 1});
  const auto g = spatial_grid(w, 8, 4);
  ScalarField a(g), b(g), c(g);
  double expected = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    a[i] = static_cast<double>(i % 5);
    b[i] = std::sqrt(static_cast<double>(i));
    c[i] = 2.0 * a[i] - 3.0 * b[i];
    expected += a[i] * g.cell_area();
  }
  EXPECT_NEAR(a.integrate(), expected, 1e-12);
  EXPECT_NEAR(c.integrate(), 2.0 * a.integrate() - 3.0 * b.integrate(), 1e-12);
}

TEST(ScalarField, MaskedGridIntegratesMaskedCellsOnly) {
  Polygon L{{0, 0}, {1, 0}, {1, 0.5}, {0.5, 0.5}, {0.5, 1}, {0, 1}};
  const auto w = Window::from_polygon(L, Interval{0, 1});
  ScalarField f(spatial_grid(w, 64, 64), 1.0);
  EXPECT_NEAR(f.integrate(), 0.75, 1e-12);
  EXPECT_FALSE(f.at(Vec2{0.9, 0.9}).has_value());
  EXPECT_EQ(f.at(Vec2{0.1, 0.9}).value(), 1.0);
}

TEST(ScalarField, InterpolationReproducesLinearFunctions) {
  const Window w(Rect{0, 1, 0, 1}, Interval{0, 1});
  const auto g = spacetime_grid(w, 10, 12, 9);
  ScalarField f(g);
  auto lin = [](double x, double y, double t) { return 1.0 + 2.0 * x - 0.5 * y + 3.0 * t; };
  for (std::size_t it = 0; it < g.nt(); ++it)
    for (std::size_t iy = 0; iy < g.ny(); ++iy)
      for (std::size_t ix = 0; ix < g.nx(); ++ix)
        f[g.flat(ix, iy, it)] = lin(g.x1.center(ix), g.x2.center(iy), g.t.center(it));
  for (double x : {0.11, 0.5, 0.83})
    for (double t : {0.2, 0.61}) EXPECT_NEAR(f.interpolate(Vec2{x, 0.4}, t).value(), lin(x, 0.4, t), 1e-12);
}

TEST(Geometry, ClipHalfplaneAndRect) {
  const Polygon sq = rect_polygon(Rect{0, 1, 0, 1});
  EXPECT_NEAR(polygon_area(clip_halfplane(sq, 1, 1, 1)), 0.5, 1e-15);
  EXPECT_NEAR(polygon_area(clip_rect(sq, Rect{0.5, 2, -1, 0.25})), 0.125, 1e-15);
  EXPECT_TRUE(clip_halfplane(sq, 1, 0, -1).empty());
}

TEST(Parallel, SubstreamsAreReproducibleAndDistinct) {
  auto a = substream(42, 3), b = substream(42, 3), c = substream(42, 4);
  const auto x = a();
  EXPECT_EQ(x, b());
  EXPECT_NE(x, c());
}

TEST(Parallel, ParallelForPropagatesExceptions) {
  set_thread_count(4);
  EXPECT_THROW(parallel_for(100, [](std::size_t i) {
                 if (i == 57) throw Error("boom");
               }),
               Error);
  set_thread_count(0);
}
