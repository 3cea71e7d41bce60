#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "stpp/homogenize.hpp"

using namespace stpp;

namespace {
const Window kUnit(Rect{0, 1, 0, 1}, Interval{0, 1});

double loss_at(const std::vector<double>& v, const std::vector<double>& a, double nu, double mu) {
  double area = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i)
    if (v[i] >= mu) area += a[i];
  return (nu - mu * area) * (nu - mu * area);
}

// composite Simpson on [0,1]^2 with n intervals per axis (n even)
template <class F>
double simpson2(F&& f, int n) {
  auto w = [n](int i) { return (i == 0 || i == n) ? 1.0 : (i % 2 ? 4.0 : 2.0); };
  double s = 0.0;
  for (int i = 0; i <= n; ++i)
    for (int j = 0; j <= n; ++j) s += w(i) * w(j) * f(Vec2{double(i) / n, double(j) / n});
  return s / (9.0 * n * n);
}
}  // namespace

TEST(LevelSet, ZeroAndAboveMaximum) {
  const auto p = project(simulate_poisson(ConstantIntensity{200}, kUnit, 1)).first;
  const auto tess = voronoi_tessellation(p);
  const auto all = level_set(tess, 0.0);
  EXPECT_EQ(all.cells.size(), p.size());
  EXPECT_NEAR(all.area, 1.0, 1e-9);
  double vmax = 0.0;
  for (const auto& c : tess.cells) vmax = std::max(vmax, c.value);
  const auto none = level_set(tess, vmax * 1.0001);
  EXPECT_TRUE(none.cells.empty());
  EXPECT_EQ(none.area, 0.0);
  EXPECT_THROW(level_set(tess, -1.0), Error);
}

TEST(LevelSet, NestedInMu) {
  const auto p = project(simulate_poisson(ConstantIntensity{300}, kUnit, 2)).first;
  const auto tess = voronoi_tessellation(p);
  const auto a = level_set(tess, 200.0), b = level_set(tess, 400.0);
  EXPECT_TRUE(std::includes(a.cells.begin(), a.cells.end(), b.cells.begin(), b.cells.end()));
  EXPECT_GE(a.area, b.area);
}

TEST(MinimizeLoss, ClosedFormPicksSmallestMinimiser) {
  // zero loss at mu = 0.5 (all cells) and at mu = 5/3 (cells >= 2)
  const std::vector<double> v{4, 2, 1}, a{0.1, 0.2, 0.7};
  HomogenizeConfig cfg;
  cfg.target = 0.5;
  const auto m = minimize_loss(v, a, cfg);
  EXPECT_NEAR(m.mu, 0.5, 1e-15);
  EXPECT_NEAR(m.loss, 0.0, 1e-24);
  EXPECT_EQ(m.cells, 3u);
  cfg.mu_min = 1.0;
  const auto n = minimize_loss(v, a, cfg);
  EXPECT_NEAR(n.mu, 5.0 / 3.0, 1e-12);
  EXPECT_EQ(n.cells, 2u);
  EXPECT_TRUE(n.warnings.empty());
}

TEST(MinimizeLoss, UnattainableTargetWarns) {
  // mu |L(mu)| never exceeds max(4 * 0.1, 2 * 0.3, 1 * 1) = 1
  HomogenizeConfig cfg;
  cfg.target = 3.0;
  const auto m = minimize_loss(std::vector<double>{4, 2, 1}, std::vector<double>{0.1, 0.2, 0.7}, cfg);
  EXPECT_NEAR(m.mu, 1.0, 1e-15);
  EXPECT_NEAR(m.loss, 4.0, 1e-12);
  EXPECT_FALSE(m.warnings.empty());
}

TEST(MinimizeLoss, NoWorseThanDenseGridSearch) {
  std::mt19937_64 g(7);
  std::gamma_distribution<double> gd(3.5, 1.0 / 3.5);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<double> v(400), a(400);
    double total = 0.0;
    for (auto& x : a) total += (x = gd(g));
    for (std::size_t i = 0; i < a.size(); ++i) v[i] = 1.0 / (a[i] /= total);
    HomogenizeConfig cfg;
    cfg.target = 20.0 + 15.0 * trial;
    const auto m = minimize_loss(v, a, cfg);
    EXPECT_NEAR(loss_at(v, a, cfg.target, m.mu), m.loss, 1e-9);
    const double vmax = *std::max_element(v.begin(), v.end());
    double best = std::numeric_limits<double>::infinity();
    for (int k = 0; k <= 20000; ++k) best = std::min(best, loss_at(v, a, cfg.target, vmax * k / 20000.0));
    EXPECT_LE(m.loss, best + 1e-12);
  }
}

TEST(MinimizeLoss, RejectsBadInput) {
  HomogenizeConfig cfg;
  EXPECT_THROW(minimize_loss(std::vector<double>{}, std::vector<double>{}, cfg), Error);
  EXPECT_THROW(minimize_loss(std::vector<double>{1}, std::vector<double>{1, 2}, cfg), Error);
  cfg.target = -1;
  EXPECT_THROW(minimize_loss(std::vector<double>{1}, std::vector<double>{1}, cfg), Error);
}

TEST(Homogenize, ExpectedRetainedEqualsTarget) {
  // inside the level set each mu |C_i| <= 1, so the expected count is mu |L| = target
  const auto p = project(simulate_poisson(ConstantIntensity{3000}, kUnit, 4)).first;
  HomogenizeConfig cfg;
  cfg.target = 300;
  cfg.seed = 3;
  const auto r = homogenize(p, cfg);
  EXPECT_LT(r.report.loss, 1e-6 * 300 * 300);
  EXPECT_NEAR(r.report.expected_retained, 300.0, 1e-6);
  EXPECT_NEAR(r.report.level_area, r.region.area(), 1e-9);
  for (const auto& x : r.pattern.points) EXPECT_TRUE(std::find(p.points.begin(), p.points.end(), x) != p.points.end());
  EXPECT_EQ(r.report.retained, r.pattern.size());
  EXPECT_EQ(r.report.input_count, p.size());
}

TEST(Homogenize, RetainedCountIsPoissonBinomialAroundTarget) {
  const auto p = project(simulate_poisson(ConstantIntensity{3000}, kUnit, 5)).first;
  double sum = 0.0;
  const int reps = 40;
  for (int s = 0; s < reps; ++s) {
    HomogenizeConfig cfg;
    cfg.target = 200;
    cfg.seed = static_cast<std::uint64_t>(s);
    sum += static_cast<double>(homogenize(p, cfg).report.retained);
  }
  EXPECT_NEAR(sum / reps, 200.0, 4 * std::sqrt(200.0 / reps));
}

TEST(Homogenize, TargetAboveSizeWarns) {
  const auto p = project(simulate_poisson(ConstantIntensity{100}, kUnit, 6)).first;
  HomogenizeConfig cfg;
  cfg.target = 1000;
  const auto r = homogenize(p, cfg);
  EXPECT_FALSE(r.report.warnings.empty());
}

TEST(Models, UnitSquareIntegration) {
  EXPECT_NEAR(integrate_unit_square([](const Vec2&) { return 1.0; }), 1.0, 1e-12);
  EXPECT_NEAR(integrate_unit_square([](const Vec2& x) { return x.x1 * x.x2; }), 0.25, 1e-12);
  const double c = integrate_unit_square([](const Vec2& x) { return cross_shape(x, 0.02); });
  EXPECT_NEAR(c, simpson2([](const Vec2& x) { return cross_shape(x, 0.02); }, 2000), 1e-6 * c);
  const double s = integrate_unit_square([](const Vec2& x) { return sin_shape(x, 0.2); });
  EXPECT_NEAR(s, simpson2([](const Vec2& x) { return sin_shape(x, 0.2); }, 2000), 1e-6 * s);
}

TEST(Models, ScaledToExpectedCount) {
  const auto cm = cross_model(50000, 0.02);
  EXPECT_NEAR(integrate_unit_square(cm.lambda), 50000.0, 1e-6 * 50000);
  const auto sm = sin_model(50000, 0.2, SinVariant::full_period);
  EXPECT_NEAR(integrate_unit_square(sm.lambda), 50000.0, 1e-6 * 50000);
  // the bounds dominate the intensity at its maxima
  EXPECT_NEAR(cm.lambda(Vec2{0.5, 0.3}), cm.lambda_max, 1e-9 * cm.lambda_max);
  EXPECT_NEAR(sm.lambda(Vec2{0.25, 0.75}), sm.lambda_max, 1e-9 * sm.lambda_max);
}

TEST(Models, SimulatedCountMatchesExpectation) {
  const auto m = cross_model(5000, 0.02);
  double n = 0.0;
  for (std::uint64_t s = 0; s < 10; ++s) n += static_cast<double>(simulate_planar(m, s).size()) / 10;
  EXPECT_NEAR(n, 5000.0, 4 * std::sqrt(5000.0 / 10));
}
