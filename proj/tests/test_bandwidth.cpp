#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "stpp/bandwidth.hpp"
#include "stpp/simulate.hpp"

using namespace stpp;

namespace {
const Window kUnit(Rect{0, 1, 0, 1}, Interval{0, 1});

// O(n m) loss with analytic rectangle edge weights and the 6b kernel support,
// independent of the kd-tree
double brute_loss(const std::vector<Vec2>& fit, const std::vector<Vec2>& eval, double b, const Rect& r, bool loo,
                  double scale) {
  auto mass = [&](const Vec2& c) {
    auto Phi = [](double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); };
    return (Phi((r.hi1 - c.x1) / b) - Phi((r.lo1 - c.x1) / b)) * (Phi((r.hi2 - c.x2) / b) - Phi((r.lo2 - c.x2) / b));
  };
  std::vector<double> e(fit.size());
  for (std::size_t i = 0; i < fit.size(); ++i) e[i] = mass(fit[i]);
  double s = 0.0;
  for (std::size_t q = 0; q < eval.size(); ++q) {
    double lam = 0.0;
    for (std::size_t i = 0; i < fit.size(); ++i) {
      if (loo && i == q) continue;
      const double dx = eval[q].x1 - fit[i].x1, dy = eval[q].x2 - fit[i].x2;
      if (dx * dx + dy * dy > 36 * b * b) continue;
      lam += std::exp(-(dx * dx + dy * dy) / (2 * b * b)) / (2 * std::numbers::pi * b * b) / e[i];
    }
    if (lam <= 0.0) return std::numeric_limits<double>::infinity();
    s += scale / lam;
  }
  return (s - r.area()) * (s - r.area());
}

SpatialPattern cluster_pattern(std::uint64_t seed, double kappa = 100, double m = 20) {
  return project(simulate_cluster(ClusterModel{kappa, m, 0.03, 0.05}, kUnit, seed)).first;
}

// Sheather-Jones reference: unbinned double sums over ordered pairs, bisection
double sj_reference(const std::vector<double>& x) {
  const double n = static_cast<double>(x.size());
  const double sd = [&] {
    double m = 0, s = 0;
    for (double v : x) m += v;
    m /= n;
    for (double v : x) s += (v - m) * (v - m);
    return std::sqrt(s / (n - 1));
  }();
  std::vector<double> y = x;
  std::sort(y.begin(), y.end());
  auto q = [&](double p) {
    const double h = (n - 1) * p;
    const auto lo = static_cast<std::size_t>(h);
    return y[lo] + (h - static_cast<double>(lo)) * (y[std::min(lo + 1, y.size() - 1)] - y[lo]);
  };
  const double scale = std::min(sd, (q(0.75) - q(0.25)) / 1.349);
  // psi_r(g) = n^-2 g^-(r+1) sum_ij phi^(r)((xi-xj)/g); phi4 = psi_4, phi6 = -psi_6
  auto psi = [&](int r, double g) {
    double s = 0.0;
    for (double xi : x)
      for (double xj : x) {
        const double u = (xi - xj) / g, u2 = u * u;
        const double poly = r == 4 ? u2 * u2 - 6 * u2 + 3 : u2 * u2 * u2 - 15 * u2 * u2 + 45 * u2 - 15;
        s += poly * std::exp(-0.5 * u2) / std::sqrt(2 * std::numbers::pi);
      }
    // diagonal included, n(n-1) normalisation
    return s / (n * (n - 1) * std::pow(g, r + 1));
  };
  const double a = 1.24 * scale * std::pow(n, -1.0 / 7), b = 1.23 * scale * std::pow(n, -1.0 / 9);
  const double alpha2 = 1.357 * std::pow(psi(4, a) / -psi(6, b), 1.0 / 7);
  auto f = [&](double h) {
    return std::pow(1.0 / (2 * std::sqrt(std::numbers::pi) * n) / psi(4, alpha2 * std::pow(h, 5.0 / 7)), 0.2) - h;
  };
  double lo = 1e-3 * sd, hi = 3 * sd;
  for (int it = 0; it < 80; ++it) {
    const double mid = 0.5 * (lo + hi);
    (f(lo) * f(mid) <= 0 ? hi : lo) = mid;
  }
  return 0.5 * (lo + hi);
}
}  // namespace

TEST(InverseResidualLoss, KnownValues) {
  // lambda = n / |W| makes sum 1/lambda = |W|
  std::vector<double> v(100, 100.0 / 4.0);
  EXPECT_NEAR(inverse_residual_loss(v, 4.0), 0.0, 1e-24);
  std::vector<double> w(100, 200.0 / 4.0);  // over-estimate by 2: sum = |W|/2
  EXPECT_NEAR(inverse_residual_loss(w, 4.0), 4.0, 1e-12);
  w[3] = 0.0;
  EXPECT_TRUE(std::isinf(inverse_residual_loss(w, 4.0)));
}

TEST(CvlLoss, MatchesBruteForce) {
  const auto p = project(simulate_poisson(ConstantIntensity{500}, kUnit, 3)).first;
  for (double b : {0.03, 0.08, 0.2}) {
    const double ours = cvl_loss(p, b);
    const double ref = brute_loss(p.points, p.points, b, kUnit.rect(), true, 1.0);
    if (std::isinf(ref)) {
      EXPECT_TRUE(std::isinf(ours));
    } else {
      EXPECT_NEAR(ours, ref, 1e-6 * (1.0 + ref));
    }
  }
}

TEST(SelectBandwidthSpatial, BruteForceArgminAtFullSample) {
  // retention 1 and one repeat: the selector is a plain k-fold argmin
  const auto p = project(simulate_poisson(AnalyticIntensity{[](const SpaceTimePoint& y) { return 4000.0 * y.x1; }, 4000},
                                          kUnit, 17))
                     .first;
  ASSERT_GT(p.size(), 1500u);
  BandwidthSearch s;
  s.candidates = {0.01, 0.02, 0.04, 0.08, 0.16};
  s.retention = 1.0;
  s.repeats = 1;
  s.folds = 2;
  s.seed = 5;
  const auto sel = select_bandwidth_spatial(p, s);

  const auto split = detail::fold_split(p, 1.0, 2, 5, 0);
  ASSERT_EQ(split.subsample.size(), p.size());
  std::vector<double> loss(s.candidates.size(), 0.0);
  for (std::size_t f = 0; f < 2; ++f) {
    std::vector<Vec2> fit, held;
    for (std::size_t i = 0; i < split.subsample.size(); ++i)
      (split.fold_of[i] == f ? held : fit).push_back(split.subsample[i]);
    for (std::size_t c = 0; c < loss.size(); ++c)
      loss[c] += brute_loss(fit, held, s.candidates[c], kUnit.rect(), false, 1.0) / 2.0;
  }
  const auto best = static_cast<std::size_t>(std::min_element(loss.begin(), loss.end()) - loss.begin());
  EXPECT_DOUBLE_EQ(sel.bandwidth, s.candidates[best]);
  ASSERT_EQ(sel.mean_losses.size(), 1u);
  for (std::size_t c = 0; c < loss.size(); ++c) {
    if (std::isinf(loss[c])) {
      EXPECT_TRUE(std::isinf(sel.mean_losses[0][c]));
    } else {
      EXPECT_NEAR(sel.mean_losses[0][c], loss[c], 1e-6 * (1.0 + loss[c]));
    }
  }
}

TEST(SelectBandwidthSpatial, SingleCandidateShortCircuits) {
  BandwidthSearch s;
  s.candidates = {0.07};
  const auto sel = select_bandwidth_spatial(SpatialPattern{{Vec2{0.5, 0.5}}, kUnit}, s);
  EXPECT_EQ(sel.bandwidth, 0.07);
}

TEST(SelectBandwidthSpatial, ScaleEquivariant) {
  const auto p = cluster_pattern(8, 200, 25);
  const double c = 3.5;
  const Window big(Rect{0, c, 0, c}, Interval{0, 1});
  SpatialPattern q{{}, big};
  for (const auto& x : p.points) q.points.push_back({c * x.x1, c * x.x2});
  BandwidthSearch s;
  s.candidates = BandwidthSearch::default_candidates(kUnit, 8);
  s.repeats = 4;
  s.retention = 0.2;
  s.seed = 2;
  BandwidthSearch t = s;
  for (auto& v : t.candidates) v *= c;
  EXPECT_NEAR(select_bandwidth_spatial(q, t).bandwidth, c * select_bandwidth_spatial(p, s).bandwidth, 1e-9);
}

TEST(SelectBandwidthSpatial, PicksACandidateIndependentOfThreads) {
  BandwidthSearch s;
  s.candidates = BandwidthSearch::default_candidates(kUnit, 10);
  s.repeats = 6;
  s.retention = 0.3;
  s.seed = 1;
  const auto p = cluster_pattern(4, 50, 40);
  set_thread_count(1);
  const auto a = select_bandwidth_spatial(p, s);
  set_thread_count(4);
  const auto b = select_bandwidth_spatial(p, s);
  set_thread_count(0);
  EXPECT_EQ(a.bandwidth, b.bandwidth);
  EXPECT_EQ(a.mean_losses, b.mean_losses);
  EXPECT_NE(std::find(s.candidates.begin(), s.candidates.end(), a.bandwidth), s.candidates.end());
  EXPECT_EQ(a.repeat_argmins.size(), 6u);
}

TEST(SelectBandwidthSpatial, RejectsBadSearch) {
  BandwidthSearch s;
  const SpatialPattern p{{Vec2{0.5, 0.5}}, kUnit};
  EXPECT_THROW(select_bandwidth_spatial(p, s), Error);  // no candidates
  s.candidates = {0.2, 0.1};
  EXPECT_THROW(select_bandwidth_spatial(p, s), Error);
  s.candidates = {0.1, 0.2};
  s.folds = 1;
  EXPECT_THROW(select_bandwidth_spatial(p, s), Error);
  s.folds = 10;
  EXPECT_THROW(select_bandwidth_spatial(p, s), Error);  // every fold empty
}

TEST(FoldSplit, PartitionsTheSubsample) {
  const auto p = cluster_pattern(1);
  const auto a = detail::fold_split(p, 0.3, 7, 11, 4);
  const auto b = detail::fold_split(p, 0.3, 7, 11, 4);
  EXPECT_EQ(a.fold_of, b.fold_of);
  std::vector<std::size_t> size(7, 0);
  for (auto f : a.fold_of) ++size[f];
  const auto [mn, mx] = std::minmax_element(size.begin(), size.end());
  EXPECT_LE(*mx - *mn, 1u);
  EXPECT_NEAR(static_cast<double>(a.subsample.size()), 0.3 * static_cast<double>(p.size()),
              5 * std::sqrt(0.21 * static_cast<double>(p.size())));
}

TEST(SheatherJones, MatchesIndependentReference) {
  std::mt19937_64 g(3);
  std::normal_distribution<double> nd(0.0, 1.0);
  for (int n : {50, 400}) {
    std::vector<double> x(n);
    for (auto& v : x) v = nd(g);
    const double ours = select_bandwidth_temporal(TemporalPattern{x, Interval{-10, 10}});
    EXPECT_NEAR(ours, sj_reference(x), 0.01 * ours);
  }
}

TEST(SheatherJones, ScaleEquivariant) {
  std::mt19937_64 g(9);
  std::gamma_distribution<double> gd(2.0, 1.0);
  std::vector<double> x(300), y(300);
  for (std::size_t i = 0; i < x.size(); ++i) {
    x[i] = gd(g);
    y[i] = 17.0 * x[i];
  }
  const double hx = select_bandwidth_temporal(TemporalPattern{x, Interval{0, 100}});
  const double hy = select_bandwidth_temporal(TemporalPattern{y, Interval{0, 1700}});
  EXPECT_NEAR(hy / hx, 17.0, 17.0 * 1e-6);
}

TEST(SheatherJones, BimodalGivesSmallerThanNormalReference) {
  std::mt19937_64 g(4);
  std::normal_distribution<double> nd(0.0, 0.05);
  std::vector<double> x;
  for (int i = 0; i < 500; ++i) x.push_back(nd(g) + (i % 2 ? 0.25 : 0.75));
  const double sj = select_bandwidth_temporal(TemporalPattern{x, Interval{0, 1}});
  EXPECT_LT(sj, normal_reference_bandwidth(x));
  EXPECT_GT(sj, 0.0);
}

TEST(SheatherJones, BinnedPathAgreesWithExact) {
  std::mt19937_64 g(5);
  std::normal_distribution<double> nd(0.0, 1.0);
  std::vector<double> x(3000);
  for (auto& v : x) v = nd(g);
  SheatherJonesOptions binned;
  binned.exact_limit = 100;
  const double e = select_bandwidth_temporal(TemporalPattern{x, Interval{-10, 10}});
  const double b = select_bandwidth_temporal(TemporalPattern{x, Interval{-10, 10}}, binned);
  EXPECT_NEAR(b, e, 0.02 * e);
}

TEST(SheatherJones, DegenerateInputsAreErrors) {
  EXPECT_THROW(select_bandwidth_temporal(TemporalPattern{std::vector<double>(20, 0.5), Interval{0, 1}}), Error);
  EXPECT_THROW(select_bandwidth_temporal(TemporalPattern{{0.1, 0.2, 0.3}, Interval{0, 1}}), Error);
}
