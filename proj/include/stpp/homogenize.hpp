#ifndef STPP_HOMOGENIZE_HPP
#define STPP_HOMOGENIZE_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "stpp/core.hpp"
#include "stpp/inference.hpp"
#include "stpp/simulate.hpp"
#include "stpp/voronoi.hpp"

namespace stpp {

/// Cells of a Voronoi estimate whose value is at least mu.
struct LevelSetEstimate {
  double mu = 0.0;
  std::vector<std::size_t> cells;  // ascending cell index
  double area = 0.0;
};

inline LevelSetEstimate level_set(const VoronoiTessellation& tess, double mu) {
  if (!(mu >= 0.0)) throw Error("level_set: mu must be nonnegative");
  LevelSetEstimate out{mu, {}, 0.0};
  for (std::size_t i = 0; i < tess.size(); ++i)
    if (tess.cells[i].value >= mu) {
      out.cells.push_back(i);
      out.area += tess.cells[i].area;
    }
  return out;
}

struct HomogenizeConfig {
  double target = 500.0;                    // expected retained count
  std::optional<double> mu_min, mu_max;     // optional search bracket
  double loss_tolerance = 1e-6;             // relative to target^2
  std::uint64_t seed = 0;
  QuadratOptions quadrat{};
  std::size_t min_retained = 20;

  void validate() const {
    if (!(target > 0.0) || !std::isfinite(target)) throw Error("homogenize: target count must be positive");
    if (mu_min && mu_max && !(*mu_min <= *mu_max)) throw Error("homogenize: empty mu bracket");
  }
};

struct LossMinimum {
  double mu = 0.0;
  double loss = 0.0;
  double area = 0.0;        // |level set| at mu
  std::size_t cells = 0;
  std::vector<std::string> warnings;
};

/// Exact minimiser of (target - mu |level set(mu)|)^2. Between consecutive
/// sorted cell values the level set is fixed, so the product is linear in mu;
/// candidates are the breakpoints and target / area inside each interval.
/// Returns the smallest mu attaining the minimum.
inline LossMinimum minimize_loss(std::span<const double> values, std::span<const double> areas,
                                 const HomogenizeConfig& cfg) {
  cfg.validate();
  if (values.size() != areas.size() || values.empty()) throw Error("minimize_loss: need one area per cell value");
  const double nu = cfg.target;
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] > values[b]; });

  const double lo_b = cfg.mu_min.value_or(0.0), hi_b = cfg.mu_max.value_or(std::numeric_limits<double>::infinity());
  struct Cand {
    double mu, loss, area;
    std::size_t cells;
  };
  std::vector<Cand> cands;
  auto consider = [&](double mu, double area, std::size_t cells) {
    if (mu < lo_b || mu > hi_b) return;
    const double d = nu - mu * area;
    cands.push_back({mu, d * d, area, cells});
  };
  consider(std::min(hi_b, std::max(lo_b, values[order[0]] * 2.0 + 1.0)), 0.0, 0);  // empty level set

  double area = 0.0;
  std::size_t k = 0;
  while (k < order.size()) {
    const double v = values[order[k]];
    while (k < order.size() && values[order[k]] == v) area += areas[order[k++]];
    const double next = k < order.size() ? values[order[k]] : 0.0;
    consider(v, area, k);  // breakpoint: cells with value >= v
    const double m = nu / area;
    if (m > next && m < v) consider(m, area, k);
    if (lo_b > next && lo_b < v) consider(lo_b, area, k);
    if (hi_b > next && hi_b < v) consider(hi_b, area, k);
  }
  if (cands.empty()) throw Error("minimize_loss: the mu bracket excludes every level");
  double best = std::numeric_limits<double>::infinity();
  for (const auto& c : cands) best = std::min(best, c.loss);
  const double slack = best + 1e-12 * nu * nu;
  const Cand* pick = nullptr;
  for (const auto& c : cands)
    if (c.loss <= slack && (!pick || c.mu < pick->mu)) pick = &c;

  LossMinimum out{pick->mu, pick->loss, pick->area, pick->cells, {}};
  if (out.loss > cfg.loss_tolerance * nu * nu)
    out.warnings.push_back("target count not attainable: minimum loss " + std::to_string(out.loss));
  return out;
}

inline LossMinimum minimize_loss(const VoronoiTessellation& tess, const HomogenizeConfig& cfg) {
  std::vector<double> v(tess.size()), a(tess.size());
  for (std::size_t i = 0; i < tess.size(); ++i) {
    v[i] = tess.cells[i].value;
    a[i] = tess.cells[i].area;
  }
  return minimize_loss(v, a, cfg);
}

struct HomogenizeReport {
  double mu = 0.0;
  double loss = 0.0;
  double level_area = 0.0;
  std::size_t level_cells = 0;
  std::size_t input_count = 0;
  std::size_t retained = 0;
  double expected_retained = 0.0;
  QuadratResult quadrat;
  std::vector<std::string> warnings;
};

struct HomogenizeResult {
  SpatialPattern pattern;   // retained points; window is the input window
  CellUnionRegion region;   // the estimated level set
  HomogenizeReport report;
};

/// Thins a planar pattern to a homogeneous one on the estimated level set:
/// Voronoi estimate, loss-minimising level, retention min(1, mu |C(x)|) inside
/// the level set and 0 outside, then a quadrat test on the level set.
inline HomogenizeResult homogenize(const SpatialPattern& pattern, const HomogenizeConfig& cfg) {
  cfg.validate();
  const auto tess = voronoi_tessellation(pattern);
  auto best = minimize_loss(tess, cfg);
  HomogenizeResult res;
  HomogenizeReport& rep = res.report;
  rep.warnings = std::move(best.warnings);
  rep.mu = best.mu;
  rep.loss = best.loss;
  rep.input_count = pattern.size();
  if (cfg.target > static_cast<double>(pattern.size()))
    rep.warnings.push_back("target count exceeds the pattern size; retention probabilities are capped at 1");

  const auto ls = level_set(tess, best.mu);
  rep.level_area = ls.area;
  rep.level_cells = ls.cells.size();
  std::vector<Polygon> polys;
  polys.reserve(ls.cells.size());
  for (std::size_t i : ls.cells) polys.push_back(tess.cells[i].polygon);
  res.region = CellUnionRegion(std::move(polys));

  std::vector<std::uint8_t> member(pattern.size(), 0);
  for (std::size_t i : ls.cells) member[i] = 1;
  Rng rng = substream(cfg.seed, 1);
  res.pattern.window = pattern.window;
  for (std::size_t i = 0; i < pattern.size(); ++i) {
    const double u = uniform01(rng);
    if (!member[i]) continue;
    const double p = std::min(1.0, best.mu * tess.cells[i].area);
    rep.expected_retained += p;
    if (u < p) res.pattern.points.push_back(pattern.points[i]);
  }
  rep.retained = res.pattern.size();
  if (rep.retained < cfg.min_retained)
    rep.warnings.push_back("only " + std::to_string(rep.retained) + " points retained; quadrat test unreliable");
  if (rep.retained > 0) {
    rep.quadrat = quadrat_test(std::span<const Vec2>(res.pattern.points), res.region, cfg.quadrat);
    for (const auto& w : rep.quadrat.warnings) rep.warnings.push_back("quadrat: " + w);
  }
  return res;
}

// ---------------------------------------------------------------------------
// Inhomogeneous reference models on the unit square

enum class SinVariant { half_period, full_period };  // |sin(pi x)| or |sin(2 pi x)|

/// Shape exp(-(1 + |x1 - 1/2| |x2 - 1/2|) / phi).
inline double cross_shape(const Vec2& x, double phi) {
  return std::exp(-(1.0 + std::abs(x.x1 - 0.5) * std::abs(x.x2 - 0.5)) / phi);
}

/// Shape exp((|sin(a x1)| + |sin(a x2)|) / phi), a = pi or 2 pi.
inline double sin_shape(const Vec2& x, double phi, SinVariant v = SinVariant::half_period) {
  const double a = (v == SinVariant::half_period ? 1.0 : 2.0) * std::numbers::pi;
  return std::exp((std::abs(std::sin(a * x.x1)) + std::abs(std::sin(a * x.x2))) / phi);
}

/// Integral of f over [0,1]^2 by nested adaptive Gauss-Kronrod, split at the
/// quarter points where the reference shapes have kinks.
inline double integrate_unit_square(const std::function<double(const Vec2&)>& f) {
  using GK = boost::math::quadrature::gauss_kronrod<double, 61>;
  constexpr double cuts[] = {0.0, 0.25, 0.5, 0.75, 1.0};
  auto piecewise = [&](auto&& g) {
    double s = 0.0;
    for (int k = 0; k < 4; ++k) s += GK::integrate(g, cuts[k], cuts[k + 1], 15, 1e-12);
    return s;
  };
  return piecewise([&](double x2) { return piecewise([&](double x1) { return f(Vec2{x1, x2}); }); });
}

/// Spatial intensity scaled so its integral over the unit square is `expected`.
struct PlanarModel {
  std::function<double(const Vec2&)> lambda;
  double lambda_max = 0.0;
  double beta = 0.0;
};

inline PlanarModel cross_model(double expected = 50000.0, double phi = 0.02) {
  const double beta = expected / integrate_unit_square([phi](const Vec2& x) { return cross_shape(x, phi); });
  return {[beta, phi](const Vec2& x) { return beta * cross_shape(x, phi); }, beta * std::exp(-1.0 / phi), beta};
}

inline PlanarModel sin_model(double expected = 50000.0, double phi = 0.2, SinVariant v = SinVariant::half_period) {
  const double beta = expected / integrate_unit_square([phi, v](const Vec2& x) { return sin_shape(x, phi, v); });
  return {[beta, phi, v](const Vec2& x) { return beta * sin_shape(x, phi, v); }, beta * std::exp(2.0 / phi), beta};
}

/// Poisson pattern on the unit square from a planar model.
inline SpatialPattern simulate_planar(const PlanarModel& m, std::uint64_t seed) {
  const Window w(Rect{0.0, 1.0, 0.0, 1.0}, Interval{0.0, 1.0});
  const AnalyticIntensity model{[f = m.lambda](const SpaceTimePoint& y) { return f(y.location()); },
                                m.lambda_max * (1.0 + 1e-9)};
  return project(simulate_poisson(model, w, seed)).first;
}

}  // namespace stpp

#endif  // STPP_HOMOGENIZE_HPP
