#ifndef STPP_SIMULATE_HPP
#define STPP_SIMULATE_HPP

#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <variant>
#include <vector>

#include "stpp/core.hpp"

namespace stpp {

// ---------------------------------------------------------------------------
// Intensity models

struct ConstantIntensity {
  double lambda = 0.0;
};

/// lambda(x, t) with a declared upper bound used by dominated thinning.
struct AnalyticIntensity {
  std::function<double(const SpaceTimePoint&)> fn;
  double lambda_max = 0.0;
};

/// Cell-constant intensity over a spatial (time-invariant) or space-time grid.
struct GriddedIntensity {
  ScalarField field;
};

using IntensityModel = std::variant<ConstantIntensity, AnalyticIntensity, GriddedIntensity>;

inline double intensity_at(const IntensityModel& model, const SpaceTimePoint& y) {
  return std::visit(
      [&](const auto& m) -> double {
        using M = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<M, ConstantIntensity>) {
          return m.lambda;
        } else if constexpr (std::is_same_v<M, AnalyticIntensity>) {
          return m.fn(y);
        } else {
          return m.field.at(y.location(), y.t).value_or(0.0);
        }
      },
      model);
}

inline double intensity_bound(const IntensityModel& model) {
  return std::visit(
      [](const auto& m) -> double {
        using M = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<M, ConstantIntensity>) {
          return m.lambda;
        } else if constexpr (std::is_same_v<M, AnalyticIntensity>) {
          return m.lambda_max;
        } else {
          return m.field.max();
        }
      },
      model);
}

/// Space-time Thomas process: parents at rate kappa per unit volume, each with
/// Poisson(mean_offspring) children displaced by N(0, sigma^2 I) in space and
/// N(0, sigma_t^2) in time.
struct ClusterModel {
  double kappa = 1.0;
  double mean_offspring = 1.0;
  double sigma = 0.01;
  double sigma_t = 0.01;

  double intensity() const noexcept { return kappa * mean_offspring; }
};

// ---------------------------------------------------------------------------
// Retention (thinning) specifications

struct ConstantRetention {
  double pi0 = 1.0;
};

/// Cell-constant retention field; points outside `support` have probability 0.
struct FieldRetention {
  ScalarField field;
  Window support;
};

using RetentionSpec = std::variant<ConstantRetention, FieldRetention>;

namespace detail {
inline void validate_retention(const RetentionSpec& spec) {
  if (auto c = std::get_if<ConstantRetention>(&spec)) {
    if (!(c->pi0 >= 0.0 && c->pi0 <= 1.0)) throw Error("retention: pi0 must lie in [0,1]");
    return;
  }
  const auto& f = std::get<FieldRetention>(spec);
  for (std::size_t i = 0; i < f.field.size(); ++i)
    if (f.field.grid().in_mask(i) && !(f.field[i] >= 0.0 && f.field[i] <= 1.0))
      throw Error("retention: field values must lie in [0,1]");
}

inline std::vector<SpaceTimePoint> sorted_unique(std::vector<SpaceTimePoint> pts) {
  std::sort(pts.begin(), pts.end(), time_order);
  pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
  return pts;
}
}  // namespace detail

/// Poisson process on `window`. Inhomogeneous models are sampled by thinning a
/// homogeneous draw at the model's upper bound.
inline SpaceTimePattern simulate_poisson(const IntensityModel& model, const Window& window, std::uint64_t seed) {
  const double lambda_max = intensity_bound(model);
  if (!std::isfinite(lambda_max) || lambda_max < 0.0) throw Error("simulate_poisson: intensity bound must be finite and >= 0");
  if (lambda_max == 0.0) return SpaceTimePattern(window);

  Rng rng = substream(seed, 0);
  const Rect& r = window.rect();
  const Interval& ti = window.time();
  const double mean = lambda_max * r.area() * ti.length();
  const auto count = std::poisson_distribution<long long>(mean)(rng);
  std::uniform_real_distribution<double> u1(r.lo1, r.hi1), u2(r.lo2, r.hi2), ut(ti.lo, ti.hi);
  const bool homogeneous = std::holds_alternative<ConstantIntensity>(model);

  std::vector<SpaceTimePoint> pts;
  pts.reserve(static_cast<std::size_t>(homogeneous ? count : count / 4 + 16));
  for (long long k = 0; k < count; ++k) {
    SpaceTimePoint y{u1(rng), u2(rng), ut(rng)};
    const double accept = uniform01(rng);
    if (!window.contains(y)) continue;
    if (!homogeneous) {
      const double lam = intensity_at(model, y);
      if (lam > lambda_max * (1.0 + 1e-12))
        throw Error("simulate_poisson: intensity " + std::to_string(lam) + " exceeds declared bound " +
                    std::to_string(lambda_max));
      if (accept * lambda_max >= lam) continue;
    }
    pts.push_back(y);
  }
  return SpaceTimePattern(detail::sorted_unique(std::move(pts)), window);
}

/// Space-time Thomas cluster process restricted to `window`. Parents are drawn
/// on the window dilated by 4 sigma (4 sigma_t in time) so the restriction is
/// stationary with intensity kappa * mean_offspring.
inline SpaceTimePattern simulate_cluster(const ClusterModel& model, const Window& window, std::uint64_t seed) {
  if (!(model.kappa > 0.0) || !(model.mean_offspring > 0.0) || !(model.sigma > 0.0) || !(model.sigma_t > 0.0))
    throw Error("simulate_cluster: all model parameters must be positive");
  Rng rng = substream(seed, 0);
  const Rect& r = window.rect();
  const Interval& ti = window.time();
  const double ds = 4.0 * model.sigma, dt = 4.0 * model.sigma_t;
  const Rect pr{r.lo1 - ds, r.hi1 + ds, r.lo2 - ds, r.hi2 + ds};
  const Interval pt{ti.lo - dt, ti.hi + dt};
  const auto parents = std::poisson_distribution<long long>(model.kappa * pr.area() * pt.length())(rng);
  std::uniform_real_distribution<double> u1(pr.lo1, pr.hi1), u2(pr.lo2, pr.hi2), ut(pt.lo, pt.hi);
  std::normal_distribution<double> gs(0.0, model.sigma), gt(0.0, model.sigma_t);
  std::poisson_distribution<int> offspring(model.mean_offspring);

  std::vector<SpaceTimePoint> pts;
  for (long long p = 0; p < parents; ++p) {
    const double c1 = u1(rng), c2 = u2(rng), ct = ut(rng);
    const int m = offspring(rng);
    for (int k = 0; k < m; ++k) {
      SpaceTimePoint y{c1 + gs(rng), c2 + gs(rng), ct + gt(rng)};
      if (y.t >= 0.0 && window.contains(y)) pts.push_back(y);
    }
  }
  return SpaceTimePattern(detail::sorted_unique(std::move(pts)), window);
}

/// Retention probability of y under `spec`; throws where a field is undefined.
inline double retention_at(const RetentionSpec& spec, const SpaceTimePoint& y) {
  if (auto c = std::get_if<ConstantRetention>(&spec)) return c->pi0;
  const auto& f = std::get<FieldRetention>(spec);
  if (!f.support.contains(y.location())) return 0.0;
  auto v = f.field.at(y.location(), y.t);
  if (!v) throw Error("thin: retention field undefined at (" + std::to_string(y.x1) + ", " + std::to_string(y.x2) + ")");
  return *v;
}

/// Independent thinning: each point is kept with probability pi(y). One uniform
/// is drawn per point in stored order, so for a fixed seed the retained sets
/// are nested in the retention level.
inline SpaceTimePattern thin(const SpaceTimePattern& pattern, const RetentionSpec& retention, std::uint64_t seed) {
  detail::validate_retention(retention);
  Rng rng = substream(seed, 1);
  std::vector<SpaceTimePoint> kept;
  for (const auto& y : pattern.points()) {
    const double p = retention_at(retention, y);
    if (uniform01(rng) < p) kept.push_back(y);
  }
  Window out = pattern.window();
  if (auto f = std::get_if<FieldRetention>(&retention)) out = f->support;
  return SpaceTimePattern(std::move(kept), std::move(out));
}

/// Constant-probability thinning of a planar pattern (same stream layout as thin()).
inline SpatialPattern thin(const SpatialPattern& pattern, double pi0, std::uint64_t seed) {
  if (!(pi0 >= 0.0 && pi0 <= 1.0)) throw Error("retention: pi0 must lie in [0,1]");
  Rng rng = substream(seed, 1);
  SpatialPattern out{{}, pattern.window};
  for (const auto& x : pattern.points)
    if (uniform01(rng) < pi0) out.points.push_back(x);
  return out;
}

}  // namespace stpp

#endif  // STPP_SIMULATE_HPP
