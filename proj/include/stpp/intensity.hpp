#ifndef STPP_INTENSITY_HPP
#define STPP_INTENSITY_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "stpp/core.hpp"
#include "stpp/kdtree.hpp"
#include "stpp/simulate.hpp"

namespace stpp {

/// Isotropic Gaussian kernel with standard deviation `bandwidth`.
struct KernelSpec {
  double bandwidth = 1.0;

  void validate() const {
    if (!(bandwidth > 0.0) || !std::isfinite(bandwidth)) throw Error("kernel: bandwidth must be positive");
  }
};

/// Kernel sums ignore contributions beyond this many bandwidths (per axis).
inline constexpr double kernel_truncation = 6.0;
/// Diggle weights below this are treated as numerically outside the window.
inline constexpr double min_edge_weight = 1e-12;

inline double gaussian1(double d, double b) noexcept {
  const double z = d / b;
  return std::exp(-0.5 * z * z) / (std::sqrt(2.0 * std::numbers::pi) * b);
}

inline double gaussian2(double d2, double b) noexcept {
  return std::exp(-0.5 * d2 / (b * b)) / (2.0 * std::numbers::pi * b * b);
}

inline double normal_cdf(double z) noexcept { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

struct IntensityEstimate {
  ScalarField field;
  double bandwidth_space = 0.0;  // 0 when the estimate has no spatial kernel
  double bandwidth_time = 0.0;   // 0 when the estimate has no temporal kernel
  double retention = 1.0;        // output already divided by this factor
  bool edge_corrected = true;
  bool empty_input = false;
  std::vector<std::string> warnings;
};

// ---------------------------------------------------------------------------
// Diggle edge correction

/// e_t(t') = mass of the Gaussian kernel centred at t' inside `interval`.
inline double diggle_correction_time(double center, const KernelSpec& kernel, const Interval& interval) {
  kernel.validate();
  const double b = kernel.bandwidth;
  const double w = normal_cdf((interval.hi - center) / b) - normal_cdf((interval.lo - center) / b);
  if (!(w >= min_edge_weight)) throw Error("diggle_correction: kernel mass inside the interval is below 1e-12");
  return w;
}

/// e_s(x') computed by midpoint quadrature over the in-mask cells of `grid`,
/// truncated at kernel_truncation bandwidths.
inline double diggle_correction_grid(const Vec2& center, const KernelSpec& kernel, const GridSpec& grid) {
  const double b = kernel.bandwidth;
  const double reach = kernel_truncation * b;
  const Axis& ax = grid.x1;
  const Axis& ay = grid.x2;
  const auto ix0 = static_cast<long>(std::floor((center.x1 - reach - ax.origin) / ax.step));
  const auto ix1 = static_cast<long>(std::floor((center.x1 + reach - ax.origin) / ax.step));
  const auto iy0 = static_cast<long>(std::floor((center.x2 - reach - ay.origin) / ay.step));
  const auto iy1 = static_cast<long>(std::floor((center.x2 + reach - ay.origin) / ay.step));
  const long nx = static_cast<long>(ax.count), ny = static_cast<long>(ay.count);
  double s = 0.0;
  for (long iy = std::max(0L, iy0); iy <= std::min(ny - 1, iy1); ++iy) {
    const double dy = ay.center(static_cast<std::size_t>(iy)) - center.x2;
    if (std::abs(dy) > reach) continue;
    const double gy = gaussian1(dy, b);
    double row = 0.0;
    for (long ix = std::max(0L, ix0); ix <= std::min(nx - 1, ix1); ++ix) {
      if (!grid.in_mask_spatial(static_cast<std::size_t>(ix), static_cast<std::size_t>(iy))) continue;
      const double dx = ax.center(static_cast<std::size_t>(ix)) - center.x1;
      if (std::abs(dx) > reach) continue;
      row += gaussian1(dx, b);
    }
    s += gy * row;
  }
  return s * ax.step * ay.step;
}

/// e_s(x') = mass of the spatial kernel centred at x' inside W. Exact for
/// rectangular windows; raster quadrature (raster x raster cells) for masks.
inline double diggle_correction(const Vec2& center, const KernelSpec& kernel, const Window& window,
                                std::size_t raster = 1024) {
  kernel.validate();
  double w;
  if (!window.has_mask()) {
    const Rect& r = window.rect();
    const double b = kernel.bandwidth;
    w = (normal_cdf((r.hi1 - center.x1) / b) - normal_cdf((r.lo1 - center.x1) / b)) *
        (normal_cdf((r.hi2 - center.x2) / b) - normal_cdf((r.lo2 - center.x2) / b));
  } else {
    w = diggle_correction_grid(center, kernel, spatial_grid(window, raster, raster));
  }
  if (!(w >= min_edge_weight)) throw Error("diggle_correction: kernel mass inside the window is below 1e-12");
  return w;
}

// ---------------------------------------------------------------------------
// Kernel estimators

namespace detail {

/// Grid-quadrature Diggle weights for every location.
inline std::vector<double> spatial_edge_weights(std::span<const Vec2> pts, const KernelSpec& kernel,
                                                const GridSpec& grid) {
  std::vector<double> e(pts.size());
  parallel_for(pts.size(), [&](std::size_t i) {
    e[i] = diggle_correction_grid(pts[i], kernel, grid);
    if (!(e[i] >= min_edge_weight))
      throw Error("intensity: point " + std::to_string(i) + " has negligible kernel mass on the evaluation grid");
  });
  return e;
}

inline std::vector<double> temporal_edge_weights(std::span<const double> times, const KernelSpec& kernel,
                                                 const Interval& interval) {
  std::vector<double> e(times.size());
  for (std::size_t i = 0; i < times.size(); ++i) e[i] = diggle_correction_time(times[i], kernel, interval);
  return e;
}

/// Adds weight[i] * k_s(x_c - x_i) into the spatial slice `out` (nx*ny) for all
/// points, in ascending x2 order for a thread-independent summation order.
struct SpatialSplatter {
  std::span<const Vec2> pts;
  std::vector<std::size_t> order;  // by x2
  std::vector<double> sorted_x2;
  double b;
  const GridSpec* grid;

  SpatialSplatter(std::span<const Vec2> p, double bandwidth, const GridSpec& g)
      : pts(p), b(bandwidth), grid(&g) {
    order.resize(pts.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t c) {
      return pts[a].x2 < pts[c].x2 || (pts[a].x2 == pts[c].x2 && a < c);
    });
    sorted_x2.resize(pts.size());
    for (std::size_t k = 0; k < order.size(); ++k) sorted_x2[k] = pts[order[k]].x2;
  }

  /// Accumulates row iy of the slice. weight(i) returns the per-point factor.
  template <class Weight>
  void row(std::size_t iy, std::span<double> slice_row, Weight&& weight) const {
    const Axis& ax = grid->x1;
    const double yc = grid->x2.center(iy);
    const double reach = kernel_truncation * b;
    auto lo = std::lower_bound(sorted_x2.begin(), sorted_x2.end(), yc - reach);
    auto hi = std::upper_bound(sorted_x2.begin(), sorted_x2.end(), yc + reach);
    const long nx = static_cast<long>(ax.count);
    for (auto it = lo; it != hi; ++it) {
      const std::size_t i = order[static_cast<std::size_t>(it - sorted_x2.begin())];
      const double w = weight(i);
      if (w == 0.0) continue;
      const double gy = gaussian1(yc - pts[i].x2, b) * w;
      const auto ix0 = std::max(0L, static_cast<long>(std::floor((pts[i].x1 - reach - ax.origin) / ax.step)));
      const auto ix1 = std::min(nx - 1, static_cast<long>(std::floor((pts[i].x1 + reach - ax.origin) / ax.step)));
      for (long ix = ix0; ix <= ix1; ++ix) {
        const double dx = ax.center(static_cast<std::size_t>(ix)) - pts[i].x1;
        if (std::abs(dx) > reach) continue;
        slice_row[static_cast<std::size_t>(ix)] += gy * gaussian1(dx, b);
      }
    }
    for (std::size_t ix = 0; ix < ax.count; ++ix)
      if (!grid->in_mask_spatial(ix, iy)) slice_row[ix] = 0.0;
  }
};

}  // namespace detail

/// Diggle-corrected Gaussian kernel estimate of lambda_s on a spatial grid.
/// The edge weights use the same grid quadrature as the output, so the field
/// integrates to exactly n over the grid.
inline IntensityEstimate estimate_lambda_s(const SpatialPattern& pattern, const KernelSpec& kernel,
                                           const GridSpec& grid) {
  kernel.validate();
  if (grid.kind != GridKind::spatial) throw Error("estimate_lambda_s: grid must be spatial");
  IntensityEstimate est;
  est.field = ScalarField(grid);
  est.bandwidth_space = kernel.bandwidth;
  if (pattern.empty()) {
    est.empty_input = true;
    est.warnings.push_back("empty pattern: intensity is identically zero");
    return est;
  }
  const auto e = detail::spatial_edge_weights(pattern.points, kernel, grid);
  detail::SpatialSplatter splat(pattern.points, kernel.bandwidth, grid);
  auto values = est.field.values();
  parallel_for(grid.ny(), [&](std::size_t iy) {
    splat.row(iy, values.subspan(iy * grid.nx(), grid.nx()), [&](std::size_t i) { return 1.0 / e[i]; });
  });
  return est;
}

/// Diggle-corrected Gaussian kernel estimate of lambda_t (analytic edge weights).
inline IntensityEstimate estimate_lambda_t(const TemporalPattern& pattern, const KernelSpec& kernel,
                                           const GridSpec& grid) {
  kernel.validate();
  if (grid.kind != GridKind::temporal) throw Error("estimate_lambda_t: grid must be temporal");
  IntensityEstimate est;
  est.field = ScalarField(grid);
  est.bandwidth_time = kernel.bandwidth;
  if (pattern.empty()) {
    est.empty_input = true;
    est.warnings.push_back("empty pattern: intensity is identically zero");
    return est;
  }
  std::vector<double> times = pattern.times;
  std::sort(times.begin(), times.end());
  const auto e = detail::temporal_edge_weights(times, kernel, pattern.interval);
  const double b = kernel.bandwidth, reach = kernel_truncation * b;
  auto values = est.field.values();
  parallel_for(grid.nt(), [&](std::size_t it) {
    const double tc = grid.t.center(it);
    auto lo = std::lower_bound(times.begin(), times.end(), tc - reach);
    auto hi = std::upper_bound(times.begin(), times.end(), tc + reach);
    double s = 0.0;
    for (auto p = lo; p != hi; ++p) s += gaussian1(tc - *p, b) / e[static_cast<std::size_t>(p - times.begin())];
    values[it] = s;
  });
  return est;
}

struct SpaceTimeEstimateOptions {
  /// Constant retention probability of the input (divides the output).
  std::optional<RetentionSpec> retention;
  /// Refuse grids whose value buffer exceeds this many bytes.
  std::size_t memory_cap_bytes = std::size_t{2} << 30;
};

/// Product-kernel estimate of lambda_st with Diggle corrections in space and time.
inline IntensityEstimate estimate_lambda_st(const SpaceTimePattern& pattern, const KernelSpec& ks,
                                            const KernelSpec& kt, const GridSpec& grid,
                                            const SpaceTimeEstimateOptions& opts = {}) {
  ks.validate();
  kt.validate();
  if (grid.kind != GridKind::spacetime) throw Error("estimate_lambda_st: grid must be space-time");
  if (grid.size() * sizeof(double) > opts.memory_cap_bytes)
    throw Error("estimate_lambda_st: grid of " + std::to_string(grid.size()) +
                " cells exceeds the memory cap; use a coarser grid");
  double pi0 = 1.0;
  if (opts.retention) {
    const auto* c = std::get_if<ConstantRetention>(&*opts.retention);
    if (!c) throw Error("estimate_lambda_st: only constant retention can be corrected for");
    if (!(c->pi0 > 0.0 && c->pi0 <= 1.0)) throw Error("estimate_lambda_st: retention must lie in (0,1]");
    pi0 = c->pi0;
  }

  GridSpec sgrid = grid;
  sgrid.kind = GridKind::spatial;
  sgrid.t = make_axis(grid.t.lo(), grid.t.hi(), 1);

  IntensityEstimate est;
  est.field = ScalarField(grid);
  est.bandwidth_space = ks.bandwidth;
  est.bandwidth_time = kt.bandwidth;
  est.retention = pi0;
  if (pattern.empty()) {
    est.empty_input = true;
    est.warnings.push_back("empty pattern: intensity is identically zero");
    return est;
  }
  auto [sp, tp] = project(pattern);
  const auto es = detail::spatial_edge_weights(sp.points, ks, sgrid);
  const auto et = detail::temporal_edge_weights(tp.times, kt, pattern.window().time());
  const double bt = kt.bandwidth, reach_t = kernel_truncation * bt;
  const std::size_t slice = grid.spatial_size();
  auto values = est.field.values();
  // times are sorted (pattern invariant), so each slice sees a contiguous run
  parallel_for(grid.nt(), [&](std::size_t it) {
    const double tc = grid.t.center(it);
    auto lo = std::lower_bound(tp.times.begin(), tp.times.end(), tc - reach_t);
    auto hi = std::upper_bound(tp.times.begin(), tp.times.end(), tc + reach_t);
    if (lo == hi) return;
    const auto first = static_cast<std::size_t>(lo - tp.times.begin());
    const auto last = static_cast<std::size_t>(hi - tp.times.begin());
    std::span<const Vec2> local(sp.points.data() + first, last - first);
    std::vector<double> w(last - first);
    for (std::size_t k = 0; k < w.size(); ++k)
      w[k] = gaussian1(tc - tp.times[first + k], bt) / (et[first + k] * es[first + k] * pi0);
    detail::SpatialSplatter splat(local, ks.bandwidth, sgrid);
    for (std::size_t iy = 0; iy < grid.ny(); ++iy)
      splat.row(iy, values.subspan(it * slice + iy * grid.nx(), grid.nx()), [&](std::size_t k) { return w[k]; });
  });
  return est;
}

// ---------------------------------------------------------------------------
// Point evaluation (used by bandwidth selection)

/// Kernel estimator of lambda_s evaluated at arbitrary locations from the
/// `fit` points, with exact Diggle weights. When `skip_self` is set, query k
/// excludes fit point k (leave-one-out; requires query == fit).
class KernelEvaluator {
 public:
  KernelEvaluator(std::span<const Vec2> fit, const KernelSpec& kernel, const Window& window)
      : tree_(fit), b_(kernel.bandwidth), inv_e_(fit.size()) {
    kernel.validate();
    for (std::size_t i = 0; i < fit.size(); ++i) inv_e_[i] = 1.0 / diggle_correction(fit[i], kernel, window);
  }

  double operator()(const Vec2& q, std::optional<std::size_t> skip = std::nullopt) const {
    double s = 0.0;
    tree_.radius(q, kernel_truncation * b_, [&](std::size_t i, double d2) {
      if (skip && *skip == i) return;
      s += gaussian2(d2, b_) * inv_e_[i];
    });
    return s;
  }

 private:
  KdTree2 tree_;
  double b_;
  std::vector<double> inv_e_;
};

}  // namespace stpp

#endif  // STPP_INTENSITY_HPP
