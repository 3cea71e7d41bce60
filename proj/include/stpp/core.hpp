#ifndef STPP_CORE_HPP
#define STPP_CORE_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "stpp/geometry.hpp"
#include "stpp/parallel.hpp"

namespace stpp {

/// Base class for all errors raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct SpaceTimePoint {
  double x1 = 0.0;
  double x2 = 0.0;
  double t = 0.0;

  Vec2 location() const noexcept { return {x1, x2}; }
  friend bool operator==(const SpaceTimePoint&, const SpaceTimePoint&) = default;
};

/// Time-major ordering used for stored patterns (t, then x1, then x2).
inline bool time_order(const SpaceTimePoint& a, const SpaceTimePoint& b) noexcept {
  return std::tie(a.t, a.x1, a.x2) < std::tie(b.t, b.x1, b.x2);
}

/// Observation domain W x T: a rectangle with an optional polygonal mask,
/// times an interval.
class Window {
 public:
  Window() = default;

  Window(Rect spatial, Interval temporal, Polygon mask = {})
      : rect_(spatial), time_(temporal), mask_(std::move(mask)) {
    if (!(rect_.hi1 > rect_.lo1) || !(rect_.hi2 > rect_.lo2))
      throw Error("window: spatial rectangle must have positive side lengths");
    if (!(time_.hi > time_.lo)) throw Error("window: temporal interval must have positive length");
    if (!std::isfinite(rect_.area()) || !std::isfinite(time_.length()))
      throw Error("window: bounds must be finite");
    if (!mask_.empty()) {
      if (mask_.size() < 3) throw Error("window: polygon mask needs at least 3 vertices");
      area_ = polygon_area(mask_);
      if (!(area_ > 0.0)) throw Error("window: polygon mask has zero area");
    } else {
      area_ = rect_.area();
    }
  }

  /// Window whose rectangle is the bounding box of `mask`.
  static Window from_polygon(Polygon mask, Interval temporal) {
    const Rect box = bounding_box(mask);
    return Window(box, temporal, std::move(mask));
  }

  const Rect& rect() const noexcept { return rect_; }
  const Interval& time() const noexcept { return time_; }
  const Polygon& mask() const noexcept { return mask_; }
  bool has_mask() const noexcept { return !mask_.empty(); }

  double area() const noexcept { return area_; }
  double duration() const noexcept { return time_.length(); }
  double volume() const noexcept { return area_ * time_.length(); }

  bool contains(const Vec2& p) const noexcept {
    if (!rect_.contains(p)) return false;
    return mask_.empty() || point_in_polygon(mask_, p);
  }
  bool contains(const SpaceTimePoint& y) const noexcept {
    return time_.contains(y.t) && contains(y.location());
  }

  /// Distance from p to the spatial boundary (rectangle edges or mask edges).
  double boundary_distance(const Vec2& p) const noexcept {
    if (!mask_.empty()) return distance_to_boundary(mask_, p);
    return std::min({p.x1 - rect_.lo1, rect_.hi1 - p.x1, p.x2 - rect_.lo2, rect_.hi2 - p.x2});
  }

  friend bool operator==(const Window& a, const Window& b) {
    return a.rect_ == b.rect_ && a.time_ == b.time_ && a.mask_ == b.mask_;
  }

 private:
  Rect rect_{};
  Interval time_{};
  Polygon mask_;
  double area_ = 1.0;
};

enum class DuplicatePolicy { reject, jitter };

struct PatternOptions {
  DuplicatePolicy duplicates = DuplicatePolicy::reject;
  std::uint64_t jitter_seed = 0;
  static constexpr double jitter_amplitude = 1e-9;
};

/// Simple space-time point pattern, sorted by time, inside its window.
class SpaceTimePattern {
 public:
  SpaceTimePattern() = default;
  explicit SpaceTimePattern(Window window) : window_(std::move(window)) {}

  SpaceTimePattern(std::vector<SpaceTimePoint> points, Window window, PatternOptions opts = {})
      : points_(std::move(points)), window_(std::move(window)) {
    for (std::size_t i = 0; i < points_.size(); ++i) {
      const auto& y = points_[i];
      if (!std::isfinite(y.x1) || !std::isfinite(y.x2) || !std::isfinite(y.t))
        throw Error("pattern: non-finite coordinate at index " + std::to_string(i));
      if (y.t < 0.0) throw Error("pattern: negative time at index " + std::to_string(i));
      if (!window_.contains(y)) throw Error("pattern: point " + std::to_string(i) + " lies outside the window");
    }
    if (!std::is_sorted(points_.begin(), points_.end(), time_order))
      std::sort(points_.begin(), points_.end(), time_order);
    if (has_duplicates()) {
      if (opts.duplicates == DuplicatePolicy::reject)
        throw Error("pattern: duplicate events violate simplicity (enable jitter to perturb them)");
      jitter(opts.jitter_seed);
    }
  }

  std::span<const SpaceTimePoint> points() const noexcept { return points_; }
  const Window& window() const noexcept { return window_; }
  std::size_t size() const noexcept { return points_.size(); }
  bool empty() const noexcept { return points_.empty(); }
  const SpaceTimePoint& operator[](std::size_t i) const noexcept { return points_[i]; }

  friend bool operator==(const SpaceTimePattern&, const SpaceTimePattern&) = default;

 private:
  bool has_duplicates() const noexcept {
    return std::adjacent_find(points_.begin(), points_.end()) != points_.end();
  }

  void jitter(std::uint64_t seed) {
    Rng rng = substream(seed, 0x6a17);
    std::uniform_real_distribution<double> u(-PatternOptions::jitter_amplitude, PatternOptions::jitter_amplitude);
    const Rect& r = window_.rect();
    const Interval& ti = window_.time();
    for (int round = 0; round < 64 && has_duplicates(); ++round) {
      for (std::size_t i = 0; i + 1 < points_.size(); ++i) {
        if (!(points_[i] == points_[i + 1])) continue;
        auto& y = points_[i + 1];
        y.x1 = std::clamp(y.x1 + u(rng), r.lo1, r.hi1);
        y.x2 = std::clamp(y.x2 + u(rng), r.lo2, r.hi2);
        y.t = std::clamp(y.t + u(rng), std::max(0.0, ti.lo), ti.hi);
      }
      std::sort(points_.begin(), points_.end(), time_order);
    }
    if (has_duplicates()) throw Error("pattern: jitter failed to remove duplicates");
  }

  std::vector<SpaceTimePoint> points_;
  Window window_;
};

/// Locations of a pattern aggregated over time (X_s).
struct SpatialPattern {
  std::vector<Vec2> points;
  Window window;

  std::size_t size() const noexcept { return points.size(); }
  bool empty() const noexcept { return points.empty(); }
  friend bool operator==(const SpatialPattern&, const SpatialPattern&) = default;
};

/// Times of a pattern aggregated over space (X_t).
struct TemporalPattern {
  std::vector<double> times;
  Interval interval;

  std::size_t size() const noexcept { return times.size(); }
  bool empty() const noexcept { return times.empty(); }
  friend bool operator==(const TemporalPattern&, const TemporalPattern&) = default;
};

/// Volume 2*tau*pi*r^2 of the cylinder {|x| <= r, |t| <= tau}.
inline double ball_volume(double r, double tau) {
  if (!(r >= 0.0) || !(tau >= 0.0)) throw std::domain_error("ball_volume: r and tau must be nonnegative");
  return 2.0 * tau * std::numbers::pi * r * r;
}

/// Region A x B for count queries.
struct Box {
  Rect space;
  Interval time;
};

/// N(A x B): number of events with x in A and t in B (closed bounds).
inline std::size_t count_in(const SpaceTimePattern& pattern, const Box& region) {
  const auto pts = pattern.points();
  auto lo = std::lower_bound(pts.begin(), pts.end(), region.time.lo,
                             [](const SpaceTimePoint& y, double t) { return y.t < t; });
  std::size_t n = 0;
  for (auto it = lo; it != pts.end() && it->t <= region.time.hi; ++it)
    if (region.space.contains(it->location())) ++n;
  return n;
}

inline std::pair<SpatialPattern, TemporalPattern> project(const SpaceTimePattern& pattern) {
  SpatialPattern s{{}, pattern.window()};
  TemporalPattern t{{}, pattern.window().time()};
  s.points.reserve(pattern.size());
  t.times.reserve(pattern.size());
  for (const auto& y : pattern.points()) {
    s.points.push_back(y.location());
    t.times.push_back(y.t);
  }
  return {std::move(s), std::move(t)};
}

// ---------------------------------------------------------------------------
// Grids and gridded fields

/// Regular axis of `count` cells starting at `origin`, each `step` wide.
struct Axis {
  double origin = 0.0;
  double step = 1.0;
  std::size_t count = 1;

  double center(std::size_t i) const noexcept { return origin + (static_cast<double>(i) + 0.5) * step; }
  double lo() const noexcept { return origin; }
  double hi() const noexcept { return origin + static_cast<double>(count) * step; }
  /// Cell index containing v, or nullopt when v falls outside the axis.
  std::optional<std::size_t> cell_of(double v) const noexcept {
    if (v < lo() || v > hi()) return std::nullopt;
    auto i = static_cast<std::size_t>((v - origin) / step);
    return std::min(i, count - 1);
  }
  friend bool operator==(const Axis&, const Axis&) = default;
};

inline Axis make_axis(double lo, double hi, std::size_t count) {
  if (count == 0) throw Error("grid: axis needs at least one cell");
  return Axis{lo, (hi - lo) / static_cast<double>(count), count};
}

enum class GridKind { temporal, spatial, spacetime };

/// Cell layout over T, W, or W x T. Flat index is (it * ny + iy) * nx + ix;
/// unused axes have a single cell. The spatial mask marks raster cells whose
/// centre lies in the window.
struct GridSpec {
  GridKind kind = GridKind::spatial;
  Axis x1{}, x2{}, t{};
  std::vector<std::uint8_t> spatial_mask;  // nx*ny, empty means all cells are in

  std::size_t nx() const noexcept { return x1.count; }
  std::size_t ny() const noexcept { return x2.count; }
  std::size_t nt() const noexcept { return t.count; }
  std::size_t size() const noexcept { return nx() * ny() * nt(); }
  std::size_t spatial_size() const noexcept { return nx() * ny(); }

  double cell_volume() const noexcept {
    switch (kind) {
      case GridKind::temporal: return t.step;
      case GridKind::spatial: return x1.step * x2.step;
      case GridKind::spacetime: return x1.step * x2.step * t.step;
    }
    return 0.0;
  }
  double cell_area() const noexcept { return kind == GridKind::temporal ? 1.0 : x1.step * x2.step; }

  std::size_t flat(std::size_t ix, std::size_t iy, std::size_t it = 0) const noexcept {
    return (it * ny() + iy) * nx() + ix;
  }
  bool in_mask_spatial(std::size_t ix, std::size_t iy) const noexcept {
    return spatial_mask.empty() || spatial_mask[iy * nx() + ix] != 0;
  }
  bool in_mask(std::size_t flat_index) const noexcept {
    return spatial_mask.empty() || spatial_mask[flat_index % spatial_size()] != 0;
  }
  /// Area covered by in-mask raster cells.
  double masked_area() const noexcept {
    if (kind == GridKind::temporal) return 1.0;
    std::size_t in = 0;
    for (std::size_t i = 0; i < spatial_size(); ++i) in += in_mask(i) ? 1 : 0;
    return static_cast<double>(in) * cell_area();
  }
  bool same_space(const GridSpec& o) const noexcept {
    return x1 == o.x1 && x2 == o.x2 && spatial_mask == o.spatial_mask;
  }
  friend bool operator==(const GridSpec&, const GridSpec&) = default;
};

namespace detail {
inline std::vector<std::uint8_t> raster_mask(const Window& w, const Axis& a1, const Axis& a2) {
  if (!w.has_mask()) return {};
  std::vector<std::uint8_t> m(a1.count * a2.count, 0);
  for (std::size_t iy = 0; iy < a2.count; ++iy)
    for (std::size_t ix = 0; ix < a1.count; ++ix)
      m[iy * a1.count + ix] = w.contains(Vec2{a1.center(ix), a2.center(iy)}) ? 1 : 0;
  return m;
}
}  // namespace detail

inline GridSpec spatial_grid(const Window& w, std::size_t nx, std::size_t ny) {
  GridSpec g;
  g.kind = GridKind::spatial;
  g.x1 = make_axis(w.rect().lo1, w.rect().hi1, nx);
  g.x2 = make_axis(w.rect().lo2, w.rect().hi2, ny);
  g.t = make_axis(w.time().lo, w.time().hi, 1);
  g.spatial_mask = detail::raster_mask(w, g.x1, g.x2);
  return g;
}

inline GridSpec temporal_grid(const Window& w, std::size_t nt) {
  GridSpec g;
  g.kind = GridKind::temporal;
  g.x1 = make_axis(w.rect().lo1, w.rect().hi1, 1);
  g.x2 = make_axis(w.rect().lo2, w.rect().hi2, 1);
  g.t = make_axis(w.time().lo, w.time().hi, nt);
  return g;
}

inline GridSpec spacetime_grid(const Window& w, std::size_t nx, std::size_t ny, std::size_t nt) {
  GridSpec g = spatial_grid(w, nx, ny);
  g.kind = GridKind::spacetime;
  g.t = make_axis(w.time().lo, w.time().hi, nt);
  return g;
}

/// Gridded function; values outside the mask are kept at zero.
class ScalarField {
 public:
  ScalarField() = default;
  explicit ScalarField(GridSpec grid, double fill = 0.0) : grid_(std::move(grid)), values_(grid_.size(), 0.0) {
    for (std::size_t i = 0; i < values_.size(); ++i)
      if (grid_.in_mask(i)) values_[i] = fill;
  }

  const GridSpec& grid() const noexcept { return grid_; }
  std::span<const double> values() const noexcept { return values_; }
  std::span<double> values() noexcept { return values_; }
  double& operator[](std::size_t i) noexcept { return values_[i]; }
  double operator[](std::size_t i) const noexcept { return values_[i]; }
  std::size_t size() const noexcept { return values_.size(); }

  /// Midpoint quadrature over in-mask cells.
  double integrate() const noexcept {
    double s = 0.0;
    for (std::size_t i = 0; i < values_.size(); ++i)
      if (grid_.in_mask(i)) s += values_[i];
    return s * grid_.cell_volume();
  }

  /// Mean over in-mask cells.
  double mean() const noexcept {
    double s = 0.0;
    std::size_t k = 0;
    for (std::size_t i = 0; i < values_.size(); ++i)
      if (grid_.in_mask(i)) {
        s += values_[i];
        ++k;
      }
    return k ? s / static_cast<double>(k) : 0.0;
  }

  double max() const noexcept {
    double m = 0.0;
    for (std::size_t i = 0; i < values_.size(); ++i)
      if (grid_.in_mask(i)) m = std::max(m, values_[i]);
    return m;
  }

  /// Flat index of the cell containing (x, t); nullopt outside the grid or mask.
  std::optional<std::size_t> locate(const Vec2& x, double t = 0.0) const noexcept {
    std::size_t ix = 0, iy = 0, it = 0;
    if (grid_.kind != GridKind::temporal) {
      auto a = grid_.x1.cell_of(x.x1);
      auto b = grid_.x2.cell_of(x.x2);
      if (!a || !b) return std::nullopt;
      ix = *a;
      iy = *b;
      if (!grid_.in_mask_spatial(ix, iy)) return std::nullopt;
    }
    if (grid_.kind != GridKind::spatial) {
      auto c = grid_.t.cell_of(t);
      if (!c) return std::nullopt;
      it = *c;
    }
    return grid_.flat(ix, iy, it);
  }

  /// Cell-constant lookup.
  std::optional<double> at(const Vec2& x, double t = 0.0) const noexcept {
    auto i = locate(x, t);
    if (!i) return std::nullopt;
    return values_[*i];
  }

  /// Multilinear interpolation between cell centres (clamped at the border
  /// half-cells). Out-of-mask neighbours are ignored.
  std::optional<double> interpolate(const Vec2& x, double t = 0.0) const noexcept {
    if (!locate(x, t)) return std::nullopt;
    auto bracket = [](const Axis& a, double v, std::size_t& i0, double& w) {
      double u = (v - a.origin) / a.step - 0.5;
      if (a.count == 1 || u <= 0.0) {
        i0 = 0;
        w = 0.0;
        return;
      }
      if (u >= static_cast<double>(a.count - 1)) {
        i0 = a.count - 2;
        w = 1.0;
        return;
      }
      i0 = static_cast<std::size_t>(u);
      w = u - static_cast<double>(i0);
    };
    std::size_t ix = 0, iy = 0, it = 0;
    double wx = 0.0, wy = 0.0, wt = 0.0;
    const bool has_space = grid_.kind != GridKind::temporal;
    const bool has_time = grid_.kind != GridKind::spatial;
    if (has_space) {
      bracket(grid_.x1, x.x1, ix, wx);
      bracket(grid_.x2, x.x2, iy, wy);
    }
    if (has_time) bracket(grid_.t, t, it, wt);
    double num = 0.0, den = 0.0;
    for (int dt = 0; dt <= (has_time && grid_.nt() > 1 ? 1 : 0); ++dt)
      for (int dy = 0; dy <= (has_space && grid_.ny() > 1 ? 1 : 0); ++dy)
        for (int dx = 0; dx <= (has_space && grid_.nx() > 1 ? 1 : 0); ++dx) {
          const std::size_t cx = ix + dx, cy = iy + dy, ct = it + dt;
          if (!grid_.in_mask_spatial(cx, cy)) continue;
          const double w = (dx ? wx : 1.0 - wx) * (dy ? wy : 1.0 - wy) * (dt ? wt : 1.0 - wt);
          num += w * values_[grid_.flat(cx, cy, ct)];
          den += w;
        }
    if (den <= 0.0) return at(x, t);
    return num / den;
  }

 private:
  GridSpec grid_;
  std::vector<double> values_;
};

}  // namespace stpp

#endif  // STPP_CORE_HPP
