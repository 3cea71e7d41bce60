#ifndef STPP_GEOMETRY_HPP
#define STPP_GEOMETRY_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <vector>

namespace stpp {

struct Vec2 {
  double x1 = 0.0;
  double x2 = 0.0;

  friend bool operator==(const Vec2&, const Vec2&) = default;
};

inline double dist2(const Vec2& a, const Vec2& b) noexcept {
  const double d1 = a.x1 - b.x1;
  const double d2 = a.x2 - b.x2;
  return d1 * d1 + d2 * d2;
}

/// Closed axis-aligned rectangle [lo1,hi1] x [lo2,hi2].
struct Rect {
  double lo1 = 0.0, hi1 = 1.0;
  double lo2 = 0.0, hi2 = 1.0;

  double width() const noexcept { return hi1 - lo1; }
  double height() const noexcept { return hi2 - lo2; }
  double area() const noexcept { return width() * height(); }
  bool contains(const Vec2& p) const noexcept {
    return p.x1 >= lo1 && p.x1 <= hi1 && p.x2 >= lo2 && p.x2 <= hi2;
  }
  friend bool operator==(const Rect&, const Rect&) = default;
};

/// Closed interval [lo,hi].
struct Interval {
  double lo = 0.0;
  double hi = 1.0;

  double length() const noexcept { return hi - lo; }
  bool contains(double t) const noexcept { return t >= lo && t <= hi; }
  friend bool operator==(const Interval&, const Interval&) = default;
};

using Polygon = std::vector<Vec2>;

/// Signed shoelace area; positive for counter-clockwise vertex order.
inline double signed_area(std::span<const Vec2> poly) noexcept {
  const std::size_t n = poly.size();
  if (n < 3) return 0.0;
  double s = 0.0;
  for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
    s += poly[j].x1 * poly[i].x2 - poly[i].x1 * poly[j].x2;
  }
  return 0.5 * s;
}

inline double polygon_area(std::span<const Vec2> poly) noexcept {
  return std::abs(signed_area(poly));
}

/// Even-odd point-in-polygon test. Boundary points may land on either side.
inline bool point_in_polygon(std::span<const Vec2> poly, const Vec2& p) noexcept {
  bool inside = false;
  const std::size_t n = poly.size();
  for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
    const Vec2& a = poly[i];
    const Vec2& b = poly[j];
    if ((a.x2 > p.x2) != (b.x2 > p.x2)) {
      const double xc = (b.x1 - a.x1) * (p.x2 - a.x2) / (b.x2 - a.x2) + a.x1;
      if (p.x1 < xc) inside = !inside;
    }
  }
  return inside;
}

inline Rect bounding_box(std::span<const Vec2> poly) noexcept {
  Rect r{std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity(),
         std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};
  for (const auto& p : poly) {
    r.lo1 = std::min(r.lo1, p.x1);
    r.hi1 = std::max(r.hi1, p.x1);
    r.lo2 = std::min(r.lo2, p.x2);
    r.hi2 = std::max(r.hi2, p.x2);
  }
  return r;
}

inline Polygon rect_polygon(const Rect& r) {
  return {{r.lo1, r.lo2}, {r.hi1, r.lo2}, {r.hi1, r.hi2}, {r.lo1, r.hi2}};
}

/// Keeps the part of `poly` where a*x1 + b*x2 <= c (Sutherland-Hodgman step).
inline Polygon clip_halfplane(const Polygon& poly, double a, double b, double c) {
  Polygon out;
  const std::size_t n = poly.size();
  if (n == 0) return out;
  out.reserve(n + 2);
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2& cur = poly[i];
    const Vec2& nxt = poly[(i + 1) % n];
    const double fc = a * cur.x1 + b * cur.x2 - c;
    const double fn = a * nxt.x1 + b * nxt.x2 - c;
    if (fc <= 0.0) out.push_back(cur);
    if ((fc < 0.0 && fn > 0.0) || (fc > 0.0 && fn < 0.0)) {
      const double s = fc / (fc - fn);
      out.push_back({cur.x1 + s * (nxt.x1 - cur.x1), cur.x2 + s * (nxt.x2 - cur.x2)});
    }
  }
  if (out.size() < 3) out.clear();
  return out;
}

/// Clips an arbitrary simple polygon against a convex polygon (either orientation).
/// The result may contain degenerate zero-width bridges; its area is exact.
inline Polygon clip_convex(Polygon subject, std::span<const Vec2> convex) {
  const std::size_t m = convex.size();
  if (m < 3) return {};
  const double orient = signed_area(convex) >= 0.0 ? 1.0 : -1.0;
  for (std::size_t i = 0; i < m && !subject.empty(); ++i) {
    const Vec2& p = convex[i];
    const Vec2& q = convex[(i + 1) % m];
    // inside is to the left of p->q for CCW orientation
    const double a = orient * (q.x2 - p.x2);
    const double b = -orient * (q.x1 - p.x1);
    const double c = a * p.x1 + b * p.x2;
    subject = clip_halfplane(subject, a, b, c);
  }
  return subject;
}

inline Polygon clip_rect(Polygon subject, const Rect& r) {
  subject = clip_halfplane(subject, 1.0, 0.0, r.hi1);
  subject = clip_halfplane(subject, -1.0, 0.0, -r.lo1);
  subject = clip_halfplane(subject, 0.0, 1.0, r.hi2);
  subject = clip_halfplane(subject, 0.0, -1.0, -r.lo2);
  return subject;
}

inline double segment_distance(const Vec2& p, const Vec2& a, const Vec2& b) noexcept {
  const double v1 = b.x1 - a.x1, v2 = b.x2 - a.x2;
  const double len2 = v1 * v1 + v2 * v2;
  double s = len2 > 0.0 ? ((p.x1 - a.x1) * v1 + (p.x2 - a.x2) * v2) / len2 : 0.0;
  s = std::clamp(s, 0.0, 1.0);
  return std::sqrt(dist2(p, {a.x1 + s * v1, a.x2 + s * v2}));
}

inline double distance_to_boundary(std::span<const Vec2> poly, const Vec2& p) noexcept {
  double d = std::numeric_limits<double>::infinity();
  const std::size_t n = poly.size();
  for (std::size_t i = 0, j = n - 1; i < n; j = i++) d = std::min(d, segment_distance(p, poly[j], poly[i]));
  return d;
}

}  // namespace stpp

#endif  // STPP_GEOMETRY_HPP
