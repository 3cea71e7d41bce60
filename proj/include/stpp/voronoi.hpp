#ifndef STPP_VORONOI_HPP
#define STPP_VORONOI_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "stpp/core.hpp"
#include "stpp/intensity.hpp"
#include "stpp/kdtree.hpp"

namespace stpp {

struct VoronoiCell {
  Polygon polygon;  // cell clipped to the window (mask clipping may leave zero-width bridges)
  double area = 0.0;
  double value = 0.0;  // 1 / area
};

/// Voronoi tessellation of a planar pattern clipped to its window. Cell i
/// belongs to generator i of the input pattern.
struct VoronoiTessellation {
  Window window;
  std::vector<Vec2> generators;
  std::vector<VoronoiCell> cells;
  KdTree2 tree;

  std::size_t size() const noexcept { return cells.size(); }
  std::size_t cell_of(const Vec2& x) const { return tree.nearest(x); }
};

namespace detail {

/// Convex cell of generator i inside rectangle r, built by successive
/// half-plane clipping against neighbours in order of distance. Stops once the
/// next neighbour is farther than twice the cell's circumradius about p.
inline Polygon voronoi_cell(const KdTree2& tree, std::size_t i, const Rect& r) {
  const Vec2 p = tree.point(i);
  const std::size_t n = tree.size();
  Polygon poly = rect_polygon(r);
  std::size_t k = std::min<std::size_t>(n - 1, 24);
  std::size_t processed = 0;  // neighbours already applied (excluding self)
  for (;;) {
    const auto nb = tree.knn(p, k + 1);
    double radius2 = 0.0;
    for (const auto& v : poly) radius2 = std::max(radius2, dist2(v, p));
    std::size_t seen = 0;
    bool done = false;
    for (const auto& q : nb) {
      if (q.index == i) continue;
      ++seen;
      if (q.dist2 > 4.0 * radius2) {
        done = true;
        break;
      }
      if (seen <= processed) continue;
      const Vec2& o = tree.point(q.index);
      const double a = o.x1 - p.x1, b = o.x2 - p.x2;
      const double c = a * 0.5 * (o.x1 + p.x1) + b * 0.5 * (o.x2 + p.x2);
      poly = clip_halfplane(poly, a, b, c);
      processed = seen;
      radius2 = 0.0;
      for (const auto& v : poly) radius2 = std::max(radius2, dist2(v, p));
    }
    if (done || k >= n - 1 || poly.empty()) break;
    k = std::min(n - 1, 2 * k);
  }
  return poly;
}

}  // namespace detail

inline VoronoiTessellation voronoi_tessellation(const SpatialPattern& pattern) {
  if (pattern.empty()) throw Error("voronoi: pattern must contain at least one point");
  VoronoiTessellation tess{pattern.window, pattern.points, {}, KdTree2(pattern.points)};
  {
    auto sorted = pattern.points;
    std::sort(sorted.begin(), sorted.end(),
              [](const Vec2& a, const Vec2& b) { return a.x1 < b.x1 || (a.x1 == b.x1 && a.x2 < b.x2); });
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
      throw Error("voronoi: duplicate generators (jitter the pattern first)");
  }
  tess.cells.resize(pattern.size());
  const Window& w = pattern.window;
  parallel_for(pattern.size(), [&](std::size_t i) {
    Polygon cell = detail::voronoi_cell(tess.tree, i, w.rect());
    if (w.has_mask() && !cell.empty()) cell = clip_convex(w.mask(), cell);
    const double area = polygon_area(cell);
    if (!(area > 0.0))
      throw Error("voronoi: cell " + std::to_string(i) + " has zero area inside the window");
    tess.cells[i] = VoronoiCell{std::move(cell), area, 1.0 / area};
  });
  return tess;
}

struct VoronoiEstimate {
  IntensityEstimate estimate;
  VoronoiTessellation tessellation;
};

/// Voronoi intensity estimator: 1/|C_i| on cell C_i, rasterised on `grid`.
inline VoronoiEstimate voronoi_intensity(const SpatialPattern& pattern, const GridSpec& grid) {
  if (grid.kind != GridKind::spatial) throw Error("voronoi_intensity: grid must be spatial");
  VoronoiEstimate out{IntensityEstimate{}, voronoi_tessellation(pattern)};
  out.estimate.field = ScalarField(grid);
  out.estimate.edge_corrected = false;
  auto values = out.estimate.field.values();
  parallel_for(grid.ny(), [&](std::size_t iy) {
    for (std::size_t ix = 0; ix < grid.nx(); ++ix) {
      if (!grid.in_mask_spatial(ix, iy)) continue;
      const Vec2 c{grid.x1.center(ix), grid.x2.center(iy)};
      values[grid.flat(ix, iy)] = out.tessellation.cells[out.tessellation.cell_of(c)].value;
    }
  });
  return out;
}

inline VoronoiEstimate voronoi_intensity(const SpatialPattern& pattern, std::size_t nx = 256, std::size_t ny = 256) {
  return voronoi_intensity(pattern, spatial_grid(pattern.window, nx, ny));
}

}  // namespace stpp

#endif  // STPP_VORONOI_HPP
