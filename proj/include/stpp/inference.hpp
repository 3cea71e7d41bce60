#ifndef STPP_INFERENCE_HPP
#define STPP_INFERENCE_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <boost/math/special_functions/gamma.hpp>

#include "stpp/core.hpp"

namespace stpp {

// ---------------------------------------------------------------------------
// Global envelope tests with extreme rank length ordering

/// Observed curve plus B replicates on a shared argument grid.
struct CurveSet {
  std::vector<double> args;
  std::vector<double> observed;
  std::vector<std::vector<double>> replicates;

  std::size_t size() const noexcept { return args.size(); }
  std::size_t replicate_count() const noexcept { return replicates.size(); }

  void validate() const {
    if (args.empty()) throw Error("curve set: empty argument grid");
    if (observed.size() != args.size()) throw Error("curve set: observed curve does not match the grid");
    if (replicates.empty()) throw Error("curve set: no replicates");
    for (const auto& r : replicates)
      if (r.size() != args.size()) throw Error("curve set: replicate curve does not match the grid");
    auto finite = [](const std::vector<double>& v) {
      return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
    };
    if (!finite(observed) || !std::all_of(replicates.begin(), replicates.end(), finite))
      throw Error("curve set: curves must be finite");
  }
};

struct EnvelopeResult {
  std::vector<double> args;
  std::vector<double> observed;
  std::vector<double> central;  // pointwise mean of the replicates
  std::vector<double> lower;
  std::vector<double> upper;
  std::vector<bool> outside;                   // observed outside [lower, upper]
  std::vector<std::vector<double>> erl;        // sorted pointwise extreme ranks; [0] = observed
  double p_value = 1.0;
  std::size_t replicates = 0;
  double alpha = 0.05;
  std::vector<std::size_t> component_offsets;  // start of each component in a combined test
  std::vector<std::string> warnings;

  bool rejected() const noexcept { return p_value <= alpha; }
};

namespace detail {

/// Pointwise average ranks (1 = smallest) of the rows of curves[c][k].
inline std::vector<std::vector<double>> pointwise_ranks(const std::vector<const std::vector<double>*>& curves) {
  const std::size_t nc = curves.size(), m = curves.front()->size();
  std::vector<std::vector<double>> rank(nc, std::vector<double>(m));
  std::vector<std::size_t> order(nc);
  for (std::size_t k = 0; k < m; ++k) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return (*curves[a])[k] < (*curves[b])[k]; });
    for (std::size_t i = 0; i < nc;) {
      std::size_t j = i + 1;
      while (j < nc && (*curves[order[j]])[k] == (*curves[order[i]])[k]) ++j;
      const double avg = 0.5 * static_cast<double>(i + 1 + j);
      for (std::size_t q = i; q < j; ++q) rank[order[q]][k] = avg;
      i = j;
    }
  }
  return rank;
}

/// Extremeness ordering of curves from their ERL vectors; smaller is more extreme.
inline std::vector<std::vector<double>> erl_vectors(const std::vector<std::vector<double>>& ranks) {
  const double n1 = static_cast<double>(ranks.size()) + 1.0;
  std::vector<std::vector<double>> erl(ranks.size());
  for (std::size_t c = 0; c < ranks.size(); ++c) {
    erl[c].resize(ranks[c].size());
    for (std::size_t k = 0; k < ranks[c].size(); ++k) erl[c][k] = std::min(ranks[c][k], n1 - ranks[c][k]);
    std::sort(erl[c].begin(), erl[c].end());
  }
  return erl;
}

inline EnvelopeResult erl_from_curves(const std::vector<const std::vector<double>*>& curves,
                                      const std::vector<std::vector<double>>& erl, double alpha) {
  const std::size_t nc = curves.size(), m = curves.front()->size();
  const std::size_t B = nc - 1;
  EnvelopeResult res;
  res.alpha = alpha;
  res.replicates = B;
  res.observed = *curves[0];
  res.erl = erl;

  std::size_t as_extreme = 0;
  for (std::size_t c = 1; c < nc; ++c)
    if (!std::lexicographical_compare(erl[0].begin(), erl[0].end(), erl[c].begin(), erl[c].end())) ++as_extreme;
  res.p_value = static_cast<double>(1 + as_extreme) / static_cast<double>(B + 1);

  std::vector<std::size_t> order(nc);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return std::lexicographical_compare(erl[a].begin(), erl[a].end(), erl[b].begin(), erl[b].end());
  });
  const auto k_alpha = static_cast<std::size_t>(std::ceil(alpha * static_cast<double>(B + 1) - 1e-9));
  const std::size_t drop = std::min(nc - 1, k_alpha > 0 ? k_alpha - 1 : 0);

  res.lower.assign(m, std::numeric_limits<double>::infinity());
  res.upper.assign(m, -std::numeric_limits<double>::infinity());
  for (std::size_t q = drop; q < nc; ++q) {
    const auto& v = *curves[order[q]];
    for (std::size_t k = 0; k < m; ++k) {
      res.lower[k] = std::min(res.lower[k], v[k]);
      res.upper[k] = std::max(res.upper[k], v[k]);
    }
  }
  res.central.assign(m, 0.0);
  for (std::size_t c = 1; c < nc; ++c)
    for (std::size_t k = 0; k < m; ++k) res.central[k] += (*curves[c])[k] / static_cast<double>(B);
  res.outside.resize(m);
  for (std::size_t k = 0; k < m; ++k) res.outside[k] = res.observed[k] < res.lower[k] || res.observed[k] > res.upper[k];
  if (static_cast<double>(B) < 2.0 / alpha - 1.0)
    res.warnings.push_back("fewer replicates than recommended for this level (B >= 2/alpha - 1)");
  return res;
}

}  // namespace detail

/// Two-sided global envelope test ordered by extreme rank length.
inline EnvelopeResult erl_test(const CurveSet& curves, double alpha = 0.05) {
  curves.validate();
  if (!(alpha > 0.0 && alpha < 1.0)) throw Error("erl_test: alpha must lie in (0,1)");
  std::vector<const std::vector<double>*> all{&curves.observed};
  for (const auto& r : curves.replicates) all.push_back(&r);
  auto res = detail::erl_from_curves(all, detail::erl_vectors(detail::pointwise_ranks(all)), alpha);
  res.args = curves.args;
  res.component_offsets = {0};
  return res;
}

/// Combined test over several curve sets: each component is rank-transformed
/// pointwise, the transformed curves are concatenated per replicate, and the
/// ERL test runs on the concatenation. Envelopes are reported in the original
/// units, component after component.
inline EnvelopeResult combined_erl_test(const std::vector<CurveSet>& sets, double alpha = 0.05) {
  if (sets.empty()) throw Error("combined_erl_test: no curve sets");
  const std::size_t B = sets.front().replicate_count();
  for (const auto& s : sets) {
    s.validate();
    if (s.replicate_count() != B) throw Error("combined_erl_test: curve sets have different replicate counts");
  }
  if (!(alpha > 0.0 && alpha < 1.0)) throw Error("combined_erl_test: alpha must lie in (0,1)");

  std::vector<std::vector<double>> raw(B + 1), transformed(B + 1);
  EnvelopeResult res;
  for (const auto& s : sets) {
    res.component_offsets.push_back(res.args.size());
    res.args.insert(res.args.end(), s.args.begin(), s.args.end());
    std::vector<const std::vector<double>*> comp{&s.observed};
    for (const auto& r : s.replicates) comp.push_back(&r);
    const auto ranks = detail::pointwise_ranks(comp);
    for (std::size_t c = 0; c <= B; ++c) {
      raw[c].insert(raw[c].end(), comp[c]->begin(), comp[c]->end());
      transformed[c].insert(transformed[c].end(), ranks[c].begin(), ranks[c].end());
    }
  }
  std::vector<const std::vector<double>*> tptr, rptr;
  for (std::size_t c = 0; c <= B; ++c) {
    tptr.push_back(&transformed[c]);
    rptr.push_back(&raw[c]);
  }
  auto erl = detail::erl_vectors(detail::pointwise_ranks(tptr));
  auto out = detail::erl_from_curves(rptr, erl, alpha);
  out.args = std::move(res.args);
  out.component_offsets = std::move(res.component_offsets);
  return out;
}

// ---------------------------------------------------------------------------
// Quadrat test

/// Region adaptor over a Window (rectangle or polygon mask).
struct WindowRegion {
  const Window* window;

  Rect bounds() const noexcept { return window->rect(); }
  double area() const noexcept { return window->area(); }
  double area_in(const Rect& tile) const {
    if (!window->has_mask()) {
      const Rect& r = window->rect();
      const double w = std::min(r.hi1, tile.hi1) - std::max(r.lo1, tile.lo1);
      const double h = std::min(r.hi2, tile.hi2) - std::max(r.lo2, tile.lo2);
      return w > 0.0 && h > 0.0 ? w * h : 0.0;
    }
    return std::abs(signed_area(clip_rect(window->mask(), tile)));
  }
};

/// Region formed by a union of disjoint polygons (e.g. selected Voronoi cells).
struct CellUnionRegion {
  std::vector<Polygon> cells;
  std::vector<Rect> boxes;
  Rect box{};
  double total = 0.0;

  CellUnionRegion() = default;
  explicit CellUnionRegion(std::vector<Polygon> polys) : cells(std::move(polys)) {
    bool first = true;
    for (const auto& p : cells) {
      boxes.push_back(bounding_box(p));
      total += std::abs(signed_area(p));
      const Rect& b = boxes.back();
      if (first) box = b;
      box = Rect{std::min(box.lo1, b.lo1), std::max(box.hi1, b.hi1), std::min(box.lo2, b.lo2), std::max(box.hi2, b.hi2)};
      first = false;
    }
  }

  Rect bounds() const noexcept { return box; }
  double area() const noexcept { return total; }
  double area_in(const Rect& tile) const {
    double s = 0.0;
    for (std::size_t i = 0; i < cells.size(); ++i) {
      const Rect& b = boxes[i];
      if (b.hi1 <= tile.lo1 || b.lo1 >= tile.hi1 || b.hi2 <= tile.lo2 || b.lo2 >= tile.hi2) continue;
      if (b.lo1 >= tile.lo1 && b.hi1 <= tile.hi1 && b.lo2 >= tile.lo2 && b.hi2 <= tile.hi2) {
        s += std::abs(signed_area(cells[i]));
      } else {
        s += std::abs(signed_area(clip_rect(cells[i], tile)));
      }
    }
    return s;
  }
};

struct QuadratOptions {
  std::optional<std::pair<std::size_t, std::size_t>> tiles;  // nx, ny; automatic when empty
  bool monte_carlo = false;
  std::size_t mc_replicates = 1999;
  std::uint64_t seed = 0;
};

struct QuadratResult {
  double statistic = 0.0;
  double p_value = 1.0;
  std::size_t nx = 0, ny = 0;
  std::size_t tiles_used = 0;  // tiles intersecting the region
  std::vector<std::size_t> counts;
  std::vector<double> expected;
  std::vector<std::string> warnings;
};

/// Automatic tiles per axis: ceil(sqrt(n/10)) capped at 10.
inline std::size_t auto_quadrat_tiles(std::size_t n) {
  const auto m = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(n) / 10.0)));
  return std::clamp<std::size_t>(m, 1, 10);
}

/// Chi-square test of homogeneity: tile counts against expectations
/// proportional to the region area inside each tile.
template <class Region>
QuadratResult quadrat_test(std::span<const Vec2> points, const Region& region, const QuadratOptions& opts = {}) {
  const std::size_t n = points.size();
  if (n == 0) throw Error("quadrat_test: empty pattern");
  const Rect bb = region.bounds();
  const double total_area = region.area();
  if (!(total_area > 0.0)) throw Error("quadrat_test: region has zero area");

  QuadratResult res;
  std::size_t nx, ny;
  const bool automatic = !opts.tiles.has_value();
  if (automatic) {
    nx = ny = auto_quadrat_tiles(n);
  } else {
    std::tie(nx, ny) = *opts.tiles;
    if (nx == 0 || ny == 0) throw Error("quadrat_test: tile counts must be positive");
  }

  auto build = [&](std::size_t mx, std::size_t my) {
    std::vector<double> areas(mx * my);
    const double w = bb.width() / static_cast<double>(mx), h = bb.height() / static_cast<double>(my);
    for (std::size_t j = 0; j < my; ++j)
      for (std::size_t i = 0; i < mx; ++i) {
        const Rect tile{bb.lo1 + static_cast<double>(i) * w, bb.lo1 + static_cast<double>(i + 1) * w,
                        bb.lo2 + static_cast<double>(j) * h, bb.lo2 + static_cast<double>(j + 1) * h};
        areas[j * mx + i] = region.area_in(tile);
      }
    return areas;
  };

  std::vector<double> areas = build(nx, ny);
  auto mean_expected = [&](const std::vector<double>& a) {
    std::size_t used = 0;
    for (double v : a) used += v > 0.0 ? 1 : 0;
    return used ? static_cast<double>(n) / static_cast<double>(used) : 0.0;
  };
  if (automatic) {
    bool coarsened = false;
    while (mean_expected(areas) < 5.0 && (nx > 1 || ny > 1)) {
      nx = std::max<std::size_t>(1, nx - 1);
      ny = std::max<std::size_t>(1, ny - 1);
      areas = build(nx, ny);
      coarsened = true;
    }
    if (coarsened) res.warnings.push_back("tiles coarsened to keep mean expected count >= 5");
  }
  res.nx = nx;
  res.ny = ny;

  const double w = bb.width() / static_cast<double>(nx), h = bb.height() / static_cast<double>(ny);
  res.counts.assign(nx * ny, 0);
  for (const auto& p : points) {
    const auto i = std::min(nx - 1, static_cast<std::size_t>(std::max(0.0, (p.x1 - bb.lo1) / w)));
    const auto j = std::min(ny - 1, static_cast<std::size_t>(std::max(0.0, (p.x2 - bb.lo2) / h)));
    ++res.counts[j * nx + i];
  }
  const double area_sum = std::accumulate(areas.begin(), areas.end(), 0.0);
  res.expected.resize(nx * ny);
  std::vector<std::size_t> used;
  bool sparse = false;
  for (std::size_t t = 0; t < nx * ny; ++t) {
    res.expected[t] = static_cast<double>(n) * areas[t] / area_sum;
    if (areas[t] > 0.0) {
      used.push_back(t);
      if (res.expected[t] < 1.0) sparse = true;
    } else if (res.counts[t] > 0) {
      throw Error("quadrat_test: points found in a tile that does not meet the region");
    }
  }
  if (sparse) res.warnings.push_back("some tiles have expected count below 1; chi-square approximation is rough");
  res.tiles_used = used.size();

  auto chi2 = [&](const std::vector<std::size_t>& counts) {
    double s = 0.0;
    for (std::size_t t : used) {
      const double d = static_cast<double>(counts[t]) - res.expected[t];
      s += d * d / res.expected[t];
    }
    return s;
  };
  res.statistic = chi2(res.counts);
  const double df = static_cast<double>(used.size()) - 1.0;

  if (!opts.monte_carlo) {
    res.p_value = df > 0.0 ? boost::math::gamma_q(0.5 * df, 0.5 * res.statistic) : 1.0;
    return res;
  }
  Rng rng = substream(opts.seed, 0x9ad7);
  std::vector<double> cum;
  double acc = 0.0;
  for (std::size_t t : used) {
    acc += res.expected[t];
    cum.push_back(acc);
  }
  std::size_t ge = 0;
  std::vector<std::size_t> sim(nx * ny);
  for (std::size_t r = 0; r < opts.mc_replicates; ++r) {
    std::fill(sim.begin(), sim.end(), 0);
    for (std::size_t k = 0; k < n; ++k) {
      const double u = uniform01(rng) * acc;
      const auto pos = static_cast<std::size_t>(std::upper_bound(cum.begin(), cum.end(), u) - cum.begin());
      ++sim[used[std::min(pos, used.size() - 1)]];
    }
    if (chi2(sim) >= res.statistic * (1.0 - 1e-12)) ++ge;
  }
  res.p_value = static_cast<double>(ge + 1) / static_cast<double>(opts.mc_replicates + 1);
  return res;
}

inline QuadratResult quadrat_test(const SpatialPattern& pattern, const QuadratOptions& opts = {}) {
  return quadrat_test(std::span<const Vec2>(pattern.points), WindowRegion{&pattern.window}, opts);
}

}  // namespace stpp

#endif  // STPP_INFERENCE_HPP
