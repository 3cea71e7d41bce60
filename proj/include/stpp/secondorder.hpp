#ifndef STPP_SECONDORDER_HPP
#define STPP_SECONDORDER_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "stpp/core.hpp"
#include "stpp/intensity.hpp"
#include "stpp/simulate.hpp"

namespace stpp {

// ---------------------------------------------------------------------------
// Space-time inhomogeneous K function

/// Argument grid (r, tau) for K estimates. Both axes strictly increasing and
/// nonnegative.
struct KGrid {
  std::vector<double> r;
  std::vector<double> tau;

  std::size_t nr() const noexcept { return r.size(); }
  std::size_t ntau() const noexcept { return tau.size(); }

  void validate() const {
    auto ok = [](const std::vector<double>& v) {
      if (v.empty() || !(v.front() >= 0.0)) return false;
      for (std::size_t i = 1; i < v.size(); ++i)
        if (!(v[i] > v[i - 1]) || !std::isfinite(v[i])) return false;
      return true;
    };
    if (!ok(r) || !ok(tau)) throw Error("KGrid: r and tau must be nonempty, nonnegative and strictly increasing");
  }

  /// Equally spaced grid; r_max defaults to 0.2 sqrt(|W|), tau_max to 0.0075 |T|.
  static KGrid make(const Window& w, std::size_t nr = 50, std::size_t ntau = 50, double r_min = 0.0,
                    std::optional<double> r_max = std::nullopt, double tau_min = 0.0,
                    std::optional<double> tau_max = std::nullopt) {
    auto lin = [](double a, double b, std::size_t n) {
      std::vector<double> v(n);
      for (std::size_t i = 0; i < n; ++i)
        v[i] = n == 1 ? b : a + (b - a) * static_cast<double>(i) / static_cast<double>(n - 1);
      return v;
    };
    KGrid g{lin(r_min, r_max.value_or(0.2 * std::sqrt(w.area())), nr),
            lin(tau_min, tau_max.value_or(0.0075 * w.duration()), ntau)};
    g.validate();
    return g;
  }
};

enum class EdgeCorrection { translation, border };

struct KOptions {
  EdgeCorrection correction = EdgeCorrection::translation;
  double weight_cap = 20.0;     // translation weights above this are winsorized
  double floor_quantile = 0.01; // intensity floor for estimated fields
};

struct KEstimate {
  KGrid grid;
  std::vector<double> values;  // index ir * ntau + itau
  EdgeCorrection correction = EdgeCorrection::translation;
  std::size_t pairs = 0;        // unordered pairs inside the largest cylinder
  std::size_t winsorized = 0;   // unordered pairs whose weight hit the cap
  std::size_t floored = 0;      // data points whose intensity was raised to the floor
  double intensity_floor = 0.0;
  std::vector<std::string> warnings;

  double operator()(std::size_t ir, std::size_t itau) const noexcept { return values[ir * grid.ntau() + itau]; }
};

namespace detail {

inline constexpr std::size_t k_chunk = 256;

/// Adds v over the rectangle [r0, r1] x [t0, t1] of a (nr+1) x (nt+1) difference array.
inline void rect_add(std::vector<double>& d, std::size_t nt1, std::size_t r0, std::size_t r1, std::size_t t0,
                     std::size_t t1, double v) {
  d[r0 * nt1 + t0] += v;
  d[(r1 + 1) * nt1 + t0] -= v;
  d[r0 * nt1 + t1 + 1] -= v;
  d[(r1 + 1) * nt1 + t1 + 1] += v;
}

inline void prefix2(std::vector<double>& d, std::size_t nr1, std::size_t nt1) {
  for (std::size_t i = 0; i < nr1; ++i)
    for (std::size_t j = 1; j < nt1; ++j) d[i * nt1 + j] += d[i * nt1 + j - 1];
  for (std::size_t i = 1; i < nr1; ++i)
    for (std::size_t j = 0; j < nt1; ++j) d[i * nt1 + j] += d[(i - 1) * nt1 + j];
}

/// Largest grid index whose value is <= v, or nullopt.
inline std::optional<std::size_t> last_le(const std::vector<double>& g, double v) {
  auto it = std::upper_bound(g.begin(), g.end(), v);
  if (it == g.begin()) return std::nullopt;
  return static_cast<std::size_t>(it - g.begin()) - 1;
}

struct KChunk {
  std::vector<double> num, den;
  std::size_t pairs = 0, winsorized = 0;
};

inline KEstimate k_core(const SpaceTimePattern& pattern, std::span<const double> lam, const KGrid& grid,
                        const KOptions& opts) {
  grid.validate();
  if (lam.size() != pattern.size()) throw Error("estimate_K: one intensity value per point is required");
  for (double l : lam)
    if (!(l > 0.0) || !std::isfinite(l)) throw Error("estimate_K: intensities at data points must be positive");
  const Window& w = pattern.window();
  const bool border = opts.correction == EdgeCorrection::border;
  if (!border && w.has_mask())
    throw Error("estimate_K: translation correction needs a rectangular window; use border correction");
  if (!(opts.weight_cap >= 1.0)) throw Error("estimate_K: weight cap must be at least 1");

  KEstimate est;
  est.grid = grid;
  est.correction = opts.correction;
  const std::size_t nr = grid.nr(), nt = grid.ntau(), nr1 = nr + 1, nt1 = nt + 1;
  est.values.assign(nr * nt, 0.0);
  const std::size_t n = pattern.size();
  if (n < 2 && !border) return est;

  const double rmax = grid.r.back(), tmax = grid.tau.back(), rmax2 = rmax * rmax;
  const double w1 = w.rect().width(), w2 = w.rect().height(), T = w.duration();
  const double V = w.volume();
  const auto pts = pattern.points();

  std::vector<std::optional<std::size_t>> rb(n), tb(n);
  if (border) {
    const Interval& ti = w.time();
    for (std::size_t i = 0; i < n; ++i) {
      rb[i] = last_le(grid.r, w.boundary_distance(pts[i].location()));
      tb[i] = last_le(grid.tau, std::min(pts[i].t - ti.lo, ti.hi - pts[i].t));
    }
  }

  const std::size_t chunks = (n + k_chunk - 1) / k_chunk;
  std::vector<KChunk> parts(chunks);
  parallel_for(chunks, [&](std::size_t c) {
    KChunk& part = parts[c];
    part.num.assign(nr1 * nt1, 0.0);
    if (border) part.den.assign(nr1 * nt1, 0.0);
    const std::size_t i0 = c * k_chunk, i1 = std::min(n, i0 + k_chunk);
    for (std::size_t i = i0; i < i1; ++i) {
      const auto& a = pts[i];
      if (border && rb[i] && tb[i]) rect_add(part.den, nt1, 0, *rb[i], 0, *tb[i], 1.0 / lam[i]);
      for (std::size_t j = i + 1; j < n; ++j) {
        const auto& b = pts[j];
        const double h = b.t - a.t;
        if (h > tmax) break;
        const double dx = b.x1 - a.x1, dy = b.x2 - a.x2;
        const double d2 = dx * dx + dy * dy;
        if (d2 > rmax2) continue;
        const double d = std::sqrt(d2);
        const auto ir = static_cast<std::size_t>(std::lower_bound(grid.r.begin(), grid.r.end(), d) - grid.r.begin());
        const auto it =
            static_cast<std::size_t>(std::lower_bound(grid.tau.begin(), grid.tau.end(), h) - grid.tau.begin());
        if (ir >= nr || it >= nt) continue;
        ++part.pairs;
        const double inv = 1.0 / (lam[i] * lam[j]);
        if (!border) {
          const double overlap = (w1 - std::abs(dx)) * (w2 - std::abs(dy)) * (T - h);
          double e = overlap > 0.0 ? V / overlap : opts.weight_cap;
          if (e > opts.weight_cap) {
            e = opts.weight_cap;
            ++part.winsorized;
          }
          part.num[ir * nt1 + it] += 2.0 * e * inv / V;
        } else {
          if (rb[i] && tb[i] && ir <= *rb[i] && it <= *tb[i]) rect_add(part.num, nt1, ir, *rb[i], it, *tb[i], inv);
          if (rb[j] && tb[j] && ir <= *rb[j] && it <= *tb[j]) rect_add(part.num, nt1, ir, *rb[j], it, *tb[j], inv);
        }
      }
    }
  });

  std::vector<double> num(nr1 * nt1, 0.0), den(border ? nr1 * nt1 : 0, 0.0);
  for (const auto& part : parts) {
    for (std::size_t k = 0; k < num.size(); ++k) num[k] += part.num[k];
    for (std::size_t k = 0; k < den.size(); ++k) den[k] += part.den[k];
    est.pairs += part.pairs;
    est.winsorized += part.winsorized;
  }
  prefix2(num, nr1, nt1);
  if (border) prefix2(den, nr1, nt1);
  for (std::size_t ir = 0; ir < nr; ++ir)
    for (std::size_t it = 0; it < nt; ++it) {
      const double v = num[ir * nt1 + it];
      if (border) {
        const double dn = den[ir * nt1 + it];
        est.values[ir * nt + it] = dn > 0.0 ? std::max(0.0, v / dn) : 0.0;
      } else {
        est.values[ir * nt + it] = std::max(0.0, v);
      }
    }
  if (est.winsorized > 0)
    est.warnings.push_back(std::to_string(est.winsorized) + " pair weights winsorized at " +
                           std::to_string(opts.weight_cap));
  return est;
}

}  // namespace detail

/// K estimate with known intensities at the data points (one per point, in
/// stored order).
inline KEstimate estimate_K(const SpaceTimePattern& pattern, std::span<const double> lambda_at_points,
                            const KGrid& grid, const KOptions& opts = {}) {
  return detail::k_core(pattern, lambda_at_points, grid, opts);
}

/// K estimate with a constant intensity.
inline KEstimate estimate_K(const SpaceTimePattern& pattern, double lambda, const KGrid& grid,
                            const KOptions& opts = {}) {
  std::vector<double> lam(pattern.size(), lambda);
  return detail::k_core(pattern, lam, grid, opts);
}

/// K estimate with intensities interpolated from a gridded estimate, floored
/// at the `floor_quantile` quantile of the positive field values.
inline KEstimate estimate_K(const SpaceTimePattern& pattern, const IntensityEstimate& lambda_st, const KGrid& grid,
                            const KOptions& opts = {}) {
  const auto& f = lambda_st.field;
  std::vector<double> positive;
  for (std::size_t i = 0; i < f.size(); ++i)
    if (f.grid().in_mask(i) && f[i] > 0.0) positive.push_back(f[i]);
  if (positive.empty()) {
    if (pattern.size() >= 2) throw Error("estimate_K: intensity field has no positive values");
    KEstimate e;
    e.grid = grid;
    e.correction = opts.correction;
    e.values.assign(grid.nr() * grid.ntau(), 0.0);
    return e;
  }
  const auto k = static_cast<std::size_t>(std::floor(opts.floor_quantile * static_cast<double>(positive.size() - 1)));
  std::nth_element(positive.begin(), positive.begin() + static_cast<long>(k), positive.end());
  const double floor = positive[k];
  const bool spatial_only = f.grid().kind == GridKind::spatial;
  std::vector<double> lam(pattern.size());
  std::size_t floored = 0;
  for (std::size_t i = 0; i < pattern.size(); ++i) {
    const auto& y = pattern[i];
    const auto v = f.interpolate(y.location(), spatial_only ? 0.0 : y.t);
    double l = v.value_or(0.0);
    if (!(l >= floor)) {
      l = floor;
      ++floored;
    }
    lam[i] = l;
  }
  auto est = detail::k_core(pattern, lam, grid, opts);
  est.floored = floored;
  est.intensity_floor = floor;
  if (floored > 0) est.warnings.push_back(std::to_string(floored) + " point intensities raised to the floor");
  return est;
}

/// One-dimensional averages: K_t(tau) over r in [r_m, r_M], K_s(r) over tau in
/// [tau_m, tau_M], normalised so a Poisson surface gives 2 tau and pi r^2.
struct KAverages {
  std::vector<double> tau, K_t;
  std::vector<double> r, K_s;
};

namespace detail {
inline double trapezoid(std::span<const double> x, std::span<const double> y) {
  double s = 0.0;
  for (std::size_t i = 1; i < x.size(); ++i) s += 0.5 * (x[i] - x[i - 1]) * (y[i] + y[i - 1]);
  return s;
}
}  // namespace detail

inline KAverages average_K(const KEstimate& est) {
  const KGrid& g = est.grid;
  if (g.nr() < 3 || g.ntau() < 3) throw Error("average_K: need at least 3 grid values in r and in tau");
  const double rm = g.r.front(), rM = g.r.back(), tm = g.tau.front(), tM = g.tau.back();
  const double cr = 3.0 / (std::numbers::pi * (rM * rM * rM - rm * rm * rm));
  const double ct = 1.0 / (tM * tM - tm * tm);
  KAverages out{g.tau, std::vector<double>(g.ntau()), g.r, std::vector<double>(g.nr())};
  std::vector<double> col(g.nr());
  for (std::size_t it = 0; it < g.ntau(); ++it) {
    for (std::size_t ir = 0; ir < g.nr(); ++ir) col[ir] = est(ir, it);
    out.K_t[it] = cr * detail::trapezoid(g.r, col);
  }
  for (std::size_t ir = 0; ir < g.nr(); ++ir) {
    std::span<const double> row(est.values.data() + ir * g.ntau(), g.ntau());
    out.K_s[ir] = ct * detail::trapezoid(g.tau, row);
  }
  return out;
}

/// K of a space-time Thomas process: |B| + (1 - exp(-r^2 / 4 sigma^2)) erf(tau / 2 sigma_t) / kappa.
inline double thomas_K(const ClusterModel& m, double r, double tau) {
  return ball_volume(r, tau) +
         (1.0 - std::exp(-r * r / (4.0 * m.sigma * m.sigma))) * std::erf(tau / (2.0 * m.sigma_t)) / m.kappa;
}

// ---------------------------------------------------------------------------
// F, G, J series under independent thinning

/// Inputs of the truncated F/G series. Empty I / I_tilde select the Poisson
/// reference I_k = I~_k = |B|^k.
struct SeriesDiagnostics {
  double lambda_bar = 0.0;
  double pi0 = 1.0;
  std::size_t order = 30;
  std::vector<double> I;        // I_1 .. I_order
  std::vector<double> I_tilde;  // I~_1 .. I~_order
};

struct SeriesValues {
  double one_minus_F = 1.0;
  double one_minus_G = 1.0;
  double J = 1.0;
};

/// 1 - F = 1 + sum_k (-lambda_bar pi0)^k / k! I_k, likewise 1 - G with I~_k,
/// and J = (1 - G) / (1 - F).
inline SeriesValues prop2_poisson_series(const SeriesDiagnostics& diag, double r, double tau) {
  if (!(diag.lambda_bar >= 0.0)) throw Error("series: lambda_bar must be nonnegative");
  if (!(diag.pi0 > 0.0 && diag.pi0 <= 1.0)) throw Error("series: pi0 must lie in (0,1]");
  if (diag.order < 2) throw Error("series: truncation order must be at least 2");
  const bool poisson = diag.I.empty() && diag.I_tilde.empty();
  if (!poisson && (diag.I.size() < diag.order || diag.I_tilde.size() < diag.order))
    throw Error("series: I and I_tilde need one value per order");
  const double vb = ball_volume(r, tau);
  const double x = -diag.lambda_bar * diag.pi0;

  auto sum = [&](const std::vector<double>& I, const char* name) {
    double coef = 1.0, s = 1.0, prev = 0.0, last = 0.0;
    double ib = 1.0;
    for (std::size_t k = 1; k <= diag.order; ++k) {
      coef *= x / static_cast<double>(k);
      ib *= vb;
      const double term = coef * (poisson ? ib : I[k - 1]);
      s += term;
      prev = last;
      last = term;
    }
    if (prev != 0.0 && std::abs(last / prev) >= 1.0)
      throw Error(std::string("series: terms of ") + name + " are not decreasing at the truncation order");
    return s;
  };
  SeriesValues v;
  v.one_minus_F = sum(diag.I, "1-F");
  v.one_minus_G = sum(diag.I_tilde, "1-G");
  v.J = v.one_minus_G / v.one_minus_F;
  return v;
}

// ---------------------------------------------------------------------------
// Empirical F, G, J under thinning (diagnostic only)

namespace detail {

/// Uniform 3-d bucket index over a window for cylinder queries.
class CylinderIndex {
 public:
  CylinderIndex(std::span<const SpaceTimePoint> pts, const Window& w, double r, double tau) : pts_(pts) {
    const Rect& R = w.rect();
    const Interval& T = w.time();
    o1_ = R.lo1;
    o2_ = R.lo2;
    ot_ = T.lo;
    s1_ = std::max(r, R.width() / 128.0);
    s2_ = std::max(r, R.height() / 128.0);
    st_ = std::max(tau, T.length() / 128.0);
    n1_ = static_cast<std::size_t>(R.width() / s1_) + 1;
    n2_ = static_cast<std::size_t>(R.height() / s2_) + 1;
    nt_ = static_cast<std::size_t>(T.length() / st_) + 1;
    start_.assign(n1_ * n2_ * nt_ + 1, 0);
    std::vector<std::size_t> cell(pts.size());
    for (std::size_t i = 0; i < pts.size(); ++i) {
      cell[i] = key(pts[i].x1, pts[i].x2, pts[i].t);
      ++start_[cell[i] + 1];
    }
    for (std::size_t k = 1; k < start_.size(); ++k) start_[k] += start_[k - 1];
    items_.resize(pts.size());
    auto fill = start_;
    for (std::size_t i = 0; i < pts.size(); ++i) items_[fill[cell[i]]++] = i;
  }

  /// Calls fn(index) for points y with |x - c| <= r and |t - ct| <= tau.
  template <class Fn>
  void query(double c1, double c2, double ct, double r, double tau, Fn&& fn) const {
    const auto lo1 = clampi((c1 - r - o1_) / s1_, n1_), hi1 = clampi((c1 + r - o1_) / s1_, n1_);
    const auto lo2 = clampi((c2 - r - o2_) / s2_, n2_), hi2 = clampi((c2 + r - o2_) / s2_, n2_);
    const auto lot = clampi((ct - tau - ot_) / st_, nt_), hit = clampi((ct + tau - ot_) / st_, nt_);
    const double r2 = r * r;
    for (std::size_t a = lot; a <= hit; ++a)
      for (std::size_t b = lo2; b <= hi2; ++b)
        for (std::size_t c = lo1; c <= hi1; ++c) {
          const std::size_t k = (a * n2_ + b) * n1_ + c;
          for (std::size_t q = start_[k]; q < start_[k + 1]; ++q) {
            const auto& y = pts_[items_[q]];
            const double d1 = y.x1 - c1, d2 = y.x2 - c2;
            if (d1 * d1 + d2 * d2 <= r2 && std::abs(y.t - ct) <= tau) fn(items_[q]);
          }
        }
  }

 private:
  static std::size_t clampi(double v, std::size_t n) {
    if (!(v > 0.0)) return 0;
    return std::min(n - 1, static_cast<std::size_t>(v));
  }
  std::size_t key(double x1, double x2, double t) const {
    return (clampi((t - ot_) / st_, nt_) * n2_ + clampi((x2 - o2_) / s2_, n2_)) * n1_ + clampi((x1 - o1_) / s1_, n1_);
  }

  std::span<const SpaceTimePoint> pts_;
  double o1_, o2_, ot_, s1_, s2_, st_;
  std::size_t n1_, n2_, nt_;
  std::vector<std::size_t> start_, items_;
};

/// Border-corrected sums for 1 - F and 1 - G of a pattern in the cylinder
/// metric. Each event x contributes the factor (1 - weight(x)); weight is
/// lambda_bar / lambda(x), which is 1 for stationary processes.
struct FGSums {
  double g_num = 0.0, g_den = 0.0, f_num = 0.0, f_den = 0.0;
};

inline FGSums fg_sums(std::span<const SpaceTimePoint> pts, std::span<const double> weight, const Window& w, double r,
                      double tau, std::size_t test_per_axis) {
  FGSums s;
  const CylinderIndex index(pts, w, r, tau);
  const Interval& T = w.time();
  auto interior = [&](const Vec2& x, double t) {
    return w.boundary_distance(x) >= r && t - T.lo >= tau && T.hi - t >= tau && w.contains(x);
  };
  for (std::size_t i = 0; i < pts.size(); ++i) {
    if (!interior(pts[i].location(), pts[i].t)) continue;
    double prod = 1.0;
    index.query(pts[i].x1, pts[i].x2, pts[i].t, r, tau, [&](std::size_t j) {
      if (j != i) prod *= 1.0 - weight[j];
    });
    s.g_num += prod;
    s.g_den += 1.0;
  }
  const Rect& R = w.rect();
  const double a1 = R.lo1 + r, b1 = R.hi1 - r, a2 = R.lo2 + r, b2 = R.hi2 - r, at = T.lo + tau, bt = T.hi - tau;
  if (b1 <= a1 || b2 <= a2 || bt <= at) return s;
  const auto m = static_cast<double>(test_per_axis);
  for (std::size_t k = 0; k < test_per_axis; ++k)
    for (std::size_t j = 0; j < test_per_axis; ++j)
      for (std::size_t i = 0; i < test_per_axis; ++i) {
        const Vec2 x{a1 + (b1 - a1) * (static_cast<double>(i) + 0.5) / m,
                     a2 + (b2 - a2) * (static_cast<double>(j) + 0.5) / m};
        const double t = at + (bt - at) * (static_cast<double>(k) + 0.5) / m;
        if (!interior(x, t)) continue;
        double prod = 1.0;
        index.query(x.x1, x.x2, t, r, tau, [&](std::size_t q) { prod *= 1.0 - weight[q]; });
        s.f_num += prod;
        s.f_den += 1.0;
      }
  return s;
}

}  // namespace detail

using ReferenceModel = std::variant<ClusterModel, IntensityModel>;

struct Prop2Config {
  double p = 0.05;           // larger retention; the smaller one is p / 2
  double r = 0.05;
  double tau = 0.05;
  std::size_t seeds = 200;
  std::uint64_t seed = 0;
  std::size_t test_per_axis = 16;  // empty-space test locations per axis
  std::size_t min_retained = 50;
};

struct Prop2Result {
  double ratio = 0.0;          // residual(p) / residual(p/2)
  double residual_p = 0.0;
  double residual_half = 0.0;
  double J_p = 1.0, J_half = 1.0;
  std::vector<double> J_p_runs;  // per-seed J at retention p
  double K_hat = 0.0;          // mean K estimate of the unthinned patterns
  double ball = 0.0;
  double lambda_bar = 0.0;
  std::size_t min_retained = 0;
  std::vector<std::string> warnings;
};

/// Order check of the first-order expansion of J under constant thinning:
/// simulates the reference model, thins each replicate at p and p/2 with
/// coupled uniforms, pools the border-corrected F/G sums across seeds and
/// returns |J(q) - 1 + lambda_bar q (K - |B|)| at both levels and their ratio.
inline Prop2Result prop2_residual_check(const ReferenceModel& model, const Window& window, const Prop2Config& cfg) {
  if (!(cfg.p > 0.0 && cfg.p <= 1.0)) throw Error("prop2_residual_check: p must lie in (0,1]");
  if (!(cfg.r > 0.0) || !(cfg.tau > 0.0)) throw Error("prop2_residual_check: r and tau must be positive");
  if (cfg.seeds == 0) throw Error("prop2_residual_check: need at least one seed");

  double lambda_bar = 0.0;
  std::function<double(const SpaceTimePoint&)> lam;
  if (const auto* c = std::get_if<ClusterModel>(&model)) {
    lambda_bar = c->intensity();
    lam = [v = lambda_bar](const SpaceTimePoint&) { return v; };
  } else {
    const auto& im = std::get<IntensityModel>(model);
    lam = [&im](const SpaceTimePoint& y) { return intensity_at(im, y); };
    if (const auto* k = std::get_if<ConstantIntensity>(&im)) {
      lambda_bar = k->lambda;
    } else {
      // minimum over a 64^3 lattice of cell centres
      const GridSpec g = spacetime_grid(window, 64, 64, 64);
      lambda_bar = std::numeric_limits<double>::infinity();
      for (std::size_t it = 0; it < g.nt(); ++it)
        for (std::size_t iy = 0; iy < g.ny(); ++iy)
          for (std::size_t ix = 0; ix < g.nx(); ++ix)
            if (g.in_mask_spatial(ix, iy))
              lambda_bar = std::min(lambda_bar, lam({g.x1.center(ix), g.x2.center(iy), g.t.center(it)}));
    }
  }
  if (!(lambda_bar > 0.0)) throw Error("prop2_residual_check: the intensity must be bounded away from zero");

  const double half = cfg.p / 2.0;
  const KGrid kg{{cfg.r}, {cfg.tau}};
  const KOptions ko{window.has_mask() ? EdgeCorrection::border : EdgeCorrection::translation, 20.0, 0.01};
  struct Run {
    detail::FGSums at_p, at_half;
    double K = 0.0;
    std::size_t retained = 0;
  };
  std::vector<Run> runs(cfg.seeds);
  parallel_for(cfg.seeds, [&](std::size_t s) {
    const std::uint64_t sd = replicate_seed(cfg.seed, s);
    const SpaceTimePattern X = std::holds_alternative<ClusterModel>(model)
                                   ? simulate_cluster(std::get<ClusterModel>(model), window, sd)
                                   : simulate_poisson(std::get<IntensityModel>(model), window, sd);
    std::vector<double> lx(X.size());
    for (std::size_t i = 0; i < X.size(); ++i) lx[i] = lam(X[i]);
    Run& run = runs[s];
    run.K = X.size() >= 2 ? detail::k_core(X, lx, kg, ko).values[0] : 0.0;
    Rng rng = substream(sd, 7);
    std::vector<SpaceTimePoint> kp, kh;
    std::vector<double> wp, wh;
    for (std::size_t i = 0; i < X.size(); ++i) {
      const double u = uniform01(rng);
      if (u < cfg.p) {
        kp.push_back(X[i]);
        wp.push_back(lambda_bar / lx[i]);
      }
      if (u < half) {
        kh.push_back(X[i]);
        wh.push_back(lambda_bar / lx[i]);
      }
    }
    run.retained = kh.size();
    run.at_p = detail::fg_sums(kp, wp, window, cfg.r, cfg.tau, cfg.test_per_axis);
    run.at_half = detail::fg_sums(kh, wh, window, cfg.r, cfg.tau, cfg.test_per_axis);
  });

  Prop2Result res;
  res.lambda_bar = lambda_bar;
  res.ball = ball_volume(cfg.r, cfg.tau);
  res.min_retained = runs.front().retained;
  detail::FGSums P, H;
  for (const auto& run : runs) {
    res.min_retained = std::min(res.min_retained, run.retained);
    res.K_hat += run.K / static_cast<double>(cfg.seeds);
    for (auto [dst, src] : {std::pair{&P, &run.at_p}, std::pair{&H, &run.at_half}}) {
      dst->g_num += src->g_num;
      dst->g_den += src->g_den;
      dst->f_num += src->f_num;
      dst->f_den += src->f_den;
    }
    const double jp = run.at_p.g_den > 0 && run.at_p.f_num > 0
                          ? (run.at_p.g_num / run.at_p.g_den) / (run.at_p.f_num / run.at_p.f_den)
                          : std::numeric_limits<double>::quiet_NaN();
    res.J_p_runs.push_back(jp);
  }
  if (res.min_retained < cfg.min_retained)
    throw Error("prop2_residual_check: a replicate retained only " + std::to_string(res.min_retained) +
                " points at p/2 (need " + std::to_string(cfg.min_retained) + ")");
  auto J = [](const detail::FGSums& s) {
    if (!(s.g_den > 0.0) || !(s.f_den > 0.0) || !(s.f_num > 0.0))
      throw Error("prop2_residual_check: no interior points for the F/G estimates");
    return (s.g_num / s.g_den) / (s.f_num / s.f_den);
  };
  res.J_p = J(P);
  res.J_half = J(H);
  const double excess = res.K_hat - res.ball;
  res.residual_p = std::abs(res.J_p - 1.0 + lambda_bar * cfg.p * excess);
  res.residual_half = std::abs(res.J_half - 1.0 + lambda_bar * half * excess);
  res.ratio = res.residual_half > 0.0 ? res.residual_p / res.residual_half : std::numeric_limits<double>::infinity();
  return res;
}

}  // namespace stpp

#endif  // STPP_SECONDORDER_HPP
