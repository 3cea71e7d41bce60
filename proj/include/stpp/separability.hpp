#ifndef STPP_SEPARABILITY_HPP
#define STPP_SEPARABILITY_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "stpp/core.hpp"
#include "stpp/inference.hpp"
#include "stpp/intensity.hpp"

namespace stpp {

/// S_st = n lambda_st / (lambda_s lambda_t) and its averages over W (S_t) and
/// over T (S_s).
struct SeparabilityStats {
  ScalarField S_st;
  ScalarField S_s;
  ScalarField S_t;
  double nu = 0.0;
};

struct SeparabilityOptions {
  /// Cells where S_st is undefined (a zero denominator, set to 0) still count
  /// in the averages. When false they are left out of the averaging domain.
  bool include_undefined = true;
};

inline SeparabilityStats compute_S(const SpaceTimePattern& pattern, const IntensityEstimate& lam_st,
                                   const IntensityEstimate& lam_s, const IntensityEstimate& lam_t,
                                   const SeparabilityOptions& opts = {}) {
  const GridSpec& g = lam_st.field.grid();
  const GridSpec& gs = lam_s.field.grid();
  const GridSpec& gt = lam_t.field.grid();
  if (g.kind != GridKind::spacetime || gs.kind != GridKind::spatial || gt.kind != GridKind::temporal)
    throw Error("compute_S: expected space-time, spatial and temporal estimates");
  if (!g.same_space(gs) || !(g.t == gt.t)) throw Error("compute_S: estimates are on incompatible grids");

  const double n = static_cast<double>(pattern.size());
  const std::size_t nx = g.nx(), ny = g.ny(), nt = g.nt(), ns = g.spatial_size();
  SeparabilityStats out{ScalarField(g), ScalarField(gs), ScalarField(gt), n};
  const auto ls = lam_s.field.values();
  const auto lt = lam_t.field.values();
  const auto lst = lam_st.field.values();
  auto S = out.S_st.values();
  for (std::size_t it = 0; it < nt; ++it)
    for (std::size_t k = 0; k < ns; ++k) {
      if (!g.in_mask(k)) continue;
      const double den = ls[k] * lt[it];
      S[it * ns + k] = den > 0.0 ? n * lst[it * ns + k] / den : 0.0;
    }

  auto st = out.S_t.values();
  auto ss = out.S_s.values();
  std::vector<double> cnt_t(nt, 0.0), cnt_s(ns, 0.0);
  for (std::size_t it = 0; it < nt; ++it)
    for (std::size_t iy = 0; iy < ny; ++iy)
      for (std::size_t ix = 0; ix < nx; ++ix) {
        const std::size_t k = iy * nx + ix;
        if (!g.in_mask_spatial(ix, iy)) continue;
        const double v = S[it * ns + k];
        st[it] += v;
        ss[k] += v;
        if (opts.include_undefined || ls[k] > 0.0) cnt_t[it] += 1.0;
        if (opts.include_undefined || lt[it] > 0.0) cnt_s[k] += 1.0;
      }
  for (std::size_t it = 0; it < nt; ++it) st[it] = cnt_t[it] > 0.0 ? st[it] / cnt_t[it] : 0.0;
  for (std::size_t k = 0; k < ns; ++k) ss[k] = cnt_s[k] > 0.0 ? ss[k] / cnt_s[k] : 0.0;
  return out;
}

namespace detail {
/// Permutation applied to the times of replicate `b`: point i receives the
/// time of point perm[i] (stored order).
inline std::vector<std::size_t> time_permutation(std::size_t n, std::uint64_t seed, std::size_t b) {
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  Rng rng = substream(seed, 0x5e9a0000ULL + b);
  std::shuffle(perm.begin(), perm.end(), rng);
  return perm;
}
}  // namespace detail

/// B null replicates pairing the observed locations with permuted times.
inline std::vector<SpaceTimePattern> permute_null(const SpaceTimePattern& pattern, std::size_t B, std::uint64_t seed) {
  if (B == 0) throw Error("permute_null: B must be at least 1");
  std::vector<SpaceTimePattern> out(B);
  const auto pts = pattern.points();
  parallel_for(B, [&](std::size_t b) {
    const auto perm = detail::time_permutation(pts.size(), seed, b);
    std::vector<SpaceTimePoint> q(pts.size());
    for (std::size_t i = 0; i < pts.size(); ++i) q[i] = {pts[i].x1, pts[i].x2, pts[perm[i]].t};
    out[b] = SpaceTimePattern(std::move(q), pattern.window());
  });
  return out;
}

/// Computes S_t and S_s for any pairing of the observed locations with a
/// permutation of the observed times, without building the space-time field.
/// With a_i(x) = k_s(x - x_i)/e_s(x_i) and b_j(t) = k_t(t - t_j)/e_t(t_j):
///   S_t(t) = n / (|W| lambda_t(t)) sum_i c_i b_perm(i)(t),  c_i = sum_x dA a_i(x) / lambda_s(x)
///   S_s(x) = n / (|T| lambda_s(x)) sum_i a_i(x) d_perm(i),  d_j = sum_t dt b_j(t) / lambda_t(t)
/// |W| is the area of the in-mask raster, so exactly separable inputs give 1.
class SeparabilityCurves {
 public:
  SeparabilityCurves(const SpaceTimePattern& pattern, const KernelSpec& ks, const KernelSpec& kt,
                     const GridSpec& spatial, const GridSpec& temporal, const SeparabilityOptions& opts = {})
      : grid_s_(spatial), grid_t_(temporal), bs_(ks.bandwidth), bt_(kt.bandwidth) {
    ks.validate();
    kt.validate();
    if (spatial.kind != GridKind::spatial || temporal.kind != GridKind::temporal)
      throw Error("separability: expected a spatial and a temporal grid");
    if (pattern.empty()) throw Error("separability: empty pattern");
    auto [sp, tp] = project(pattern);
    locs_ = std::move(sp.points);
    times_ = std::move(tp.times);
    n_ = static_cast<double>(locs_.size());
    lam_s_ = estimate_lambda_s(SpatialPattern{locs_, pattern.window()}, ks, spatial).field;
    lam_t_ = estimate_lambda_t(TemporalPattern{times_, pattern.window().time()}, kt, temporal).field;
    es_ = detail::spatial_edge_weights(locs_, ks, spatial);
    et_ = detail::temporal_edge_weights(times_, kt, pattern.window().time());

    const double dA = spatial.cell_area(), dt = temporal.t.step;
    std::size_t defined_s = 0, in_s = 0, defined_t = 0;
    for (std::size_t k = 0; k < spatial.spatial_size(); ++k)
      if (spatial.in_mask(k)) {
        ++in_s;
        if (lam_s_[k] > 0.0) ++defined_s;
      }
    for (std::size_t it = 0; it < temporal.nt(); ++it)
      if (lam_t_[it] > 0.0) ++defined_t;
    area_ = dA * static_cast<double>(opts.include_undefined ? in_s : defined_s);
    duration_ = dt * static_cast<double>(opts.include_undefined ? temporal.nt() : defined_t);

    // c_i: spatial footprint of each kernel reweighted by 1/lambda_s
    c_.assign(locs_.size(), 0.0);
    const Axis& ax = spatial.x1;
    const Axis& ay = spatial.x2;
    const double b = ks.bandwidth, reach = kernel_truncation * b;
    parallel_for(locs_.size(), [&](std::size_t i) {
      const Vec2& p = locs_[i];
      const long nx = static_cast<long>(ax.count), ny = static_cast<long>(ay.count);
      const long ix0 = std::max(0L, static_cast<long>(std::floor((p.x1 - reach - ax.origin) / ax.step)));
      const long ix1 = std::min(nx - 1, static_cast<long>(std::floor((p.x1 + reach - ax.origin) / ax.step)));
      const long iy0 = std::max(0L, static_cast<long>(std::floor((p.x2 - reach - ay.origin) / ay.step)));
      const long iy1 = std::min(ny - 1, static_cast<long>(std::floor((p.x2 + reach - ay.origin) / ay.step)));
      double s = 0.0;
      for (long iy = iy0; iy <= iy1; ++iy) {
        const double dy = ay.center(static_cast<std::size_t>(iy)) - p.x2;
        if (std::abs(dy) > reach) continue;
        const double gy = gaussian1(dy, b);
        for (long ix = ix0; ix <= ix1; ++ix) {
          const double dx = ax.center(static_cast<std::size_t>(ix)) - p.x1;
          if (std::abs(dx) > reach) continue;
          const std::size_t k = static_cast<std::size_t>(iy) * ax.count + static_cast<std::size_t>(ix);
          if (!spatial.in_mask(k) || !(lam_s_[k] > 0.0)) continue;
          s += gy * gaussian1(dx, b) / lam_s_[k];
        }
      }
      c_[i] = s * dA / es_[i];
    });
    // d_j: temporal footprint reweighted by 1/lambda_t
    d_.assign(times_.size(), 0.0);
    for (std::size_t j = 0; j < times_.size(); ++j) {
      double s = 0.0;
      for_time_cells(times_[j], [&](std::size_t it, double k) {
        if (lam_t_[it] > 0.0) s += k / lam_t_[it];
      });
      d_[j] = s * dt / et_[j];
    }
  }

  std::size_t size() const noexcept { return locs_.size(); }
  const ScalarField& lambda_s() const noexcept { return lam_s_; }
  const ScalarField& lambda_t() const noexcept { return lam_t_; }
  const GridSpec& spatial_grid_spec() const noexcept { return grid_s_; }
  const GridSpec& temporal_grid_spec() const noexcept { return grid_t_; }

  /// S_t on the temporal grid for the pairing (x_i, t_perm[i]); empty perm = identity.
  std::vector<double> S_t(const std::vector<std::size_t>& perm = {}) const {
    const std::size_t nt = grid_t_.nt();
    std::vector<double> acc(nt, 0.0);
    for (std::size_t i = 0; i < locs_.size(); ++i) {
      const std::size_t j = perm.empty() ? i : perm[i];
      const double w = c_[i] / et_[j];
      for_time_cells(times_[j], [&](std::size_t it, double k) { acc[it] += w * k; });
    }
    for (std::size_t it = 0; it < nt; ++it)
      acc[it] = lam_t_[it] > 0.0 && area_ > 0.0 ? n_ * acc[it] / (area_ * lam_t_[it]) : 0.0;
    return acc;
  }

  /// S_s over the full spatial grid (zero outside the mask).
  std::vector<double> S_s(const std::vector<std::size_t>& perm = {}) const {
    const GridSpec& g = grid_s_;
    std::vector<double> acc(g.spatial_size(), 0.0);
    std::vector<double> w(locs_.size());
    for (std::size_t i = 0; i < locs_.size(); ++i) w[i] = d_[perm.empty() ? i : perm[i]] / es_[i];
    detail::SpatialSplatter splat(locs_, bs_, g);
    for (std::size_t iy = 0; iy < g.ny(); ++iy)
      splat.row(iy, std::span<double>(acc).subspan(iy * g.nx(), g.nx()), [&](std::size_t i) { return w[i]; });
    for (std::size_t k = 0; k < acc.size(); ++k)
      acc[k] = g.in_mask(k) && lam_s_[k] > 0.0 && duration_ > 0.0 ? n_ * acc[k] / (duration_ * lam_s_[k]) : 0.0;
    return acc;
  }

 private:
  template <class Fn>
  void for_time_cells(double t, Fn&& fn) const {
    const Axis& at = grid_t_.t;
    const double reach = kernel_truncation * bt_;
    const long nt = static_cast<long>(at.count);
    const long i0 = std::max(0L, static_cast<long>(std::floor((t - reach - at.origin) / at.step)));
    const long i1 = std::min(nt - 1, static_cast<long>(std::floor((t + reach - at.origin) / at.step)));
    for (long it = i0; it <= i1; ++it) {
      const double d = at.center(static_cast<std::size_t>(it)) - t;
      if (std::abs(d) > reach) continue;
      fn(static_cast<std::size_t>(it), gaussian1(d, bt_));
    }
  }

  GridSpec grid_s_, grid_t_;
  double bs_, bt_;
  std::vector<Vec2> locs_;
  std::vector<double> times_;
  double n_ = 0.0;
  ScalarField lam_s_, lam_t_;
  std::vector<double> es_, et_, c_, d_;
  double area_ = 0.0, duration_ = 0.0;
};

struct SeparabilityTestConfig {
  KernelSpec space{0.05};
  KernelSpec time{0.05};
  std::size_t nx = 64, ny = 64, nt = 250;
  std::size_t replicates = 199;
  double alpha = 0.05;
  std::uint64_t seed = 0;
  SeparabilityOptions options{};
};

struct SeparabilityTestResult {
  EnvelopeResult envelope;     // combined over [S_t, S_s]; S_s restricted to in-mask cells
  CurveSet S_t;                // args: time cell centres
  CurveSet S_s;                // args: in-mask flat spatial index
  GridSpec spatial;
  GridSpec temporal;
  double p_value = 1.0;
};

/// Permutation test of first-order separability: combined global envelope
/// test over S_t and S_s against B time-permuted replicates, keeping the
/// bandwidths of the observed estimate.
inline SeparabilityTestResult separability_test(const SpaceTimePattern& pattern, const SeparabilityTestConfig& cfg) {
  if (cfg.replicates == 0) throw Error("separability_test: need at least one replicate");
  SeparabilityTestResult res;
  res.spatial = spatial_grid(pattern.window(), cfg.nx, cfg.ny);
  res.temporal = temporal_grid(pattern.window(), cfg.nt);
  const SeparabilityCurves curves(pattern, cfg.space, cfg.time, res.spatial, res.temporal, cfg.options);

  std::vector<std::size_t> cells;
  for (std::size_t k = 0; k < res.spatial.spatial_size(); ++k)
    if (res.spatial.in_mask(k)) cells.push_back(k);
  auto restrict = [&](const std::vector<double>& full) {
    std::vector<double> v(cells.size());
    for (std::size_t q = 0; q < cells.size(); ++q) v[q] = full[cells[q]];
    return v;
  };

  res.S_t.args.resize(res.temporal.nt());
  for (std::size_t it = 0; it < res.temporal.nt(); ++it) res.S_t.args[it] = res.temporal.t.center(it);
  res.S_s.args.assign(cells.begin(), cells.end());
  res.S_t.observed = curves.S_t();
  res.S_s.observed = restrict(curves.S_s());
  res.S_t.replicates.resize(cfg.replicates);
  res.S_s.replicates.resize(cfg.replicates);
  parallel_for(cfg.replicates, [&](std::size_t b) {
    const auto perm = detail::time_permutation(curves.size(), cfg.seed, b);
    res.S_t.replicates[b] = curves.S_t(perm);
    res.S_s.replicates[b] = restrict(curves.S_s(perm));
  });
  res.envelope = combined_erl_test({res.S_t, res.S_s}, cfg.alpha);
  res.p_value = res.envelope.p_value;
  return res;
}

}  // namespace stpp

#endif  // STPP_SEPARABILITY_HPP
