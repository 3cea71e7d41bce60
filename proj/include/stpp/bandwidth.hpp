#ifndef STPP_BANDWIDTH_HPP
#define STPP_BANDWIDTH_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numbers>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include <boost/math/tools/roots.hpp>

#include "stpp/core.hpp"
#include "stpp/intensity.hpp"
#include "stpp/simulate.hpp"

namespace stpp {

// ---------------------------------------------------------------------------
// Inverse-residual loss for the spatial bandwidth

/// {sum 1/lambda_i - area}^2, or +infinity when any lambda_i is not positive.
inline double inverse_residual_loss(std::span<const double> lambda_values, double area, double scale = 1.0) {
  double s = 0.0;
  for (double v : lambda_values) {
    if (!(v > 0.0)) return std::numeric_limits<double>::infinity();
    s += scale / v;
  }
  const double d = s - area;
  return d * d;
}

enum class LossEvaluation {
  leave_one_out,  // eval points are the fit points; each excludes its own kernel
  held_out,       // eval points are disjoint from the fit points
};

/// Inverse-residual loss of the Diggle-corrected kernel estimate fitted to
/// `fit` with bandwidth b, evaluated at `eval`. In held_out mode `scale`
/// multiplies each inverse residual (used to rescale fold intensities).
inline double cvl_loss(const SpatialPattern& fit, double b, std::span<const Vec2> eval,
                       LossEvaluation mode = LossEvaluation::leave_one_out, double scale = 1.0) {
  KernelEvaluator lam(fit.points, KernelSpec{b}, fit.window);
  std::vector<double> values(eval.size());
  for (std::size_t k = 0; k < eval.size(); ++k)
    values[k] = mode == LossEvaluation::leave_one_out ? lam(eval[k], k) : lam(eval[k]);
  return inverse_residual_loss(values, fit.window.area(), scale);
}

/// Leave-one-out loss at the data points.
inline double cvl_loss(const SpatialPattern& pattern, double b) {
  return cvl_loss(pattern, b, pattern.points, LossEvaluation::leave_one_out);
}

enum class BandwidthAverage { arithmetic, geometric };

struct BandwidthSearch {
  std::vector<double> candidates;  // sorted, positive
  std::size_t folds = 10;
  double retention = 0.025;
  std::size_t repeats = 50;
  std::uint64_t seed = 0;
  BandwidthAverage average = BandwidthAverage::arithmetic;

  /// `count` log-spaced values between 0.5% and 20% of sqrt(|W|).
  static std::vector<double> default_candidates(const Window& w, std::size_t count = 16) {
    const double s = std::sqrt(w.area());
    std::vector<double> c(count);
    const double lo = std::log(0.005 * s), hi = std::log(0.2 * s);
    for (std::size_t i = 0; i < count; ++i)
      c[i] = count == 1 ? std::exp(lo) : std::exp(lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(count - 1));
    return c;
  }

  void validate() const {
    if (candidates.empty()) throw Error("bandwidth search: no candidates");
    for (std::size_t i = 0; i < candidates.size(); ++i) {
      if (!(candidates[i] > 0.0)) throw Error("bandwidth search: candidates must be positive");
      if (i > 0 && !(candidates[i] > candidates[i - 1])) throw Error("bandwidth search: candidates must be increasing");
    }
    if (folds < 2) throw Error("bandwidth search: need at least 2 folds");
    if (repeats < 1) throw Error("bandwidth search: need at least 1 repeat");
    if (!(retention > 0.0 && retention <= 1.0)) throw Error("bandwidth search: retention must lie in (0,1]");
  }
};

struct BandwidthSelection {
  double bandwidth = 0.0;
  std::vector<double> repeat_argmins;            // one per retained repeat
  std::vector<std::vector<double>> mean_losses;  // [repeat][candidate]
  std::vector<std::string> warnings;
};

namespace detail {

/// Subsample and fold assignment for one repeat. Fold of subsample point
/// order[pos] is pos % folds.
struct FoldSplit {
  std::vector<Vec2> subsample;
  std::vector<std::size_t> fold_of;
};

inline FoldSplit fold_split(const SpatialPattern& pattern, double retention, std::size_t folds, std::uint64_t seed,
                            std::size_t repeat) {
  Rng rng = substream(seed, repeat);
  FoldSplit s;
  for (const auto& x : pattern.points)
    if (uniform01(rng) < retention) s.subsample.push_back(x);
  std::vector<std::size_t> order(s.subsample.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);
  s.fold_of.resize(order.size());
  for (std::size_t pos = 0; pos < order.size(); ++pos) s.fold_of[order[pos]] = pos % folds;
  return s;
}

}  // namespace detail

/// Subsampled k-fold selection of the spatial bandwidth: per repeat, thin the
/// pattern, fit on k-1 folds, score the held-out fold with the inverse-residual
/// loss, average over folds and take the argmin; then average the argmins.
inline BandwidthSelection select_bandwidth_spatial(const SpatialPattern& pattern, const BandwidthSearch& search) {
  search.validate();
  BandwidthSelection out;
  const std::size_t k = search.folds;
  const std::size_t nc = search.candidates.size();
  if (nc == 1) {
    out.bandwidth = search.candidates.front();
    out.repeat_argmins.assign(1, out.bandwidth);
    return out;
  }
  std::vector<std::vector<double>> losses(search.repeats);
  std::vector<int> status(search.repeats, 0);  // 0 ok, 1 empty fold, 2 small fold
  parallel_for(search.repeats, [&](std::size_t r) {
    const auto split = detail::fold_split(pattern, search.retention, k, search.seed, r);
    std::vector<std::vector<Vec2>> fit(k), held(k);
    for (std::size_t i = 0; i < split.subsample.size(); ++i)
      for (std::size_t f = 0; f < k; ++f) (split.fold_of[i] == f ? held[f] : fit[f]).push_back(split.subsample[i]);
    std::size_t smallest = split.subsample.size();
    for (const auto& h : held) smallest = std::min(smallest, h.size());
    if (smallest == 0) {
      status[r] = 1;
      return;
    }
    if (smallest < 10) status[r] = 2;
    losses[r].assign(nc, 0.0);
    for (std::size_t f = 0; f < k; ++f) {
      SpatialPattern fit_pattern{std::move(fit[f]), pattern.window};
      for (std::size_t c = 0; c < nc; ++c)
        losses[r][c] += cvl_loss(fit_pattern, search.candidates[c], held[f], LossEvaluation::held_out,
                                 static_cast<double>(k - 1));
    }
    for (auto& v : losses[r]) v /= static_cast<double>(k);
  });

  std::size_t discarded = 0, small = 0;
  for (std::size_t r = 0; r < search.repeats; ++r) {
    if (status[r] == 1) {
      ++discarded;
      continue;
    }
    if (status[r] == 2) ++small;
    const auto it = std::min_element(losses[r].begin(), losses[r].end());
    out.repeat_argmins.push_back(search.candidates[static_cast<std::size_t>(it - losses[r].begin())]);
    out.mean_losses.push_back(losses[r]);
  }
  if (discarded) out.warnings.push_back(std::to_string(discarded) + " repeat(s) discarded: empty validation fold");
  if (small) out.warnings.push_back(std::to_string(small) + " repeat(s) had a validation fold with fewer than 10 points");
  if (out.repeat_argmins.empty()) throw Error("select_bandwidth_spatial: every repeat was discarded (pattern too small)");

  if (search.average == BandwidthAverage::arithmetic) {
    out.bandwidth = std::accumulate(out.repeat_argmins.begin(), out.repeat_argmins.end(), 0.0) /
                    static_cast<double>(out.repeat_argmins.size());
  } else {
    double s = 0.0;
    for (double b : out.repeat_argmins) s += std::log(b);
    out.bandwidth = std::exp(s / static_cast<double>(out.repeat_argmins.size()));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Sheather-Jones solve-the-equation bandwidth (Gaussian kernel)

namespace detail {

/// Pairwise differences summarised either exactly or by binning.
class PairDistances {
 public:
  PairDistances(std::span<const double> x, std::size_t exact_limit, std::size_t bins) : n_(x.size()) {
    if (n_ <= exact_limit) {
      exact_.reserve(n_ * (n_ - 1) / 2);
      for (std::size_t i = 0; i < n_; ++i)
        for (std::size_t j = i + 1; j < n_; ++j) exact_.push_back(x[i] - x[j]);
      return;
    }
    const auto [mn, mx] = std::minmax_element(x.begin(), x.end());
    width_ = (*mx - *mn) * 1.01 / static_cast<double>(bins);
    std::vector<double> cnt(bins, 0.0);
    for (double v : x) cnt[std::min(bins - 1, static_cast<std::size_t>((v - *mn) / width_))] += 1.0;
    pair_counts_.assign(bins, 0.0);
    for (std::size_t i = 0; i < bins; ++i) {
      if (cnt[i] == 0.0) continue;
      pair_counts_[0] += cnt[i] * (cnt[i] - 1.0) / 2.0;
      for (std::size_t j = i + 1; j < bins; ++j) pair_counts_[j - i] += cnt[i] * cnt[j];
    }
  }

  /// Sum over unordered pairs of f((x_i - x_j) / h).
  template <class F>
  double sum(double h, F&& f) const {
    double s = 0.0;
    if (pair_counts_.empty()) {
      for (double d : exact_) s += f(d / h);
    } else {
      for (std::size_t k = 0; k < pair_counts_.size(); ++k)
        if (pair_counts_[k] != 0.0) s += pair_counts_[k] * f(static_cast<double>(k) * width_ / h);
    }
    return s;
  }

  std::size_t n() const noexcept { return n_; }

 private:
  std::size_t n_;
  std::vector<double> exact_;
  std::vector<double> pair_counts_;
  double width_ = 0.0;
};

/// Kernel estimates of the integrated squared 2nd and 3rd density derivatives.
inline double sj_phi4(const PairDistances& pd, double h) {
  const double n = static_cast<double>(pd.n());
  const double s = pd.sum(h, [](double u) {
    const double d = u * u;
    return (d * d - 6.0 * d + 3.0) * std::exp(-0.5 * d);
  });
  return (2.0 * s + 3.0 * n) / (n * (n - 1.0) * std::pow(h, 5) * std::sqrt(2.0 * std::numbers::pi));
}

inline double sj_phi6(const PairDistances& pd, double h) {
  const double n = static_cast<double>(pd.n());
  const double s = pd.sum(h, [](double u) {
    const double d = u * u;
    return (d * d * d - 15.0 * d * d + 45.0 * d - 15.0) * std::exp(-0.5 * d);
  });
  return (2.0 * s - 15.0 * n) / (n * (n - 1.0) * std::pow(h, 7) * std::sqrt(2.0 * std::numbers::pi));
}

inline double quantile7(std::vector<double> v, double p) {
  std::sort(v.begin(), v.end());
  const double h = (static_cast<double>(v.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(v.size() - 1, lo + 1);
  return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

}  // namespace detail

struct SheatherJonesOptions {
  std::size_t exact_limit = 5000;  // larger samples use binned pair counts
  std::size_t bins = 1000;
};

/// Robust scale min(sd, IQR/1.349) used by the plug-in rules.
inline double robust_scale(std::span<const double> x) {
  const double n = static_cast<double>(x.size());
  const double mean = std::accumulate(x.begin(), x.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : x) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / (n - 1.0));
  std::vector<double> v(x.begin(), x.end());
  const double iqr = detail::quantile7(v, 0.75) - detail::quantile7(v, 0.25);
  const double s = std::min(sd, iqr / 1.349);
  return s > 0.0 ? s : sd;
}

/// Normal-reference rule 1.06 * scale * n^(-1/5).
inline double normal_reference_bandwidth(std::span<const double> x) {
  return 1.06 * robust_scale(x) * std::pow(static_cast<double>(x.size()), -0.2);
}

inline double select_bandwidth_temporal(const TemporalPattern& pattern, const SheatherJonesOptions& opts = {}) {
  const auto& x = pattern.times;
  {
    std::vector<double> u = x;
    std::sort(u.begin(), u.end());
    u.erase(std::unique(u.begin(), u.end()), u.end());
    if (u.size() < 2) throw Error("select_bandwidth_temporal: times have zero variance");
    if (u.size() < 10) throw Error("select_bandwidth_temporal: need at least 10 distinct times");
  }
  const double n = static_cast<double>(x.size());
  const double scale = robust_scale(x);
  if (!(scale > 0.0)) throw Error("select_bandwidth_temporal: times have zero variance");

  const detail::PairDistances pd(x, opts.exact_limit, opts.bins);
  const double a = 1.24 * scale * std::pow(n, -1.0 / 7.0);
  const double b = 1.23 * scale * std::pow(n, -1.0 / 9.0);
  const double c1 = 1.0 / (2.0 * std::sqrt(std::numbers::pi) * n);
  const double td = -detail::sj_phi6(pd, b);
  if (!(td > 0.0) || !std::isfinite(td)) throw Error("select_bandwidth_temporal: sample too sparse");
  const double alpha2 = 1.357 * std::pow(detail::sj_phi4(pd, a) / td, 1.0 / 7.0);
  if (!std::isfinite(alpha2)) throw Error("select_bandwidth_temporal: sample too sparse");

  auto f = [&](double h) { return std::pow(c1 / detail::sj_phi4(pd, alpha2 * std::pow(h, 5.0 / 7.0)), 0.2) - h; };
  const double hmax = 1.144 * scale * std::pow(n, -0.2);
  double lower = 0.1 * hmax, upper = hmax;
  for (int attempt = 1; f(lower) * f(upper) > 0.0; ++attempt) {
    if (attempt > 99) throw Error("select_bandwidth_temporal: no root bracket found");
    if (attempt % 2) upper *= 1.2;
    else lower /= 1.2;
  }
  std::uintmax_t iters = 200;
  const auto root = boost::math::tools::toms748_solve(f, lower, upper, boost::math::tools::eps_tolerance<double>(45),
                                                      iters);
  return 0.5 * (root.first + root.second);
}

}  // namespace stpp

#endif  // STPP_BANDWIDTH_HPP
