#ifndef STPP_KDTREE_HPP
#define STPP_KDTREE_HPP

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <queue>
#include <span>
#include <utility>
#include <vector>

#include "stpp/geometry.hpp"

namespace stpp {

/// Static 2-d tree over a point set (implicit median layout, no node objects).
class KdTree2 {
 public:
  struct Neighbor {
    std::size_t index;
    double dist2;
  };

  KdTree2() = default;
  explicit KdTree2(std::span<const Vec2> points) : pts_(points.begin(), points.end()), idx_(points.size()) {
    for (std::size_t i = 0; i < idx_.size(); ++i) idx_[i] = i;
    axis_.assign(idx_.size(), 0);
    build(0, idx_.size());
  }

  std::size_t size() const noexcept { return pts_.size(); }
  const Vec2& point(std::size_t i) const noexcept { return pts_[i]; }

  /// The k nearest points to q sorted by distance (ties by index).
  std::vector<Neighbor> knn(const Vec2& q, std::size_t k) const {
    std::vector<Neighbor> out;
    if (k == 0 || pts_.empty()) return out;
    auto cmp = [](const Neighbor& a, const Neighbor& b) {
      return a.dist2 < b.dist2 || (a.dist2 == b.dist2 && a.index < b.index);
    };
    std::priority_queue<Neighbor, std::vector<Neighbor>, decltype(cmp)> heap(cmp);
    knn_rec(0, idx_.size(), q, k, heap);
    out.reserve(heap.size());
    while (!heap.empty()) {
      out.push_back(heap.top());
      heap.pop();
    }
    std::reverse(out.begin(), out.end());
    return out;
  }

  std::size_t nearest(const Vec2& q) const { return knn(q, 1).front().index; }

  /// Calls fn(index, dist2) for every point within distance r of q.
  template <class Fn>
  void radius(const Vec2& q, double r, Fn&& fn) const {
    if (!pts_.empty()) radius_rec(0, idx_.size(), q, r * r, fn);
  }

 private:
  void build(std::size_t lo, std::size_t hi) {
    if (hi - lo <= 1) return;
    double min1 = pts_[idx_[lo]].x1, max1 = min1, min2 = pts_[idx_[lo]].x2, max2 = min2;
    for (std::size_t i = lo; i < hi; ++i) {
      const Vec2& p = pts_[idx_[i]];
      min1 = std::min(min1, p.x1);
      max1 = std::max(max1, p.x1);
      min2 = std::min(min2, p.x2);
      max2 = std::max(max2, p.x2);
    }
    const std::uint8_t ax = (max1 - min1) >= (max2 - min2) ? 0 : 1;
    const std::size_t mid = lo + (hi - lo) / 2;
    std::nth_element(idx_.begin() + lo, idx_.begin() + mid, idx_.begin() + hi, [&](std::size_t a, std::size_t b) {
      const double ca = ax ? pts_[a].x2 : pts_[a].x1, cb = ax ? pts_[b].x2 : pts_[b].x1;
      return ca < cb || (ca == cb && a < b);
    });
    axis_[mid] = ax;
    build(lo, mid);
    build(mid + 1, hi);
  }

  template <class Heap>
  void knn_rec(std::size_t lo, std::size_t hi, const Vec2& q, std::size_t k, Heap& heap) const {
    if (lo >= hi) return;
    const std::size_t mid = lo + (hi - lo) / 2;
    const std::size_t id = idx_[mid];
    const Vec2& p = pts_[id];
    const double d2 = dist2(p, q);
    if (heap.size() < k) {
      heap.push({id, d2});
    } else if (d2 < heap.top().dist2 || (d2 == heap.top().dist2 && id < heap.top().index)) {
      heap.pop();
      heap.push({id, d2});
    }
    if (hi - lo == 1) return;
    const double diff = axis_[mid] ? q.x2 - p.x2 : q.x1 - p.x1;
    const bool left_first = diff <= 0.0;
    if (left_first) knn_rec(lo, mid, q, k, heap);
    else knn_rec(mid + 1, hi, q, k, heap);
    if (heap.size() < k || diff * diff <= heap.top().dist2) {
      if (left_first) knn_rec(mid + 1, hi, q, k, heap);
      else knn_rec(lo, mid, q, k, heap);
    }
  }

  template <class Fn>
  void radius_rec(std::size_t lo, std::size_t hi, const Vec2& q, double r2, Fn& fn) const {
    if (lo >= hi) return;
    const std::size_t mid = lo + (hi - lo) / 2;
    const std::size_t id = idx_[mid];
    const Vec2& p = pts_[id];
    const double d2 = dist2(p, q);
    if (d2 <= r2) fn(id, d2);
    if (hi - lo == 1) return;
    const double diff = axis_[mid] ? q.x2 - p.x2 : q.x1 - p.x1;
    if (diff <= 0.0 || diff * diff <= r2) radius_rec(lo, mid, q, r2, fn);
    if (diff >= 0.0 || diff * diff <= r2) radius_rec(mid + 1, hi, q, r2, fn);
  }

  std::vector<Vec2> pts_;
  std::vector<std::size_t> idx_;
  std::vector<std::uint8_t> axis_;
};

}  // namespace stpp

#endif  // STPP_KDTREE_HPP
