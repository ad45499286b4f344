#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <vector>

#include "sgwpcqa/pointcloud.hpp"

namespace sgwpcqa {

/// Neighbor candidate ordered by (squared distance, index), which makes every
/// query result unique even when several points are equidistant.
struct Neighbor {
  double dist2;
  std::uint32_t index;

  friend bool operator<(const Neighbor& a, const Neighbor& b) {
    return a.dist2 < b.dist2 || (a.dist2 == b.dist2 && a.index < b.index);
  }
  friend bool operator==(const Neighbor&, const Neighbor&) = default;
};

inline double squared_distance(const Point3& a, const Point3& b) {
  const double dx = a[0] - b[0], dy = a[1] - b[1], dz = a[2] - b[2];
  return dx * dx + dy * dy + dz * dz;
}

/// Exact 3-D kd-tree. Points are copied in leaf order for locality; queries
/// report original indices.
class KdTree3 {
 public:
  static constexpr std::size_t kLeafSize = 12;
  static constexpr std::uint32_t kNoExclude = std::numeric_limits<std::uint32_t>::max();

  explicit KdTree3(std::span<const Point3> points) {
    const std::size_t n = points.size();
    order_.resize(n);
    std::iota(order_.begin(), order_.end(), 0u);
    if (n > 0) {
      nodes_.reserve(2 * (n / kLeafSize + 1));
      build(points, 0, n);
    }
    pts_.resize(n);
    for (std::size_t i = 0; i < n; ++i) pts_[i] = points[order_[i]];
  }

  std::size_t size() const noexcept { return pts_.size(); }

  /// The k smallest (dist2, index) pairs, ascending. `exclude` removes one
  /// index from consideration (used to keep a point out of its own list).
  std::vector<Neighbor> knn(const Point3& q, std::size_t k, std::uint32_t exclude = kNoExclude) const {
    std::vector<Neighbor> best;
    knn_into(q, k, exclude, best);
    return best;
  }

  void knn_into(const Point3& q, std::size_t k, std::uint32_t exclude, std::vector<Neighbor>& best) const {
    best.clear();
    if (k == 0 || nodes_.empty()) return;
    best.reserve(k + 1);
    search(0, q, k, exclude, best);
  }

  Neighbor nearest(const Point3& q) const {
    std::vector<Neighbor> best;
    knn_into(q, 1, kNoExclude, best);
    return best.front();
  }

 private:
  struct Node {
    Point3 lo, hi;
    std::uint32_t begin, end;
    std::int32_t left = -1, right = -1;
  };

  std::int32_t build(std::span<const Point3> points, std::size_t begin, std::size_t end) {
    Node node;
    node.begin = static_cast<std::uint32_t>(begin);
    node.end = static_cast<std::uint32_t>(end);
    node.lo = node.hi = points[order_[begin]];
    for (std::size_t i = begin; i < end; ++i) {
      const auto& p = points[order_[i]];
      for (int a = 0; a < 3; ++a) {
        node.lo[a] = std::min(node.lo[a], p[a]);
        node.hi[a] = std::max(node.hi[a], p[a]);
      }
    }
    const auto id = static_cast<std::int32_t>(nodes_.size());
    nodes_.push_back(node);
    if (end - begin <= kLeafSize) return id;

    int dim = 0;
    double extent = -1.0;
    for (int a = 0; a < 3; ++a) {
      if (node.hi[a] - node.lo[a] > extent) {
        extent = node.hi[a] - node.lo[a];
        dim = a;
      }
    }
    if (extent <= 0.0) return id;  // all coincident: keep as one (large) leaf

    const std::size_t mid = begin + (end - begin) / 2;
    std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                     [&](std::uint32_t a, std::uint32_t b) {
                       const double va = points[a][dim], vb = points[b][dim];
                       return va < vb || (va == vb && a < b);
                     });
    const auto left = build(points, begin, mid);
    const auto right = build(points, mid, end);
    nodes_[id].left = left;
    nodes_[id].right = right;
    return id;
  }

  static double box_distance2(const Node& node, const Point3& q) {
    double d2 = 0.0;
    for (int a = 0; a < 3; ++a) {
      double d = 0.0;
      if (q[a] < node.lo[a]) d = node.lo[a] - q[a];
      else if (q[a] > node.hi[a]) d = q[a] - node.hi[a];
      d2 += d * d;
    }
    return d2;
  }

  static void offer(std::vector<Neighbor>& best, std::size_t k, Neighbor cand) {
    if (best.size() == k) {
      if (!(cand < best.back())) return;
      best.pop_back();
    }
    best.insert(std::upper_bound(best.begin(), best.end(), cand), cand);
  }

  void search(std::int32_t id, const Point3& q, std::size_t k, std::uint32_t exclude,
              std::vector<Neighbor>& best) const {
    const Node& node = nodes_[static_cast<std::size_t>(id)];
    if (node.left < 0) {
      for (std::uint32_t i = node.begin; i < node.end; ++i) {
        const std::uint32_t idx = order_[i];
        if (idx == exclude) continue;
        offer(best, k, {squared_distance(q, pts_[i]), idx});
      }
      return;
    }
    const Node& l = nodes_[static_cast<std::size_t>(node.left)];
    const Node& r = nodes_[static_cast<std::size_t>(node.right)];
    const double dl = box_distance2(l, q);
    const double dr = box_distance2(r, q);
    const std::int32_t first = dl <= dr ? node.left : node.right;
    const std::int32_t second = dl <= dr ? node.right : node.left;
    const double d_first = std::min(dl, dr);
    const double d_second = std::max(dl, dr);
    // A subtree whose box is exactly at the current worst distance may still
    // hold an equidistant point with a lower index, so only prune on strict >.
    if (best.size() < k || d_first <= best.back().dist2) search(first, q, k, exclude, best);
    if (best.size() < k || d_second <= best.back().dist2) search(second, q, k, exclude, best);
  }

  std::vector<Node> nodes_;
  std::vector<std::uint32_t> order_;
  std::vector<Point3> pts_;
};

}  // namespace sgwpcqa
