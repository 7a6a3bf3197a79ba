#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cstdint>
#include <limits>
#include <utility>
#include <vector>

#include "geofuse/error.hpp"
#include "geofuse/point_cloud.hpp"

namespace geofuse {

/// Immutable exact nearest-neighbor index over a point cloud (kd-tree with
/// median splits). Queries are deterministic: distance ties are broken by
/// the lowest point index. Safe for concurrent reads after construction.
class SpatialIndex {
 public:
  explicit SpatialIndex(const PointCloud& cloud) : SpatialIndex(cloud.points) {}

  explicit SpatialIndex(std::vector<Eigen::Vector3d> points) : points_(std::move(points)) {
    if (points_.empty()) {
      throw DataError("spatial index requires a non-empty cloud");
    }
    order_.resize(points_.size());
    for (std::size_t i = 0; i < order_.size(); ++i) order_[i] = i;
    nodes_.reserve(2 * points_.size() / kLeafSize + 2);
    build(0, order_.size());
  }

  std::size_t size() const { return points_.size(); }

  /// Exact nearest neighbor: (point index, Euclidean distance).
  std::pair<std::size_t, double> nearest(const Eigen::Vector3d& query) const {
    Best best;
    search_nearest(0, query, best);
    return {best.index, std::sqrt(best.dist2)};
  }

  /// The k nearest neighbors sorted by (distance, index) ascending.
  std::vector<std::pair<std::size_t, double>> knn(const Eigen::Vector3d& query, std::size_t k) const {
    k = std::min(k, points_.size());
    KnnHeap heap(k);
    search_knn(0, query, heap);
    std::vector<std::pair<std::size_t, double>> out;
    out.reserve(heap.entries.size());
    std::sort(heap.entries.begin(), heap.entries.end());
    for (const auto& e : heap.entries) out.emplace_back(e.second, std::sqrt(e.first));
    return out;
  }

  /// All point indices within `radius` (inclusive), sorted ascending.
  std::vector<std::size_t> radius(const Eigen::Vector3d& query, double radius) const {
    std::vector<std::size_t> out;
    search_radius(0, query, radius * radius, out);
    std::sort(out.begin(), out.end());
    return out;
  }

 private:
  static constexpr std::size_t kLeafSize = 16;

  struct Node {
    double split = 0.0;
    int dim = -1;  // -1 for leaf
    std::int32_t left = -1, right = -1;
    std::uint32_t begin = 0, end = 0;
  };

  struct Best {
    double dist2 = std::numeric_limits<double>::infinity();
    std::size_t index = 0;

    bool improves(double d2, std::size_t idx) const {
      return d2 < dist2 || (d2 == dist2 && idx < index);
    }
  };

  struct KnnHeap {
    explicit KnnHeap(std::size_t k) : capacity(k) { entries.reserve(k); }
    std::size_t capacity;
    std::vector<std::pair<double, std::size_t>> entries;  // max-heap on (dist2, index)

    double worst2() const {
      return entries.size() < capacity ? std::numeric_limits<double>::infinity() : entries.front().first;
    }

    void offer(double d2, std::size_t idx) {
      const std::pair<double, std::size_t> cand{d2, idx};
      if (entries.size() < capacity) {
        entries.push_back(cand);
        std::push_heap(entries.begin(), entries.end());
      } else if (cand < entries.front()) {
        std::pop_heap(entries.begin(), entries.end());
        entries.back() = cand;
        std::push_heap(entries.begin(), entries.end());
      }
    }
  };

  std::int32_t build(std::size_t begin, std::size_t end) {
    Node node;
    node.begin = static_cast<std::uint32_t>(begin);
    node.end = static_cast<std::uint32_t>(end);
    const std::int32_t id = static_cast<std::int32_t>(nodes_.size());
    nodes_.push_back(node);
    if (end - begin <= kLeafSize) return id;

    Eigen::Vector3d lo = points_[order_[begin]], hi = lo;
    for (std::size_t i = begin + 1; i < end; ++i) {
      lo = lo.cwiseMin(points_[order_[i]]);
      hi = hi.cwiseMax(points_[order_[i]]);
    }
    int dim = 0;
    (hi - lo).maxCoeff(&dim);
    if (hi[dim] == lo[dim]) return id;  // all points coincide; keep as leaf

    const std::size_t mid = begin + (end - begin) / 2;
    std::nth_element(order_.begin() + static_cast<std::ptrdiff_t>(begin),
                     order_.begin() + static_cast<std::ptrdiff_t>(mid),
                     order_.begin() + static_cast<std::ptrdiff_t>(end),
                     [&](std::size_t a, std::size_t b) {
                       return points_[a][dim] < points_[b][dim] || (points_[a][dim] == points_[b][dim] && a < b);
                     });
    const double split = points_[order_[mid]][dim];  // capture before children permute order_
    const std::int32_t left = build(begin, mid);
    const std::int32_t right = build(mid, end);
    nodes_[static_cast<std::size_t>(id)].dim = dim;
    nodes_[static_cast<std::size_t>(id)].split = split;
    nodes_[static_cast<std::size_t>(id)].left = left;
    nodes_[static_cast<std::size_t>(id)].right = right;
    return id;
  }

  void search_nearest(std::int32_t id, const Eigen::Vector3d& q, Best& best) const {
    const Node& node = nodes_[static_cast<std::size_t>(id)];
    if (node.dim < 0) {
      for (std::size_t i = node.begin; i < node.end; ++i) {
        const std::size_t idx = order_[i];
        const double d2 = (points_[idx] - q).squaredNorm();
        if (best.improves(d2, idx)) best = {d2, idx};
      }
      return;
    }
    const double diff = q[node.dim] - node.split;
    const std::int32_t near = diff < 0.0 ? node.left : node.right;
    const std::int32_t far = diff < 0.0 ? node.right : node.left;
    search_nearest(near, q, best);
    if (diff * diff <= best.dist2) search_nearest(far, q, best);
  }

  void search_knn(std::int32_t id, const Eigen::Vector3d& q, KnnHeap& heap) const {
    const Node& node = nodes_[static_cast<std::size_t>(id)];
    if (node.dim < 0) {
      for (std::size_t i = node.begin; i < node.end; ++i) {
        const std::size_t idx = order_[i];
        heap.offer((points_[idx] - q).squaredNorm(), idx);
      }
      return;
    }
    const double diff = q[node.dim] - node.split;
    const std::int32_t near = diff < 0.0 ? node.left : node.right;
    const std::int32_t far = diff < 0.0 ? node.right : node.left;
    search_knn(near, q, heap);
    if (diff * diff <= heap.worst2()) search_knn(far, q, heap);
  }

  void search_radius(std::int32_t id, const Eigen::Vector3d& q, double r2, std::vector<std::size_t>& out) const {
    const Node& node = nodes_[static_cast<std::size_t>(id)];
    if (node.dim < 0) {
      for (std::size_t i = node.begin; i < node.end; ++i) {
        const std::size_t idx = order_[i];
        if ((points_[idx] - q).squaredNorm() <= r2) out.push_back(idx);
      }
      return;
    }
    const double diff = q[node.dim] - node.split;
    const std::int32_t near = diff < 0.0 ? node.left : node.right;
    const std::int32_t far = diff < 0.0 ? node.right : node.left;
    search_radius(near, q, r2, out);
    if (diff * diff <= r2) search_radius(far, q, r2, out);
  }

  std::vector<Eigen::Vector3d> points_;
  std::vector<std::size_t> order_;
  std::vector<Node> nodes_;
};

}  // namespace geofuse
