#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "geofuse/error.hpp"
#include "geofuse/kdtree.hpp"
#include "geofuse/point_cloud.hpp"

namespace geofuse {

/// Point cloud resolution: the mean, over all points, of the distance to
/// each point's nearest distinct neighbor. The result is cached on the
/// cloud and returned.
inline double compute_resolution(PointCloud& cloud) {
  if (cloud.size() < 2) {
    throw DataError("compute_resolution requires at least 2 points, got " + std::to_string(cloud.size()));
  }
  const SpatialIndex index(cloud);
  double sum = 0.0;
  for (const auto& p : cloud.points) {
    const auto two = index.knn(p, 2);
    sum += two[1].second;  // two[0] is the point itself at distance 0
  }
  const double pr = sum / static_cast<double>(cloud.size());
  cloud.resolution = pr;
  return pr;
}

/// Dataset-level resolution: mean of the per-cloud resolutions. Used
/// wherever thresholds are expressed in units of pr.
inline double dataset_resolution(const std::vector<const PointCloud*>& clouds) {
  if (clouds.empty()) throw DataError("dataset_resolution requires at least one cloud");
  double sum = 0.0;
  for (const PointCloud* c : clouds) sum += c->resolution_or_throw();
  return sum / static_cast<double>(clouds.size());
}

/// Per-point normals from the covariance of the radius neighborhood: the
/// eigenvector of the smallest eigenvalue, sign oriented toward
/// `viewpoint`. The input cloud is not modified.
inline PointCloud estimate_normals(const PointCloud& cloud, double radius,
                                   const Eigen::Vector3d& viewpoint = Eigen::Vector3d::Zero()) {
  if (radius <= 0.0) throw ConfigError("estimate_normals radius must be positive");
  if (cloud.empty()) throw DataError("estimate_normals requires a non-empty cloud");
  const SpatialIndex index(cloud);
  PointCloud out = cloud;
  out.normals.assign(cloud.size(), Eigen::Vector3d::Zero());
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const auto neighbors = index.radius(cloud.points[i], radius);
    if (neighbors.size() < 3) {
      throw DataError("degenerate neighborhood at point " + std::to_string(i) + ": " +
                      std::to_string(neighbors.size()) + " neighbors within radius");
    }
    Eigen::Vector3d mean = Eigen::Vector3d::Zero();
    for (std::size_t j : neighbors) mean += cloud.points[j];
    mean /= static_cast<double>(neighbors.size());
    Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
    for (std::size_t j : neighbors) {
      const Eigen::Vector3d d = cloud.points[j] - mean;
      cov += d * d.transpose();
    }
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(cov);
    Eigen::Vector3d n = eig.eigenvectors().col(0).normalized();
    if (n.dot(viewpoint - cloud.points[i]) < 0.0) n = -n;
    out.normals[i] = n;
  }
  return out;
}

/// Maps every point by R*p + t, rotates normals, preserves resolution
/// metadata (rigid motions preserve all distances).
inline PointCloud apply_transform(const PointCloud& cloud, const RigidTransform& t) {
  PointCloud out;
  out.points.reserve(cloud.size());
  for (const auto& p : cloud.points) out.points.push_back(t.apply(p));
  if (cloud.has_normals()) {
    out.normals.reserve(cloud.size());
    for (const auto& n : cloud.normals) out.normals.push_back(t.rotation * n);
  }
  out.resolution = cloud.resolution;
  return out;
}

namespace detail {

struct VoxelKey {
  std::int64_t x, y, z;
  bool operator==(const VoxelKey&) const = default;
};

struct VoxelKeyHash {
  std::size_t operator()(const VoxelKey& k) const {
    std::uint64_t h = 1469598103934665603ull;
    for (std::int64_t v : {k.x, k.y, k.z}) {
      h ^= static_cast<std::uint64_t>(v);
      h *= 1099511628211ull;
    }
    return static_cast<std::size_t>(h);
  }
};

}  // namespace detail

/// Uniform-sampling keypoint detection: voxel grid with cell edge `leaf`;
/// each non-empty cell contributes the index of the member point nearest
/// the centroid of the cell's points. Indices are returned sorted.
inline std::vector<std::size_t> uniform_sample_keypoints(const PointCloud& cloud, double leaf) {
  if (leaf <= 0.0) throw ConfigError("uniform_sample_keypoints leaf must be positive");
  if (cloud.empty()) throw DataError("uniform_sample_keypoints requires a non-empty cloud");

  Eigen::Vector3d lo = cloud.points[0];
  for (const auto& p : cloud.points) lo = lo.cwiseMin(p);

  std::unordered_map<detail::VoxelKey, std::vector<std::size_t>, detail::VoxelKeyHash> cells;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const Eigen::Vector3d rel = (cloud.points[i] - lo) / leaf;
    cells[{static_cast<std::int64_t>(std::floor(rel.x())), static_cast<std::int64_t>(std::floor(rel.y())),
           static_cast<std::int64_t>(std::floor(rel.z()))}]
        .push_back(i);
  }

  std::vector<std::size_t> keypoints;
  keypoints.reserve(cells.size());
  for (const auto& [key, members] : cells) {
    Eigen::Vector3d centroid = Eigen::Vector3d::Zero();
    for (std::size_t i : members) centroid += cloud.points[i];
    centroid /= static_cast<double>(members.size());
    std::size_t best = members[0];
    double best_d2 = (cloud.points[best] - centroid).squaredNorm();
    for (std::size_t i : members) {
      const double d2 = (cloud.points[i] - centroid).squaredNorm();
      if (d2 < best_d2 || (d2 == best_d2 && i < best)) {
        best = i;
        best_d2 = d2;
      }
    }
    keypoints.push_back(best);
  }
  std::sort(keypoints.begin(), keypoints.end());
  return keypoints;
}

}  // namespace geofuse
