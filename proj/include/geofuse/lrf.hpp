#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "geofuse/error.hpp"
#include "geofuse/kdtree.hpp"
#include "geofuse/point_cloud.hpp"

namespace geofuse {

/// A repeatable per-keypoint coordinate frame. Rows of `axes` are the x, y,
/// z axes; the matrix is orthonormal and right-handed. `ambiguous` is set
/// when the two smallest covariance eigenvalues nearly coincide and the
/// z direction is not well defined.
struct LocalReferenceFrame {
  Eigen::Vector3d origin = Eigen::Vector3d::Zero();
  Eigen::Matrix3d axes = Eigen::Matrix3d::Identity();
  bool ambiguous = false;

  /// Coordinates of a world-space point in this frame.
  Eigen::Vector3d to_local(const Eigen::Vector3d& p) const { return axes * (p - origin); }
};

/// Local reference frame from the distance-weighted neighborhood covariance
/// (weight = radius - distance, centered on the keypoint). The z axis is
/// the smallest-eigenvalue eigenvector with its sign chosen so the majority
/// of neighbor offsets have non-positive projection; x is the
/// largest-eigenvalue eigenvector projected orthogonal to z, sign chosen so
/// the majority of offsets have non-negative projection; y = z × x.
inline LocalReferenceFrame compute_lrf(const PointCloud& cloud, const SpatialIndex& index, std::size_t center,
                                       double radius) {
  const Eigen::Vector3d p = cloud.points[center];
  std::vector<std::size_t> neighbors;
  for (std::size_t j : index.radius(p, radius)) {
    if (j != center) neighbors.push_back(j);
  }
  if (neighbors.size() < 5) {
    throw DataError("degenerate patch at point " + std::to_string(center) + ": " +
                    std::to_string(neighbors.size()) + " neighbors within support radius");
  }

  Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
  double weight_sum = 0.0;
  for (std::size_t j : neighbors) {
    const Eigen::Vector3d d = cloud.points[j] - p;
    const double w = radius - d.norm();
    cov += w * d * d.transpose();
    weight_sum += w;
  }
  cov /= weight_sum;

  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(cov);  // eigenvalues ascending
  const Eigen::Vector3d evals = eig.eigenvalues().cwiseMax(0.0);

  LocalReferenceFrame frame;
  frame.origin = p;
  if (evals[1] <= 0.0) {
    frame.ambiguous = true;  // two vanishing directions: collinear patch
  } else if (evals[0] > 0.0 && std::abs(evals[1] / evals[0] - 1.0) < 1e-6) {
    frame.ambiguous = true;
  }

  Eigen::Vector3d z = eig.eigenvectors().col(0).normalized();
  int positive = 0, non_positive = 0;
  for (std::size_t j : neighbors) {
    const double proj = (cloud.points[j] - p).dot(z);
    (proj > 0.0 ? positive : non_positive) += 1;
  }
  if (positive > non_positive) z = -z;

  Eigen::Vector3d x = eig.eigenvectors().col(2);
  x -= x.dot(z) * z;
  x.normalize();
  int negative = 0, non_negative = 0;
  for (std::size_t j : neighbors) {
    const double proj = (cloud.points[j] - p).dot(x);
    (proj < 0.0 ? negative : non_negative) += 1;
  }
  if (negative > non_negative) x = -x;

  frame.axes.row(0) = x;
  frame.axes.row(1) = z.cross(x);
  frame.axes.row(2) = z;
  return frame;
}

inline LocalReferenceFrame compute_lrf(const PointCloud& cloud, std::size_t center, double radius) {
  return compute_lrf(cloud, SpatialIndex(cloud), center, radius);
}

}  // namespace geofuse
