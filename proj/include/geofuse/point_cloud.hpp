#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <cmath>
#include <optional>
#include <vector>

#include "geofuse/error.hpp"

namespace geofuse {

/// A 3D point cloud: positions, optional unit normals aligned per point,
/// and an optional cached point-cloud resolution (mean nearest-neighbor
/// distance). All geometry is double precision.
struct PointCloud {
  std::vector<Eigen::Vector3d> points;
  std::vector<Eigen::Vector3d> normals;  // empty, or one unit vector per point
  std::optional<double> resolution;

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
  bool has_normals() const { return !normals.empty() && normals.size() == points.size(); }

  /// Cached resolution; throws if it was never computed.
  double resolution_or_throw() const {
    if (!resolution || *resolution <= 0.0) {
      throw DataError("point cloud resolution not computed");
    }
    return *resolution;
  }
};

/// Proper rigid motion: x -> R*x + t with R in SO(3).
struct RigidTransform {
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();

  Eigen::Vector3d apply(const Eigen::Vector3d& p) const { return rotation * p + translation; }

  RigidTransform inverse() const {
    RigidTransform inv;
    inv.rotation = rotation.transpose();
    inv.translation = -(inv.rotation * translation);
    return inv;
  }

  /// Composition: (this * other).apply(p) == this.apply(other.apply(p)).
  RigidTransform operator*(const RigidTransform& other) const {
    RigidTransform out;
    out.rotation = rotation * other.rotation;
    out.translation = rotation * other.translation + translation;
    return out;
  }

  /// Checks R^T R = I and det(R) = 1 within tol per entry.
  bool is_rigid(double tol = 1e-9) const {
    const Eigen::Matrix3d err = rotation.transpose() * rotation - Eigen::Matrix3d::Identity();
    if (err.cwiseAbs().maxCoeff() > tol) return false;
    return std::abs(rotation.determinant() - 1.0) <= tol;
  }

  static RigidTransform identity() { return {}; }

  static RigidTransform from_axis_angle(const Eigen::Vector3d& axis, double angle,
                                        const Eigen::Vector3d& translation = Eigen::Vector3d::Zero()) {
    RigidTransform t;
    t.rotation = Eigen::AngleAxisd(angle, axis.normalized()).toRotationMatrix();
    t.translation = translation;
    return t;
  }
};

}  // namespace geofuse
