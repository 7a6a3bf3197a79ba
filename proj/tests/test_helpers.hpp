#pragma once

#include <Eigen/Core>
#include <limits>
#include <random>
#include <vector>

#include "geofuse/point_cloud.hpp"
#include "geofuse/rng.hpp"

namespace geofuse::testing {

inline PointCloud grid_cloud(int nx, int ny, double spacing, double z = 0.0) {
  PointCloud cloud;
  for (int y = 0; y < ny; ++y) {
    for (int x = 0; x < nx; ++x) {
      cloud.points.emplace_back(x * spacing, y * spacing, z);
    }
  }
  return cloud;
}

/// Quasi-uniform points on a sphere (Fibonacci lattice).
inline PointCloud fibonacci_sphere(int n, double radius = 1.0) {
  PointCloud cloud;
  const double golden = M_PI * (3.0 - std::sqrt(5.0));
  for (int i = 0; i < n; ++i) {
    const double z = 1.0 - 2.0 * (i + 0.5) / n;
    const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
    const double theta = golden * i;
    cloud.points.emplace_back(radius * r * std::cos(theta), radius * r * std::sin(theta), radius * z);
  }
  return cloud;
}

/// 62 points on the unit sphere: icosahedron vertices plus normalized edge
/// midpoints and face centers. Every point lies on a symmetry axis of the
/// icosahedral group, so each radius neighborhood is rotationally symmetric
/// about the point's radial direction and covariance normals are exact.
inline PointCloud symmetric_sphere_cloud() {
  const double phi = (1.0 + std::sqrt(5.0)) / 2.0;
  std::vector<Eigen::Vector3d> ico;
  for (double s1 : {-1.0, 1.0}) {
    for (double s2 : {-1.0, 1.0}) {
      ico.emplace_back(0.0, s1, s2 * phi);
      ico.emplace_back(s2 * phi, 0.0, s1);
      ico.emplace_back(s1, s2 * phi, 0.0);
    }
  }
  for (auto& v : ico) v.normalize();
  double edge = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < ico.size(); ++i)
    for (std::size_t j = i + 1; j < ico.size(); ++j) edge = std::min(edge, (ico[i] - ico[j]).norm());
  const auto adjacent = [&](std::size_t i, std::size_t j) { return (ico[i] - ico[j]).norm() < edge * 1.01; };

  std::vector<Eigen::Vector3d> pts = ico;
  const auto add_unique = [&](const Eigen::Vector3d& p) {
    for (const auto& q : pts)
      if ((q - p).norm() < 1e-9) return;
    pts.push_back(p);
  };
  for (std::size_t i = 0; i < ico.size(); ++i)
    for (std::size_t j = i + 1; j < ico.size(); ++j)
      if (adjacent(i, j)) add_unique(((ico[i] + ico[j]) / 2).normalized());
  for (std::size_t i = 0; i < ico.size(); ++i)
    for (std::size_t j = i + 1; j < ico.size(); ++j)
      for (std::size_t k = j + 1; k < ico.size(); ++k)
        if (adjacent(i, j) && adjacent(j, k) && adjacent(i, k))
          add_unique(((ico[i] + ico[j] + ico[k]) / 3).normalized());

  PointCloud cloud;
  cloud.points = std::move(pts);
  return cloud;
}

inline PointCloud random_cloud(int n, double extent, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  PointCloud cloud;
  for (int i = 0; i < n; ++i) {
    cloud.points.emplace_back(uniform_range(gen, -extent, extent), uniform_range(gen, -extent, extent),
                              uniform_range(gen, -extent, extent));
  }
  return cloud;
}

inline Eigen::Vector3d random_unit(std::mt19937_64& gen) {
  Eigen::Vector3d v;
  do {
    v = Eigen::Vector3d(normal_unit(gen), normal_unit(gen), normal_unit(gen));
  } while (v.norm() < 1e-6);
  return v.normalized();
}

inline RigidTransform random_rigid(std::uint64_t seed, double max_translation = 5.0) {
  std::mt19937_64 gen(seed);
  const Eigen::Vector3d axis = random_unit(gen);
  const double angle = uniform_range(gen, 0.0, 2.0 * M_PI);
  const Eigen::Vector3d t(uniform_range(gen, -max_translation, max_translation),
                          uniform_range(gen, -max_translation, max_translation),
                          uniform_range(gen, -max_translation, max_translation));
  return RigidTransform::from_axis_angle(axis, angle, t);
}

}  // namespace geofuse::testing
