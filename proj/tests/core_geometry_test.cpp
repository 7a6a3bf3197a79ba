#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <array>
#include <limits>
#include <random>
#include <set>

#include "geofuse/geometry.hpp"
#include "geofuse/kdtree.hpp"
#include "geofuse/point_cloud.hpp"
#include "test_helpers.hpp"

using namespace geofuse;
using namespace geofuse::testing;

namespace {

// Exhaustive nearest neighbor with the same tie-break rule as the index.
std::pair<std::size_t, double> linear_scan_nearest(const std::vector<Eigen::Vector3d>& pts,
                                                   const Eigen::Vector3d& q) {
  std::size_t best = 0;
  double best_d2 = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const double d2 = (pts[i] - q).squaredNorm();
    if (d2 < best_d2) {
      best = i;
      best_d2 = d2;
    }
  }
  return {best, std::sqrt(best_d2)};
}

double brute_force_resolution(const PointCloud& cloud) {
  double sum = 0.0;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < cloud.size(); ++j) {
      if (i == j) continue;
      best = std::min(best, (cloud.points[i] - cloud.points[j]).norm());
    }
    sum += best;
  }
  return sum / static_cast<double>(cloud.size());
}

}  // namespace

TEST(ComputeResolution, SymmetricPair) {
  PointCloud cloud;
  cloud.points = {{0, 0, 0}, {1, 0, 0}};
  EXPECT_DOUBLE_EQ(compute_resolution(cloud), 1.0);
}

TEST(ComputeResolution, ThreeCollinearPoints) {
  PointCloud cloud;
  cloud.points = {{0, 0, 0}, {1, 0, 0}, {3, 0, 0}};
  EXPECT_NEAR(compute_resolution(cloud), 4.0 / 3.0, 1e-15);
}

TEST(ComputeResolution, PlanarGridMatchesExhaustiveOracle) {
  PointCloud cloud = grid_cloud(10, 10, 0.5);
  const double oracle = brute_force_resolution(cloud);
  EXPECT_NEAR(oracle, 0.5, 1e-12);
  EXPECT_NEAR(compute_resolution(cloud), oracle, 1e-12);
}

TEST(ComputeResolution, RejectsFewerThanTwoPoints) {
  PointCloud cloud;
  cloud.points = {{0, 0, 0}};
  EXPECT_THROW(compute_resolution(cloud), DataError);
}

TEST(ComputeResolution, CachesIntoCloud) {
  PointCloud cloud = grid_cloud(3, 3, 0.25);
  compute_resolution(cloud);
  ASSERT_TRUE(cloud.resolution.has_value());
  EXPECT_DOUBLE_EQ(*cloud.resolution, 0.25);
}

TEST(ComputeResolution, InvariantUnderRigidTransform) {
  PointCloud cloud = random_cloud(200, 2.0, 31);
  const double before = compute_resolution(cloud);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    PointCloud moved = apply_transform(cloud, random_rigid(seed));
    EXPECT_NEAR(compute_resolution(moved), before, 1e-9);
  }
}

TEST(EstimateNormals, PlanarCloudGivesPlaneNormal) {
  PointCloud cloud = grid_cloud(8, 8, 0.1);
  PointCloud with_normals = estimate_normals(cloud, 0.35);
  for (const auto& n : with_normals.normals) {
    EXPECT_NEAR(std::abs(n.z()), 1.0, 1e-6);
    EXPECT_NEAR(n.norm(), 1.0, 1e-6);
  }
}

TEST(EstimateNormals, SphereNormalsMatchAnalyticOracle) {
  // Oracle: on a sphere viewed from its center, the inward analytic normal
  // at p is -p/|p|. The symmetric sampling keeps covariance normals exact.
  PointCloud sphere = symmetric_sphere_cloud();
  PointCloud with_normals = estimate_normals(sphere, 0.75, Eigen::Vector3d::Zero());
  double worst = 0.0;
  for (std::size_t i = 0; i < sphere.size(); ++i) {
    const Eigen::Vector3d radial = sphere.points[i].normalized();
    worst = std::max(worst, (with_normals.normals[i] + radial).norm());
  }
  EXPECT_LT(worst, 1e-3);
}

TEST(EstimateNormals, TwoPointCloudIsDegenerate) {
  PointCloud cloud;
  cloud.points = {{0, 0, 0}, {1, 0, 0}};
  EXPECT_THROW(estimate_normals(cloud, 10.0), DataError);
}

TEST(EstimateNormals, ErrorNamesThePointIndex) {
  PointCloud cloud;
  cloud.points = {{0, 0, 0}, {0.1, 0, 0}, {0, 0.1, 0}, {100, 100, 100}};
  try {
    estimate_normals(cloud, 0.5);
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("point 3"), std::string::npos);
  }
}

TEST(EstimateNormals, EquivariantUnderRigidMotionUpToSign) {
  PointCloud sphere = fibonacci_sphere(800);
  PointCloud base = estimate_normals(sphere, 0.25);
  const RigidTransform t = random_rigid(7, 0.5);
  PointCloud moved = estimate_normals(apply_transform(sphere, t), 0.25, t.apply(Eigen::Vector3d::Zero()));
  for (std::size_t i = 0; i < sphere.size(); ++i) {
    const Eigen::Vector3d expected = t.rotation * base.normals[i];
    const double diff = std::min((moved.normals[i] - expected).norm(), (moved.normals[i] + expected).norm());
    EXPECT_LT(diff, 1e-3);
  }
}

TEST(ApplyTransform, IdentityIsNoop) {
  PointCloud cloud = random_cloud(50, 1.0, 3);
  PointCloud out = apply_transform(cloud, RigidTransform::identity());
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    EXPECT_EQ(out.points[i], cloud.points[i]);
  }
}

TEST(ApplyTransform, QuarterTurnAboutZ) {
  PointCloud cloud;
  cloud.points = {{1, 0, 0}};
  const RigidTransform t = RigidTransform::from_axis_angle(Eigen::Vector3d::UnitZ(), M_PI / 2.0);
  PointCloud out = apply_transform(cloud, t);
  EXPECT_NEAR((out.points[0] - Eigen::Vector3d(0, 1, 0)).norm(), 0.0, 1e-12);
}

TEST(ApplyTransform, InverseRoundTrips) {
  PointCloud cloud = random_cloud(100, 3.0, 11);
  const RigidTransform t = random_rigid(12);
  PointCloud back = apply_transform(apply_transform(cloud, t), t.inverse());
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    EXPECT_LT((back.points[i] - cloud.points[i]).cwiseAbs().maxCoeff(), 1e-9);
  }
}

TEST(ApplyTransform, PreservesPairwiseDistancesAndMetadata) {
  PointCloud cloud = random_cloud(60, 2.0, 17);
  compute_resolution(cloud);
  cloud = estimate_normals(cloud, 1.5);
  const RigidTransform t = random_rigid(18);
  PointCloud out = apply_transform(cloud, t);
  EXPECT_EQ(out.resolution, cloud.resolution);
  ASSERT_TRUE(out.has_normals());
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    for (std::size_t j = i + 1; j < cloud.size(); j += 7) {
      const double before = (cloud.points[i] - cloud.points[j]).norm();
      const double after = (out.points[i] - out.points[j]).norm();
      EXPECT_NEAR(before, after, 1e-9);
    }
  }
}

TEST(UniformSampleKeypoints, SingleCellWhenLeafCoversCloud) {
  PointCloud cloud = random_cloud(40, 1.0, 5);
  EXPECT_EQ(uniform_sample_keypoints(cloud, 100.0).size(), 1u);
}

TEST(UniformSampleKeypoints, CubeCornersAllKept) {
  PointCloud cloud;
  for (int x : {0, 1})
    for (int y : {0, 1})
      for (int z : {0, 1}) cloud.points.emplace_back(x, y, z);
  const auto keypoints = uniform_sample_keypoints(cloud, 0.4);
  ASSERT_EQ(keypoints.size(), 8u);
  for (std::size_t i = 0; i < 8; ++i) EXPECT_EQ(keypoints[i], i);
}

TEST(UniformSampleKeypoints, CountMatchesVoxelOracle) {
  PointCloud cloud = grid_cloud(12, 9, 0.2);
  const double leaf = 0.6;
  // Oracle: count distinct voxel keys directly.
  Eigen::Vector3d lo = cloud.points[0];
  for (const auto& p : cloud.points) lo = lo.cwiseMin(p);
  std::set<std::array<long, 3>> keys;
  for (const auto& p : cloud.points) {
    const Eigen::Vector3d rel = (p - lo) / leaf;
    keys.insert({static_cast<long>(std::floor(rel.x())), static_cast<long>(std::floor(rel.y())),
                 static_cast<long>(std::floor(rel.z()))});
  }
  EXPECT_EQ(uniform_sample_keypoints(cloud, leaf).size(), keys.size());
}

TEST(UniformSampleKeypoints, SortedUniqueValidIndices) {
  PointCloud cloud = random_cloud(300, 2.0, 23);
  const auto keypoints = uniform_sample_keypoints(cloud, 0.5);
  for (std::size_t i = 1; i < keypoints.size(); ++i) EXPECT_LT(keypoints[i - 1], keypoints[i]);
  for (std::size_t k : keypoints) EXPECT_LT(k, cloud.size());
}

TEST(SpatialIndex, CoincidentQueryReturnsZeroDistance) {
  PointCloud cloud = random_cloud(64, 1.0, 9);
  SpatialIndex index(cloud);
  const auto [idx, dist] = index.nearest(cloud.points[17]);
  EXPECT_EQ(idx, 17u);
  EXPECT_EQ(dist, 0.0);
}

TEST(SpatialIndex, PicksCloserOfTwo) {
  PointCloud cloud;
  cloud.points = {{0, 0, 0}, {1, 0, 0}};
  SpatialIndex index(cloud);
  EXPECT_EQ(index.nearest({0.9, 0, 0}).first, 1u);
}

TEST(SpatialIndex, TiesBrokenByLowestIndex) {
  PointCloud cloud;
  cloud.points = {{1, 0, 0}, {-1, 0, 0}, {1, 0, 0}};
  SpatialIndex index(cloud);
  EXPECT_EQ(index.nearest({0, 0, 0}).first, 0u);   // indices 0 and 1 equidistant
  EXPECT_EQ(index.nearest({2, 0, 0}).first, 0u);   // duplicate points 0 and 2
}

TEST(SpatialIndex, MatchesLinearScanOn1000Points) {
  PointCloud cloud = random_cloud(1000, 4.0, 41);
  SpatialIndex index(cloud);
  std::mt19937_64 gen(42);
  for (int q = 0; q < 100; ++q) {
    const Eigen::Vector3d query(uniform_range(gen, -5, 5), uniform_range(gen, -5, 5), uniform_range(gen, -5, 5));
    const auto expected = linear_scan_nearest(cloud.points, query);
    const auto got = index.nearest(query);
    EXPECT_EQ(got.first, expected.first);
    EXPECT_DOUBLE_EQ(got.second, expected.second);
  }
}

TEST(SpatialIndex, PropertyAgreesWithScanIncludingTies) {
  // Gridded clouds produce exact distance ties; random clouds cover the
  // generic case.
  std::mt19937_64 gen(77);
  for (int trial = 0; trial < 6; ++trial) {
    PointCloud cloud = trial % 2 == 0 ? grid_cloud(7, 5, 0.5, 0.25 * trial) : random_cloud(223, 1.5, 100 + trial);
    SpatialIndex index(cloud);
    for (int q = 0; q < 60; ++q) {
      Eigen::Vector3d query(uniform_range(gen, -1, 4), uniform_range(gen, -1, 4), uniform_range(gen, -1, 4));
      if (q % 3 == 0) query = cloud.points[static_cast<std::size_t>(uniform_below(gen, cloud.size()))];
      const auto expected = linear_scan_nearest(cloud.points, query);
      const auto got = index.nearest(query);
      EXPECT_EQ(got.first, expected.first);
      EXPECT_DOUBLE_EQ(got.second, expected.second);
    }
  }
}

TEST(SpatialIndex, KnnSortedAndExact) {
  PointCloud cloud = random_cloud(400, 2.0, 55);
  SpatialIndex index(cloud);
  std::mt19937_64 gen(56);
  for (int q = 0; q < 20; ++q) {
    const Eigen::Vector3d query(uniform_range(gen, -2, 2), uniform_range(gen, -2, 2), uniform_range(gen, -2, 2));
    const auto got = index.knn(query, 5);
    ASSERT_EQ(got.size(), 5u);
    // Oracle: full sort by (distance, index).
    std::vector<std::pair<double, std::size_t>> all;
    for (std::size_t i = 0; i < cloud.size(); ++i) all.emplace_back((cloud.points[i] - query).norm(), i);
    std::sort(all.begin(), all.end());
    for (std::size_t i = 0; i < got.size(); ++i) {
      EXPECT_EQ(got[i].first, all[i].second);
      EXPECT_NEAR(got[i].second, all[i].first, 1e-12);
      if (i > 0) EXPECT_GE(got[i].second, got[i - 1].second);
    }
  }
}

TEST(SpatialIndex, RadiusIsInclusiveAndSorted) {
  PointCloud cloud;
  cloud.points = {{0, 0, 0}, {1, 0, 0}, {2, 0, 0}, {0.5, 0, 0}};
  SpatialIndex index(cloud);
  const auto in = index.radius({0, 0, 0}, 1.0);
  EXPECT_EQ(in, (std::vector<std::size_t>{0, 1, 3}));
}
