#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <vector>

#include "geofuse/baselines.hpp"
#include "geofuse/error.hpp"
#include "geofuse/geometry.hpp"
#include "geofuse/kdtree.hpp"
#include "geofuse/point_cloud.hpp"
#include "geofuse/rng.hpp"

namespace geofuse {

struct Correspondence {
  std::size_t source = 0;  // position in the source feature list
  std::size_t target = 0;  // position in the target feature list
  double distance = 0.0;
  double ratio = 0.0;
  bool ground_truth = false;
};

using CorrespondenceSet = std::vector<Correspondence>;

struct NearestTwo {
  std::size_t best = 0;
  double d1 = std::numeric_limits<double>::infinity();
  double d2 = std::numeric_limits<double>::infinity();
};

/// Ratio of the nearest to the second-nearest distance. A vanishing second
/// distance counts as ratio 1 unless the first also vanishes (exact
/// duplicate), which counts as 0; a missing second neighbor counts as 0.
inline double nearest_ratio(const NearestTwo& nt) {
  if (nt.d1 == 0.0) return 0.0;
  if (nt.d2 == 0.0) return 1.0;
  if (std::isinf(nt.d2)) return 0.0;
  return nt.d1 / nt.d2;
}

/// Two nearest entries under an arbitrary distance, scanning in index order
/// (ties keep the earlier index).
inline NearestTwo nearest_two_by(std::size_t candidates,
                                 const std::function<double(std::size_t)>& distance_to) {
  NearestTwo nt;
  for (std::size_t i = 0; i < candidates; ++i) {
    const double d = distance_to(i);
    if (d < nt.d1) {
      nt.d2 = nt.d1;
      nt.d1 = d;
      nt.best = i;
    } else if (d < nt.d2) {
      nt.d2 = d;
    }
  }
  return nt;
}

/// Ratio-test feature matching: every target feature is matched against all
/// source features; a correspondence is emitted when the nearest/second-
/// nearest L2 ratio falls strictly below the threshold.
inline CorrespondenceSet ratio_match(const std::vector<Eigen::VectorXd>& source_features,
                                     const std::vector<Eigen::VectorXd>& target_features, double threshold) {
  if (source_features.empty() || target_features.empty()) {
    throw DataError("ratio_match requires non-empty feature sets");
  }
  for (const auto& f : source_features) {
    if (f.size() != source_features[0].size()) throw ShapeError("ratio_match: ragged source features");
  }
  CorrespondenceSet matches;
  for (std::size_t t = 0; t < target_features.size(); ++t) {
    if (target_features[t].size() != source_features[0].size()) {
      throw ShapeError("ratio_match: feature dimension mismatch at target " + std::to_string(t));
    }
    const NearestTwo nt = nearest_two_by(source_features.size(), [&](std::size_t s) {
      return (source_features[s] - target_features[t]).norm();
    });
    const double ratio = nearest_ratio(nt);
    if (ratio < threshold) {
      matches.push_back({nt.best, t, nt.d1, ratio, false});
    }
  }
  return matches;
}

/// Feature vectors bound to the cloud point indices they describe.
struct IndexedFeatures {
  std::vector<std::size_t> indices;
  std::vector<Eigen::VectorXd> vectors;

  std::size_t size() const { return indices.size(); }
};

/// Descriptor tuples bound to cloud point indices (min-pool matching).
struct IndexedTuples {
  std::vector<std::size_t> indices;
  std::vector<std::vector<Eigen::VectorXd>> tuples;

  std::size_t size() const { return indices.size(); }
};

struct RpcPoint {
  double threshold = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  int matched = 0;
  int correct = 0;
};

struct RpcCurve {
  std::vector<RpcPoint> points;  // one per swept ratio threshold
  double auc = 0.0;
  int total_correct_possible = 0;
};

namespace detail {

/// Shared RPC protocol: sample source keypoints, locate their ground-truth
/// correspondents among the target keypoints, match each correspondent's
/// feature back against the sampled source features, sweep the ratio grid.
inline RpcCurve rpc_core(const PointCloud& source, const PointCloud& target, const RigidTransform& gt,
                         const std::vector<std::size_t>& source_indices,
                         const std::vector<std::size_t>& target_indices,
                         const std::function<double(std::size_t, std::size_t)>& feature_distance,
                         int keypoint_count, double correctness_tol, std::uint64_t seed, int grid_steps) {
  if (source_indices.empty() || target_indices.empty()) {
    throw DataError("rpc: empty feature sets");
  }
  if (keypoint_count < 1) throw ConfigError("rpc: keypoint count must be >= 1");
  if (correctness_tol <= 0.0) throw ConfigError("rpc: correctness tolerance must be positive");

  // Seeded sample of source slots, ascending for determinism.
  std::vector<std::size_t> sampled(source_indices.size());
  for (std::size_t i = 0; i < sampled.size(); ++i) sampled[i] = i;
  if (sampled.size() > static_cast<std::size_t>(keypoint_count)) {
    std::mt19937_64 gen(seed);
    shuffle_in_place(sampled, gen);
    sampled.resize(static_cast<std::size_t>(keypoint_count));
    std::sort(sampled.begin(), sampled.end());
  }

  // Ground-truth correspondent of each sampled keypoint among the target
  // keypoints.
  std::vector<Eigen::Vector3d> target_points;
  target_points.reserve(target_indices.size());
  for (std::size_t idx : target_indices) target_points.push_back(target.points[idx]);
  const SpatialIndex target_tree(std::move(target_points));

  struct Pairing {
    std::size_t source_slot;
    std::size_t target_slot;
  };
  std::vector<Pairing> valid;
  for (std::size_t s : sampled) {
    const Eigen::Vector3d projected = gt.apply(source.points[source_indices[s]]);
    const auto [t_slot, dist] = target_tree.nearest(projected);
    if (dist < correctness_tol) valid.push_back({s, t_slot});
  }
  if (valid.empty()) {
    throw DataError("rpc: no sampled keypoint has a ground-truth correspondent (undefined recall)");
  }

  // Nearest-two source features for every distinct correspondent.
  std::vector<NearestTwo> table(target_indices.size());
  std::vector<bool> computed(target_indices.size(), false);
  for (const auto& pair : valid) {
    if (computed[pair.target_slot]) continue;
    computed[pair.target_slot] = true;
    table[pair.target_slot] = nearest_two_by(sampled.size(), [&](std::size_t i) {
      return feature_distance(sampled[i], pair.target_slot);
    });
  }

  RpcCurve curve;
  curve.total_correct_possible = static_cast<int>(valid.size());
  for (int step = 1; step <= grid_steps; ++step) {
    const double threshold = static_cast<double>(step) / static_cast<double>(grid_steps);
    RpcPoint point;
    point.threshold = threshold;
    for (const auto& pair : valid) {
      const NearestTwo& nt = table[pair.target_slot];
      if (nearest_ratio(nt) >= threshold) continue;
      point.matched += 1;
      const std::size_t matched_source = source_indices[sampled[nt.best]];
      const Eigen::Vector3d projected = gt.apply(source.points[matched_source]);
      if ((projected - target.points[target_indices[pair.target_slot]]).norm() < correctness_tol) {
        point.correct += 1;
      }
    }
    point.precision = point.matched > 0 ? static_cast<double>(point.correct) / point.matched : 1.0;
    point.recall = static_cast<double>(point.correct) / curve.total_correct_possible;
    curve.points.push_back(point);
  }

  // Trapezoidal area over the recall axis, anchored at recall 0.
  std::vector<std::pair<double, double>> sorted;  // (recall, precision)
  for (const auto& p : curve.points) sorted.emplace_back(p.recall, p.precision);
  std::sort(sorted.begin(), sorted.end());
  double auc = 0.0;
  double prev_r = 0.0, prev_p = sorted.front().second;
  for (const auto& [r, p] : sorted) {
    auc += (r - prev_r) * 0.5 * (p + prev_p);
    prev_r = r;
    prev_p = p;
  }
  curve.auc = auc;
  return curve;
}

}  // namespace detail

inline constexpr int kRpcGridSteps = 20;  // ratio thresholds 0.05 .. 1.00

/// RPC over fused feature vectors.
inline RpcCurve rpc(const PointCloud& source, const PointCloud& target, const RigidTransform& gt,
                    const IndexedFeatures& source_features, const IndexedFeatures& target_features,
                    int keypoint_count, double correctness_tol, std::uint64_t seed) {
  if (source_features.vectors.empty() || target_features.vectors.empty()) {
    throw DataError("rpc: empty feature sets");
  }
  if (source_features.vectors[0].size() != target_features.vectors[0].size()) {
    throw ShapeError("rpc: feature dimension mismatch between sides");
  }
  return detail::rpc_core(
      source, target, gt, source_features.indices, target_features.indices,
      [&](std::size_t s, std::size_t t) {
        return (source_features.vectors[s] - target_features.vectors[t]).norm();
      },
      keypoint_count, correctness_tol, seed, kRpcGridSteps);
}

/// RPC with min-pooled distances over descriptor tuples.
inline RpcCurve rpc_min_pool(const PointCloud& source, const PointCloud& target, const RigidTransform& gt,
                             const IndexedTuples& source_features, const IndexedTuples& target_features,
                             int keypoint_count, double correctness_tol, std::uint64_t seed) {
  return detail::rpc_core(
      source, target, gt, source_features.indices, target_features.indices,
      [&](std::size_t s, std::size_t t) {
        return min_pool_distance(source_features.tuples[s], target_features.tuples[t]);
      },
      keypoint_count, correctness_tol, seed, kRpcGridSteps);
}

/// Mutual-nearest matching under the min-pool distance (slot pairs).
inline std::vector<std::pair<std::size_t, std::size_t>> mutual_nearest_min_pool(
    const IndexedTuples& source_features, const IndexedTuples& target_features) {
  if (source_features.size() == 0 || target_features.size() == 0) {
    throw DataError("mutual_nearest_min_pool: empty feature sets");
  }
  std::vector<std::size_t> best_source(target_features.size());
  for (std::size_t t = 0; t < target_features.size(); ++t) {
    best_source[t] = nearest_two_by(source_features.size(), [&](std::size_t s) {
                       return min_pool_distance(source_features.tuples[s], target_features.tuples[t]);
                     }).best;
  }
  std::vector<std::size_t> best_target(source_features.size());
  for (std::size_t s = 0; s < source_features.size(); ++s) {
    best_target[s] = nearest_two_by(target_features.size(), [&](std::size_t t) {
                       return min_pool_distance(source_features.tuples[s], target_features.tuples[t]);
                     }).best;
  }
  std::vector<std::pair<std::size_t, std::size_t>> mutual;
  for (std::size_t t = 0; t < target_features.size(); ++t) {
    const std::size_t s = best_source[t];
    if (best_target[s] == t) mutual.emplace_back(s, t);
  }
  return mutual;
}

/// Ground-truth correspondences from a known transform: each source point
/// pairs with its nearest target point when that lies within `tol`.
inline std::vector<std::pair<std::size_t, std::size_t>> ground_truth_correspondences(
    const PointCloud& source, const PointCloud& target, const RigidTransform& gt, double tol) {
  if (source.empty() || target.empty()) throw DataError("ground_truth_correspondences: empty clouds");
  const SpatialIndex target_tree(target);
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  for (std::size_t i = 0; i < source.size(); ++i) {
    const auto [j, dist] = target_tree.nearest(gt.apply(source.points[i]));
    if (dist < tol) pairs.emplace_back(i, j);
  }
  return pairs;
}

/// RMSE of the estimated transform over ground-truth correspondences:
/// sqrt(mean squared residual). The literal no-sqrt variant (mean squared
/// residual) is available behind the flag.
inline double rmse(const PointCloud& source, const PointCloud& target, const RigidTransform& estimated,
                   const std::vector<std::pair<std::size_t, std::size_t>>& gt_correspondences,
                   bool literal_no_sqrt = false) {
  if (gt_correspondences.empty()) throw DataError("rmse: empty ground-truth correspondence set");
  double sum = 0.0;
  for (const auto& [s, t] : gt_correspondences) {
    sum += (estimated.apply(source.points[s]) - target.points[t]).squaredNorm();
  }
  const double mean_sq = sum / static_cast<double>(gt_correspondences.size());
  return literal_no_sqrt ? mean_sq : std::sqrt(mean_sq);
}

/// Fraction of registrations with RMSE strictly below alpha.
inline double alpha_recall(const std::vector<double>& rmse_values, double alpha) {
  if (rmse_values.empty()) throw DataError("alpha_recall: empty RMSE list");
  std::size_t hits = 0;
  for (double v : rmse_values) {
    if (v < alpha) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(rmse_values.size());
}

/// Outcome of one candidate pair in a registration benchmark. `rmse` may be
/// NaN when no ground truth exists for the pair.
struct RegistrationOutcome {
  bool claimed = false;     // the pipeline reported a successful registration
  bool gt_overlap = false;  // the pair truly overlaps per ground truth
  double rmse = std::numeric_limits<double>::quiet_NaN();
};

struct Prf {
  double precision = 0.0;
  double recall = 0.0;
  double f_score = 0.0;
};

inline double f_score(double precision, double recall) {
  if (precision + recall <= 0.0) return 0.0;
  return 2.0 * precision * recall / (precision + recall);
}

/// Benchmark aggregation: a claimed registration is correct when its pair
/// overlaps and the RMSE clears the threshold. Precision is over claimed
/// registrations, recall over ground-truth overlapping pairs.
inline Prf benchmark_prf(const std::vector<RegistrationOutcome>& outcomes, double rmse_threshold = 0.2) {
  std::size_t claimed = 0, overlapping = 0, correct = 0;
  for (const auto& o : outcomes) {
    claimed += o.claimed ? 1 : 0;
    overlapping += o.gt_overlap ? 1 : 0;
    if (o.claimed && o.gt_overlap && std::isfinite(o.rmse) && o.rmse < rmse_threshold) ++correct;
  }
  Prf prf;
  prf.precision = claimed > 0 ? static_cast<double>(correct) / claimed : 0.0;
  prf.recall = overlapping > 0 ? static_cast<double>(correct) / overlapping : 0.0;
  prf.f_score = f_score(prf.precision, prf.recall);
  return prf;
}

/// Feature-to-RGB visualization: project every feature onto its top three
/// principal components and min-max scale each component to [0, 255].
inline std::vector<std::array<std::uint8_t, 3>> colorize_features(const std::vector<Eigen::VectorXd>& features,
                                                                  const PointCloud& cloud) {
  if (features.size() != cloud.size()) {
    throw ShapeError("colorize_features: feature count does not match the cloud");
  }
  if (features.size() < 4) throw DataError("colorize_features: need at least 4 points");
  const Eigen::Index dim = features[0].size();
  for (const auto& f : features) {
    if (f.size() != dim) throw ShapeError("colorize_features: ragged features");
  }

  Eigen::VectorXd mean = Eigen::VectorXd::Zero(dim);
  for (const auto& f : features) mean += f;
  mean /= static_cast<double>(features.size());
  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(dim, dim);
  for (const auto& f : features) {
    const Eigen::VectorXd d = f - mean;
    cov.noalias() += d * d.transpose();
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);

  const int comps = static_cast<int>(std::min<Eigen::Index>(3, dim));
  Eigen::MatrixXd projected(features.size(), 3);
  projected.setZero();
  for (std::size_t i = 0; i < features.size(); ++i) {
    for (int c = 0; c < comps; ++c) {
      projected(static_cast<Eigen::Index>(i), c) = eig.eigenvectors().col(dim - 1 - c).dot(features[i] - mean);
    }
  }

  std::vector<std::array<std::uint8_t, 3>> colors(features.size());
  for (int c = 0; c < 3; ++c) {
    const double lo = projected.col(c).minCoeff();
    const double hi = projected.col(c).maxCoeff();
    const double range = hi - lo;
    for (std::size_t i = 0; i < features.size(); ++i) {
      const double scaled = range > 0.0 ? (projected(static_cast<Eigen::Index>(i), c) - lo) / range * 255.0 : 0.0;
      colors[i][static_cast<std::size_t>(c)] =
          static_cast<std::uint8_t>(std::clamp(std::llround(scaled), 0ll, 255ll));
    }
  }
  return colors;
}

}  // namespace geofuse
