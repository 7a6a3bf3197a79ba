#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "geofuse/error.hpp"
#include "geofuse/kdtree.hpp"
#include "geofuse/point_cloud.hpp"
#include "geofuse/rng.hpp"

namespace geofuse {

/// Band thresholds (absolute lengths) and sample counts for triplet mining.
/// Canonical defaults in resolution units: tau_anc = 1.5pr, tau_pos = 3pr,
/// tau_hard = 6pr, 25 far negatives and 15 hard negatives per anchor.
struct SamplerConfig {
  double tau_anc = 0.0;
  double tau_pos = 0.0;
  double tau_hard = 0.0;
  int n_neg = 25;
  int n_hard_neg = 15;
  std::uint64_t seed = 0;

  static SamplerConfig from_resolution(double pr, std::uint64_t seed = 0) {
    SamplerConfig cfg;
    cfg.tau_anc = 1.5 * pr;
    cfg.tau_pos = 3.0 * pr;
    cfg.tau_hard = 6.0 * pr;
    cfg.seed = seed;
    return cfg;
  }

  void validate() const {
    if (tau_anc <= 0.0) throw ConfigError("tau_anc must be positive");
    if (tau_anc > tau_pos || tau_pos >= tau_hard) {
      throw ConfigError("sampler thresholds must satisfy tau_anc <= tau_pos < tau_hard");
    }
    if (n_neg < 0 || n_hard_neg < 0) throw ConfigError("negative sample counts must be >= 0");
  }
};

/// One mined triplet: the anchor indexes the source cloud, the positive and
/// negative index the target cloud.
struct TripletIndices {
  std::size_t anchor = 0;
  std::size_t positive = 0;
  std::size_t negative = 0;
};

struct TripletBatch {
  std::vector<TripletIndices> triplets;
  RigidTransform gt;                  // maps source points into the target frame
  bool pools_exhausted = false;       // some pool was smaller than its quota
};

/// Anchor condition: source points whose transformed position has a target
/// nearest neighbor closer than tau_anc.
inline std::vector<std::size_t> select_anchors(const PointCloud& source, const PointCloud& target,
                                               const RigidTransform& gt, const SamplerConfig& cfg) {
  cfg.validate();
  if (source.empty() || target.empty()) throw DataError("select_anchors requires non-empty clouds");
  const SpatialIndex target_index(target);
  std::vector<std::size_t> anchors;
  for (std::size_t k = 0; k < source.size(); ++k) {
    const auto [idx, dist] = target_index.nearest(gt.apply(source.points[k]));
    (void)idx;
    if (dist < cfg.tau_anc) anchors.push_back(k);
  }
  return anchors;
}

namespace detail {

/// Uniform draws from a pool: without replacement when the pool suffices,
/// with replacement (flagged by the caller) otherwise.
inline std::vector<std::size_t> draw_from_pool(const std::vector<std::size_t>& pool, int count,
                                               std::mt19937_64& gen, bool* exhausted) {
  std::vector<std::size_t> out;
  if (pool.empty() || count <= 0) return out;
  out.reserve(static_cast<std::size_t>(count));
  if (pool.size() >= static_cast<std::size_t>(count)) {
    std::vector<std::size_t> shuffled = pool;  // partial Fisher-Yates
    for (int i = 0; i < count; ++i) {
      const std::size_t j = i + static_cast<std::size_t>(uniform_below(gen, shuffled.size() - i));
      std::swap(shuffled[static_cast<std::size_t>(i)], shuffled[j]);
      out.push_back(shuffled[static_cast<std::size_t>(i)]);
    }
  } else {
    *exhausted = true;
    for (int i = 0; i < count; ++i) out.push_back(pool[uniform_below(gen, pool.size())]);
  }
  return out;
}

}  // namespace detail

/// Mines triplets from a registered pair. Per anchor, the target points
/// split into a positive pool (distance < tau_pos from the transformed
/// anchor), a hard-negative band [tau_pos, tau_hard) and a far-negative
/// band [tau_hard, inf); n_hard_neg + n_neg triplets are emitted with a
/// fresh uniformly drawn positive each. Anchors with an empty positive pool
/// are dropped. Deterministic for fixed inputs and seed.
inline TripletBatch sample_triplets(const PointCloud& source, const PointCloud& target,
                                    const RigidTransform& gt, const SamplerConfig& cfg) {
  cfg.validate();
  const std::vector<std::size_t> anchors = select_anchors(source, target, gt, cfg);
  if (anchors.empty()) throw DataError("sample_triplets: no anchors satisfy the anchor condition");

  TripletBatch batch;
  batch.gt = gt;
  std::mt19937_64 gen(cfg.seed);
  std::vector<std::size_t> positive_pool, hard_pool, far_pool;

  for (std::size_t anchor : anchors) {
    const Eigen::Vector3d projected = gt.apply(source.points[anchor]);
    positive_pool.clear();
    hard_pool.clear();
    far_pool.clear();
    for (std::size_t t = 0; t < target.size(); ++t) {
      const double d = (target.points[t] - projected).norm();
      if (d < cfg.tau_pos) {
        positive_pool.push_back(t);
      } else if (d < cfg.tau_hard) {
        hard_pool.push_back(t);
      } else {
        far_pool.push_back(t);
      }
    }
    if (positive_pool.empty()) continue;

    const auto hard_negatives = detail::draw_from_pool(hard_pool, cfg.n_hard_neg, gen, &batch.pools_exhausted);
    const auto far_negatives = detail::draw_from_pool(far_pool, cfg.n_neg, gen, &batch.pools_exhausted);
    if (hard_negatives.size() < static_cast<std::size_t>(cfg.n_hard_neg) ||
        far_negatives.size() < static_cast<std::size_t>(cfg.n_neg)) {
      batch.pools_exhausted = true;  // an empty band cannot meet its quota
    }
    for (std::size_t negative : hard_negatives) {
      batch.triplets.push_back({anchor, positive_pool[uniform_below(gen, positive_pool.size())], negative});
    }
    for (std::size_t negative : far_negatives) {
      batch.triplets.push_back({anchor, positive_pool[uniform_below(gen, positive_pool.size())], negative});
    }
  }
  if (batch.triplets.empty()) {
    throw DataError("sample_triplets: every anchor was dropped (empty positive pools)");
  }
  return batch;
}

/// Seeded permutation followed by fixed-size partitioning; every chunk has
/// `batch_size` elements except possibly the last.
template <typename T>
inline std::vector<std::vector<T>> shuffle_and_batch(std::vector<T> items, std::size_t batch_size,
                                                     std::uint64_t seed) {
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  std::mt19937_64 gen(seed);
  shuffle_in_place(items, gen);
  std::vector<std::vector<T>> batches;
  for (std::size_t start = 0; start < items.size(); start += batch_size) {
    const std::size_t end = std::min(items.size(), start + batch_size);
    batches.emplace_back(items.begin() + static_cast<std::ptrdiff_t>(start),
                         items.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return batches;
}

}  // namespace geofuse
