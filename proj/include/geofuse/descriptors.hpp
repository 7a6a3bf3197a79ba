#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "geofuse/error.hpp"
#include "geofuse/kdtree.hpp"
#include "geofuse/lrf.hpp"
#include "geofuse/point_cloud.hpp"

namespace geofuse {

inline constexpr const char* kLfshName = "lfsh";
inline constexpr const char* kSpinImageName = "spin_image";
inline constexpr const char* kRcsName = "rcs";

/// Parameters shared by the hand-crafted descriptors. `support_radius` is
/// an absolute length; callers derive it from the point cloud resolution
/// (15·pr object scale, 60·pr indoor scale).
struct DescriptorConfig {
  double support_radius = 0.0;
  std::array<int, 3> lfsh_bins = {10, 15, 5};  // depth, normal deviation, density
  int si_radial_bins = 9;
  int si_elevation_bins = 17;
  int rcs_views = 6;
  int rcs_sectors = 12;

  static DescriptorConfig for_resolution(double pr, bool indoor_scale = false) {
    DescriptorConfig cfg;
    cfg.support_radius = (indoor_scale ? 60.0 : 15.0) * pr;
    return cfg;
  }

  void validate() const {
    if (support_radius <= 0.0) throw ConfigError("descriptor support radius must be positive");
    if (lfsh_bins[0] < 1 || lfsh_bins[1] < 1 || lfsh_bins[2] < 1 ||
        lfsh_bins[0] + lfsh_bins[1] + lfsh_bins[2] != 30) {
      throw ConfigError("lfsh bin counts must be positive and sum to 30");
    }
    if (si_radial_bins < 1 || si_elevation_bins < 1 || si_radial_bins * si_elevation_bins != 153) {
      throw ConfigError("spin image grid must have 153 cells");
    }
    if (rcs_views < 1 || rcs_sectors < 1 || rcs_views * rcs_sectors != 72) {
      throw ConfigError("rcs views x sectors must equal 72");
    }
  }

  int dimension_of(const std::string& name) const {
    if (name == kLfshName) return 30;
    if (name == kSpinImageName) return si_radial_bins * si_elevation_bins;
    if (name == kRcsName) return rcs_views * rcs_sectors;
    throw ConfigError("unknown descriptor name: " + name);
  }
};

struct FeatureVector {
  Eigen::VectorXd values;
  std::string descriptor_id;
};

/// Per-keypoint tuples of descriptor vectors, one per entry of a declared
/// descriptor list. Keypoints whose descriptors failed are excluded and
/// reported in `excluded`.
struct FeatureSet {
  std::vector<std::string> descriptor_ids;
  std::vector<int> dims;
  std::vector<std::size_t> keypoints;                     // kept, ascending
  std::vector<std::vector<Eigen::VectorXd>> features;     // [kept][descriptor]
  std::vector<std::size_t> excluded;

  std::size_t size() const { return keypoints.size(); }

  /// Row of a given cloud point index, if it was kept.
  std::optional<std::size_t> row_of(std::size_t point_index) const {
    const auto it = std::lower_bound(keypoints.begin(), keypoints.end(), point_index);
    if (it == keypoints.end() || *it != point_index) return std::nullopt;
    return static_cast<std::size_t>(it - keypoints.begin());
  }
};

/// Externally computed descriptor vectors keyed by cloud point index, used
/// for descriptors whose internals are not implemented here (e.g. SHOT,
/// RoPS). See io/descriptor_table for the file format.
struct ExternalDescriptorTable {
  std::string descriptor_id;
  int dim = 0;
  std::unordered_map<std::size_t, Eigen::VectorXd> rows;
};

using ExternalDescriptorMap = std::map<std::string, ExternalDescriptorTable>;

namespace detail {

inline std::vector<std::size_t> support_neighbors(const PointCloud& cloud, const SpatialIndex& index,
                                                  std::size_t center, double radius) {
  std::vector<std::size_t> neighbors;
  for (std::size_t j : index.radius(cloud.points[center], radius)) {
    if (j != center) neighbors.push_back(j);
  }
  if (neighbors.size() < 5) {
    throw DataError("degenerate patch at point " + std::to_string(center) + ": " +
                    std::to_string(neighbors.size()) + " neighbors within support radius");
  }
  return neighbors;
}

inline int clamp_bin(double coordinate, int bins) {
  const int b = static_cast<int>(std::floor(coordinate));
  return std::clamp(b, 0, bins - 1);
}

/// Deposits one vote at continuous cell-center coordinate `u`, split
/// bilinearly between the two enclosing bins and clamped at the borders.
inline void bilinear_vote_1d(double u, int bins, double weight, double* lo_w, int* lo_bin, double* hi_w,
                             int* hi_bin) {
  const double shifted = u - 0.5;
  const double base = std::floor(shifted);
  const double frac = shifted - base;
  int b0 = static_cast<int>(base);
  int b1 = b0 + 1;
  double w0 = (1.0 - frac) * weight;
  double w1 = frac * weight;
  if (b0 < 0) {
    b0 = 0;
    w0 += w1;
    b1 = 0;
    w1 = 0.0;
  } else if (b1 > bins - 1) {
    b1 = bins - 1;
    w1 += w0;
    b0 = bins - 1;
    w0 = 0.0;
  }
  *lo_w = w0;
  *lo_bin = b0;
  *hi_w = w1;
  *hi_bin = b1;
}

}  // namespace detail

/// LFSH: concatenation of three independently sum-normalized histograms of
/// the support neighborhood, computed against the center normal n:
///   A: signed distance n·(q-p) over [-r, r]
///   B: cos of the normal deviation over [-1, 1]
///   C: in-tangent-plane radial distance over [0, r]
inline FeatureVector lfsh(const PointCloud& cloud, const SpatialIndex& index, std::size_t center,
                          const DescriptorConfig& cfg) {
  cfg.validate();
  if (!cloud.has_normals()) throw DataError("lfsh requires normals");
  const double r = cfg.support_radius;
  const auto neighbors = detail::support_neighbors(cloud, index, center, r);

  const Eigen::Vector3d p = cloud.points[center];
  const Eigen::Vector3d n = cloud.normals[center];
  const auto [n_depth, n_dev, n_density] = cfg.lfsh_bins;

  Eigen::VectorXd hist = Eigen::VectorXd::Zero(30);
  auto depth = hist.segment(0, n_depth);
  auto deviation = hist.segment(n_depth, n_dev);
  auto density = hist.segment(n_depth + n_dev, n_density);

  for (std::size_t j : neighbors) {
    const Eigen::Vector3d delta = cloud.points[j] - p;
    const double signed_dist = n.dot(delta);
    depth[detail::clamp_bin((signed_dist + r) / (2.0 * r) * n_depth, n_depth)] += 1.0;

    const double cos_dev = std::clamp(n.dot(cloud.normals[j]), -1.0, 1.0);
    deviation[detail::clamp_bin((cos_dev + 1.0) / 2.0 * n_dev, n_dev)] += 1.0;

    const double radial = (delta - signed_dist * n).norm();
    density[detail::clamp_bin(radial / r * n_density, n_density)] += 1.0;
  }
  depth /= depth.sum();
  deviation /= deviation.sum();
  density /= density.sum();
  return {hist, kLfshName};
}

/// Spin image: 2D histogram of (radial distance alpha, signed elevation
/// beta) relative to the center normal, with bilinear vote spreading.
/// Flattened beta-major and normalized to sum 1.
inline FeatureVector spin_image(const PointCloud& cloud, const SpatialIndex& index, std::size_t center,
                                const DescriptorConfig& cfg) {
  cfg.validate();
  if (!cloud.has_normals()) throw DataError("spin_image requires normals");
  const double r = cfg.support_radius;
  const auto neighbors = detail::support_neighbors(cloud, index, center, r);

  const Eigen::Vector3d p = cloud.points[center];
  const Eigen::Vector3d n = cloud.normals[center];
  const int na = cfg.si_radial_bins, nb = cfg.si_elevation_bins;

  Eigen::VectorXd hist = Eigen::VectorXd::Zero(na * nb);
  for (std::size_t j : neighbors) {
    const Eigen::Vector3d delta = cloud.points[j] - p;
    const double beta = n.dot(delta);
    const double alpha = std::sqrt(std::max(0.0, delta.squaredNorm() - beta * beta));

    double wa0, wa1, wb0, wb1;
    int a0, a1, b0, b1;
    detail::bilinear_vote_1d(alpha / r * na, na, 1.0, &wa0, &a0, &wa1, &a1);
    detail::bilinear_vote_1d((beta + r) / (2.0 * r) * nb, nb, 1.0, &wb0, &b0, &wb1, &b1);
    hist[b0 * na + a0] += wb0 * wa0;
    hist[b0 * na + a1] += wb0 * wa1;
    hist[b1 * na + a0] += wb1 * wa0;
    hist[b1 * na + a1] += wb1 * wa1;
  }
  hist /= hist.sum();
  return {hist, kSpinImageName};
}

/// Rotational contour signature: the support patch expressed in its local
/// reference frame is rotated about the LRF x axis in steps of 180°/views;
/// each view is projected to the xy plane, split into equal angular
/// sectors, and summarized by the maximum projected radial distance per
/// sector (relative to the support radius, 0 for empty sectors).
inline FeatureVector rcs_signature(const PointCloud& cloud, const SpatialIndex& index, std::size_t center,
                                   const DescriptorConfig& cfg) {
  cfg.validate();
  const double r = cfg.support_radius;
  const auto neighbors = detail::support_neighbors(cloud, index, center, r);
  const LocalReferenceFrame frame = compute_lrf(cloud, index, center, r);

  std::vector<Eigen::Vector3d> local;
  local.reserve(neighbors.size());
  for (std::size_t j : neighbors) local.push_back(frame.to_local(cloud.points[j]));

  Eigen::VectorXd signature = Eigen::VectorXd::Zero(cfg.rcs_views * cfg.rcs_sectors);
  const double step = M_PI / cfg.rcs_views;
  for (int view = 0; view < cfg.rcs_views; ++view) {
    const double c = std::cos(view * step), s = std::sin(view * step);
    auto sectors = signature.segment(view * cfg.rcs_sectors, cfg.rcs_sectors);
    for (const auto& q : local) {
      const double px = q.x();
      const double py = q.y() * c - q.z() * s;  // rotation about the x axis
      const double rho = std::hypot(px, py);
      if (rho <= 0.0) continue;
      const double angle = std::atan2(py, px);
      const int sector = detail::clamp_bin((angle + M_PI) / (2.0 * M_PI) * cfg.rcs_sectors, cfg.rcs_sectors);
      sectors[sector] = std::max(sectors[sector], rho / r);
    }
  }
  return {signature, kRcsName};
}

/// Dispatch by descriptor name; external names are resolved from the
/// supplied table map.
inline FeatureVector compute_descriptor(const std::string& name, const PointCloud& cloud,
                                        const SpatialIndex& index, std::size_t center,
                                        const DescriptorConfig& cfg, const ExternalDescriptorMap* external) {
  if (name == kLfshName) return lfsh(cloud, index, center, cfg);
  if (name == kSpinImageName) return spin_image(cloud, index, center, cfg);
  if (name == kRcsName) return rcs_signature(cloud, index, center, cfg);
  if (external != nullptr) {
    const auto table = external->find(name);
    if (table != external->end()) {
      const auto row = table->second.rows.find(center);
      if (row == table->second.rows.end()) {
        throw DataError("external descriptor '" + name + "' has no row for point " + std::to_string(center));
      }
      return {row->second, name};
    }
  }
  throw ConfigError("unknown descriptor name: " + name);
}

/// Computes the declared descriptor list for every keypoint. Keypoints
/// whose descriptors fail (degenerate patch, missing external row) are
/// dropped and reported in the exclusion list; configuration problems
/// (unknown names, bad bins) propagate.
inline FeatureSet extract_feature_set(const PointCloud& cloud, const std::vector<std::size_t>& keypoints,
                                      const std::vector<std::string>& descriptor_list,
                                      const DescriptorConfig& cfg,
                                      const ExternalDescriptorMap* external = nullptr) {
  cfg.validate();
  if (descriptor_list.empty()) throw ConfigError("descriptor list is empty");

  FeatureSet set;
  set.descriptor_ids = descriptor_list;
  for (const auto& name : descriptor_list) {
    if (name == kLfshName || name == kSpinImageName || name == kRcsName) {
      set.dims.push_back(cfg.dimension_of(name));
    } else if (external != nullptr && external->count(name) > 0) {
      set.dims.push_back(external->at(name).dim);
    } else {
      throw ConfigError("unknown descriptor name: " + name);
    }
  }

  const SpatialIndex index(cloud);
  for (std::size_t k : keypoints) {
    std::vector<Eigen::VectorXd> tuple;
    tuple.reserve(descriptor_list.size());
    bool ok = true;
    for (const auto& name : descriptor_list) {
      try {
        tuple.push_back(compute_descriptor(name, cloud, index, k, cfg, external).values);
      } catch (const DataError&) {
        ok = false;
        break;
      }
    }
    if (ok) {
      set.keypoints.push_back(k);
      set.features.push_back(std::move(tuple));
    } else {
      set.excluded.push_back(k);
    }
  }
  return set;
}

}  // namespace geofuse
