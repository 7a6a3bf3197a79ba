#pragma once

#include <Eigen/Dense>
#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "geofuse/error.hpp"
#include "geofuse/fusion_net.hpp"

namespace geofuse {

/// In-order concatenation of a descriptor tuple.
inline Eigen::VectorXd concatenate(const std::vector<Eigen::VectorXd>& features) {
  if (features.empty()) throw DataError("concatenate: empty descriptor tuple");
  Eigen::Index total = 0;
  for (const auto& f : features) total += f.size();
  Eigen::VectorXd out(total);
  Eigen::Index at = 0;
  for (const auto& f : features) {
    out.segment(at, f.size()) = f;
    at += f.size();
  }
  return out;
}

/// Linear projection onto the top-k principal directions of the training
/// set (orthonormal rows, deterministic sign: the largest-magnitude entry
/// of each row is positive).
struct PcaModel {
  Eigen::VectorXd mean;
  Eigen::MatrixXd projection;  // k x D

  Eigen::Index input_dim() const { return mean.size(); }
  Eigen::Index output_dim() const { return projection.rows(); }
};

inline PcaModel pca_fit(const std::vector<Eigen::VectorXd>& training, int k) {
  if (k < 1) throw ConfigError("pca_fit: k must be >= 1");
  if (training.empty()) throw DataError("pca_fit: no training vectors");
  const Eigen::Index dim = training[0].size();
  if (k > dim) throw ConfigError("pca_fit: k exceeds the input dimension");
  if (training.size() < static_cast<std::size_t>(k) + 1) {
    throw DataError("pca_fit: need at least k+1 training vectors");
  }

  Eigen::VectorXd mean = Eigen::VectorXd::Zero(dim);
  for (const auto& v : training) {
    if (v.size() != dim) throw ShapeError("pca_fit: inconsistent training vector dimensions");
    mean += v;
  }
  mean /= static_cast<double>(training.size());

  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(dim, dim);
  for (const auto& v : training) {
    const Eigen::VectorXd d = v - mean;
    cov.noalias() += d * d.transpose();
  }
  cov /= static_cast<double>(training.size());

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);  // eigenvalues ascending
  const Eigen::VectorXd evals = eig.eigenvalues();
  const double rank_tol = std::max(evals[dim - 1], 0.0) * 1e-10;
  int rank = 0;
  for (Eigen::Index i = 0; i < dim; ++i) {
    if (evals[i] > rank_tol) ++rank;
  }
  if (k > rank) {
    throw DataError("pca_fit: covariance rank " + std::to_string(rank) + " is smaller than k = " +
                    std::to_string(k));
  }

  PcaModel model;
  model.mean = std::move(mean);
  model.projection.resize(k, dim);
  for (int row = 0; row < k; ++row) {
    Eigen::VectorXd axis = eig.eigenvectors().col(dim - 1 - row);  // descending eigenvalue order
    Eigen::Index largest = 0;
    axis.cwiseAbs().maxCoeff(&largest);
    if (axis[largest] < 0.0) axis = -axis;
    model.projection.row(row) = axis.transpose();
  }
  return model;
}

inline Eigen::VectorXd pca_project(const PcaModel& model, const Eigen::VectorXd& v) {
  if (v.size() != model.input_dim()) {
    throw ShapeError("pca_project: vector dimension " + std::to_string(v.size()) + " does not match model " +
                     std::to_string(model.input_dim()));
  }
  return model.projection * (v - model.mean);
}

/// Min-pooled distance between two descriptor tuples: each descriptor is
/// normalized to unit L2 norm, distances are taken per descriptor, and the
/// smallest wins. Zero-norm descriptors are excluded from the minimum.
inline double min_pool_distance(const std::vector<Eigen::VectorXd>& a, const std::vector<Eigen::VectorXd>& b) {
  if (a.size() != b.size() || a.empty()) {
    throw ShapeError("min_pool_distance: descriptor lists differ in length");
  }
  double best = std::numeric_limits<double>::infinity();
  bool any = false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].size() != b[i].size()) throw ShapeError("min_pool_distance: descriptor " + std::to_string(i) + " dimension mismatch");
    const double na = a[i].norm(), nb = b[i].norm();
    if (na == 0.0 || nb == 0.0) continue;
    any = true;
    best = std::min(best, (a[i] / na - b[i] / nb).norm());
  }
  if (!any) throw DataError("min_pool_distance: every descriptor had zero norm");
  return best;
}

// PCA models share the network container format under the magic "GFPC":
// magic, format version u32, D u32, k u32, then the mean and the projection
// rows as little-endian float64.

inline std::vector<std::uint8_t> save_pca(const PcaModel& model) {
  std::vector<std::uint8_t> out;
  out.insert(out.end(), {'G', 'F', 'P', 'C'});
  detail::put_u32(out, kModelFormatVersion);
  detail::put_u32(out, static_cast<std::uint32_t>(model.input_dim()));
  detail::put_u32(out, static_cast<std::uint32_t>(model.output_dim()));
  for (Eigen::Index i = 0; i < model.mean.size(); ++i) detail::put_f64(out, model.mean[i]);
  for (Eigen::Index r = 0; r < model.projection.rows(); ++r) {
    for (Eigen::Index c = 0; c < model.projection.cols(); ++c) detail::put_f64(out, model.projection(r, c));
  }
  return out;
}

inline PcaModel load_pca(const std::vector<std::uint8_t>& bytes) {
  detail::ByteReader in{bytes.data(), bytes.size()};
  in.require(4, "magic");
  if (std::memcmp(bytes.data(), "GFPC", 4) != 0) {
    throw DataError("pca model format error at byte 0: bad magic");
  }
  in.offset = 4;
  const std::uint32_t version = in.u32("version");
  if (version != kModelFormatVersion) {
    throw DataError("pca model format error at byte 4: unsupported version " + std::to_string(version));
  }
  const std::uint32_t dim = in.u32("input dimension");
  const std::uint32_t k = in.u32("output dimension");
  if (dim == 0 || k == 0 || k > dim) {
    throw DataError("pca model format error at byte 8: implausible dimensions");
  }
  PcaModel model;
  model.mean.resize(dim);
  for (std::uint32_t i = 0; i < dim; ++i) model.mean[i] = in.f64("mean");
  model.projection.resize(k, dim);
  for (std::uint32_t r = 0; r < k; ++r) {
    for (std::uint32_t c = 0; c < dim; ++c) model.projection(r, c) = in.f64("projection");
  }
  if (in.offset != bytes.size()) {
    throw DataError("pca model format error at byte " + std::to_string(in.offset) + ": trailing data");
  }
  return model;
}

inline void save_pca_file(const std::filesystem::path& path, const PcaModel& model) {
  const auto bytes = save_pca(model);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open pca model file for writing: " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("failed writing pca model file: " + path.string());
}

inline PcaModel load_pca_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open pca model file: " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return load_pca(bytes);
}

}  // namespace geofuse
