#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <string>

#include "geofuse/error.hpp"

namespace geofuse {

enum class LossKind { triplet, improved, contrastive };

struct LossConfig {
  LossKind kind = LossKind::improved;
  double tau_tri = 1.0;
  double tau_pair = 0.02;
  double contrastive_margin = 1.0;
  // When set, losses consume squared L2 distances instead of L2 distances.
  // The literal reading of the loss definitions is unsquared.
  bool squared_distances = false;

  void validate() const {
    if (tau_tri <= 0.0) throw ConfigError("tau_tri must be positive");
    if (tau_pair < 0.0) throw ConfigError("tau_pair must be non-negative");
    if (contrastive_margin <= 0.0) throw ConfigError("contrastive margin must be positive");
  }
};

inline double l2_distance(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  if (a.size() != b.size()) {
    throw ShapeError("l2_distance: length mismatch " + std::to_string(a.size()) + " vs " +
                     std::to_string(b.size()));
  }
  return (a - b).norm();
}

/// max(0, d_ap - d_an + tau_tri)
inline double triplet_loss(double d_ap, double d_an, const LossConfig& cfg) {
  return std::max(0.0, d_ap - d_an + cfg.tau_tri);
}

/// With d* = min(d_an, d_pn):
///   max(0, d_ap - d* + tau_tri + tau_pair * d_ap)
/// Both negative distances of the triplet participate, and the pairwise
/// term pulls the anchor-positive distance down.
inline double improved_triplet_loss(double d_ap, double d_an, double d_pn, const LossConfig& cfg) {
  const double d_star = std::min(d_an, d_pn);
  return std::max(0.0, d_ap - d_star + cfg.tau_tri + cfg.tau_pair * d_ap);
}

/// Margin contrastive loss: d^2 for matches, max(0, m - d)^2 for non-matches.
inline double contrastive_loss(double d, bool is_match, const LossConfig& cfg) {
  if (is_match) return d * d;
  const double gap = std::max(0.0, cfg.contrastive_margin - d);
  return gap * gap;
}

/// Loss value and partial derivatives with respect to the three pairwise
/// distances of a triplet. Hinge and min subgradients at their kinks are 0
/// and first-argument respectively, matching the forward evaluation.
struct TripletLossGrad {
  double loss = 0.0;
  double d_dap = 0.0;
  double d_dan = 0.0;
  double d_dpn = 0.0;
};

inline TripletLossGrad triplet_loss_grad(double d_ap, double d_an, double d_pn, const LossConfig& cfg) {
  TripletLossGrad g;
  switch (cfg.kind) {
    case LossKind::triplet: {
      g.loss = triplet_loss(d_ap, d_an, cfg);
      if (g.loss > 0.0) {
        g.d_dap = 1.0;
        g.d_dan = -1.0;
      }
      break;
    }
    case LossKind::improved: {
      g.loss = improved_triplet_loss(d_ap, d_an, d_pn, cfg);
      if (g.loss > 0.0) {
        g.d_dap = 1.0 + cfg.tau_pair;
        if (d_an <= d_pn) {
          g.d_dan = -1.0;
        } else {
          g.d_dpn = -1.0;
        }
      }
      break;
    }
    case LossKind::contrastive: {
      // A triplet decomposes into a positive pair (anchor, positive) and a
      // negative pair (anchor, negative).
      g.loss = contrastive_loss(d_ap, true, cfg) + contrastive_loss(d_an, false, cfg);
      g.d_dap = 2.0 * d_ap;
      g.d_dan = -2.0 * std::max(0.0, cfg.contrastive_margin - d_an);
      break;
    }
  }
  return g;
}

}  // namespace geofuse
