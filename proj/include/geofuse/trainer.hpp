#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "geofuse/descriptors.hpp"
#include "geofuse/digest.hpp"
#include "geofuse/error.hpp"
#include "geofuse/fusion_net.hpp"
#include "geofuse/triplet_sampler.hpp"

namespace geofuse {

struct TrainConfig {
  double learning_rate = 1e-4;
  double beta1 = 0.99;  // as published; 0.9 is the usual sensitivity-check alternative
  double beta2 = 0.999;
  double epsilon = 1e-8;
  int batch_size = 512;
  int epochs = 3;
  std::uint64_t seed = 0;
  LossConfig loss;

  void validate() const {
    if (learning_rate <= 0.0) throw ConfigError("learning rate must be positive");
    if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0) {
      throw ConfigError("Adam betas must lie in [0, 1)");
    }
    if (epsilon <= 0.0) throw ConfigError("Adam epsilon must be positive");
    if (batch_size < 1) throw ConfigError("batch size must be >= 1");
    if (epochs < 1) throw ConfigError("epochs must be >= 1");
    loss.validate();
  }
};

struct AdamState {
  std::vector<Eigen::MatrixXd> m_weights, v_weights;
  std::vector<Eigen::VectorXd> m_bias, v_bias;
  long step = 0;

  static AdamState zeros_like(const NetworkParams& params) {
    AdamState s;
    for (const auto& layer : params.layers) {
      s.m_weights.push_back(Eigen::MatrixXd::Zero(layer.weights.rows(), layer.weights.cols()));
      s.v_weights.push_back(Eigen::MatrixXd::Zero(layer.weights.rows(), layer.weights.cols()));
      s.m_bias.push_back(Eigen::VectorXd::Zero(layer.bias.size()));
      s.v_bias.push_back(Eigen::VectorXd::Zero(layer.bias.size()));
    }
    return s;
  }
};

/// One Adam update with bias-corrected first and second moments.
inline void adam_step(NetworkParams& params, const Gradients& grads, AdamState& state,
                      const TrainConfig& cfg) {
  if (grads.weights.size() != params.layers.size() || state.m_weights.size() != params.layers.size()) {
    throw ShapeError("adam_step: gradient/state layout does not match the parameters");
  }
  state.step += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));

  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    auto& layer = params.layers[l];
    if (grads.weights[l].rows() != layer.weights.rows() || grads.weights[l].cols() != layer.weights.cols() ||
        grads.bias[l].size() != layer.bias.size()) {
      throw ShapeError("adam_step: gradient shape mismatch at layer " + std::to_string(l));
    }
    state.m_weights[l] = cfg.beta1 * state.m_weights[l] + (1.0 - cfg.beta1) * grads.weights[l];
    state.v_weights[l].array() =
        cfg.beta2 * state.v_weights[l].array() + (1.0 - cfg.beta2) * grads.weights[l].array().square();
    layer.weights.array() -= cfg.learning_rate * (state.m_weights[l].array() / bc1) /
                             ((state.v_weights[l].array() / bc2).sqrt() + cfg.epsilon);

    state.m_bias[l] = cfg.beta1 * state.m_bias[l] + (1.0 - cfg.beta1) * grads.bias[l];
    state.v_bias[l].array() =
        cfg.beta2 * state.v_bias[l].array() + (1.0 - cfg.beta2) * grads.bias[l].array().square();
    layer.bias.array() -= cfg.learning_rate * (state.m_bias[l].array() / bc1) /
                          ((state.v_bias[l].array() / bc2).sqrt() + cfg.epsilon);
  }
}

struct TrainReport {
  std::vector<double> epoch_mean_loss;
  std::vector<double> epoch_val_auc;  // NaN when no validation hook ran
  std::vector<double> epoch_seconds;
  double wall_seconds = 0.0;
  std::string params_digest;
};

/// Training input for one registered pair: features for both clouds and the
/// mined triplets (anchor indexes the source, positive/negative the target).
struct PairTrainingData {
  const FeatureSet* source_features = nullptr;
  const FeatureSet* target_features = nullptr;
  const TripletBatch* triplets = nullptr;
};

using ValidationHook = std::function<double(const NetworkParams&)>;

/// Minimizes the configured loss with Adam over shuffled minibatches. All
/// three triplet branches evaluate one shared parameter set; the update
/// sequence is strictly serial and fully determined by (data, config, seed).
inline std::pair<NetworkParams, TrainReport> train(const std::vector<PairTrainingData>& pairs,
                                                   const NetworkConfig& net_cfg, const TrainConfig& cfg,
                                                   const ValidationHook& validation = {}) {
  cfg.validate();
  net_cfg.validate();
  const auto start = std::chrono::steady_clock::now();

  // Resolve triplet indices to descriptor tuples once; triplets whose
  // keypoints were excluded during description are skipped.
  std::vector<TripletFeatures> samples;
  for (const auto& pair : pairs) {
    if (pair.source_features == nullptr || pair.target_features == nullptr || pair.triplets == nullptr) {
      throw ConfigError("train: incomplete pair training data");
    }
    for (const auto& t : pair.triplets->triplets) {
      const auto a = pair.source_features->row_of(t.anchor);
      const auto p = pair.target_features->row_of(t.positive);
      const auto n = pair.target_features->row_of(t.negative);
      if (!a || !p || !n) continue;
      samples.push_back({&pair.source_features->features[*a], &pair.target_features->features[*p],
                         &pair.target_features->features[*n]});
    }
  }
  if (samples.empty()) throw DataError("train: empty triplet supply");

  NetworkParams params = init_params(net_cfg, cfg.seed);
  AdamState state = AdamState::zeros_like(params);
  TrainReport report;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto epoch_start = std::chrono::steady_clock::now();
    const std::uint64_t epoch_seed = cfg.seed ^ (0x9e3779b97f4a7c15ull * static_cast<std::uint64_t>(epoch + 1));
    const auto batches = shuffle_and_batch(samples, static_cast<std::size_t>(cfg.batch_size), epoch_seed);

    double loss_sum = 0.0;
    std::size_t triplet_count = 0;
    for (std::size_t b = 0; b < batches.size(); ++b) {
      try {
        auto [loss, grads] = backward(params, batches[b], cfg.loss);
        adam_step(params, grads, state, cfg);
        loss_sum += loss * static_cast<double>(batches[b].size());
        triplet_count += batches[b].size();
      } catch (const NumericError& e) {
        throw NumericError("epoch " + std::to_string(epoch) + ", batch " + std::to_string(b) + ": " +
                           e.what());
      }
    }
    report.epoch_mean_loss.push_back(loss_sum / static_cast<double>(triplet_count));
    report.epoch_val_auc.push_back(validation ? validation(params)
                                              : std::numeric_limits<double>::quiet_NaN());
    report.epoch_seconds.push_back(
        std::chrono::duration<double>(std::chrono::steady_clock::now() - epoch_start).count());
  }

  report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  report.params_digest = to_hex(fnv1a64(save_model(params)));
  return {std::move(params), std::move(report)};
}

/// CSV rows: epoch, mean_loss, val_auc, seconds.
inline void write_train_report_csv(const std::filesystem::path& path, const TrainReport& report) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open report file for writing: " + path.string());
  out << "epoch,mean_loss,val_auc,seconds\n";
  out.precision(17);
  for (std::size_t e = 0; e < report.epoch_mean_loss.size(); ++e) {
    out << e << ',' << report.epoch_mean_loss[e] << ',';
    if (!std::isnan(report.epoch_val_auc[e])) out << report.epoch_val_auc[e];
    out << ',' << report.epoch_seconds[e] << '\n';
  }
}

}  // namespace geofuse
