#pragma once

#include <Eigen/Core>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <filesystem>
#include <numeric>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "geofuse/error.hpp"
#include "geofuse/losses.hpp"
#include "geofuse/rng.hpp"

namespace geofuse {

/// Architecture of the fusion network: one intra-feature block (3 hidden
/// layers of n_intra, n_intra, n_intra/2 nodes) per input descriptor, the
/// concatenation of the block outputs, and an inter-feature block of 4
/// hidden layers of n_inter nodes plus one output layer of n_out nodes.
/// Every hidden layer is affine + ReLU; the output layer carries ReLU when
/// relu_on_output is set. With use_intra = false the raw concatenated
/// descriptors feed the inter block directly.
struct NetworkConfig {
  std::vector<int> descriptor_dims;
  int n_intra = 48;
  int n_inter = 256;
  int n_out = 16;
  bool use_intra = true;
  bool relu_on_output = true;

  void validate() const {
    if (descriptor_dims.empty()) throw ConfigError("network needs at least one input descriptor");
    for (int d : descriptor_dims) {
      if (d < 1) throw ConfigError("descriptor dimensions must be >= 1");
    }
    if (n_intra < 1 || n_inter < 1 || n_out < 1) throw ConfigError("layer node counts must be >= 1");
    if (use_intra && n_intra % 2 != 0) throw ConfigError("n_intra must be even");
  }

  int inter_input_dim() const {
    if (use_intra) return static_cast<int>(descriptor_dims.size()) * (n_intra / 2);
    return std::accumulate(descriptor_dims.begin(), descriptor_dims.end(), 0);
  }

  int intra_layers_per_descriptor() const { return use_intra ? 3 : 0; }
  static constexpr int kInterLayers = 5;

  int total_layers() const {
    return static_cast<int>(descriptor_dims.size()) * intra_layers_per_descriptor() + kInterLayers;
  }
};

struct DenseLayer {
  Eigen::MatrixXd weights;  // out x in
  Eigen::VectorXd bias;     // out
  bool relu = true;
};

/// All parameters of the fusion network in a fixed layer order: the intra
/// block of each descriptor (in declaration order), then the inter block.
struct NetworkParams {
  NetworkConfig config;
  std::vector<DenseLayer> layers;

  std::size_t inter_offset() const {
    return config.descriptor_dims.size() * static_cast<std::size_t>(config.intra_layers_per_descriptor());
  }
};

/// Gradient of a loss with respect to every weight and bias, mirroring the
/// layer layout of NetworkParams.
struct Gradients {
  std::vector<Eigen::MatrixXd> weights;
  std::vector<Eigen::VectorXd> bias;

  static Gradients zeros_like(const NetworkParams& params) {
    Gradients g;
    g.weights.reserve(params.layers.size());
    g.bias.reserve(params.layers.size());
    for (const auto& layer : params.layers) {
      g.weights.push_back(Eigen::MatrixXd::Zero(layer.weights.rows(), layer.weights.cols()));
      g.bias.push_back(Eigen::VectorXd::Zero(layer.bias.size()));
    }
    return g;
  }
};

/// The (rows, cols) of every dense layer implied by a config, in parameter
/// order: the 3-layer intra block per descriptor, then the 5 inter layers.
inline std::vector<std::pair<int, int>> layer_shapes(const NetworkConfig& cfg) {
  std::vector<std::pair<int, int>> shapes;
  if (cfg.use_intra) {
    for (int dim : cfg.descriptor_dims) {
      shapes.emplace_back(cfg.n_intra, dim);
      shapes.emplace_back(cfg.n_intra, cfg.n_intra);
      shapes.emplace_back(cfg.n_intra / 2, cfg.n_intra);
    }
  }
  shapes.emplace_back(cfg.n_inter, cfg.inter_input_dim());
  for (int i = 0; i < 3; ++i) shapes.emplace_back(cfg.n_inter, cfg.n_inter);
  shapes.emplace_back(cfg.n_out, cfg.n_inter);
  return shapes;
}

/// Weights drawn from N(0, 0.1) with a seeded deterministic generator,
/// biases zero. Identical (config, seed) produce bit-identical parameters.
inline NetworkParams init_params(const NetworkConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  NetworkParams params;
  params.config = cfg;
  std::mt19937_64 gen(seed);

  const auto shapes = layer_shapes(cfg);
  for (std::size_t l = 0; l < shapes.size(); ++l) {
    DenseLayer layer;
    layer.weights.resize(shapes[l].first, shapes[l].second);
    for (Eigen::Index r = 0; r < layer.weights.rows(); ++r) {
      for (Eigen::Index c = 0; c < layer.weights.cols(); ++c) layer.weights(r, c) = 0.1 * normal_unit(gen);
    }
    layer.bias = Eigen::VectorXd::Zero(shapes[l].first);
    layer.relu = l + 1 < shapes.size() || cfg.relu_on_output;
    params.layers.push_back(std::move(layer));
  }
  return params;
}

namespace detail {

struct LayerTrace {
  Eigen::MatrixXd input;    // columns = samples
  Eigen::MatrixXd preact;   // W * input + b, before the activation
};

struct ForwardTrace {
  std::vector<LayerTrace> layers;  // indexed like params.layers
  Eigen::MatrixXd output;
};

inline Eigen::MatrixXd apply_layer(const DenseLayer& layer, const Eigen::MatrixXd& input,
                                   LayerTrace* trace) {
  Eigen::MatrixXd pre = layer.weights * input;
  pre.colwise() += layer.bias;
  Eigen::MatrixXd out = layer.relu ? pre.cwiseMax(0.0).eval() : pre;
  if (trace != nullptr) {
    trace->input = input;
    trace->preact = std::move(pre);
  }
  return out;
}

inline void check_batch_dims(const NetworkParams& params, const std::vector<Eigen::MatrixXd>& features) {
  const auto& dims = params.config.descriptor_dims;
  if (features.size() != dims.size()) {
    throw ShapeError("forward: expected " + std::to_string(dims.size()) + " descriptors, got " +
                     std::to_string(features.size()));
  }
  for (std::size_t d = 0; d < dims.size(); ++d) {
    if (features[d].rows() != dims[d]) {
      throw ShapeError("forward: descriptor " + std::to_string(d) + " has dimension " +
                       std::to_string(features[d].rows()) + ", expected " + std::to_string(dims[d]));
    }
    if (features[d].cols() != features[0].cols()) {
      throw ShapeError("forward: descriptor " + std::to_string(d) + " has a mismatched column count");
    }
  }
}

inline ForwardTrace forward_batch_impl(const NetworkParams& params, const std::vector<Eigen::MatrixXd>& features,
                                       bool keep_trace) {
  check_batch_dims(params, features);
  const NetworkConfig& cfg = params.config;
  ForwardTrace trace;
  if (keep_trace) trace.layers.resize(params.layers.size());

  Eigen::MatrixXd concat(cfg.inter_input_dim(), features[0].cols());
  int row = 0;
  for (std::size_t d = 0; d < features.size(); ++d) {
    if (cfg.use_intra) {
      Eigen::MatrixXd x = features[d];
      for (int l = 0; l < 3; ++l) {
        const std::size_t idx = d * 3 + static_cast<std::size_t>(l);
        x = apply_layer(params.layers[idx], x, keep_trace ? &trace.layers[idx] : nullptr);
      }
      concat.middleRows(row, x.rows()) = x;
      row += static_cast<int>(x.rows());
    } else {
      concat.middleRows(row, features[d].rows()) = features[d];
      row += static_cast<int>(features[d].rows());
    }
  }

  Eigen::MatrixXd x = std::move(concat);
  const std::size_t inter0 = params.inter_offset();
  for (std::size_t l = inter0; l < params.layers.size(); ++l) {
    x = apply_layer(params.layers[l], x, keep_trace ? &trace.layers[l] : nullptr);
  }
  trace.output = std::move(x);
  return trace;
}

/// Reverse pass from d(loss)/d(output); accumulates into `grads`.
inline void backward_from_output(const NetworkParams& params, const ForwardTrace& trace,
                                 const Eigen::MatrixXd& d_output, Gradients& grads) {
  const NetworkConfig& cfg = params.config;
  const std::size_t inter0 = params.inter_offset();

  const auto layer_backward = [&](std::size_t l, Eigen::MatrixXd d_post) {
    const DenseLayer& layer = params.layers[l];
    const LayerTrace& lt = trace.layers[l];
    if (layer.relu) {
      d_post.array() *= (lt.preact.array() > 0.0).cast<double>();  // subgradient at 0 is 0
    }
    grads.weights[l].noalias() += d_post * lt.input.transpose();
    grads.bias[l] += d_post.rowwise().sum();
    return Eigen::MatrixXd(layer.weights.transpose() * d_post);
  };

  Eigen::MatrixXd d_x = d_output;
  for (std::size_t l = params.layers.size(); l-- > inter0;) {
    d_x = layer_backward(l, std::move(d_x));
  }

  if (!cfg.use_intra) return;  // gradient w.r.t. raw inputs is discarded

  int row = 0;
  for (std::size_t d = 0; d < cfg.descriptor_dims.size(); ++d) {
    const int branch_rows = cfg.n_intra / 2;
    Eigen::MatrixXd d_branch = d_x.middleRows(row, branch_rows);
    row += branch_rows;
    for (std::size_t l = d * 3 + 3; l-- > d * 3;) {
      d_branch = layer_backward(l, std::move(d_branch));
    }
  }
}

}  // namespace detail

/// Batched forward pass: one matrix per descriptor, columns are samples.
inline Eigen::MatrixXd forward_batch(const NetworkParams& params, const std::vector<Eigen::MatrixXd>& features) {
  return detail::forward_batch_impl(params, features, false).output;
}

/// Fused feature of a single keypoint's descriptor tuple.
inline Eigen::VectorXd forward(const NetworkParams& params, const std::vector<Eigen::VectorXd>& features) {
  std::vector<Eigen::MatrixXd> cols;
  cols.reserve(features.size());
  for (const auto& f : features) cols.push_back(f);
  return forward_batch(params, cols).col(0);
}

/// One triplet's descriptor tuples (non-owning).
struct TripletFeatures {
  const std::vector<Eigen::VectorXd>* anchor = nullptr;
  const std::vector<Eigen::VectorXd>* positive = nullptr;
  const std::vector<Eigen::VectorXd>* negative = nullptr;
};

namespace detail {

/// Stacks a triplet batch into one matrix per descriptor with columns
/// [anchors | positives | negatives], so the three branches share a single
/// forward/backward pass through the shared parameters.
inline std::vector<Eigen::MatrixXd> stack_triplets(const NetworkConfig& cfg,
                                                   const std::vector<TripletFeatures>& batch) {
  const std::size_t b = batch.size();
  std::vector<Eigen::MatrixXd> stacked;
  stacked.reserve(cfg.descriptor_dims.size());
  for (std::size_t d = 0; d < cfg.descriptor_dims.size(); ++d) {
    stacked.emplace_back(cfg.descriptor_dims[d], 3 * b);
  }
  for (std::size_t j = 0; j < b; ++j) {
    const auto place = [&](const std::vector<Eigen::VectorXd>* tuple, std::size_t col) {
      if (tuple == nullptr || tuple->size() != cfg.descriptor_dims.size()) {
        throw ShapeError("triplet " + std::to_string(j) + ": descriptor tuple size mismatch");
      }
      for (std::size_t d = 0; d < tuple->size(); ++d) {
        if ((*tuple)[d].size() != cfg.descriptor_dims[d]) {
          throw ShapeError("triplet " + std::to_string(j) + ": descriptor " + std::to_string(d) +
                           " has dimension " + std::to_string((*tuple)[d].size()) + ", expected " +
                           std::to_string(cfg.descriptor_dims[d]));
        }
        stacked[d].col(col) = (*tuple)[d];
      }
    };
    place(batch[j].anchor, j);
    place(batch[j].positive, b + j);
    place(batch[j].negative, 2 * b + j);
  }
  return stacked;
}

struct TripletBatchResult {
  double mean_loss = 0.0;
  Gradients grads;
};

inline TripletBatchResult triplet_batch_eval(const NetworkParams& params,
                                             const std::vector<TripletFeatures>& batch, const LossConfig& cfg,
                                             bool want_grads) {
  if (batch.empty()) throw DataError("batch_loss: empty triplet batch");
  cfg.validate();
  const std::size_t b = batch.size();
  const auto stacked = stack_triplets(params.config, batch);
  ForwardTrace trace = forward_batch_impl(params, stacked, want_grads);
  if (!trace.output.allFinite()) {
    throw NumericError("non-finite network output while evaluating a triplet batch");
  }

  const auto& out = trace.output;
  Eigen::MatrixXd d_out;
  if (want_grads) d_out = Eigen::MatrixXd::Zero(out.rows(), out.cols());

  double loss_sum = 0.0;
  const double inv_b = 1.0 / static_cast<double>(b);
  for (std::size_t j = 0; j < b; ++j) {
    const auto fa = out.col(j), fp = out.col(b + j), fn = out.col(2 * b + j);
    const Eigen::VectorXd diff_ap = fa - fp;
    const Eigen::VectorXd diff_an = fa - fn;
    const Eigen::VectorXd diff_pn = fp - fn;
    double d_ap, d_an, d_pn;
    if (cfg.squared_distances) {
      d_ap = diff_ap.squaredNorm();
      d_an = diff_an.squaredNorm();
      d_pn = diff_pn.squaredNorm();
    } else {
      d_ap = diff_ap.norm();
      d_an = diff_an.norm();
      d_pn = diff_pn.norm();
    }
    const TripletLossGrad g = triplet_loss_grad(d_ap, d_an, d_pn, cfg);
    loss_sum += g.loss;
    if (!want_grads) continue;

    // Direction of each pairwise distance w.r.t. its first argument; the
    // gradient at coincident points is taken as 0.
    const auto dir = [&](const Eigen::VectorXd& diff, double dist) -> Eigen::VectorXd {
      if (cfg.squared_distances) return 2.0 * diff;
      if (dist <= 0.0) return Eigen::VectorXd::Zero(diff.size());
      return diff / dist;
    };
    const Eigen::VectorXd u_ap = dir(diff_ap, d_ap);
    const Eigen::VectorXd u_an = dir(diff_an, d_an);
    const Eigen::VectorXd u_pn = dir(diff_pn, d_pn);
    d_out.col(j) += inv_b * (g.d_dap * u_ap + g.d_dan * u_an);
    d_out.col(b + j) += inv_b * (-g.d_dap * u_ap + g.d_dpn * u_pn);
    d_out.col(2 * b + j) += inv_b * (-g.d_dan * u_an - g.d_dpn * u_pn);
  }

  TripletBatchResult result;
  result.mean_loss = loss_sum * inv_b;
  if (!std::isfinite(result.mean_loss)) throw NumericError("non-finite triplet batch loss");
  if (want_grads) {
    result.grads = Gradients::zeros_like(params);
    backward_from_output(params, trace, d_out, result.grads);
  }
  return result;
}

}  // namespace detail

/// Mean loss of a triplet batch under the current parameters.
inline double batch_loss(const NetworkParams& params, const std::vector<TripletFeatures>& batch,
                         const LossConfig& cfg) {
  return detail::triplet_batch_eval(params, batch, cfg, false).mean_loss;
}

/// Exact reverse-mode gradients of the selected loss for every weight and
/// bias, together with the batch mean loss.
inline std::pair<double, Gradients> backward(const NetworkParams& params,
                                             const std::vector<TripletFeatures>& batch,
                                             const LossConfig& cfg) {
  auto result = detail::triplet_batch_eval(params, batch, cfg, true);
  return {result.mean_loss, std::move(result.grads)};
}

// ---------------------------------------------------------------------------
// Serialization: magic "GFNN", format version, config block, then per layer
// row-major little-endian IEEE-754 float64 weights followed by biases.
// ---------------------------------------------------------------------------

namespace detail {

static_assert(std::endian::native == std::endian::little, "serialization assumes a little-endian host");

inline void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
  out.insert(out.end(), p, p + 4);
}

inline void put_f64(std::vector<std::uint8_t>& out, double v) {
  const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
  out.insert(out.end(), p, p + 8);
}

struct ByteReader {
  const std::uint8_t* data;
  std::size_t size;
  std::size_t offset = 0;

  void require(std::size_t n, const char* what) const {
    if (offset + n > size) {
      throw DataError("model format error at byte " + std::to_string(offset) + ": truncated " +
                      std::string(what));
    }
  }
  std::uint32_t u32(const char* what) {
    require(4, what);
    std::uint32_t v;
    std::memcpy(&v, data + offset, 4);
    offset += 4;
    return v;
  }
  double f64(const char* what) {
    require(8, what);
    double v;
    std::memcpy(&v, data + offset, 8);
    offset += 8;
    return v;
  }
};

}  // namespace detail

inline constexpr std::uint32_t kModelFormatVersion = 1;

inline std::vector<std::uint8_t> save_model(const NetworkParams& params) {
  std::vector<std::uint8_t> out;
  out.insert(out.end(), {'G', 'F', 'N', 'N'});
  detail::put_u32(out, kModelFormatVersion);
  const NetworkConfig& cfg = params.config;
  detail::put_u32(out, static_cast<std::uint32_t>(cfg.descriptor_dims.size()));
  for (int d : cfg.descriptor_dims) detail::put_u32(out, static_cast<std::uint32_t>(d));
  detail::put_u32(out, static_cast<std::uint32_t>(cfg.n_intra));
  detail::put_u32(out, static_cast<std::uint32_t>(cfg.n_inter));
  detail::put_u32(out, static_cast<std::uint32_t>(cfg.n_out));
  detail::put_u32(out, cfg.use_intra ? 1 : 0);
  detail::put_u32(out, cfg.relu_on_output ? 1 : 0);
  for (const auto& layer : params.layers) {
    detail::put_u32(out, static_cast<std::uint32_t>(layer.weights.rows()));
    detail::put_u32(out, static_cast<std::uint32_t>(layer.weights.cols()));
    for (Eigen::Index r = 0; r < layer.weights.rows(); ++r) {
      for (Eigen::Index c = 0; c < layer.weights.cols(); ++c) detail::put_f64(out, layer.weights(r, c));
    }
    for (Eigen::Index r = 0; r < layer.bias.size(); ++r) detail::put_f64(out, layer.bias[r]);
  }
  return out;
}

inline NetworkParams load_model(const std::vector<std::uint8_t>& bytes) {
  detail::ByteReader in{bytes.data(), bytes.size()};
  in.require(4, "magic");
  if (std::memcmp(bytes.data(), "GFNN", 4) != 0) {
    throw DataError("model format error at byte 0: bad magic");
  }
  in.offset = 4;
  const std::uint32_t version = in.u32("version");
  if (version != kModelFormatVersion) {
    throw DataError("model format error at byte 4: unsupported version " + std::to_string(version));
  }

  NetworkConfig cfg;
  const std::uint32_t n_desc = in.u32("descriptor count");
  if (n_desc == 0 || n_desc > 64) {
    throw DataError("model format error at byte 8: implausible descriptor count");
  }
  for (std::uint32_t i = 0; i < n_desc; ++i) cfg.descriptor_dims.push_back(static_cast<int>(in.u32("descriptor dim")));
  cfg.n_intra = static_cast<int>(in.u32("n_intra"));
  cfg.n_inter = static_cast<int>(in.u32("n_inter"));
  cfg.n_out = static_cast<int>(in.u32("n_out"));
  cfg.use_intra = in.u32("use_intra flag") != 0;
  cfg.relu_on_output = in.u32("relu_on_output flag") != 0;
  cfg.validate();

  const auto shapes = layer_shapes(cfg);
  NetworkParams params;
  params.config = cfg;
  for (std::size_t l = 0; l < shapes.size(); ++l) {
    const std::size_t at = in.offset;
    const std::uint32_t rows = in.u32("layer rows");
    const std::uint32_t cols = in.u32("layer cols");
    if (rows != static_cast<std::uint32_t>(shapes[l].first) ||
        cols != static_cast<std::uint32_t>(shapes[l].second)) {
      throw DataError("model format error at byte " + std::to_string(at) + ": layer shape " +
                      std::to_string(rows) + "x" + std::to_string(cols) + " does not match the config");
    }
    DenseLayer layer;
    layer.relu = l + 1 < shapes.size() || cfg.relu_on_output;
    layer.weights.resize(rows, cols);
    for (std::uint32_t r = 0; r < rows; ++r) {
      for (std::uint32_t c = 0; c < cols; ++c) layer.weights(r, c) = in.f64("weight");
    }
    layer.bias.resize(rows);
    for (std::uint32_t r = 0; r < rows; ++r) layer.bias[r] = in.f64("bias");
    params.layers.push_back(std::move(layer));
  }
  if (in.offset != bytes.size()) {
    throw DataError("model format error at byte " + std::to_string(in.offset) + ": trailing data");
  }
  return params;
}

inline void save_model_file(const std::filesystem::path& path, const NetworkParams& params) {
  const auto bytes = save_model(params);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open model file for writing: " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("failed writing model file: " + path.string());
}

inline NetworkParams load_model_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open model file: " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return load_model(bytes);
}

}  // namespace geofuse
