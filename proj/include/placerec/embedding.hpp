#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "placerec/errors.hpp"
#include "placerec/ingest.hpp"
#include "placerec/io.hpp"
#include "placerec/random.hpp"
#include "placerec/supervision.hpp"

namespace placerec {

// Fully-connected embedding net: rectifier hidden layers, linear output.
// Both branches of the Siamese pair share these parameters.
struct EmbeddingModel {
  std::vector<int> layer_dims;             // [n, h..., m]
  std::vector<Eigen::MatrixXd> weights;    // layer l: dims[l+1] x dims[l]
  std::vector<Eigen::VectorXd> biases;
  double margin_alpha = 1.0;

  int input_dim() const { return layer_dims.front(); }
  int output_dim() const { return layer_dims.back(); }
  std::size_t layer_count() const { return weights.size(); }
};

// Glorot-uniform initialization, biases zero.
inline EmbeddingModel init_embedding_model(const std::vector<int>& layer_dims,
                                           double margin_alpha,
                                           RngStream& rng) {
  if (layer_dims.size() < 2) {
    throw ConfigError("embedding model needs at least input and output dims");
  }
  for (int d : layer_dims) {
    if (d < 1) throw ConfigError("embedding layer dims must be positive");
  }
  EmbeddingModel model;
  model.layer_dims = layer_dims;
  model.margin_alpha = margin_alpha;
  for (std::size_t l = 0; l + 1 < layer_dims.size(); ++l) {
    const int fan_in = layer_dims[l];
    const int fan_out = layer_dims[l + 1];
    const double lim = std::sqrt(6.0 / (fan_in + fan_out));
    Eigen::MatrixXd w(fan_out, fan_in);
    for (int r = 0; r < fan_out; ++r) {
      for (int c = 0; c < fan_in; ++c) {
        w(r, c) = rng.uniform(-lim, lim);
      }
    }
    model.weights.push_back(std::move(w));
    model.biases.push_back(Eigen::VectorXd::Zero(fan_out));
  }
  return model;
}

namespace detail {

// Post-activations per layer; index 0 is the input batch.
struct ForwardCache {
  std::vector<Eigen::MatrixXd> activations;
};

inline Eigen::MatrixXd forward_batch(const EmbeddingModel& model,
                                     const Eigen::MatrixXd& x,
                                     ForwardCache* cache = nullptr) {
  if (x.rows() != model.input_dim()) {
    throw DataError("forward: descriptor dim " + std::to_string(x.rows()) +
                    " does not match model input dim " +
                    std::to_string(model.input_dim()));
  }
  Eigen::MatrixXd a = x;
  if (cache) cache->activations.push_back(a);
  for (std::size_t l = 0; l < model.layer_count(); ++l) {
    Eigen::MatrixXd z =
        (model.weights[l] * a).colwise() + model.biases[l];
    a = (l + 1 < model.layer_count()) ? z.cwiseMax(0.0).eval() : std::move(z);
    if (cache) cache->activations.push_back(a);
  }
  return a;
}

}  // namespace detail

inline Eigen::VectorXd forward(const EmbeddingModel& model,
                               const Eigen::VectorXd& x) {
  return detail::forward_batch(model, x);
}

inline double pair_distance(const EmbeddingModel& model,
                            const Eigen::VectorXd& xi,
                            const Eigen::VectorXd& xj) {
  return (forward(model, xi) - forward(model, xj)).norm();
}

struct ParamGradients {
  std::vector<Eigen::MatrixXd> dw;
  std::vector<Eigen::VectorXd> db;
};

inline ParamGradients zero_gradients(const EmbeddingModel& model) {
  ParamGradients g;
  for (std::size_t l = 0; l < model.layer_count(); ++l) {
    g.dw.push_back(Eigen::MatrixXd::Zero(model.weights[l].rows(),
                                         model.weights[l].cols()));
    g.db.push_back(Eigen::VectorXd::Zero(model.biases[l].size()));
  }
  return g;
}

namespace detail {

// Backpropagates d(loss)/d(output) through one branch, accumulating into g.
inline void backward_batch(const EmbeddingModel& model,
                           const ForwardCache& cache,
                           Eigen::MatrixXd delta, ParamGradients& g) {
  for (std::size_t l = model.layer_count(); l-- > 0;) {
    g.dw[l] += delta * cache.activations[l].transpose();
    g.db[l] += delta.rowwise().sum();
    if (l > 0) {
      delta = (model.weights[l].transpose() * delta).eval();
      // Rectifier mask: activation > 0 <=> pre-activation > 0.
      delta = delta.cwiseProduct(
          (cache.activations[l].array() > 0.0).cast<double>().matrix());
    }
  }
}

}  // namespace detail

struct ContrastiveBatch {
  Eigen::MatrixXd xa;      // n x B, first element of each pair
  Eigen::MatrixXd xb;      // n x B, second element
  std::vector<int> labels;  // 1 similar, 0 dissimilar
};

inline ContrastiveBatch assemble_batch(
    const std::vector<LabeledPair>& pairs,
    const std::vector<Eigen::VectorXd>& descriptors) {
  if (pairs.empty()) {
    throw DataError("contrastive batch is empty");
  }
  const Eigen::Index n = descriptors.front().size();
  ContrastiveBatch batch;
  batch.xa.resize(n, static_cast<Eigen::Index>(pairs.size()));
  batch.xb.resize(n, static_cast<Eigen::Index>(pairs.size()));
  batch.labels.reserve(pairs.size());
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    batch.xa.col(static_cast<Eigen::Index>(k)) =
        descriptors[static_cast<std::size_t>(pairs[k].i)];
    batch.xb.col(static_cast<Eigen::Index>(k)) =
        descriptors[static_cast<std::size_t>(pairs[k].j)];
    batch.labels.push_back(pairs[k].y);
  }
  return batch;
}

// Summed contrastive loss over the batch,
//   L = sum_k w(y_k) * ( y_k D_k^2 + (1 - y_k) [alpha - D_k]_+^2 ),
// with w(1) = pos_weight and w(0) = 1, plus its exact gradient with respect
// to every parameter (both Siamese branches share weights, so contributions
// from the two branches are summed).
inline std::pair<double, ParamGradients> contrastive_loss(
    const EmbeddingModel& model, const ContrastiveBatch& batch,
    double pos_weight) {
  const auto count = static_cast<Eigen::Index>(batch.labels.size());
  if (count == 0) {
    throw DataError("contrastive_loss: empty batch");
  }
  for (int y : batch.labels) {
    if (y != 0 && y != 1) {
      throw DataError("contrastive_loss: label must be 0 or 1");
    }
  }

  detail::ForwardCache cache_a, cache_b;
  const Eigen::MatrixXd phi_a =
      detail::forward_batch(model, batch.xa, &cache_a);
  const Eigen::MatrixXd phi_b =
      detail::forward_batch(model, batch.xb, &cache_b);
  const Eigen::MatrixXd diff = phi_a - phi_b;

  double loss = 0.0;
  Eigen::MatrixXd dphi_a = Eigen::MatrixXd::Zero(diff.rows(), diff.cols());
  for (Eigen::Index k = 0; k < count; ++k) {
    const double dist = diff.col(k).norm();
    if (batch.labels[static_cast<std::size_t>(k)] == 1) {
      loss += pos_weight * dist * dist;
      dphi_a.col(k) = 2.0 * pos_weight * diff.col(k);
    } else {
      const double hinge = model.margin_alpha - dist;
      if (hinge > 0.0) {
        loss += hinge * hinge;
        if (dist > 0.0) {
          dphi_a.col(k) = (-2.0 * hinge / dist) * diff.col(k);
        }
        // dist == 0: hinge is maximal but has no descent direction.
      }
    }
  }

  ParamGradients grads = zero_gradients(model);
  detail::backward_batch(model, cache_a, dphi_a, grads);
  detail::backward_batch(model, cache_b, -dphi_a, grads);
  return {loss, std::move(grads)};
}

inline std::pair<double, ParamGradients> contrastive_loss(
    const EmbeddingModel& model, const std::vector<LabeledPair>& pairs,
    const std::vector<Eigen::VectorXd>& descriptors, double pos_weight) {
  return contrastive_loss(model, assemble_batch(pairs, descriptors),
                          pos_weight);
}

struct TrainConfig {
  int epochs = 200;
  int batches_per_epoch = 20;
  int batch_positives = 8;
  int neg_ratio = 10;
  double learning_rate = 0.01;
  double lr_decay = 0.99;  // multiplicative, per epoch
  double pos_class_weight = 10.0;
  std::uint64_t seed = 42;
};

struct TrainResult {
  EmbeddingModel model;
  std::vector<double> epoch_mean_loss;  // mean per-pair loss per epoch
};

// Plain SGD over distance-weighted batches. The summed batch gradient is
// scaled by the pair count before the step so the learning rate is
// insensitive to batch size.
inline TrainResult train(EmbeddingModel model, const PairSet& pairs,
                         const std::vector<Eigen::VectorXd>& descriptors,
                         const TrainConfig& cfg) {
  if (cfg.epochs < 1 || cfg.batches_per_epoch < 1 ||
      cfg.learning_rate <= 0.0) {
    throw ConfigError("train: epochs, batches_per_epoch, learning_rate must "
                      "be positive");
  }
  if (pairs.positives.empty() || pairs.negatives.empty()) {
    throw DataError("train: need non-empty positive and negative pair sets");
  }
  PairSet weighted = pairs;
  if (weighted.negative_weights.size() != weighted.negatives.size()) {
    attach_sampling_weights(weighted, descriptors);
  }

  RngStream rng(cfg.seed);
  const double pairs_per_batch =
      static_cast<double>(cfg.batch_positives) * (1.0 + cfg.neg_ratio);

  TrainResult result;
  double lr = cfg.learning_rate;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    double epoch_loss = 0.0;
    for (int b = 0; b < cfg.batches_per_epoch; ++b) {
      const auto batch = sample_batch(weighted, descriptors, rng,
                                      cfg.batch_positives, cfg.neg_ratio);
      auto [loss, grads] =
          contrastive_loss(model, batch, descriptors, cfg.pos_class_weight);
      if (!std::isfinite(loss)) {
        throw NumericalError("train: non-finite loss at epoch " +
                             std::to_string(epoch) + ", batch " +
                             std::to_string(b));
      }
      epoch_loss += loss / pairs_per_batch;
      const double step = lr / pairs_per_batch;
      for (std::size_t l = 0; l < model.layer_count(); ++l) {
        model.weights[l] -= step * grads.dw[l];
        model.biases[l] -= step * grads.db[l];
      }
    }
    result.epoch_mean_loss.push_back(epoch_loss / cfg.batches_per_epoch);
    lr *= cfg.lr_decay;
  }
  for (const auto& w : model.weights) {
    if (!w.allFinite()) {
      throw NumericalError("train: non-finite parameters after training");
    }
  }
  result.model = std::move(model);
  return result;
}

struct EmbeddedDescriptor {
  int keyframe_id = 0;
  Eigen::VectorXd phi;
};

inline std::vector<EmbeddedDescriptor> embed_all(
    const EmbeddingModel& model, const std::vector<Keyframe>& frames) {
  std::vector<EmbeddedDescriptor> out;
  out.reserve(frames.size());
  for (const auto& kf : frames) {
    out.push_back({kf.id, forward(model, kf.descriptor.d)});
  }
  return out;
}

// Checkpoint: one JSON file with dims, margin, row-major parameter arrays,
// and an echo of the run configuration.
inline void save_checkpoint(const EmbeddingModel& model,
                            const nlohmann::json& config_echo,
                            const std::filesystem::path& path) {
  nlohmann::json j;
  j["layer_dims"] = model.layer_dims;
  j["margin_alpha"] = model.margin_alpha;
  j["config"] = config_echo;
  auto& weights = j["weights"] = nlohmann::json::array();
  auto& biases = j["biases"] = nlohmann::json::array();
  for (std::size_t l = 0; l < model.layer_count(); ++l) {
    nlohmann::json w = nlohmann::json::array();
    for (Eigen::Index r = 0; r < model.weights[l].rows(); ++r) {
      for (Eigen::Index c = 0; c < model.weights[l].cols(); ++c) {
        w.push_back(model.weights[l](r, c));
      }
    }
    weights.push_back(std::move(w));
    nlohmann::json b = nlohmann::json::array();
    for (Eigen::Index r = 0; r < model.biases[l].size(); ++r) {
      b.push_back(model.biases[l][r]);
    }
    biases.push_back(std::move(b));
  }
  auto out = open_output(path);
  out << j.dump(2) << '\n';
}

inline std::pair<EmbeddingModel, nlohmann::json> load_checkpoint(
    const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw DataError("missing checkpoint: " + path.string());
  }
  nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
  if (j.is_discarded() || !j.is_object()) {
    throw DataError("malformed checkpoint: " + path.string());
  }
  try {
    EmbeddingModel model;
    model.layer_dims = j.at("layer_dims").get<std::vector<int>>();
    model.margin_alpha = j.at("margin_alpha").get<double>();
    const auto& weights = j.at("weights");
    const auto& biases = j.at("biases");
    for (std::size_t l = 0; l + 1 < model.layer_dims.size(); ++l) {
      const int rows = model.layer_dims[l + 1];
      const int cols = model.layer_dims[l];
      const auto& w = weights.at(l);
      if (static_cast<int>(w.size()) != rows * cols) {
        throw DataError("checkpoint weight size mismatch in " + path.string());
      }
      Eigen::MatrixXd wm(rows, cols);
      std::size_t idx = 0;
      for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) {
          wm(r, c) = w.at(idx++).get<double>();
        }
      }
      const auto& b = biases.at(l);
      if (static_cast<int>(b.size()) != rows) {
        throw DataError("checkpoint bias size mismatch in " + path.string());
      }
      Eigen::VectorXd bv(rows);
      for (int r = 0; r < rows; ++r) bv[r] = b.at(r).get<double>();
      model.weights.push_back(std::move(wm));
      model.biases.push_back(std::move(bv));
    }
    return {std::move(model), j.value("config", nlohmann::json::object())};
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed checkpoint " + path.string() + ": " + e.what());
  }
}

inline void write_loss_trace(const std::filesystem::path& path,
                             const std::vector<double>& epoch_mean_loss) {
  CsvWriter csv(path, {"epoch", "mean_loss"});
  for (std::size_t e = 0; e < epoch_mean_loss.size(); ++e) {
    csv.row({static_cast<double>(e), epoch_mean_loss[e]});
  }
}

}  // namespace placerec
