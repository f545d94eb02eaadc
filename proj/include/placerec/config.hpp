#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "placerec/embedding.hpp"
#include "placerec/errors.hpp"
#include "placerec/evaluate.hpp"
#include "placerec/ingest.hpp"
#include "placerec/posegraph.hpp"
#include "placerec/supervision.hpp"
#include "placerec/synthworld.hpp"

namespace placerec {

struct LabelConfig {
  LabelThresholds thresholds;
  int temporal_guard = 10;
};

struct EvalConfig {
  GroundTruthRule rule;
  int sweep_points = 200;
  int bins = 50;
  std::string pr_mode = "eps";  // "eps" or "knn"
  int knn_max = 20;
};

struct SlamConfig {
  double accept_radius = -1.0;  // < 0: use the contrastive margin alpha
  int optimize_every = 10;
  int max_iters = 50;
  double tol = 1e-8;
};

struct ModelConfig {
  std::vector<int> hidden_dims = {96, 64};
  int embedding_dim = 32;
  double margin_alpha = 1.0;
};

// One config file drives every subcommand; sections mirror the module
// parameter structs and unknown keys are rejected.
struct RunConfig {
  std::uint64_t seed = 42;
  std::filesystem::path out_dir = "out";
  std::vector<std::string> train_sessions = {"train_0", "train_1"};
  std::string test_session = "test";
  WorldConfig world;
  KeyframeOptions keyframes;
  KernelParams kernel;
  LabelConfig labels;
  TrainConfig train;
  ModelConfig model;
  EvalConfig eval;
  NoiseSpec noise;
  SlamConfig slam;
};

namespace detail {

inline void check_keys(const nlohmann::json& obj,
                       const std::set<std::string>& allowed,
                       const std::string& context) {
  for (const auto& [key, value] : obj.items()) {
    if (!allowed.count(key)) {
      throw ConfigError("unknown config key \"" + key + "\" in " + context);
    }
  }
}

template <typename T>
void read_field(const nlohmann::json& obj, const char* key, T& out) {
  if (obj.contains(key)) {
    try {
      out = obj.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
      throw ConfigError(std::string("config key \"") + key +
                        "\" has the wrong type");
    }
  }
}

}  // namespace detail

inline RunConfig parse_run_config(const nlohmann::json& j) {
  if (!j.is_object()) {
    throw ConfigError("config root must be a JSON object");
  }
  detail::check_keys(j,
                     {"seed", "out_dir", "sessions", "world", "keyframes",
                      "kernel", "labels", "train", "model", "eval", "noise",
                      "slam"},
                     "config root");
  RunConfig cfg;
  detail::read_field(j, "seed", cfg.seed);
  std::string out_dir = cfg.out_dir.string();
  detail::read_field(j, "out_dir", out_dir);
  cfg.out_dir = out_dir;

  if (j.contains("sessions")) {
    const auto& s = j.at("sessions");
    detail::check_keys(s, {"train", "test"}, "sessions");
    detail::read_field(s, "train", cfg.train_sessions);
    detail::read_field(s, "test", cfg.test_session);
    if (cfg.train_sessions.empty()) {
      throw ConfigError("sessions.train must list at least one session");
    }
  }
  if (j.contains("world")) {
    const auto& w = j.at("world");
    detail::check_keys(w,
                       {"block_size", "grid_rows", "grid_cols", "route",
                        "sample_spacing", "laps", "appearance_dim",
                        "descriptor_dim", "nuisance_amplitude",
                        "descriptor_noise_sigma", "gps_noise_sigma", "speed"},
                       "world");
    detail::read_field(w, "block_size", cfg.world.block_size);
    detail::read_field(w, "grid_rows", cfg.world.grid_rows);
    detail::read_field(w, "grid_cols", cfg.world.grid_cols);
    detail::read_field(w, "route", cfg.world.route);
    detail::read_field(w, "sample_spacing", cfg.world.sample_spacing);
    detail::read_field(w, "laps", cfg.world.laps);
    detail::read_field(w, "appearance_dim", cfg.world.appearance_dim);
    detail::read_field(w, "descriptor_dim", cfg.world.descriptor_dim);
    detail::read_field(w, "nuisance_amplitude", cfg.world.nuisance_amplitude);
    detail::read_field(w, "descriptor_noise_sigma",
                       cfg.world.descriptor_noise_sigma);
    detail::read_field(w, "gps_noise_sigma", cfg.world.gps_noise_sigma);
    detail::read_field(w, "speed", cfg.world.speed);
  }
  if (j.contains("keyframes")) {
    const auto& k = j.at("keyframes");
    detail::check_keys(k, {"sync_tolerance", "trans_thresh", "rot_thresh"},
                       "keyframes");
    detail::read_field(k, "sync_tolerance", cfg.keyframes.sync_tolerance);
    detail::read_field(k, "trans_thresh", cfg.keyframes.trans_thresh);
    detail::read_field(k, "rot_thresh", cfg.keyframes.rot_thresh);
  }
  if (j.contains("kernel")) {
    const auto& k = j.at("kernel");
    detail::check_keys(k, {"gamma_t", "gamma_r"}, "kernel");
    detail::read_field(k, "gamma_t", cfg.kernel.gamma_t);
    detail::read_field(k, "gamma_r", cfg.kernel.gamma_r);
    if (cfg.kernel.gamma_t <= 0.0 || cfg.kernel.gamma_r <= 0.0) {
      throw ConfigError("kernel bandwidths must be positive");
    }
  }
  if (j.contains("labels")) {
    const auto& l = j.at("labels");
    detail::check_keys(l, {"tau_p", "tau_n", "temporal_guard"}, "labels");
    detail::read_field(l, "tau_p", cfg.labels.thresholds.tau_p);
    detail::read_field(l, "tau_n", cfg.labels.thresholds.tau_n);
    detail::read_field(l, "temporal_guard", cfg.labels.temporal_guard);
    if (!(cfg.labels.thresholds.tau_n < cfg.labels.thresholds.tau_p)) {
      throw ConfigError("labels require tau_n < tau_p");
    }
  }
  if (j.contains("train")) {
    const auto& t = j.at("train");
    detail::check_keys(t,
                       {"epochs", "batches_per_epoch", "batch_positives",
                        "neg_ratio", "learning_rate", "lr_decay",
                        "pos_class_weight"},
                       "train");
    detail::read_field(t, "epochs", cfg.train.epochs);
    detail::read_field(t, "batches_per_epoch", cfg.train.batches_per_epoch);
    detail::read_field(t, "batch_positives", cfg.train.batch_positives);
    detail::read_field(t, "neg_ratio", cfg.train.neg_ratio);
    detail::read_field(t, "learning_rate", cfg.train.learning_rate);
    detail::read_field(t, "lr_decay", cfg.train.lr_decay);
    detail::read_field(t, "pos_class_weight", cfg.train.pos_class_weight);
    if (cfg.train.epochs < 1 || cfg.train.learning_rate <= 0.0) {
      throw ConfigError("train requires epochs >= 1 and learning_rate > 0");
    }
  }
  if (j.contains("model")) {
    const auto& m = j.at("model");
    detail::check_keys(m, {"hidden_dims", "embedding_dim", "margin_alpha"},
                       "model");
    detail::read_field(m, "hidden_dims", cfg.model.hidden_dims);
    detail::read_field(m, "embedding_dim", cfg.model.embedding_dim);
    detail::read_field(m, "margin_alpha", cfg.model.margin_alpha);
    if (cfg.model.embedding_dim < 2 || cfg.model.margin_alpha <= 0.0) {
      throw ConfigError("model requires embedding_dim >= 2 and margin > 0");
    }
  }
  if (j.contains("eval")) {
    const auto& e = j.at("eval");
    detail::check_keys(e,
                       {"dist_thresh", "bearing_aware", "neg_floor",
                        "bearing_thresh", "sweep_points", "bins", "pr_mode",
                        "knn_max"},
                       "eval");
    detail::read_field(e, "dist_thresh", cfg.eval.rule.dist_thresh);
    detail::read_field(e, "bearing_aware", cfg.eval.rule.bearing_aware);
    detail::read_field(e, "neg_floor", cfg.eval.rule.neg_floor);
    detail::read_field(e, "bearing_thresh", cfg.eval.rule.bearing_thresh);
    detail::read_field(e, "sweep_points", cfg.eval.sweep_points);
    detail::read_field(e, "bins", cfg.eval.bins);
    detail::read_field(e, "pr_mode", cfg.eval.pr_mode);
    detail::read_field(e, "knn_max", cfg.eval.knn_max);
    if (cfg.eval.rule.neg_floor <= cfg.eval.rule.dist_thresh) {
      throw ConfigError("eval requires neg_floor > dist_thresh");
    }
    if (cfg.eval.pr_mode != "eps" && cfg.eval.pr_mode != "knn") {
      throw ConfigError("eval.pr_mode must be \"eps\" or \"knn\"");
    }
  }
  if (j.contains("noise")) {
    const auto& n = j.at("noise");
    detail::check_keys(n, {"sigma_rot", "sigma_trans"}, "noise");
    detail::read_field(n, "sigma_rot", cfg.noise.sigma_rot);
    detail::read_field(n, "sigma_trans", cfg.noise.sigma_trans);
    if (cfg.noise.sigma_rot < 0.0 || cfg.noise.sigma_trans < 0.0) {
      throw ConfigError("noise sigmas must be >= 0");
    }
  }
  if (j.contains("slam")) {
    const auto& s = j.at("slam");
    detail::check_keys(s, {"accept_radius", "optimize_every", "max_iters", "tol"},
                       "slam");
    detail::read_field(s, "accept_radius", cfg.slam.accept_radius);
    detail::read_field(s, "optimize_every", cfg.slam.optimize_every);
    detail::read_field(s, "max_iters", cfg.slam.max_iters);
    detail::read_field(s, "tol", cfg.slam.tol);
    if (cfg.slam.optimize_every < 1) {
      throw ConfigError("slam.optimize_every must be >= 1");
    }
  }
  cfg.world.seed = cfg.seed;
  cfg.train.seed = RngStream::mix(cfg.seed, 11);
  return cfg;
}

inline nlohmann::json load_config_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw ConfigError("cannot open config file: " + path.string());
  }
  nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
  if (j.is_discarded()) {
    throw ConfigError("config file is not valid JSON: " + path.string());
  }
  return j;
}

inline RunConfig load_run_config(const std::filesystem::path& path) {
  return parse_run_config(load_config_json(path));
}

}  // namespace placerec
