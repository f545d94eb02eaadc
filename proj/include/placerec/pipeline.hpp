#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "placerec/config.hpp"
#include "placerec/embedding.hpp"
#include "placerec/errors.hpp"
#include "placerec/evaluate.hpp"
#include "placerec/ingest.hpp"
#include "placerec/io.hpp"
#include "placerec/posegraph.hpp"
#include "placerec/supervision.hpp"
#include "placerec/synthworld.hpp"

namespace placerec {

// Session salts: train sessions use their list index, the held-out test
// session a fixed offset so it never collides with a train session.
inline constexpr std::uint64_t kTestSessionSalt = 1000;

inline std::filesystem::path descriptor_file(const RunConfig& cfg,
                                             const std::string& name) {
  return cfg.out_dir / (name + "_descriptors.jsonl");
}
inline std::filesystem::path gps_file(const RunConfig& cfg,
                                      const std::string& name) {
  return cfg.out_dir / (name + "_gps.jsonl");
}
inline std::filesystem::path truth_file(const RunConfig& cfg,
                                        const std::string& name) {
  return cfg.out_dir / (name + "_truth.jsonl");
}
inline std::filesystem::path checkpoint_file(const RunConfig& cfg) {
  return cfg.out_dir / "checkpoint.json";
}

inline void cmd_generate(const RunConfig& cfg) {
  for (std::size_t s = 0; s < cfg.train_sessions.size(); ++s) {
    const auto session = generate_session(cfg.world, s);
    write_session(session, cfg.out_dir, cfg.train_sessions[s]);
  }
  const auto test = generate_session(cfg.world, kTestSessionSalt);
  write_session(test, cfg.out_dir, cfg.test_session);
}

inline KeyframeBuildResult session_keyframes(const RunConfig& cfg,
                                             const std::string& name) {
  return build_keyframes(descriptor_file(cfg, name), gps_file(cfg, name),
                         cfg.keyframes);
}

struct TrainingData {
  std::vector<Eigen::VectorXd> descriptors;  // all sessions, concatenated
  PairSet pairs;                             // indices into descriptors
};

// Labels each train session independently (the similarity kernel only makes
// sense within one traversal) and concatenates the pair sets with offsets.
inline TrainingData collect_training_pairs(const RunConfig& cfg) {
  TrainingData data;
  for (const auto& name : cfg.train_sessions) {
    const auto built = session_keyframes(cfg, name);
    const auto sim = self_similarity(built.frames, cfg.kernel);
    const auto pairs =
        label_pairs(sim, cfg.labels.thresholds, cfg.labels.temporal_guard);
    const int offset = static_cast<int>(data.descriptors.size());
    for (const auto& kf : built.frames) {
      data.descriptors.push_back(kf.descriptor.d);
    }
    for (const auto& [i, j] : pairs.positives) {
      data.pairs.positives.emplace_back(i + offset, j + offset);
    }
    for (const auto& [i, j] : pairs.negatives) {
      data.pairs.negatives.emplace_back(i + offset, j + offset);
    }
  }
  if (data.pairs.positives.empty() || data.pairs.negatives.empty()) {
    throw DataError(
        "no training pairs: labeling produced " +
        std::to_string(data.pairs.positives.size()) + " positives and " +
        std::to_string(data.pairs.negatives.size()) +
        " negatives (tau_p=" + format_double(cfg.labels.thresholds.tau_p) +
        ", tau_n=" + format_double(cfg.labels.thresholds.tau_n) +
        "); widen the thresholds or lengthen the sessions");
  }
  attach_sampling_weights(data.pairs, data.descriptors);
  return data;
}

inline void cmd_train(const RunConfig& cfg, const nlohmann::json& config_echo) {
  auto data = collect_training_pairs(cfg);
  std::vector<int> dims;
  dims.push_back(static_cast<int>(data.descriptors.front().size()));
  for (int h : cfg.model.hidden_dims) dims.push_back(h);
  dims.push_back(cfg.model.embedding_dim);
  RngStream init_rng(RngStream::mix(cfg.seed, 10));
  EmbeddingModel model =
      init_embedding_model(dims, cfg.model.margin_alpha, init_rng);
  auto result = train(std::move(model), data.pairs, data.descriptors, cfg.train);
  save_checkpoint(result.model, config_echo, checkpoint_file(cfg));
  write_loss_trace(cfg.out_dir / "loss_trace.csv", result.epoch_mean_loss);
}

namespace detail {

inline void write_pr_csv(const std::filesystem::path& path,
                         const PrCurve& curve) {
  CsvWriter csv(path, {"threshold", "precision", "recall"});
  for (const auto& p : curve.points) {
    csv.row({p.threshold, p.precision, p.recall});
  }
}

inline void write_hist_csv(const std::filesystem::path& path,
                           const HistogramResult& hist) {
  CsvWriter csv(path, {"bin_left", "bin_right", "pos_mass", "neg_mass"});
  for (std::size_t b = 0; b + 1 < hist.edges.size(); ++b) {
    csv.row({hist.edges[b], hist.edges[b + 1], hist.pos_mass[b],
             hist.neg_mass[b]});
  }
}

}  // namespace detail

struct EvalOutputs {
  SpaceComparison comparison;
  PrPoint eps_nn;  // learned-space operating point at radius alpha
};

inline EvalOutputs cmd_eval(const RunConfig& cfg) {
  auto [model, echo] = load_checkpoint(checkpoint_file(cfg));
  const auto built = session_keyframes(cfg, cfg.test_session);
  const auto& frames = built.frames;
  if (!frames.empty() &&
      frames.front().descriptor.d.size() != model.input_dim()) {
    throw DataError("checkpoint input dim " +
                    std::to_string(model.input_dim()) +
                    " does not match session descriptor dim " +
                    std::to_string(frames.front().descriptor.d.size()));
  }

  EvalOutputs out;
  out.comparison =
      compare_spaces(frames, model, cfg.eval.rule, cfg.labels.temporal_guard,
                     cfg.eval.sweep_points, cfg.eval.bins);
  if (cfg.eval.pr_mode == "knn") {
    std::vector<int> ks;
    for (int k = 1; k <= cfg.eval.knn_max; ++k) ks.push_back(k);
    std::vector<Eigen::VectorXd> raw, learned;
    for (const auto& kf : frames) {
      raw.push_back(kf.descriptor.d);
      learned.push_back(forward(model, kf.descriptor.d));
    }
    out.comparison.pr_raw = pr_curve_knn(frames, raw, cfg.eval.rule,
                                         cfg.labels.temporal_guard, ks);
    out.comparison.pr_learned = pr_curve_knn(frames, learned, cfg.eval.rule,
                                             cfg.labels.temporal_guard, ks);
  }

  // Operating point of the epsilon-NN gate at the contrastive margin.
  {
    std::vector<Eigen::VectorXd> learned;
    for (const auto& kf : frames) learned.push_back(forward(model, kf.descriptor.d));
    const auto curve = pr_curve(frames, learned, cfg.eval.rule,
                                cfg.labels.temporal_guard, {model.margin_alpha});
    out.eps_nn = curve.points.front();
  }

  detail::write_pr_csv(cfg.out_dir / "pr_curve_raw.csv", out.comparison.pr_raw);
  detail::write_pr_csv(cfg.out_dir / "pr_curve_learned.csv",
                       out.comparison.pr_learned);
  detail::write_hist_csv(cfg.out_dir / "hist_raw.csv", out.comparison.hist_raw);
  detail::write_hist_csv(cfg.out_dir / "hist_learned.csv",
                         out.comparison.hist_learned);
  write_keyframes(cfg.out_dir / "keyframes_test.jsonl", frames);

  // Fig.-2/3-style matrices: GPS target plus raw and learned visual
  // similarity.
  const auto sim = self_similarity(frames, cfg.kernel);
  write_pgm(cfg.out_dir / "sim_gps.pgm", sim.values);
  write_matrix_csv(cfg.out_dir / "sim_gps.csv", sim.values);
  {
    std::vector<Eigen::VectorXd> raw, learned;
    for (const auto& kf : frames) {
      raw.push_back(kf.descriptor.d);
      learned.push_back(forward(model, kf.descriptor.d));
    }
    write_pgm(cfg.out_dir / "sim_raw.pgm", embedding_similarity_matrix(raw));
    write_pgm(cfg.out_dir / "sim_learned.pgm",
              embedding_similarity_matrix(learned));
  }

  nlohmann::json summary;
  summary["auc_raw"] = out.comparison.pr_raw.auc;
  summary["auc_learned"] = out.comparison.pr_learned.auc;
  summary["overlap_raw"] = out.comparison.hist_raw.overlap;
  summary["overlap_learned"] = out.comparison.hist_learned.overlap;
  summary["eps_nn_radius"] = model.margin_alpha;
  summary["eps_nn_precision"] = out.eps_nn.precision;
  summary["eps_nn_recall"] = out.eps_nn.recall;
  summary["keyframes"] = frames.size();
  summary["dropped_in_sync"] = built.dropped_in_sync;
  auto outfile = open_output(cfg.out_dir / "eval_summary.json");
  outfile << summary.dump(2) << '\n';
  return out;
}

namespace detail {

inline void write_trajectory_csv(const std::filesystem::path& path,
                                 const std::vector<Pose2>& poses) {
  CsvWriter csv(path, {"node_id", "x", "y", "theta"});
  for (std::size_t k = 0; k < poses.size(); ++k) {
    csv.row({static_cast<double>(k), poses[k].x, poses[k].y, poses[k].theta});
  }
}

}  // namespace detail

inline SlamReport cmd_slam(const RunConfig& cfg) {
  auto [model, echo] = load_checkpoint(checkpoint_file(cfg));
  const auto built = session_keyframes(cfg, cfg.test_session);
  const auto truth_samples = load_truth(truth_file(cfg, cfg.test_session));
  const auto truth = truth_at_keyframes(truth_samples, built.frames);

  SlamOptions opts;
  opts.accept_radius = cfg.slam.accept_radius >= 0.0 ? cfg.slam.accept_radius
                                                     : model.margin_alpha;
  opts.temporal_guard = cfg.labels.temporal_guard;
  opts.optimize_every = cfg.slam.optimize_every;
  opts.noise = cfg.noise;
  opts.seed = RngStream::mix(cfg.seed, 12);
  opts.max_iters = cfg.slam.max_iters;
  opts.tol = cfg.slam.tol;
  opts.truth_rule = cfg.eval.rule;

  const auto report = run_slam_experiment(built.frames, truth, model, opts);

  detail::write_trajectory_csv(cfg.out_dir / "traj_truth.csv", report.truth);
  detail::write_trajectory_csv(cfg.out_dir / "traj_dead_reckoned.csv",
                               report.dead_reckoned);
  detail::write_trajectory_csv(cfg.out_dir / "traj_optimized.csv",
                               report.optimized);
  {
    CsvWriter csv(cfg.out_dir / "closures.csv",
                  {"i", "j", "embedded_distance", "truth_distance",
                   "correct_flag"});
    for (const auto& c : report.closures) {
      csv.row({static_cast<double>(c.i), static_cast<double>(c.j),
               c.embedded_distance, c.truth_distance,
               c.correct ? 1.0 : 0.0});
    }
  }
  nlohmann::json summary;
  summary["ate_dead_reckoned"] = report.ate_dead_reckoned;
  summary["ate_optimized"] = report.ate_optimized;
  summary["closure_precision"] = report.closure_precision;
  summary["closures"] = report.closures.size();
  summary["keyframes"] = report.truth.size();
  summary["accept_radius"] = opts.accept_radius;
  summary["final_chi2"] = report.last_optimize.final_chi2;
  auto outfile = open_output(cfg.out_dir / "slam_summary.json");
  outfile << summary.dump(2) << '\n';
  return report;
}

// generate -> train -> eval -> slam, each stage reading the files the
// previous one wrote.
inline void cmd_pipeline(const RunConfig& cfg,
                         const nlohmann::json& config_echo) {
  cmd_generate(cfg);
  cmd_train(cfg, config_echo);
  cmd_eval(cfg);
  cmd_slam(cfg);
}

}  // namespace placerec
