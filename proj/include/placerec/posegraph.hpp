#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>
#include <Eigen/SparseCholesky>
#include <Eigen/SparseCore>

#include "placerec/embedding.hpp"
#include "placerec/errors.hpp"
#include "placerec/evaluate.hpp"
#include "placerec/geometry.hpp"
#include "placerec/ingest.hpp"
#include "placerec/kdtree.hpp"
#include "placerec/random.hpp"

namespace placerec {

// Per-step odometry perturbation used to simulate dead-reckoning drift.
struct NoiseSpec {
  double sigma_rot = 1e-3;    // radians
  double sigma_trans = 5e-2;  // meters
};

enum class FactorKind { kPrior, kOdometry, kLoop };

struct Factor {
  FactorKind kind = FactorKind::kOdometry;
  int i = 0;
  int j = 0;  // unused for priors
  Pose2 measurement;
  Eigen::Matrix3d information = Eigen::Matrix3d::Identity();
};

struct PoseGraph {
  std::vector<Pose2> nodes;
  std::vector<Factor> factors;
};

// New graph with node 0 anchored at `initial` by its single prior factor.
inline PoseGraph make_pose_graph(const Pose2& initial) {
  PoseGraph graph;
  graph.nodes.push_back(initial);
  Factor prior;
  prior.kind = FactorKind::kPrior;
  prior.i = 0;
  prior.measurement = initial;
  prior.information = Eigen::Matrix3d::Identity() * 1e6;
  graph.factors.push_back(prior);
  return graph;
}

inline Pose2 inject_noise(const Pose2& true_rel, const NoiseSpec& spec,
                          RngStream& rng) {
  const double nx = rng.normal(0.0, spec.sigma_trans);
  const double ny = rng.normal(0.0, spec.sigma_trans);
  const double nt = rng.normal(0.0, spec.sigma_rot);
  return {true_rel.x + nx, true_rel.y + ny, true_rel.theta + nt};
}

namespace detail {

// Zero sigma means a noise-free measurement; floor it so the information
// stays finite.
inline double information_entry(double sigma) {
  const double s = std::max(sigma, 1e-6);
  return 1.0 / (s * s);
}

}  // namespace detail

// Appends the odometry factor (i, i+1) and dead-reckons the new node from
// node i's current estimate. i must be the newest node.
inline void add_odometry(PoseGraph& graph, int i, const Pose2& measured_rel,
                         const NoiseSpec& spec) {
  if (i != static_cast<int>(graph.nodes.size()) - 1) {
    throw DataError("add_odometry: node " + std::to_string(i) +
                    " is not the newest node");
  }
  Factor f;
  f.kind = FactorKind::kOdometry;
  f.i = i;
  f.j = i + 1;
  f.measurement = measured_rel;
  f.information = Eigen::Vector3d(detail::information_entry(spec.sigma_trans),
                                  detail::information_entry(spec.sigma_trans),
                                  detail::information_entry(spec.sigma_rot))
                      .asDiagonal();
  graph.factors.push_back(f);
  graph.nodes.push_back(se2_compose(graph.nodes[std::size_t(i)], measured_rel));
}

// Zero-measurement loop constraint with the weak 3 m / 0.3 rad covariance;
// the slack covers the fact that matched frames need not coincide exactly.
inline void add_loop_closure(PoseGraph& graph, int i, int j) {
  const int n = static_cast<int>(graph.nodes.size());
  if (i == j || i < 0 || j < 0 || i >= n || j >= n) {
    throw DataError("add_loop_closure: invalid node pair (" +
                    std::to_string(i) + ", " + std::to_string(j) + ")");
  }
  const auto key = std::minmax(i, j);
  for (const auto& f : graph.factors) {
    if (f.kind == FactorKind::kLoop && std::minmax(f.i, f.j) == key) {
      throw DataError("add_loop_closure: duplicate loop factor (" +
                      std::to_string(i) + ", " + std::to_string(j) + ")");
    }
  }
  Factor f;
  f.kind = FactorKind::kLoop;
  f.i = i;
  f.j = j;
  f.measurement = Pose2::identity();
  f.information =
      Eigen::Vector3d(1.0 / 9.0, 1.0 / 9.0, 1.0 / 0.09).asDiagonal();
  graph.factors.push_back(f);
}

namespace detail {

inline Eigen::Vector3d factor_residual(const Factor& f,
                                       const std::vector<Pose2>& nodes) {
  if (f.kind == FactorKind::kPrior) {
    return se2_relative(f.measurement, nodes[std::size_t(f.i)]).vec();
  }
  const Pose2 rel =
      se2_relative(nodes[std::size_t(f.i)], nodes[std::size_t(f.j)]);
  return se2_relative(f.measurement, rel).vec();
}

inline double graph_chi2(const PoseGraph& graph) {
  double chi2 = 0.0;
  for (const auto& f : graph.factors) {
    const Eigen::Vector3d r = factor_residual(f, graph.nodes);
    chi2 += r.dot(f.information * r);
  }
  return chi2;
}

// Jacobians of the relative-factor residual with respect to the two poses.
inline void relative_jacobians(const Factor& f,
                               const std::vector<Pose2>& nodes,
                               Eigen::Matrix3d& ji, Eigen::Matrix3d& jj) {
  const Pose2& a = nodes[std::size_t(f.i)];
  const Pose2& b = nodes[std::size_t(f.j)];
  const double ci = std::cos(a.theta), si = std::sin(a.theta);
  const double cz = std::cos(f.measurement.theta);
  const double sz = std::sin(f.measurement.theta);
  Eigen::Matrix2d rit;  // R(theta_i)^T
  rit << ci, si, -si, ci;
  Eigen::Matrix2d rzt;  // R(theta_z)^T
  rzt << cz, sz, -sz, cz;
  Eigen::Matrix2d drit;  // d(R^T)/dtheta at theta_i
  drit << -si, ci, -ci, -si;
  const Eigen::Vector2d dt(b.x - a.x, b.y - a.y);

  ji.setZero();
  ji.block<2, 2>(0, 0) = -rzt * rit;
  ji.block<2, 1>(0, 2) = rzt * (drit * dt);
  ji(2, 2) = -1.0;

  jj.setZero();
  jj.block<2, 2>(0, 0) = rzt * rit;
  jj(2, 2) = 1.0;
}

inline void check_connectivity(const PoseGraph& graph) {
  const int n = static_cast<int>(graph.nodes.size());
  std::vector<int> parent(static_cast<std::size_t>(n));
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](int v) {
    while (parent[std::size_t(v)] != v) {
      parent[std::size_t(v)] = parent[std::size_t(parent[std::size_t(v)])];
      v = parent[std::size_t(v)];
    }
    return v;
  };
  for (const auto& f : graph.factors) {
    if (f.kind == FactorKind::kPrior) continue;
    parent[std::size_t(find(f.i))] = find(f.j);
  }
  const int root = find(0);
  for (int v = 1; v < n; ++v) {
    if (find(v) != root) {
      throw NumericalError(
          "optimize: singular normal equations (node " + std::to_string(v) +
          " is not connected to the gauge)");
    }
  }
}

}  // namespace detail

struct OptimizeReport {
  double initial_chi2 = 0.0;
  double final_chi2 = 0.0;
  int iterations = 0;
  bool converged = true;
  double last_update_norm = 0.0;
};

// Batch re-linearized Gauss-Newton with Levenberg damping. Node 0 is pinned
// to the prior measurement (gauge); the damping factor grows tenfold on a
// chi2 increase and shrinks tenfold on acceptance, so accepted iterations
// never increase chi2.
inline OptimizeReport optimize(PoseGraph& graph, int max_iters = 50,
                               double tol = 1e-8) {
  std::size_t prior_count = 0;
  const Factor* prior = nullptr;
  for (const auto& f : graph.factors) {
    if (f.kind == FactorKind::kPrior) {
      ++prior_count;
      prior = &f;
    }
  }
  if (prior_count != 1) {
    throw DataError("optimize: graph must have exactly one prior factor");
  }
  detail::check_connectivity(graph);

  graph.nodes[std::size_t(prior->i)] = prior->measurement;
  const int n = static_cast<int>(graph.nodes.size());
  const int dof = 3 * (n - 1);

  OptimizeReport report;
  report.initial_chi2 = detail::graph_chi2(graph);
  report.final_chi2 = report.initial_chi2;
  if (dof == 0) {
    return report;
  }

  double lambda = 1e-6;
  double chi2 = report.initial_chi2;
  for (int iter = 0; iter < max_iters; ++iter) {
    report.iterations = iter + 1;

    std::vector<Eigen::Triplet<double>> triplets;
    Eigen::VectorXd g = Eigen::VectorXd::Zero(dof);
    auto base = [](int v) { return 3 * (v - 1); };
    auto add_block = [&](int vr, int vc, const Eigen::Matrix3d& m) {
      if (vr == 0 || vc == 0) return;  // gauge node is fixed
      for (int r = 0; r < 3; ++r) {
        for (int c = 0; c < 3; ++c) {
          triplets.emplace_back(base(vr) + r, base(vc) + c, m(r, c));
        }
      }
    };
    for (const auto& f : graph.factors) {
      if (f.kind == FactorKind::kPrior) continue;
      const Eigen::Vector3d r = detail::factor_residual(f, graph.nodes);
      Eigen::Matrix3d ji, jj;
      detail::relative_jacobians(f, graph.nodes, ji, jj);
      add_block(f.i, f.i, ji.transpose() * f.information * ji);
      add_block(f.i, f.j, ji.transpose() * f.information * jj);
      add_block(f.j, f.i, jj.transpose() * f.information * ji);
      add_block(f.j, f.j, jj.transpose() * f.information * jj);
      if (f.i != 0) g.segment<3>(base(f.i)) += ji.transpose() * f.information * r;
      if (f.j != 0) g.segment<3>(base(f.j)) += jj.transpose() * f.information * r;
    }
    for (int d = 0; d < dof; ++d) {
      triplets.emplace_back(d, d, lambda);
    }
    Eigen::SparseMatrix<double> h(dof, dof);
    h.setFromTriplets(triplets.begin(), triplets.end());
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver(h);
    if (solver.info() != Eigen::Success) {
      throw NumericalError("optimize: singular normal equations");
    }
    const Eigen::VectorXd delta = solver.solve(-g);
    if (solver.info() != Eigen::Success || !delta.allFinite()) {
      throw NumericalError("optimize: normal equation solve failed");
    }

    std::vector<Pose2> candidate = graph.nodes;
    for (int v = 1; v < n; ++v) {
      candidate[std::size_t(v)] =
          Pose2(candidate[std::size_t(v)].x + delta[base(v) + 0],
                candidate[std::size_t(v)].y + delta[base(v) + 1],
                candidate[std::size_t(v)].theta + delta[base(v) + 2]);
    }
    PoseGraph trial{candidate, graph.factors};
    const double chi2_new = detail::graph_chi2(trial);

    report.last_update_norm = delta.norm();
    if (chi2_new < chi2) {
      graph.nodes = std::move(candidate);
      chi2 = chi2_new;
      lambda = std::max(lambda / 10.0, 1e-12);
      if (report.last_update_norm < tol) {
        break;
      }
    } else {
      lambda *= 10.0;
      if (lambda > 1e12) {
        break;  // no usable descent direction left
      }
    }
  }
  report.final_chi2 = chi2;
  report.converged = report.last_update_norm <= 1e-3;
  return report;
}

// Positional RMSE against ground truth. No alignment is applied; the gauge is
// already fixed by the prior at the truth's first pose.
inline double ate_rmse(const std::vector<Pose2>& estimated,
                       const std::vector<Pose2>& truth) {
  if (estimated.size() != truth.size() || estimated.empty()) {
    throw DataError("ate_rmse: trajectory length mismatch");
  }
  double sum = 0.0;
  for (std::size_t k = 0; k < estimated.size(); ++k) {
    const double dx = estimated[k].x - truth[k].x;
    const double dy = estimated[k].y - truth[k].y;
    sum += dx * dx + dy * dy;
  }
  return std::sqrt(sum / static_cast<double>(estimated.size()));
}

struct SlamOptions {
  double accept_radius = 1.0;  // embedding distance gate; margin alpha
  int temporal_guard = 10;     // keyframes
  int optimize_every = 10;     // insertions between re-optimizations
  NoiseSpec noise;
  std::uint64_t seed = 42;
  int max_iters = 50;
  double tol = 1e-8;
  GroundTruthRule truth_rule;  // scoring of accepted closures
};

struct ClosureRecord {
  int i = 0;  // matched (earlier) node
  int j = 0;  // query node
  double embedded_distance = 0.0;
  double truth_distance = 0.0;
  bool correct = false;
};

struct SlamReport {
  std::vector<Pose2> truth;
  std::vector<Pose2> dead_reckoned;
  std::vector<Pose2> optimized;
  std::vector<ClosureRecord> closures;
  double ate_dead_reckoned = 0.0;
  double ate_optimized = 0.0;
  double closure_precision = 1.0;  // 1.0 when no closures were proposed
  OptimizeReport last_optimize;
};

// Sequential loop-closure SLAM over keyframes: embed, query the index inside
// accept_radius (temporal guard applied), constrain accepted matches, extend
// the chain with noise-injected odometry from truth, re-optimize every
// optimize_every insertions and once at the end.
inline SlamReport run_slam_experiment(const std::vector<Keyframe>& frames,
                                      const std::vector<Pose2>& truth,
                                      const EmbeddingModel& model,
                                      const SlamOptions& opts) {
  if (frames.empty() || truth.size() != frames.size()) {
    throw DataError("run_slam_experiment: frames/truth mismatch");
  }
  RngStream rng(opts.seed);
  SlamReport report;
  report.truth = truth;

  PoseGraph graph = make_pose_graph(truth.front());
  KdIndex index(model.output_dim());
  report.dead_reckoned.push_back(truth.front());

  const int n = static_cast<int>(frames.size());
  for (int k = 0; k < n; ++k) {
    if (k > 0) {
      const Pose2 true_rel =
          se2_relative(truth[std::size_t(k - 1)], truth[std::size_t(k)]);
      const Pose2 noisy = inject_noise(true_rel, opts.noise, rng);
      add_odometry(graph, k - 1, noisy, opts.noise);
      report.dead_reckoned.push_back(
          se2_compose(report.dead_reckoned.back(), noisy));
    }

    const Eigen::VectorXd phi = forward(model, frames[std::size_t(k)].descriptor.d);
    for (const auto& [id, dist] : index.query_radius(phi, opts.accept_radius)) {
      if (k - id <= opts.temporal_guard) continue;
      add_loop_closure(graph, id, k);
      ClosureRecord rec;
      rec.i = id;
      rec.j = k;
      rec.embedded_distance = dist;
      rec.truth_distance =
          position_distance(truth[std::size_t(id)], truth[std::size_t(k)]);
      rec.correct = rec.truth_distance < opts.truth_rule.dist_thresh &&
                    (!opts.truth_rule.bearing_aware ||
                     bearing_gap(truth[std::size_t(id)], truth[std::size_t(k)]) <
                         opts.truth_rule.bearing_thresh);
      report.closures.push_back(rec);
    }
    index.insert(k, phi);

    if ((k + 1) % opts.optimize_every == 0) {
      report.last_optimize = optimize(graph, opts.max_iters, opts.tol);
    }
  }
  report.last_optimize = optimize(graph, opts.max_iters, opts.tol);
  report.optimized = graph.nodes;

  report.ate_dead_reckoned = ate_rmse(report.dead_reckoned, truth);
  report.ate_optimized = ate_rmse(report.optimized, truth);
  if (!report.closures.empty()) {
    std::size_t correct = 0;
    for (const auto& c : report.closures) correct += c.correct ? 1 : 0;
    report.closure_precision =
        static_cast<double>(correct) / static_cast<double>(report.closures.size());
  }
  return report;
}

}  // namespace placerec
