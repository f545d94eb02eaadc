#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "placerec/embedding.hpp"
#include "placerec/errors.hpp"
#include "placerec/geometry.hpp"
#include "placerec/ingest.hpp"

namespace placerec {

// What counts as a true loop closure when scoring proposals: GPS separation
// under dist_thresh (and bearing gap under bearing_thresh when bearing_aware),
// while histogram negatives must be at least neg_floor apart.
struct GroundTruthRule {
  double dist_thresh = 20.0;  // meters
  bool bearing_aware = true;
  double neg_floor = 50.0;  // meters
  double bearing_thresh = kPi / 6.0;
};

inline bool is_true_match(const GpsFix& a, const GpsFix& b,
                          const GroundTruthRule& rule) {
  const double d = std::hypot(a.x - b.x, a.y - b.y);
  if (d >= rule.dist_thresh) return false;
  if (rule.bearing_aware &&
      std::abs(wrap_angle(a.bearing - b.bearing)) >= rule.bearing_thresh) {
    return false;
  }
  return true;
}

struct PrPoint {
  double threshold = 0.0;
  double precision = 1.0;
  double recall = 0.0;
};

struct PrCurve {
  std::vector<PrPoint> points;
  double auc = 0.0;
};

namespace detail {

struct ScoredPair {
  double distance;  // embedded distance
  bool correct;     // true loop closure under the rule
};

inline std::vector<ScoredPair> score_pairs(
    const std::vector<Keyframe>& frames,
    const std::vector<Eigen::VectorXd>& embeddings, int temporal_guard) {
  if (embeddings.size() != frames.size()) {
    throw DataError("pr_curve: embeddings not aligned with frames");
  }
  std::vector<ScoredPair> out;
  const int n = static_cast<int>(frames.size());
  for (int i = 0; i < n; ++i) {
    for (int j = i + temporal_guard + 1; j < n; ++j) {
      out.push_back({(embeddings[std::size_t(i)] - embeddings[std::size_t(j)])
                         .norm(),
                     false});
    }
  }
  return out;
}

// Trapezoid over recall, anchored at (recall 0, precision 1).
inline double pr_auc(const std::vector<PrPoint>& points) {
  double auc = 0.0;
  double prev_recall = 0.0;
  double prev_precision = 1.0;
  for (const auto& p : points) {
    auc += (p.recall - prev_recall) * 0.5 * (p.precision + prev_precision);
    prev_recall = p.recall;
    prev_precision = p.precision;
  }
  return auc;
}

}  // namespace detail

// Sweeps a distance threshold over guarded keyframe pairs: a pair is proposed
// when its embedded distance is at or below the threshold, and a proposal is
// correct when the rule holds on the GPS fixes. Precision is 1.0 when nothing
// is proposed.
inline PrCurve pr_curve(const std::vector<Keyframe>& frames,
                        const std::vector<Eigen::VectorXd>& embeddings,
                        const GroundTruthRule& rule, int temporal_guard,
                        const std::vector<double>& sweep) {
  if (!std::is_sorted(sweep.begin(), sweep.end())) {
    throw ConfigError("pr_curve: sweep thresholds must be ascending");
  }
  auto pairs = detail::score_pairs(frames, embeddings, temporal_guard);
  std::size_t total_gt = 0;
  {
    const int n = static_cast<int>(frames.size());
    std::size_t idx = 0;
    for (int i = 0; i < n; ++i) {
      for (int j = i + temporal_guard + 1; j < n; ++j) {
        pairs[idx].correct =
            is_true_match(frames[std::size_t(i)].fix,
                          frames[std::size_t(j)].fix, rule);
        total_gt += pairs[idx].correct ? 1 : 0;
        ++idx;
      }
    }
  }
  if (total_gt == 0) {
    throw DataError("pr_curve: undefined recall, no ground-truth positives");
  }
  std::sort(pairs.begin(), pairs.end(),
            [](const auto& a, const auto& b) { return a.distance < b.distance; });
  std::vector<std::size_t> prefix_correct(pairs.size() + 1, 0);
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    prefix_correct[k + 1] = prefix_correct[k] + (pairs[k].correct ? 1 : 0);
  }

  PrCurve curve;
  for (double tau : sweep) {
    const auto it = std::upper_bound(
        pairs.begin(), pairs.end(), tau,
        [](double value, const auto& p) { return value < p.distance; });
    const auto proposed = static_cast<std::size_t>(it - pairs.begin());
    const std::size_t correct = prefix_correct[proposed];
    PrPoint point;
    point.threshold = tau;
    point.precision = proposed == 0
                          ? 1.0
                          : static_cast<double>(correct) / proposed;
    point.recall = static_cast<double>(correct) / total_gt;
    curve.points.push_back(point);
  }
  curve.auc = detail::pr_auc(curve.points);
  return curve;
}

// k-NN variant: a pair is proposed when either endpoint ranks inside the
// other's k nearest guarded neighbors (ranks swept over ks).
inline PrCurve pr_curve_knn(const std::vector<Keyframe>& frames,
                            const std::vector<Eigen::VectorXd>& embeddings,
                            const GroundTruthRule& rule, int temporal_guard,
                            const std::vector<int>& ks) {
  if (embeddings.size() != frames.size()) {
    throw DataError("pr_curve_knn: embeddings not aligned with frames");
  }
  const int n = static_cast<int>(frames.size());
  // rank[i][j]: position of pair (i,j) in i's guarded neighbor ordering.
  std::vector<std::vector<int>> rank(
      static_cast<std::size_t>(n), std::vector<int>(static_cast<std::size_t>(n), n + 1));
  for (int i = 0; i < n; ++i) {
    std::vector<std::pair<double, int>> neighbors;
    for (int j = 0; j < n; ++j) {
      if (std::abs(i - j) <= temporal_guard) continue;
      neighbors.emplace_back(
          (embeddings[std::size_t(i)] - embeddings[std::size_t(j)]).norm(), j);
    }
    std::sort(neighbors.begin(), neighbors.end());
    for (std::size_t r = 0; r < neighbors.size(); ++r) {
      rank[std::size_t(i)][std::size_t(neighbors[r].second)] =
          static_cast<int>(r) + 1;
    }
  }
  std::size_t total_gt = 0;
  std::vector<std::pair<int, bool>> pair_rank;  // (best rank, correct)
  for (int i = 0; i < n; ++i) {
    for (int j = i + temporal_guard + 1; j < n; ++j) {
      const bool correct = is_true_match(frames[std::size_t(i)].fix,
                                         frames[std::size_t(j)].fix, rule);
      total_gt += correct ? 1 : 0;
      pair_rank.emplace_back(std::min(rank[std::size_t(i)][std::size_t(j)],
                                      rank[std::size_t(j)][std::size_t(i)]),
                             correct);
    }
  }
  if (total_gt == 0) {
    throw DataError("pr_curve_knn: undefined recall, no ground-truth positives");
  }
  PrCurve curve;
  for (int k : ks) {
    std::size_t proposed = 0;
    std::size_t correct = 0;
    for (const auto& [r, ok] : pair_rank) {
      if (r <= k) {
        ++proposed;
        correct += ok ? 1 : 0;
      }
    }
    PrPoint point;
    point.threshold = static_cast<double>(k);
    point.precision = proposed == 0
                          ? 1.0
                          : static_cast<double>(correct) / proposed;
    point.recall = static_cast<double>(correct) / total_gt;
    curve.points.push_back(point);
  }
  curve.auc = detail::pr_auc(curve.points);
  return curve;
}

struct HistogramResult {
  std::vector<double> edges;     // bins + 1 edges from 0 to max distance
  std::vector<double> pos_mass;  // sums to 1
  std::vector<double> neg_mass;  // sums to 1
  double overlap = 0.0;          // sum of per-bin minima
};

// Embedding-distance histograms for positive pairs (under the rule) and
// negative pairs (at least neg_floor apart), over shared bin edges.
inline HistogramResult distance_histograms(
    const std::vector<Keyframe>& frames,
    const std::vector<Eigen::VectorXd>& embeddings,
    const GroundTruthRule& rule, int bins) {
  if (embeddings.size() != frames.size()) {
    throw DataError("distance_histograms: embeddings not aligned with frames");
  }
  if (bins < 1) {
    throw ConfigError("distance_histograms: bins must be >= 1");
  }
  std::vector<double> pos_d;
  std::vector<double> neg_d;
  const int n = static_cast<int>(frames.size());
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      const auto& fa = frames[std::size_t(i)].fix;
      const auto& fb = frames[std::size_t(j)].fix;
      const double gps_dist = std::hypot(fa.x - fb.x, fa.y - fb.y);
      const double emb_dist =
          (embeddings[std::size_t(i)] - embeddings[std::size_t(j)]).norm();
      if (is_true_match(fa, fb, rule)) {
        pos_d.push_back(emb_dist);
      } else if (gps_dist >= rule.neg_floor) {
        neg_d.push_back(emb_dist);
      }
    }
  }
  if (pos_d.empty() || neg_d.empty()) {
    throw DataError("distance_histograms: empty positive or negative class");
  }
  double dmax = 0.0;
  for (double d : pos_d) dmax = std::max(dmax, d);
  for (double d : neg_d) dmax = std::max(dmax, d);
  if (dmax <= 0.0) dmax = 1.0;

  HistogramResult result;
  result.edges.resize(static_cast<std::size_t>(bins) + 1);
  for (int b = 0; b <= bins; ++b) {
    result.edges[std::size_t(b)] = dmax * b / bins;
  }
  result.pos_mass.assign(static_cast<std::size_t>(bins), 0.0);
  result.neg_mass.assign(static_cast<std::size_t>(bins), 0.0);
  auto bin_of = [&](double d) {
    auto b = static_cast<int>(d / dmax * bins);
    return std::min(b, bins - 1);
  };
  for (double d : pos_d) result.pos_mass[std::size_t(bin_of(d))] += 1.0;
  for (double d : neg_d) result.neg_mass[std::size_t(bin_of(d))] += 1.0;
  for (double& m : result.pos_mass) m /= static_cast<double>(pos_d.size());
  for (double& m : result.neg_mass) m /= static_cast<double>(neg_d.size());
  for (int b = 0; b < bins; ++b) {
    result.overlap +=
        std::min(result.pos_mass[std::size_t(b)], result.neg_mass[std::size_t(b)]);
  }
  return result;
}

inline std::vector<double> linear_sweep(
    const std::vector<Eigen::VectorXd>& embeddings, int points) {
  double dmax = 0.0;
  for (std::size_t i = 0; i < embeddings.size(); ++i) {
    for (std::size_t j = i + 1; j < embeddings.size(); ++j) {
      dmax = std::max(dmax, (embeddings[i] - embeddings[j]).norm());
    }
  }
  if (dmax <= 0.0) dmax = 1.0;
  std::vector<double> sweep(static_cast<std::size_t>(points));
  for (int p = 0; p < points; ++p) {
    sweep[std::size_t(p)] = dmax * (p + 1) / points;
  }
  return sweep;
}

struct SpaceComparison {
  PrCurve pr_raw;
  PrCurve pr_learned;
  HistogramResult hist_raw;
  HistogramResult hist_learned;
};

// Runs the section-V protocol in the raw descriptor space and in the learned
// embedding space. When no explicit sweep is given, each space gets a linear
// sweep to its own maximum pair distance so both curves reach full recall.
inline SpaceComparison compare_spaces(const std::vector<Keyframe>& frames,
                                      const EmbeddingModel& model,
                                      const GroundTruthRule& rule,
                                      int temporal_guard, int sweep_points,
                                      int bins,
                                      const std::vector<double>& explicit_sweep = {}) {
  std::vector<Eigen::VectorXd> raw;
  std::vector<Eigen::VectorXd> learned;
  raw.reserve(frames.size());
  learned.reserve(frames.size());
  for (const auto& kf : frames) {
    raw.push_back(kf.descriptor.d);
    learned.push_back(forward(model, kf.descriptor.d));
  }
  SpaceComparison cmp;
  const auto sweep_raw =
      explicit_sweep.empty() ? linear_sweep(raw, sweep_points) : explicit_sweep;
  const auto sweep_learned = explicit_sweep.empty()
                                 ? linear_sweep(learned, sweep_points)
                                 : explicit_sweep;
  cmp.pr_raw = pr_curve(frames, raw, rule, temporal_guard, sweep_raw);
  cmp.pr_learned =
      pr_curve(frames, learned, rule, temporal_guard, sweep_learned);
  cmp.hist_raw = distance_histograms(frames, raw, rule, bins);
  cmp.hist_learned = distance_histograms(frames, learned, rule, bins);
  return cmp;
}

// Fig.-3-style visual similarity matrix of an embedding: exp(-(D/sigma)^2)
// with sigma the median pairwise distance, so mid-range distances map to
// mid-gray regardless of the space's absolute scale.
inline Eigen::MatrixXd embedding_similarity_matrix(
    const std::vector<Eigen::VectorXd>& embeddings) {
  const auto n = static_cast<Eigen::Index>(embeddings.size());
  Eigen::MatrixXd dist(n, n);
  std::vector<double> all;
  for (Eigen::Index i = 0; i < n; ++i) {
    dist(i, i) = 0.0;
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double d =
          (embeddings[std::size_t(i)] - embeddings[std::size_t(j)]).norm();
      dist(i, j) = d;
      dist(j, i) = d;
      all.push_back(d);
    }
  }
  double sigma = 1.0;
  if (!all.empty()) {
    std::nth_element(all.begin(), all.begin() + static_cast<long>(all.size() / 2),
                     all.end());
    sigma = std::max(all[all.size() / 2], 1e-12);
  }
  return (-(dist / sigma).array().square()).exp().matrix();
}

}  // namespace placerec
