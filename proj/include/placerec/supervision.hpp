#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "placerec/errors.hpp"
#include "placerec/geometry.hpp"
#include "placerec/ingest.hpp"
#include "placerec/random.hpp"

namespace placerec {

// Gaussian similarity kernel bandwidths. Defaults put K ~ 0.61 at a 10 m or
// pi/6 offset, matching a forward camera's viewing frustum.
struct KernelParams {
  double gamma_t = 1.0 / (2.0 * 10.0 * 10.0);             // 1/m^2
  double gamma_r = 1.0 / (2.0 * (kPi / 6.0) * (kPi / 6.0));  // 1/rad^2
};

// K = exp(-gamma_t |t_i - t_j|^2) * exp(-gamma_r wrap(theta_i - theta_j)^2).
inline double kernel(const GpsFix& zi, const GpsFix& zj,
                     const KernelParams& p) {
  const double dx = zi.x - zj.x;
  const double dy = zi.y - zj.y;
  const double dr = wrap_angle(zi.bearing - zj.bearing);
  return std::exp(-p.gamma_t * (dx * dx + dy * dy)) *
         std::exp(-p.gamma_r * dr * dr);
}

struct SimilarityMatrix {
  int n = 0;
  Eigen::MatrixXd values;
};

// Keyframe self-similarity; symmetric with unit diagonal by construction.
inline SimilarityMatrix self_similarity(const std::vector<Keyframe>& frames,
                                        const KernelParams& p) {
  if (frames.empty()) {
    throw DataError("self_similarity: no keyframes");
  }
  SimilarityMatrix sim;
  sim.n = static_cast<int>(frames.size());
  sim.values.resize(sim.n, sim.n);
  for (int i = 0; i < sim.n; ++i) {
    sim.values(i, i) = 1.0;
    for (int j = i + 1; j < sim.n; ++j) {
      const double k = kernel(frames[i].fix, frames[j].fix, p);
      sim.values(i, j) = k;
      sim.values(j, i) = k;
    }
  }
  return sim;
}

// tau_n < tau_p; K above tau_p labels a positive, below tau_n a negative.
struct LabelThresholds {
  double tau_p = 0.9;
  double tau_n = 0.4;
};

struct PairSet {
  std::vector<std::pair<int, int>> positives;  // i < j
  std::vector<std::pair<int, int>> negatives;  // i < j
  // Sampling weight per negative (inverse raw-descriptor distance, clamped);
  // filled by attach_sampling_weights. Positives are drawn uniformly.
  std::vector<double> negative_weights;
};

// Thresholds the similarity matrix into positive/negative index pairs.
// Pairs closer than temporal_guard keyframes are skipped so trivially
// adjacent frames never count as loop-closure supervision.
inline PairSet label_pairs(const SimilarityMatrix& sim,
                           const LabelThresholds& th, int temporal_guard) {
  if (!(th.tau_n < th.tau_p) || th.tau_p <= 0.0 || th.tau_p >= 1.0 ||
      th.tau_n <= 0.0 || th.tau_n >= 1.0) {
    throw ConfigError("label thresholds must satisfy 0 < tau_n < tau_p < 1");
  }
  PairSet pairs;
  for (int i = 0; i < sim.n; ++i) {
    for (int j = i + temporal_guard + 1; j < sim.n; ++j) {
      const double k = sim.values(i, j);
      if (k > th.tau_p) {
        pairs.positives.emplace_back(i, j);
      } else if (k < th.tau_n) {
        pairs.negatives.emplace_back(i, j);
      }
    }
  }
  return pairs;
}

// Inverse-distance sampling weights in the original feature space, clamped
// to [0.1, 10] x median to control variance.
inline void attach_sampling_weights(
    PairSet& pairs, const std::vector<Eigen::VectorXd>& descriptors) {
  pairs.negative_weights.clear();
  pairs.negative_weights.reserve(pairs.negatives.size());
  constexpr double kOffset = 1e-6;
  for (const auto& [i, j] : pairs.negatives) {
    const double d = (descriptors[static_cast<std::size_t>(i)] -
                      descriptors[static_cast<std::size_t>(j)])
                         .norm();
    pairs.negative_weights.push_back(1.0 / (d + kOffset));
  }
  if (pairs.negative_weights.empty()) return;
  std::vector<double> sorted = pairs.negative_weights;
  std::sort(sorted.begin(), sorted.end());
  const std::size_t m = sorted.size();
  const double median = (m % 2 == 1)
                            ? sorted[m / 2]
                            : 0.5 * (sorted[m / 2 - 1] + sorted[m / 2]);
  const double lo = 0.1 * median;
  const double hi = 10.0 * median;
  for (double& w : pairs.negative_weights) {
    w = std::min(std::max(w, lo), hi);
  }
}

struct LabeledPair {
  int i = 0;
  int j = 0;
  int y = 0;  // 1 = similar, 0 = dissimilar
};

namespace detail {

// Weighted sampling without replacement (Efraimidis-Spirakis keys); returns
// the chosen indices in deterministic order.
inline std::vector<std::size_t> weighted_sample_without_replacement(
    const std::vector<double>& weights, std::size_t count, RngStream& rng) {
  std::vector<std::pair<double, std::size_t>> keys;
  keys.reserve(weights.size());
  for (std::size_t idx = 0; idx < weights.size(); ++idx) {
    const double u = 1.0 - rng.uniform();  // (0, 1]
    keys.emplace_back(std::log(u) / weights[idx], idx);
  }
  std::partial_sort(keys.begin(), keys.begin() + static_cast<long>(count),
                    keys.end(), [](const auto& a, const auto& b) {
                      if (a.first != b.first) return a.first > b.first;
                      return a.second < b.second;
                    });
  std::vector<std::size_t> chosen(count);
  for (std::size_t k = 0; k < count; ++k) chosen[k] = keys[k].second;
  return chosen;
}

}  // namespace detail

// Draws batch_positives uniform positives plus neg_ratio times as many
// negatives, the latter weighted by inverse raw-descriptor distance.
inline std::vector<LabeledPair> sample_batch(
    const PairSet& pairs, const std::vector<Eigen::VectorXd>& descriptors,
    RngStream& rng, int batch_positives, int neg_ratio = 10) {
  if (batch_positives < 1 || neg_ratio < 1) {
    throw ConfigError("sample_batch: batch sizes must be positive");
  }
  const std::size_t want_pos = static_cast<std::size_t>(batch_positives);
  const std::size_t want_neg = want_pos * static_cast<std::size_t>(neg_ratio);
  if (want_pos > pairs.positives.size()) {
    throw DataError("sample_batch: requested " + std::to_string(want_pos) +
                    " positives but only " +
                    std::to_string(pairs.positives.size()) + " available");
  }
  if (want_neg > pairs.negatives.size()) {
    throw DataError("sample_batch: requested " + std::to_string(want_neg) +
                    " negatives but only " +
                    std::to_string(pairs.negatives.size()) + " available");
  }

  std::vector<LabeledPair> batch;
  batch.reserve(want_pos + want_neg);

  // Uniform positives via partial Fisher-Yates.
  std::vector<std::size_t> pos_idx(pairs.positives.size());
  std::iota(pos_idx.begin(), pos_idx.end(), std::size_t{0});
  for (std::size_t k = 0; k < want_pos; ++k) {
    const std::size_t pick =
        k + rng.uniform_index(static_cast<std::uint64_t>(pos_idx.size() - k));
    std::swap(pos_idx[k], pos_idx[pick]);
    const auto& [i, j] = pairs.positives[pos_idx[k]];
    batch.push_back({i, j, 1});
  }

  const std::vector<double>* weights = &pairs.negative_weights;
  PairSet scratch;
  if (weights->size() != pairs.negatives.size()) {
    scratch.negatives = pairs.negatives;
    attach_sampling_weights(scratch, descriptors);
    weights = &scratch.negative_weights;
  }
  for (std::size_t idx :
       detail::weighted_sample_without_replacement(*weights, want_neg, rng)) {
    const auto& [i, j] = pairs.negatives[idx];
    batch.push_back({i, j, 0});
  }
  return batch;
}

}  // namespace placerec
