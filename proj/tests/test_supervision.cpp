#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <map>

#include "placerec/supervision.hpp"
#include "placerec/synthworld.hpp"

using namespace placerec;

namespace {

Keyframe frame_at(int id, double x, double y, double bearing = 0.0) {
  Keyframe kf;
  kf.id = id;
  kf.fix.x = x;
  kf.fix.y = y;
  kf.fix.bearing = bearing;
  kf.descriptor.d = Eigen::VectorXd::Zero(2);
  return kf;
}

}  // namespace

TEST_CASE("kernel evaluates the Gaussian product") {
  KernelParams p;
  GpsFix a;
  a.x = 1.0;
  a.y = 2.0;
  a.bearing = 0.5;
  CHECK(kernel(a, a, p) == 1.0);

  KernelParams pt;
  pt.gamma_t = 0.01;
  GpsFix b = a;
  b.x = a.x + 10.0;
  CHECK(kernel(a, b, pt) == Catch::Approx(std::exp(-1.0)).epsilon(1e-9));
  CHECK(kernel(a, b, pt) == kernel(b, a, pt));
}

TEST_CASE("kernel rotation term uses the wrapped bearing difference") {
  KernelParams p;
  p.gamma_t = 0.01;
  p.gamma_r = 2.0;
  GpsFix a;
  a.bearing = kPi - 0.1;
  GpsFix b;
  b.bearing = -kPi + 0.1;
  // Wrapped gap is 0.2 rad, not 2*pi - 0.2.
  CHECK(kernel(a, b, p) == Catch::Approx(std::exp(-0.08)).epsilon(1e-9));
  CHECK(kernel(a, b, p) == Catch::Approx(0.92312).margin(1e-5));
}

TEST_CASE("kernel decreases monotonically with distance") {
  KernelParams p;
  GpsFix a;
  double prev = 2.0;
  for (double d = 0.0; d <= 50.0; d += 2.5) {
    GpsFix b;
    b.x = d;
    const double k = kernel(a, b, p);
    CHECK(k < prev);
    CHECK(k > 0.0);
    CHECK(k <= 1.0);
    prev = k;
  }
}

TEST_CASE("self_similarity is symmetric with unit diagonal") {
  KernelParams p;
  const auto one = self_similarity({frame_at(0, 0, 0)}, p);
  REQUIRE(one.n == 1);
  CHECK(one.values(0, 0) == 1.0);

  KernelParams pt;
  pt.gamma_t = 0.01;
  const auto sim = self_similarity(
      {frame_at(0, 0, 0), frame_at(1, 10, 0), frame_at(2, 20, 0)}, pt);
  CHECK(sim.values == sim.values.transpose());
  CHECK(sim.values(0, 1) == Catch::Approx(std::exp(-1.0)).epsilon(1e-9));
  CHECK(sim.values(0, 2) == Catch::Approx(std::exp(-4.0)).epsilon(1e-9));
  for (int i = 0; i < sim.n; ++i) {
    CHECK(sim.values(i, i) == 1.0);
  }
}

TEST_CASE("label_pairs applies thresholds and the temporal guard") {
  SimilarityMatrix sim;
  sim.n = 4;
  sim.values = Eigen::MatrixXd::Constant(4, 4, 0.01);
  sim.values.diagonal().setOnes();
  LabelThresholds th;
  const auto low = label_pairs(sim, th, 0);
  CHECK(low.positives.empty());
  CHECK(low.negatives.size() == 6);  // all off-diagonal unordered pairs

  sim.values(0, 1) = sim.values(1, 0) = 0.95;
  const auto with_pos = label_pairs(sim, th, 0);
  REQUIRE(with_pos.positives.size() == 1);
  CHECK(with_pos.positives[0] == std::make_pair(0, 1));

  const auto guarded = label_pairs(sim, th, 2);
  CHECK(guarded.positives.empty());
  for (const auto& [i, j] : guarded.negatives) {
    CHECK(j - i > 2);
  }

  LabelThresholds bad;
  bad.tau_n = 0.95;
  CHECK_THROWS_AS(label_pairs(sim, bad, 0), ConfigError);
}

TEST_CASE("labeled positives on a synthetic session are true co-locations") {
  WorldConfig wcfg;
  const auto session = generate_session(wcfg, 0);
  auto fixes = derive_bearings(to_local_fixes(
      GpsLog{false, session.gps_rows}));
  const auto synced = synchronize(session.descriptor_rows, fixes, 0.1);
  const auto frames = select_keyframes(synced.pairs);

  // Map keyframes back to truth samples via the shared time grid.
  std::map<double, std::size_t> time_to_sample;
  for (std::size_t s = 0; s < session.times.size(); ++s) {
    time_to_sample[session.times[s]] = s;
  }

  const auto sim = self_similarity(frames, KernelParams{});
  const auto pairs = label_pairs(sim, LabelThresholds{}, 10);
  REQUIRE_FALSE(pairs.positives.empty());
  for (const auto& [i, j] : pairs.positives) {
    const auto& a =
        session.truth_poses[time_to_sample.at(frames[std::size_t(i)].fix.t)];
    const auto& b =
        session.truth_poses[time_to_sample.at(frames[std::size_t(j)].fix.t)];
    CHECK(position_distance(a, b) < 5.0);
  }
}

TEST_CASE("negative kernel values sit strictly below positive ones") {
  WorldConfig wcfg;
  const auto session = generate_session(wcfg, 0);
  auto fixes = derive_bearings(to_local_fixes(GpsLog{false, session.gps_rows}));
  const auto synced = synchronize(session.descriptor_rows, fixes, 0.1);
  const auto frames = select_keyframes(synced.pairs);
  const auto sim = self_similarity(frames, KernelParams{});
  LabelThresholds th;
  const auto pairs = label_pairs(sim, th, 10);
  REQUIRE_FALSE(pairs.positives.empty());
  REQUIRE_FALSE(pairs.negatives.empty());
  double min_pos = 2.0, max_neg = -1.0;
  for (const auto& [i, j] : pairs.positives) {
    min_pos = std::min(min_pos, sim.values(i, j));
  }
  for (const auto& [i, j] : pairs.negatives) {
    max_neg = std::max(max_neg, sim.values(i, j));
  }
  CHECK(max_neg < min_pos);
  CHECK(min_pos > th.tau_p);
  CHECK(max_neg < th.tau_n);
}

TEST_CASE("sample_batch returns the requested mix with correct labels") {
  PairSet pairs;
  std::vector<Eigen::VectorXd> descriptors;
  for (int k = 0; k < 40; ++k) {
    descriptors.push_back(Eigen::VectorXd::Constant(2, k * 1.0));
  }
  for (int k = 0; k < 10; ++k) pairs.positives.emplace_back(k, k + 20);
  for (int k = 0; k < 25; ++k) pairs.negatives.emplace_back(k, k + 12);

  RngStream rng(5);
  const auto batch = sample_batch(pairs, descriptors, rng, 2, 10);
  REQUIRE(batch.size() == 22);
  int pos = 0, neg = 0;
  for (const auto& p : batch) {
    (p.y == 1 ? pos : neg)++;
  }
  CHECK(pos == 2);
  CHECK(neg == 20);

  RngStream r1(9), r2(9);
  const auto b1 = sample_batch(pairs, descriptors, r1, 2, 10);
  const auto b2 = sample_batch(pairs, descriptors, r2, 2, 10);
  for (std::size_t k = 0; k < b1.size(); ++k) {
    CHECK(b1[k].i == b2[k].i);
    CHECK(b1[k].j == b2[k].j);
    CHECK(b1[k].y == b2[k].y);
  }

  CHECK_THROWS_AS(sample_batch(pairs, descriptors, rng, 11, 10), DataError);
}

TEST_CASE("negative sampling follows inverse original-space distance") {
  // Two negative candidates at raw distances 1 and 3: weights 1 and 1/3,
  // so single draws should pick them roughly 3:1.
  PairSet pairs;
  std::vector<Eigen::VectorXd> descriptors = {
      Eigen::VectorXd::Zero(1), Eigen::VectorXd::Constant(1, 1.0),
      Eigen::VectorXd::Constant(1, 3.0)};
  pairs.positives.emplace_back(0, 1);  // unused filler
  pairs.negatives.emplace_back(0, 1);  // d = 1
  pairs.negatives.emplace_back(0, 2);  // d = 3
  attach_sampling_weights(pairs, descriptors);

  RngStream rng(2024);
  int near = 0;
  const int trials = 10000;
  for (int t = 0; t < trials; ++t) {
    const auto chosen =
        detail::weighted_sample_without_replacement(pairs.negative_weights, 1, rng);
    if (chosen[0] == 0) ++near;
  }
  const double ratio = static_cast<double>(near) / (trials - near);
  CHECK(ratio == Catch::Approx(3.0).epsilon(0.10));
}

TEST_CASE("sampled batches respect their label thresholds") {
  WorldConfig wcfg;
  const auto session = generate_session(wcfg, 0);
  auto fixes = derive_bearings(to_local_fixes(GpsLog{false, session.gps_rows}));
  const auto synced = synchronize(session.descriptor_rows, fixes, 0.1);
  const auto frames = select_keyframes(synced.pairs);
  const auto sim = self_similarity(frames, KernelParams{});
  LabelThresholds th;
  auto pairs = label_pairs(sim, th, 10);
  std::vector<Eigen::VectorXd> descriptors;
  for (const auto& kf : frames) descriptors.push_back(kf.descriptor.d);
  attach_sampling_weights(pairs, descriptors);

  RngStream rng(77);
  for (int b = 0; b < 5; ++b) {
    const auto batch = sample_batch(pairs, descriptors, rng, 4, 10);
    for (const auto& p : batch) {
      if (p.y == 1) {
        CHECK(sim.values(p.i, p.j) > th.tau_p);
      } else {
        CHECK(sim.values(p.i, p.j) < th.tau_n);
      }
    }
  }
}
