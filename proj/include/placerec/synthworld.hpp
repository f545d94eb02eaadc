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
#include "placerec/geometry.hpp"
#include "placerec/ingest.hpp"
#include "placerec/io.hpp"
#include "placerec/random.hpp"

namespace placerec {

// Synthetic driving world: a block grid with a closed waypoint route driven
// for a number of laps. Descriptors come from a fixed random two-layer map of
// per-cell appearance, bearing, and a slowly varying nuisance channel, so the
// raw descriptor space is deliberately miscalibrated while revisits stay
// learnable.
struct WorldConfig {
  double block_size = 20.0;  // meters
  int grid_rows = 4;
  int grid_cols = 4;
  // Closed tour over all 16 cells of the default 4x4 grid; every lap repeats
  // it in the same direction so revisits are co-directional.
  std::vector<int> route = {0, 1, 2,  3,  7,  6,  5,  9,
                            10, 11, 15, 14, 13, 12, 8, 4};
  double sample_spacing = 2.0;  // meters between consecutive samples
  int laps = 2;
  int appearance_dim = 16;
  int descriptor_dim = 128;
  double nuisance_amplitude = 2.0;
  double descriptor_noise_sigma = 0.02;
  double gps_noise_sigma = 0.05;  // meters
  std::uint64_t seed = 42;

  double speed = 10.0;  // m/s, fixes the timestamp grid
};

struct SyntheticSession {
  std::vector<double> times;
  std::vector<Pose2> truth_poses;
  std::vector<RawGpsRow> gps_rows;               // metric
  std::vector<DescriptorRecord> descriptor_rows;
  std::vector<std::pair<int, int>> revisit_pairs;  // ground-truth co-locations
};

namespace detail {

inline Eigen::MatrixXd gaussian_matrix(Eigen::Index rows, Eigen::Index cols,
                                       double sigma, RngStream& rng) {
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) {
      m(r, c) = rng.normal(0.0, sigma);
    }
  }
  return m;
}

struct PathSample {
  double s = 0.0;  // arc length from start
  Pose2 pose;
};

// Samples the closed route polyline every `spacing` meters; bearing is the
// direction of the segment each sample lies on.
inline std::vector<PathSample> sample_route(const WorldConfig& cfg) {
  std::vector<std::pair<double, double>> waypoints;
  const int cells = cfg.grid_rows * cfg.grid_cols;
  for (int lap = 0; lap < cfg.laps; ++lap) {
    for (int cell : cfg.route) {
      if (cell < 0 || cell >= cells) {
        throw ConfigError("route references out-of-grid cell " +
                          std::to_string(cell));
      }
      const int row = cell / cfg.grid_cols;
      const int col = cell % cfg.grid_cols;
      waypoints.emplace_back(col * cfg.block_size, row * cfg.block_size);
    }
  }
  waypoints.push_back(waypoints.front());  // close the final lap

  std::vector<PathSample> samples;
  double remaining = 0.0;  // distance until the next sample
  double s_total = 0.0;
  for (std::size_t w = 0; w + 1 < waypoints.size(); ++w) {
    const double ax = waypoints[w].first, ay = waypoints[w].second;
    const double bx = waypoints[w + 1].first, by = waypoints[w + 1].second;
    const double seg_len = std::hypot(bx - ax, by - ay);
    if (seg_len < 1e-9) continue;
    const double heading = std::atan2(by - ay, bx - ax);
    double along = remaining;
    while (along < seg_len) {
      PathSample ps;
      ps.s = s_total + along;
      ps.pose = Pose2(ax + (bx - ax) * along / seg_len,
                      ay + (by - ay) * along / seg_len, heading);
      samples.push_back(ps);
      along += cfg.sample_spacing;
    }
    remaining = along - seg_len;
    s_total += seg_len;
  }
  if (samples.size() < 2) {
    throw ConfigError("route too short for the configured sample spacing");
  }
  return samples;
}

}  // namespace detail

// Deterministic per config: the appearance table and descriptor map depend on
// the seed only, session-level noise on (seed, session_salt). Two sessions
// with different salts see the same world through different noise and
// nuisance phases, which is how train/test splits are produced.
inline SyntheticSession generate_session(const WorldConfig& cfg,
                                         std::uint64_t session_salt = 0) {
  if (cfg.grid_rows < 1 || cfg.grid_cols < 1 || cfg.appearance_dim < 1 ||
      cfg.descriptor_dim < 1 || cfg.laps < 1 || cfg.sample_spacing <= 0.0) {
    throw ConfigError("invalid world config");
  }
  if (cfg.descriptor_noise_sigma < 0.0 || cfg.gps_noise_sigma < 0.0 ||
      cfg.nuisance_amplitude < 0.0) {
    throw ConfigError("invalid world config: negative sigma");
  }
  if (cfg.route.size() < 2) {
    throw ConfigError("route needs at least 2 waypoints");
  }

  const int k = cfg.appearance_dim;
  const int n = cfg.descriptor_dim;
  const int hidden = 64;
  const int num_cells = cfg.grid_rows * cfg.grid_cols;

  RngStream world_rng(cfg.seed);
  auto rng_appearance = world_rng.child(1);
  auto rng_w1 = world_rng.child(2);
  auto rng_w2 = world_rng.child(3);
  const Eigen::MatrixXd appearance =
      detail::gaussian_matrix(num_cells, k, 1.0, rng_appearance);
  const Eigen::MatrixXd w1 = detail::gaussian_matrix(
      hidden, k + 3, 1.0 / std::sqrt(double(k + 3)), rng_w1);
  const Eigen::MatrixXd w2 = detail::gaussian_matrix(
      n, hidden, 1.0 / std::sqrt(double(hidden)), rng_w2);

  auto session_rng = world_rng.child(100 + session_salt);
  auto rng_phase = session_rng.child(1);
  auto rng_desc = session_rng.child(2);
  auto rng_gps = session_rng.child(3);
  const double phase1 = rng_phase.uniform(0.0, 2.0 * kPi);
  const double phase2 = rng_phase.uniform(0.0, 2.0 * kPi);

  const auto samples = detail::sample_route(cfg);

  SyntheticSession session;
  session.times.reserve(samples.size());
  session.truth_poses.reserve(samples.size());
  session.gps_rows.reserve(samples.size());
  session.descriptor_rows.reserve(samples.size());

  Eigen::VectorXd u(k + 3);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const Pose2& pose = samples[i].pose;
    const double t = samples[i].s / cfg.speed;

    int row = static_cast<int>(std::lround(pose.y / cfg.block_size));
    int col = static_cast<int>(std::lround(pose.x / cfg.block_size));
    row = std::min(std::max(row, 0), cfg.grid_rows - 1);
    col = std::min(std::max(col, 0), cfg.grid_cols - 1);
    const int cell = row * cfg.grid_cols + col;

    // Slowly varying nuisance (weather/lighting stand-in), injected before
    // the nonlinearity so raw distances get confounded.
    const double nu = cfg.nuisance_amplitude *
                      (std::sin(2.0 * kPi * t / 97.0 + phase1) +
                       0.6 * std::sin(2.0 * kPi * t / 41.0 + phase2)) /
                      1.6;

    u.head(k) = appearance.row(cell).transpose();
    u[k] = std::cos(pose.theta);
    u[k + 1] = std::sin(pose.theta);
    u[k + 2] = nu;

    Eigen::VectorXd h = (w1 * u).cwiseMax(0.0);
    Eigen::VectorXd desc = (w2 * h).array().tanh();
    for (Eigen::Index c = 0; c < desc.size(); ++c) {
      desc[c] += rng_desc.normal(0.0, cfg.descriptor_noise_sigma);
    }

    RawGpsRow gps;
    gps.t = t;
    gps.a = pose.x + rng_gps.normal(0.0, cfg.gps_noise_sigma);
    gps.b = pose.y + rng_gps.normal(0.0, cfg.gps_noise_sigma);

    session.times.push_back(t);
    session.truth_poses.push_back(pose);
    session.gps_rows.push_back(gps);
    session.descriptor_rows.push_back({t, std::move(desc)});
  }

  // Ground-truth co-locations: spatially close, co-directional, and far
  // enough apart along the route to count as revisits.
  const int min_gap =
      static_cast<int>(std::ceil(15.0 / cfg.sample_spacing)) + 1;
  const int count = static_cast<int>(session.truth_poses.size());
  for (int i = 0; i < count; ++i) {
    for (int j = i + min_gap; j < count; ++j) {
      const Pose2& a = session.truth_poses[i];
      const Pose2& b = session.truth_poses[j];
      if (position_distance(a, b) < 5.0 && bearing_gap(a, b) < kPi / 6.0) {
        session.revisit_pairs.emplace_back(i, j);
      }
    }
  }
  return session;
}

struct TruthSample {
  double t = 0.0;
  Pose2 pose;
};

// Session files: <name>_descriptors.jsonl, <name>_gps.jsonl,
// <name>_truth.jsonl under dir.
inline void write_session(const SyntheticSession& session,
                          const std::filesystem::path& dir,
                          const std::string& name) {
  auto desc = open_output(dir / (name + "_descriptors.jsonl"));
  for (const auto& rec : session.descriptor_rows) {
    nlohmann::json j;
    j["t"] = rec.t;
    auto& arr = j["d"] = nlohmann::json::array();
    for (Eigen::Index c = 0; c < rec.d.size(); ++c) arr.push_back(rec.d[c]);
    desc << j.dump() << '\n';
  }
  auto gps = open_output(dir / (name + "_gps.jsonl"));
  for (const auto& row : session.gps_rows) {
    nlohmann::json j;
    j["t"] = row.t;
    j["x"] = row.a;
    j["y"] = row.b;
    gps << j.dump() << '\n';
  }
  auto truth = open_output(dir / (name + "_truth.jsonl"));
  for (std::size_t i = 0; i < session.truth_poses.size(); ++i) {
    nlohmann::json j;
    j["t"] = session.times[i];
    j["x"] = session.truth_poses[i].x;
    j["y"] = session.truth_poses[i].y;
    j["theta"] = session.truth_poses[i].theta;
    truth << j.dump() << '\n';
  }
}

inline std::vector<TruthSample> load_truth(const std::filesystem::path& path) {
  const auto lines = read_lines(path);
  std::vector<TruthSample> out;
  std::size_t lineno = 0;
  for (const auto& line : lines) {
    ++lineno;
    if (line.empty()) continue;
    const auto j = detail::parse_jsonl_line(line, path, lineno);
    TruthSample s;
    s.t = detail::require_number(j, "t", path, lineno);
    s.pose = Pose2(detail::require_number(j, "x", path, lineno),
                   detail::require_number(j, "y", path, lineno),
                   detail::require_number(j, "theta", path, lineno));
    out.push_back(s);
  }
  if (out.empty()) {
    throw DataError("empty stream: " + path.string());
  }
  return out;
}

// Looks up the truth pose at each keyframe's gps timestamp (the generator
// emits identical time grids, so an exact match is expected).
inline std::vector<Pose2> truth_at_keyframes(
    const std::vector<TruthSample>& truth,
    const std::vector<Keyframe>& frames) {
  std::vector<Pose2> out;
  out.reserve(frames.size());
  for (const auto& kf : frames) {
    const double t = kf.fix.t;
    auto it = std::lower_bound(
        truth.begin(), truth.end(), t,
        [](const TruthSample& s, double value) { return s.t < value; });
    if (it == truth.end() ||
        (it != truth.begin() &&
         std::abs(std::prev(it)->t - t) < std::abs(it->t - t))) {
      it = std::prev(it);
    }
    if (std::abs(it->t - t) > 1e-6) {
      throw DataError("no truth sample at keyframe time " + format_double(t));
    }
    out.push_back(it->pose);
  }
  return out;
}

}  // namespace placerec
