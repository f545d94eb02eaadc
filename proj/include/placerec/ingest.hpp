#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "placerec/errors.hpp"
#include "placerec/geometry.hpp"
#include "placerec/io.hpp"

namespace placerec {

struct DescriptorRecord {
  double t = 0.0;
  Eigen::VectorXd d;
};

struct GpsFix {
  double t = 0.0;
  double x = 0.0;
  double y = 0.0;
  double bearing = 0.0;
  std::optional<std::pair<double, double>> source_geodetic;  // (lat, lon) deg
};

struct Keyframe {
  int id = 0;
  DescriptorRecord descriptor;
  GpsFix fix;
};

struct RawGpsRow {
  double t = 0.0;
  double a = 0.0;  // lat [deg] or x [m]
  double b = 0.0;  // lon [deg] or y [m]
};

struct GpsLog {
  bool geodetic = false;
  std::vector<RawGpsRow> rows;
};

namespace detail {

inline nlohmann::json parse_jsonl_line(const std::string& line,
                                       const std::filesystem::path& path,
                                       std::size_t lineno) {
  nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
  if (j.is_discarded() || !j.is_object()) {
    throw DataError("malformed line " + std::to_string(lineno) + " in " +
                    path.string());
  }
  return j;
}

inline double require_number(const nlohmann::json& j, const char* key,
                             const std::filesystem::path& path,
                             std::size_t lineno) {
  if (!j.contains(key) || !j[key].is_number()) {
    throw DataError(std::string("missing numeric field \"") + key +
                    "\" at line " + std::to_string(lineno) + " in " +
                    path.string());
  }
  return j[key].get<double>();
}

}  // namespace detail

// Descriptor log: JSONL, one {"t": seconds, "d": [floats]} per line.
inline std::vector<DescriptorRecord> load_descriptor_log(
    const std::filesystem::path& path) {
  const auto lines = read_lines(path);
  std::vector<DescriptorRecord> records;
  Eigen::Index dim = -1;
  std::size_t lineno = 0;
  for (const auto& line : lines) {
    ++lineno;
    if (line.empty()) continue;
    const auto j = detail::parse_jsonl_line(line, path, lineno);
    DescriptorRecord rec;
    rec.t = detail::require_number(j, "t", path, lineno);
    if (!j.contains("d") || !j["d"].is_array() || j["d"].empty()) {
      throw DataError("missing descriptor array at line " +
                      std::to_string(lineno) + " in " + path.string());
    }
    const auto& arr = j["d"];
    rec.d.resize(static_cast<Eigen::Index>(arr.size()));
    for (std::size_t k = 0; k < arr.size(); ++k) {
      if (!arr[k].is_number()) {
        throw DataError("non-numeric descriptor component at line " +
                        std::to_string(lineno) + " in " + path.string());
      }
      rec.d[static_cast<Eigen::Index>(k)] = arr[k].get<double>();
      if (!std::isfinite(rec.d[static_cast<Eigen::Index>(k)])) {
        throw DataError("non-finite descriptor component at line " +
                        std::to_string(lineno) + " in " + path.string());
      }
    }
    if (dim < 0) {
      dim = rec.d.size();
    } else if (rec.d.size() != dim) {
      throw DataError("inconsistent descriptor dimension at line " +
                      std::to_string(lineno) + " in " + path.string() +
                      " (expected " + std::to_string(dim) + ", got " +
                      std::to_string(rec.d.size()) + ")");
    }
    records.push_back(std::move(rec));
  }
  if (records.empty()) {
    throw DataError("empty stream: " + path.string());
  }
  std::stable_sort(records.begin(), records.end(),
                   [](const auto& a, const auto& b) { return a.t < b.t; });
  return records;
}

// GPS log: JSONL, {"t", "lat", "lon"} or {"t", "x", "y"}; the two row kinds
// may not be mixed within one file.
inline GpsLog load_gps_log(const std::filesystem::path& path) {
  const auto lines = read_lines(path);
  GpsLog log;
  bool kind_known = false;
  std::size_t lineno = 0;
  for (const auto& line : lines) {
    ++lineno;
    if (line.empty()) continue;
    const auto j = detail::parse_jsonl_line(line, path, lineno);
    const bool has_geo = j.contains("lat") && j.contains("lon");
    const bool has_metric = j.contains("x") && j.contains("y");
    if (has_geo == has_metric) {
      throw DataError("gps row must have either lat/lon or x/y at line " +
                      std::to_string(lineno) + " in " + path.string());
    }
    if (!kind_known) {
      log.geodetic = has_geo;
      kind_known = true;
    } else if (log.geodetic != has_geo) {
      throw DataError("mixed geodetic and metric rows at line " +
                      std::to_string(lineno) + " in " + path.string());
    }
    RawGpsRow row;
    row.t = detail::require_number(j, "t", path, lineno);
    row.a = detail::require_number(j, has_geo ? "lat" : "x", path, lineno);
    row.b = detail::require_number(j, has_geo ? "lon" : "y", path, lineno);
    log.rows.push_back(row);
  }
  if (log.rows.empty()) {
    throw DataError("empty stream: " + path.string());
  }
  std::stable_sort(log.rows.begin(), log.rows.end(),
                   [](const auto& a, const auto& b) { return a.t < b.t; });
  return log;
}

struct SessionData {
  std::vector<DescriptorRecord> descriptors;
  GpsLog gps;
};

inline SessionData load_session(const std::filesystem::path& descriptor_path,
                                const std::filesystem::path& gps_path) {
  return {load_descriptor_log(descriptor_path), load_gps_log(gps_path)};
}

// Equirectangular projection about the first row; x east, y north.
// Adequate for session extents well under the projection's ~10 km validity.
inline std::vector<std::pair<double, double>> geodetic_to_local(
    const std::vector<std::pair<double, double>>& rows) {
  if (rows.empty()) {
    throw DataError("geodetic_to_local: no rows");
  }
  constexpr double kEarthRadius = 6371000.0;
  constexpr double kDegToRad = kPi / 180.0;
  for (const auto& [lat, lon] : rows) {
    if (!(lat >= -90.0 && lat <= 90.0 && lon >= -180.0 && lon <= 180.0)) {
      throw DataError("geodetic coordinate out of range");
    }
  }
  const double lat0 = rows.front().first;
  const double lon0 = rows.front().second;
  const double cos_lat0 = std::cos(lat0 * kDegToRad);
  std::vector<std::pair<double, double>> out;
  out.reserve(rows.size());
  for (const auto& [lat, lon] : rows) {
    out.emplace_back(kEarthRadius * (lon - lon0) * kDegToRad * cos_lat0,
                     kEarthRadius * (lat - lat0) * kDegToRad);
  }
  return out;
}

// Raw rows -> fixes in a local metric frame. Geodetic logs are projected
// about the first fix; metric logs are taken as already local.
inline std::vector<GpsFix> to_local_fixes(const GpsLog& log) {
  std::vector<GpsFix> fixes;
  fixes.reserve(log.rows.size());
  if (log.geodetic) {
    std::vector<std::pair<double, double>> geo;
    geo.reserve(log.rows.size());
    for (const auto& r : log.rows) geo.emplace_back(r.a, r.b);
    const auto local = geodetic_to_local(geo);
    for (std::size_t i = 0; i < log.rows.size(); ++i) {
      GpsFix f;
      f.t = log.rows[i].t;
      f.x = local[i].first;
      f.y = local[i].second;
      f.source_geodetic = geo[i];
      fixes.push_back(f);
    }
  } else {
    for (const auto& r : log.rows) {
      GpsFix f;
      f.t = r.t;
      f.x = r.a;
      f.y = r.b;
      fixes.push_back(f);
    }
  }
  return fixes;
}

// Forward-difference bearings: bearing_i points from fix i to fix i+1, the
// last fix repeats its predecessor. Segments shorter than 1e-6 m carry the
// previous bearing forward; a stationary prefix is backfilled with the first
// defined bearing.
inline std::vector<GpsFix> derive_bearings(std::vector<GpsFix> fixes) {
  if (fixes.size() < 2) {
    throw DataError("derive_bearings: need at least 2 fixes");
  }
  constexpr double kMinStep = 1e-6;
  std::vector<double> bearing(fixes.size(), 0.0);
  std::vector<bool> defined(fixes.size(), false);
  for (std::size_t i = 0; i + 1 < fixes.size(); ++i) {
    const double dx = fixes[i + 1].x - fixes[i].x;
    const double dy = fixes[i + 1].y - fixes[i].y;
    if (std::hypot(dx, dy) >= kMinStep) {
      bearing[i] = std::atan2(dy, dx);
      defined[i] = true;
    } else if (i > 0 && defined[i - 1]) {
      bearing[i] = bearing[i - 1];
      defined[i] = true;
    }
  }
  // Last fix carries the previous bearing.
  if (fixes.size() >= 2 && defined[fixes.size() - 2]) {
    bearing[fixes.size() - 1] = bearing[fixes.size() - 2];
    defined[fixes.size() - 1] = true;
  }
  // Backfill any leading undefined run with the first defined bearing.
  double first_defined = 0.0;
  for (std::size_t i = 0; i < fixes.size(); ++i) {
    if (defined[i]) {
      first_defined = bearing[i];
      break;
    }
  }
  bool seen_defined = false;
  for (std::size_t i = 0; i < fixes.size(); ++i) {
    if (defined[i]) {
      seen_defined = true;
    } else {
      bearing[i] = seen_defined ? bearing[i - 1] : first_defined;
    }
  }
  for (std::size_t i = 0; i < fixes.size(); ++i) {
    fixes[i].bearing = wrap_angle(bearing[i]);
  }
  return fixes;
}

struct SyncResult {
  std::vector<std::pair<DescriptorRecord, GpsFix>> pairs;
  std::size_t dropped = 0;
};

// Matches each descriptor to the nearest-timestamp fix (two-pointer sweep,
// earlier fix wins ties) and drops pairs whose gap exceeds the tolerance.
inline SyncResult synchronize(const std::vector<DescriptorRecord>& descriptors,
                              const std::vector<GpsFix>& fixes,
                              double tolerance) {
  SyncResult result;
  if (fixes.empty()) {
    result.dropped = descriptors.size();
    return result;
  }
  std::size_t j = 0;
  for (const auto& rec : descriptors) {
    while (j + 1 < fixes.size() &&
           std::abs(fixes[j + 1].t - rec.t) < std::abs(fixes[j].t - rec.t)) {
      ++j;
    }
    if (std::abs(fixes[j].t - rec.t) <= tolerance) {
      result.pairs.emplace_back(rec, fixes[j]);
    } else {
      ++result.dropped;
    }
  }
  return result;
}

// Keeps the first pair and every pair at least trans_thresh away from, or
// rotated at least rot_thresh against, the last accepted keyframe.
// Comparisons are inclusive (>=).
inline std::vector<Keyframe> select_keyframes(
    const std::vector<std::pair<DescriptorRecord, GpsFix>>& synced,
    double trans_thresh = 5.0, double rot_thresh = kPi / 6.0) {
  if (synced.empty()) {
    throw DataError("select_keyframes: empty input");
  }
  std::vector<Keyframe> frames;
  const GpsFix* last = nullptr;
  for (const auto& [rec, fix] : synced) {
    bool accept = false;
    if (last == nullptr) {
      accept = true;
    } else {
      const double dist = std::hypot(fix.x - last->x, fix.y - last->y);
      const double rot = std::abs(wrap_angle(fix.bearing - last->bearing));
      accept = dist >= trans_thresh || rot >= rot_thresh;
    }
    if (accept) {
      Keyframe kf;
      kf.id = static_cast<int>(frames.size());
      kf.descriptor = rec;
      kf.fix = fix;
      frames.push_back(std::move(kf));
      last = &frames.back().fix;
    }
  }
  return frames;
}

// Keyframe log: JSONL {"id", "t", "x", "y", "bearing", "d"}.
inline void write_keyframes(const std::filesystem::path& path,
                            const std::vector<Keyframe>& frames) {
  auto out = open_output(path);
  for (const auto& kf : frames) {
    nlohmann::json j;
    j["id"] = kf.id;
    j["t"] = kf.descriptor.t;
    j["x"] = kf.fix.x;
    j["y"] = kf.fix.y;
    j["bearing"] = kf.fix.bearing;
    auto& arr = j["d"] = nlohmann::json::array();
    for (Eigen::Index k = 0; k < kf.descriptor.d.size(); ++k) {
      arr.push_back(kf.descriptor.d[k]);
    }
    out << j.dump() << '\n';
  }
}

struct KeyframeOptions {
  double sync_tolerance = 0.1;  // seconds
  double trans_thresh = 5.0;    // meters
  double rot_thresh = kPi / 6.0;
};

struct KeyframeBuildResult {
  std::vector<Keyframe> frames;
  std::size_t dropped_in_sync = 0;
};

// Full ingest chain: load, project, derive bearings, synchronize, sub-sample.
inline KeyframeBuildResult build_keyframes(
    const std::filesystem::path& descriptor_path,
    const std::filesystem::path& gps_path, const KeyframeOptions& opts = {}) {
  const auto session = load_session(descriptor_path, gps_path);
  auto fixes = derive_bearings(to_local_fixes(session.gps));
  auto synced = synchronize(session.descriptors, fixes, opts.sync_tolerance);
  if (synced.pairs.empty()) {
    throw DataError("no synchronized descriptor/gps pairs for " +
                    descriptor_path.string());
  }
  KeyframeBuildResult result;
  result.frames =
      select_keyframes(synced.pairs, opts.trans_thresh, opts.rot_thresh);
  result.dropped_in_sync = synced.dropped;
  return result;
}

}  // namespace placerec
