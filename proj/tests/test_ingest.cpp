#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <string>

#include "placerec/ingest.hpp"
#include "placerec/random.hpp"

using namespace placerec;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir() {
  const auto dir = fs::temp_directory_path() / "placerec_ingest_test";
  fs::create_directories(dir);
  return dir;
}

fs::path write_file(const std::string& name, const std::string& content) {
  const auto path = temp_dir() / name;
  std::ofstream out(path);
  out << content;
  return path;
}

GpsFix fix_at(double t, double x, double y, double bearing = 0.0) {
  GpsFix f;
  f.t = t;
  f.x = x;
  f.y = y;
  f.bearing = bearing;
  return f;
}

}  // namespace

TEST_CASE("load_session parses well-formed files") {
  const auto desc = write_file("ok_descriptors.jsonl",
                               "{\"t\": 0.0, \"d\": [1.0, 2.0]}\n"
                               "{\"t\": 1.0, \"d\": [3.0, 4.0]}\n");
  const auto gps = write_file("ok_gps.jsonl",
                              "{\"t\": 0.0, \"x\": 0.0, \"y\": 0.0}\n"
                              "{\"t\": 1.0, \"x\": 1.0, \"y\": 0.0}\n"
                              "{\"t\": 2.0, \"x\": 2.0, \"y\": 0.0}\n");
  const auto session = load_session(desc, gps);
  CHECK(session.descriptors.size() == 2);
  CHECK(session.gps.rows.size() == 3);
  CHECK_FALSE(session.gps.geodetic);
  CHECK(session.descriptors[1].d[1] == 4.0);
}

TEST_CASE("load_session reports dimension mismatches with the line number") {
  const auto desc = write_file("dim_descriptors.jsonl",
                               "{\"t\": 0.0, \"d\": [1, 2, 3]}\n"
                               "{\"t\": 1.0, \"d\": [1, 2, 3]}\n"
                               "{\"t\": 2.0, \"d\": [1, 2]}\n");
  CHECK_THROWS_WITH(load_descriptor_log(desc),
                    Catch::Matchers::ContainsSubstring("line 3"));
}

TEST_CASE("load_session rejects missing and empty files") {
  CHECK_THROWS_AS(load_descriptor_log(temp_dir() / "nope.jsonl"), DataError);
  const auto empty = write_file("empty_gps.jsonl", "");
  CHECK_THROWS_WITH(load_gps_log(empty),
                    Catch::Matchers::ContainsSubstring("empty stream"));
  const auto bad = write_file("bad_gps.jsonl", "{\"t\": 0.0, \"x\": 1.0}\n");
  CHECK_THROWS_AS(load_gps_log(bad), DataError);
  const auto mixed = write_file("mixed_gps.jsonl",
                                "{\"t\": 0.0, \"x\": 1.0, \"y\": 2.0}\n"
                                "{\"t\": 1.0, \"lat\": 1.0, \"lon\": 2.0}\n");
  CHECK_THROWS_WITH(load_gps_log(mixed),
                    Catch::Matchers::ContainsSubstring("mixed"));
}

TEST_CASE("geodetic_to_local anchors at the first row") {
  // 1e-4 rad of longitude at the equator is 637.1 m of easting.
  const double delta_deg = 1e-4 * 180.0 / kPi;
  const auto local = geodetic_to_local({{0.0, 10.0}, {0.0, 10.0 + delta_deg}});
  CHECK(local[0].first == 0.0);
  CHECK(local[0].second == 0.0);
  CHECK(local[1].first == Catch::Approx(637.1).margin(1e-6));
  CHECK(local[1].second == Catch::Approx(0.0).margin(1e-9));

  const auto same = geodetic_to_local({{45.0, 9.0}, {45.0, 9.0}});
  CHECK(same[0] == same[1]);

  CHECK_THROWS_AS(geodetic_to_local({{95.0, 0.0}}), DataError);
}

TEST_CASE("synchronize picks the nearest fix and drops distant ones") {
  std::vector<DescriptorRecord> descs;
  for (int k = 0; k < 3; ++k) {
    descs.push_back({static_cast<double>(k), Eigen::VectorXd::Zero(2)});
  }
  std::vector<GpsFix> fixes = {fix_at(0.0, 0, 0), fix_at(1.0, 1, 0),
                               fix_at(2.0, 2, 0)};
  const auto all = synchronize(descs, fixes, 0.1);
  CHECK(all.pairs.size() == 3);
  CHECK(all.dropped == 0);

  std::vector<DescriptorRecord> one = {{10.0, Eigen::VectorXd::Zero(2)}};
  std::vector<GpsFix> near = {fix_at(9.96, 0, 0), fix_at(10.09, 1, 0)};
  const auto matched = synchronize(one, near, 0.05);
  REQUIRE(matched.pairs.size() == 1);
  CHECK(matched.pairs[0].second.t == 9.96);

  std::vector<GpsFix> far = {fix_at(10.2, 0, 0)};
  const auto dropped = synchronize(one, far, 0.05);
  CHECK(dropped.pairs.empty());
  CHECK(dropped.dropped == 1);
}

TEST_CASE("synchronize never exceeds the tolerance on jittered grids") {
  RngStream rng(321);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<DescriptorRecord> descs;
    std::vector<GpsFix> fixes;
    for (int k = 0; k < 50; ++k) {
      descs.push_back({k * 0.5 + rng.uniform(-0.2, 0.2),
                       Eigen::VectorXd::Zero(1)});
      fixes.push_back(fix_at(k * 0.5 + rng.uniform(-0.2, 0.2), 0, 0));
    }
    std::stable_sort(descs.begin(), descs.end(),
                     [](const auto& a, const auto& b) { return a.t < b.t; });
    std::stable_sort(fixes.begin(), fixes.end(),
                     [](const auto& a, const auto& b) { return a.t < b.t; });
    const double tol = 0.1;
    const auto synced = synchronize(descs, fixes, tol);
    for (const auto& [rec, fix] : synced.pairs) {
      CHECK(std::abs(rec.t - fix.t) <= tol);
    }
  }
}

TEST_CASE("derive_bearings follows the segment directions") {
  std::vector<GpsFix> fixes = {fix_at(0, 0, 0), fix_at(1, 1, 0),
                               fix_at(2, 1, 1)};
  const auto out = derive_bearings(fixes);
  REQUIRE(out.size() == 3);
  CHECK(out[0].bearing == Catch::Approx(0.0));
  CHECK(out[1].bearing == Catch::Approx(kPi / 2));
  CHECK(out[2].bearing == Catch::Approx(kPi / 2));

  std::vector<GpsFix> east;
  for (int k = 0; k < 5; ++k) east.push_back(fix_at(k, k * 2.0, 0.0));
  for (const auto& f : derive_bearings(east)) {
    CHECK(f.bearing == Catch::Approx(0.0));
  }

  // Stationary prefix carries the first defined bearing backward.
  std::vector<GpsFix> stationary = {fix_at(0, 0, 0), fix_at(1, 0, 0),
                                    fix_at(2, 1, 0)};
  const auto st = derive_bearings(stationary);
  CHECK(st[0].bearing == Catch::Approx(0.0));
  CHECK(st[1].bearing == Catch::Approx(0.0));
  CHECK(st[2].bearing == Catch::Approx(0.0));

  CHECK_THROWS_AS(derive_bearings({fix_at(0, 0, 0)}), DataError);
}

TEST_CASE("derive_bearings keeps length and wraps every value") {
  RngStream rng(17);
  std::vector<GpsFix> fixes;
  for (int k = 0; k < 200; ++k) {
    fixes.push_back(
        fix_at(k, rng.uniform(-100, 100), rng.uniform(-100, 100)));
  }
  const auto out = derive_bearings(fixes);
  REQUIRE(out.size() == fixes.size());
  for (const auto& f : out) {
    CHECK(f.bearing > -kPi);
    CHECK(f.bearing <= kPi);
  }
}

TEST_CASE("select_keyframes on a 1 m grid keeps every 5th sample") {
  std::vector<std::pair<DescriptorRecord, GpsFix>> synced;
  for (int k = 0; k <= 20; ++k) {
    synced.emplace_back(DescriptorRecord{static_cast<double>(k),
                                         Eigen::VectorXd::Zero(1)},
                        fix_at(k, static_cast<double>(k), 0.0));
  }
  const auto frames = select_keyframes(synced);
  REQUIRE(frames.size() == 5);
  for (std::size_t k = 0; k < frames.size(); ++k) {
    CHECK(frames[k].id == static_cast<int>(k));
    CHECK(frames[k].fix.x == Catch::Approx(5.0 * k));
  }
}

TEST_CASE("select_keyframes accepts every second pi/8 rotation step") {
  std::vector<std::pair<DescriptorRecord, GpsFix>> synced;
  for (int k = 0; k < 8; ++k) {
    synced.emplace_back(
        DescriptorRecord{static_cast<double>(k), Eigen::VectorXd::Zero(1)},
        fix_at(k, 0.0, 0.0, wrap_angle(k * kPi / 8.0)));
  }
  const auto frames = select_keyframes(synced);
  REQUIRE(frames.size() == 4);
  for (std::size_t k = 0; k < frames.size(); ++k) {
    CHECK(frames[k].fix.bearing ==
          Catch::Approx(wrap_angle(2.0 * k * kPi / 8.0)));
  }
}

TEST_CASE("select_keyframes keeps a single input pair") {
  std::vector<std::pair<DescriptorRecord, GpsFix>> synced;
  synced.emplace_back(DescriptorRecord{0.0, Eigen::VectorXd::Zero(1)},
                      fix_at(0, 3.0, 4.0));
  const auto frames = select_keyframes(synced);
  REQUIRE(frames.size() == 1);
  CHECK(frames[0].id == 0);
  CHECK_THROWS_AS(select_keyframes({}), DataError);
}

TEST_CASE("every accepted keyframe meets at least one threshold") {
  RngStream rng(99);
  std::vector<std::pair<DescriptorRecord, GpsFix>> synced;
  double x = 0.0, y = 0.0, b = 0.0;
  for (int k = 0; k < 300; ++k) {
    x += rng.uniform(0.0, 3.0);
    y += rng.uniform(-1.0, 1.0);
    b = wrap_angle(b + rng.uniform(-0.3, 0.3));
    synced.emplace_back(
        DescriptorRecord{static_cast<double>(k), Eigen::VectorXd::Zero(1)},
        fix_at(k, x, y, b));
  }
  const auto frames = select_keyframes(synced);
  CHECK(frames.size() <= synced.size());
  for (std::size_t k = 1; k < frames.size(); ++k) {
    const auto& prev = frames[k - 1].fix;
    const auto& cur = frames[k].fix;
    const double dist = std::hypot(cur.x - prev.x, cur.y - prev.y);
    const double rot = std::abs(wrap_angle(cur.bearing - prev.bearing));
    CHECK((dist >= 5.0 || rot >= kPi / 6.0));
  }
}
