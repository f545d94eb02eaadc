#include <catch2/catch_amalgamated.hpp>

#include "placerec/geometry.hpp"
#include "placerec/random.hpp"

using namespace placerec;

namespace {

bool pose_near(const Pose2& a, const Pose2& b, double tol) {
  return std::abs(a.x - b.x) <= tol && std::abs(a.y - b.y) <= tol &&
         std::abs(wrap_angle(a.theta - b.theta)) <= tol;
}

}  // namespace

TEST_CASE("wrap_angle maps into (-pi, pi]") {
  CHECK(wrap_angle(0.0) == 0.0);
  CHECK(wrap_angle(3.0 * kPi / 2.0) == Catch::Approx(-kPi / 2.0));
  CHECK(wrap_angle(-kPi) == Catch::Approx(kPi));
  CHECK(wrap_angle(kPi) == Catch::Approx(kPi));
  CHECK(wrap_angle(2.0 * kPi) == Catch::Approx(0.0).margin(1e-15));
  CHECK_THROWS_AS(wrap_angle(std::numeric_limits<double>::infinity()),
                  std::domain_error);
  CHECK_THROWS_AS(wrap_angle(std::nan("")), std::domain_error);
}

TEST_CASE("wrap_angle is idempotent and congruent mod 2pi") {
  RngStream rng(7);
  for (int k = 0; k < 200; ++k) {
    const double a = rng.uniform(-50.0, 50.0);
    const double w = wrap_angle(a);
    CHECK(w > -kPi);
    CHECK(w <= kPi);
    CHECK(wrap_angle(w) == w);
    CHECK(std::abs(std::remainder(w - a, 2.0 * kPi)) < 1e-9);
  }
}

TEST_CASE("se2_compose matches the rotation-matrix oracle") {
  const Pose2 p(2.0, -1.0, 0.3);
  CHECK(pose_near(se2_compose(Pose2::identity(), p), p, 1e-15));

  // (1,0,pi/2) (+) (1,0,0): rotating (1,0) by pi/2 gives (0,1).
  const Pose2 r = se2_compose(Pose2(1, 0, kPi / 2), Pose2(1, 0, 0));
  CHECK(r.x == Catch::Approx(1.0).margin(1e-12));
  CHECK(r.y == Catch::Approx(1.0).margin(1e-12));
  CHECK(r.theta == Catch::Approx(kPi / 2));

  CHECK(pose_near(se2_compose(p, se2_inverse(p)), Pose2::identity(), 1e-12));
}

TEST_CASE("se2_relative inverts composition") {
  const Pose2 p(4.0, 2.0, -1.2);
  CHECK(pose_near(se2_relative(p, p), Pose2::identity(), 1e-12));
  CHECK(pose_near(se2_relative(Pose2::identity(), Pose2(2, 3, 0.5)),
                  Pose2(2, 3, 0.5), 1e-15));

  RngStream rng(11);
  for (int k = 0; k < 100; ++k) {
    const Pose2 a(rng.uniform(-100, 100), rng.uniform(-100, 100),
                  rng.uniform(-kPi, kPi));
    const Pose2 b(rng.uniform(-100, 100), rng.uniform(-100, 100),
                  rng.uniform(-kPi, kPi));
    CHECK(pose_near(se2_compose(a, se2_relative(a, b)), b, 1e-10));
  }
}

TEST_CASE("se2 composition is associative") {
  RngStream rng(13);
  for (int k = 0; k < 100; ++k) {
    const Pose2 a(rng.uniform(-10, 10), rng.uniform(-10, 10),
                  rng.uniform(-kPi, kPi));
    const Pose2 b(rng.uniform(-10, 10), rng.uniform(-10, 10),
                  rng.uniform(-kPi, kPi));
    const Pose2 c(rng.uniform(-10, 10), rng.uniform(-10, 10),
                  rng.uniform(-kPi, kPi));
    CHECK(pose_near(se2_compose(se2_compose(a, b), c),
                    se2_compose(a, se2_compose(b, c)), 1e-10));
  }
}
