#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "placerec/random.hpp"

using namespace placerec;

TEST_CASE("same seed gives an identical sequence") {
  RngStream a(1234);
  RngStream b(1234);
  for (int k = 0; k < 1000; ++k) {
    REQUIRE(a.next_u64() == b.next_u64());
  }
  RngStream c(1234), d(1234);
  for (int k = 0; k < 100; ++k) {
    REQUIRE(c.uniform() == d.uniform());
    REQUIRE(c.normal() == d.normal());
  }
}

TEST_CASE("known mt19937_64 reference value") {
  // The 10000th output of mt19937_64 seeded with 5489 is pinned by the
  // standard.
  std::mt19937_64 ref(5489u);
  RngStream stream(5489u);
  std::uint64_t expected = 0;
  std::uint64_t got = 0;
  for (int k = 0; k < 10000; ++k) {
    expected = ref();
    got = stream.next_u64();
  }
  CHECK(expected == 9981545732273789042ULL);
  CHECK(got == expected);
}

TEST_CASE("uniform stays in range and looks flat") {
  RngStream rng(99);
  double sum = 0.0;
  for (int k = 0; k < 20000; ++k) {
    const double u = rng.uniform();
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
    sum += u;
  }
  CHECK(sum / 20000.0 == Catch::Approx(0.5).margin(0.01));
}

TEST_CASE("normal has the requested moments") {
  RngStream rng(4242);
  const int n = 50000;
  double sum = 0.0, sq = 0.0;
  for (int k = 0; k < n; ++k) {
    const double x = rng.normal(2.0, 3.0);
    sum += x;
    sq += x * x;
  }
  const double mean = sum / n;
  const double var = sq / n - mean * mean;
  CHECK(mean == Catch::Approx(2.0).margin(0.05));
  CHECK(std::sqrt(var) == Catch::Approx(3.0).margin(0.05));
}

TEST_CASE("uniform_index covers [0, n)") {
  RngStream rng(5);
  std::vector<int> counts(7, 0);
  for (int k = 0; k < 14000; ++k) {
    const auto idx = rng.uniform_index(7);
    REQUIRE(idx < 7);
    counts[static_cast<std::size_t>(idx)]++;
  }
  for (int c : counts) {
    CHECK(c > 1600);  // ~2000 expected per bucket
  }
}

TEST_CASE("child streams differ from the parent and are stable") {
  RngStream parent(77);
  auto c1 = parent.child(1);
  auto c2 = parent.child(2);
  auto c1_again = parent.child(1);
  CHECK(c1.next_u64() != c2.next_u64());
  RngStream c1_ref(RngStream::mix(77, 1));
  CHECK(c1_again.next_u64() == c1_ref.next_u64());
}
