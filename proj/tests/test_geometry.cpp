#include <doctest.h>

#include <random>

#include "bsim/geometry.hpp"
#include "oracles.hpp"

using namespace bsim;

TEST_CASE("box corners are counter-clockwise from rear-right") {
  const auto c = box_corners(Pose2{0, 0, 0}, 4.0, 2.0);
  CHECK(c[0].x == doctest::Approx(-2.0));
  CHECK(c[0].y == doctest::Approx(-1.0));
  CHECK(c[1].x == doctest::Approx(2.0));
  CHECK(c[1].y == doctest::Approx(-1.0));
  CHECK(c[2].x == doctest::Approx(2.0));
  CHECK(c[2].y == doctest::Approx(1.0));
  CHECK(point_in_convex(c, {0.0, 0.0}));
  CHECK(point_in_convex(c, {2.0, 1.0}));
  CHECK_FALSE(point_in_convex(c, {2.1, 0.0}));
}

TEST_CASE("separating axis test") {
  AgentState a{.length = 4.0, .width = 2.0};
  AgentState b = a;
  CHECK(boxes_overlap(a, b));
  b.x = 100.0;
  CHECK_FALSE(boxes_overlap(a, b));
  b.x = 4.0;  // touching
  CHECK_FALSE(boxes_overlap(a, b));
  b.x = 3.99;
  CHECK(boxes_overlap(a, b));
  b = a;
  b.x = 2.9;
  b.y = 1.9;
  b.heading = kPi / 4;
  CHECK(boxes_overlap(a, b));
}

TEST_CASE("SAT agrees with polygon clipping on random pairs") {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> pos(-6.0, 6.0), ang(-kPi, kPi), len(1.0, 6.0), wid(0.5, 3.0);
  int overlaps = 0;
  for (int i = 0; i < 2000; ++i) {
    AgentState a{.x = pos(rng), .y = pos(rng), .heading = wrap_angle(ang(rng)), .length = len(rng), .width = wid(rng)};
    AgentState b{.x = pos(rng), .y = pos(rng), .heading = wrap_angle(ang(rng)), .length = len(rng), .width = wid(rng)};
    const auto ca = box_corners(a), cb = box_corners(b);
    const double area = oracle::convex_intersection_area({ca.begin(), ca.end()}, {cb.begin(), cb.end()});
    const bool expect = area > 1e-9;
    overlaps += expect;
    CHECK(boxes_overlap(a, b) == expect);
    CHECK(boxes_overlap(b, a) == expect);
  }
  CHECK(overlaps > 100);
}
