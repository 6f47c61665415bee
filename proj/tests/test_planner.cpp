#include <doctest.h>

#include <cmath>
#include <random>

#include "bsim/planner.hpp"

using namespace bsim;

namespace {

AgentState box(double x, double y, double h = 0.0, double length = 4.5, double width = 1.8) {
  return AgentState{.x = x, .y = y, .heading = h, .length = length, .width = width};
}

SemanticGrid band_grid() {
  SemanticGrid g;
  g.rows = 200;
  g.cols = 200;
  g.data.assign(static_cast<std::size_t>(kNumSemanticLayers) * g.rows * g.cols, 0.0f);
  for (int r = 80; r < 120; ++r) {
    for (int c = 0; c < g.cols; ++c) g.at(kDrivable, r, c) = 1.0f;
  }
  return g;
}

}  // namespace

TEST_CASE("corner distance") {
  CHECK(corner_distance(box(0, 0), box(4.5, 0)) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(corner_distance(box(0, 0), box(0, 0)) < 0.0);
  CHECK(corner_distance(box(0, 0, 0, 4, 2), box(100, 0, 0, 4, 2)) == doctest::Approx(96.0));
  CHECK(corner_distance(box(0, 0), box(0, 5)) == doctest::Approx(5.0 - 1.8));
  CHECK(corner_distance(box(0, 0, 0.3), box(6, 2, -1.0)) == doctest::Approx(corner_distance(box(6, 2, -1.0), box(0, 0, 0.3))));
  CHECK(corner_distance(box(0, 0), box(10, 0), true) >= corner_distance(box(0, 0), box(10, 0)));
  CHECK_THROWS_AS(corner_distance(box(0, 0, 0, 0.0), box(1, 1)), Error);
}

TEST_CASE("collision cost") {
  const CostWeights w;
  CHECK(sigmoid(-4.0) == doctest::Approx(0.017986).epsilon(1e-5));
  CHECK(std::abs(sigmoid(-4.0) - 1.0 / (1.0 + std::exp(4.0))) < 1e-15);
  const std::vector<AgentState> ego{box(0, 0), box(1, 0)};
  CHECK(collision_cost(ego, {}, w) == 0.0);

  const std::vector<std::vector<AgentState>> touching{{box(4.5, 0), box(5.5, 0)}};
  CHECK(collision_cost(ego, touching, w) == doctest::Approx(2.0 * sigmoid(-4.0)));

  // fully overlapped boxes of 20 m length have d = -10 at the centre
  const std::vector<AgentState> big{box(0, 0, 0, 20, 20)};
  const std::vector<std::vector<AgentState>> same{{box(0, 0, 0, 20, 20)}};
  CHECK(collision_cost(big, same, w) == doctest::Approx(sigmoid(6.0)));

  // max over neighbours, empty paths ignored
  const std::vector<std::vector<AgentState>> mix{{box(30, 0), box(31, 0)}, {}, {box(4.5, 0)}};
  CHECK(collision_cost(ego, mix, w) == doctest::Approx(sigmoid(-4.0) + sigmoid(-(31 - 1 - 4.5) - 4.0)));
}

TEST_CASE("offroad cost") {
  const OffroadField f = make_offroad_field(band_grid());
  CHECK(footprint_offroad(box(50, 50), f) == 0.0);
  CHECK(footprint_offroad(box(50, 5), f) == doctest::Approx(20.0));
  const double edge = footprint_offroad(box(50, 40), f);
  CHECK(edge > 0.0);
  CHECK(edge < 20.0);
  CHECK(footprint_offroad(box(50, 39), f) > edge);
  const std::vector<AgentState> traj{box(50, 50), box(50, 5)};
  CHECK(offroad_cost(traj, f) == doctest::Approx(20.0));
}

TEST_CASE("selection and tie breaking") {
  const CostWeights w;
  const std::vector<double> ll{-1.0, -0.5, -2.0};
  auto d = select_from_costs({0.1, 0.0, 0.0}, {0.0, 0.0, 0.0}, ll, w);
  CHECK(d.chosen == 1);
  CHECK(d.tie_break == "likelihood");
  d = select_from_costs({0.0, 0.0, 0.0}, {1.0, 0.5, 2.0}, ll, w);
  CHECK(d.chosen == 1);
  CHECK(d.tie_break == "cost");
  d = select_from_costs({0.0, 0.0}, {0.0, 0.0}, std::vector<double>{-1.0, -1.0}, w);
  CHECK(d.chosen == 0);
  CHECK(d.tie_break == "index");
  CHECK_THROWS_AS(select_from_costs({}, {}, std::vector<double>{}, w), Error);
  CHECK_THROWS_AS(select_from_costs({0.0}, {}, std::vector<double>{0.0}, w), Error);
}

TEST_CASE("selection properties on random costs") {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> u(0.0, 5.0);
  std::uniform_int_distribution<int> kd(1, 12);
  for (int rep = 0; rep < 500; ++rep) {
    const int K = kd(rng);
    std::vector<double> col(K), off(K), ll(K);
    for (int i = 0; i < K; ++i) {
      col[i] = std::floor(u(rng)) / 4.0;
      off[i] = std::floor(u(rng)) / 2.0;
      ll[i] = -std::floor(u(rng));
    }
    const CostWeights w{.w_collision = std::floor(u(rng)), .w_offroad = std::floor(u(rng))};
    const PlanDecision d = select_from_costs(col, off, ll, w);

    int ref = 0;
    for (int i = 1; i < K; ++i) {
      const double ti = w.w_collision * col[i] + w.w_offroad * off[i];
      const double tr = w.w_collision * col[ref] + w.w_offroad * off[ref];
      if (ti < tr || (ti == tr && ll[i] > ll[ref])) ref = i;
    }
    CHECK(d.chosen == ref);

    const CostWeights w4{.w_collision = 4 * w.w_collision, .w_offroad = 4 * w.w_offroad};
    CHECK(select_from_costs(col, off, ll, w4).chosen == d.chosen);

    // lowering the chosen plan's cost keeps it chosen
    auto col2 = col;
    col2[d.chosen] = std::max(0.0, col2[d.chosen] - 0.25);
    CHECK(select_from_costs(col2, off, ll, w).chosen == d.chosen);

    // a plan dominated in both terms is never chosen over its dominator
    for (int i = 0; i < K; ++i) {
      for (int j = 0; j < K; ++j) {
        if (col[i] < col[j] && off[i] < off[j] && w.w_collision > 0 && w.w_offroad > 0) CHECK(d.chosen != j);
      }
    }
  }
}

TEST_CASE("zero weights pick the most likely plan") {
  const CostWeights w{.w_collision = 0.0, .w_offroad = 0.0};
  const auto d = select_from_costs({3.0, 1.0, 2.0}, {0.0, 9.0, 1.0}, std::vector<double>{-3.0, -2.0, -0.1}, w);
  CHECK(d.chosen == 2);
  CHECK_THROWS_AS(CostWeights{.w_collision = -1.0}.validate(), Error);
}
