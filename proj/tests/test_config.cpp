#include <doctest.h>

#include "bsim/config.hpp"

using namespace bsim;
using nlohmann::json;

TEST_CASE("run config defaults") {
  const RunConfig c;
  CHECK(c.trials == 5);
  CHECK(c.sim.samples == 50);
  CHECK(c.sim.replan_every == 5);
  CHECK(c.sim.start_step == 10);
  CHECK(c.sim.steps == 200);
  CHECK(c.sim.weights.w_collision == 10.0);
  CHECK(c.train.lr == 1e-4);
  CHECK(c.train.batch == 100);
  CHECK(c.model.horizon == 20);
  CHECK(c.metrics.ou_sigmas == std::vector<double>{0.0, 0.5, 1.0, 2.0});
  CHECK_NOTHROW(c.validate());
}

TEST_CASE("run config round trip") {
  RunConfig c;
  c.seed = 42;
  c.policy = "bits_sample";
  c.sim.weights.w_collision = 3.5;
  c.sweep.horizons = {5, 7};
  c.model.horizon = 12;
  const RunConfig back = run_config_from_json(to_json(c));
  CHECK(to_json(back) == to_json(c));
  CHECK(back.seed == 42);
  CHECK(back.sim.weights.w_collision == 3.5);
}

TEST_CASE("partial configs overlay the defaults") {
  const RunConfig c = run_config_from_json(json{{"version", 1}, {"seed", 9}, {"sim", {{"samples", 8}}}});
  CHECK(c.seed == 9);
  CHECK(c.sim.samples == 8);
  CHECK(c.sim.steps == 200);
  const RunConfig w = run_config_from_json(json{{"version", 1}, {"planner", {{"w_collision", 0}}}});
  CHECK(w.sim.weights.w_collision == 0.0);
}

TEST_CASE("config schema errors") {
  CHECK_THROWS_AS(run_config_from_json(json{{"seed", 1}}), ConfigError);
  CHECK_THROWS_AS(run_config_from_json(json{{"version", 2}}), ConfigError);
  CHECK_THROWS_AS(run_config_from_json(json{{"version", 1}, {"sede", 1}}), ConfigError);
  CHECK_THROWS_AS(run_config_from_json(json{{"version", 1}, {"sim", {{"step", 3}}}}), ConfigError);
  CHECK_THROWS_AS(run_config_from_json(json{{"version", 1}, {"trials", "five"}}), ConfigError);
  CHECK_THROWS_AS(run_config_from_json(json{{"version", 1}, {"trials", 2.5}}), ConfigError);
  CHECK_THROWS_AS(run_config_from_json(json{{"version", 1}, {"trials", 0}}), ConfigError);
  CHECK_THROWS_AS(run_config_from_json(json{{"version", 1}, {"policy", "greedy"}}), ConfigError);
  CHECK_THROWS_AS(run_config_from_json(json{{"version", 1}, {"sweep", {{"cost_weights", {{1.0}}}}}}), ConfigError);
  CHECK_THROWS_AS(run_config_from_json(json::array()), ConfigError);
  try {
    run_config_from_json(json{{"version", 1}, {"data", {{"agent", 3}}}});
    FAIL("expected an error");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("data.agent") != std::string::npos);
  }
}
