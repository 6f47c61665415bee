#include <doctest.h>

#include <filesystem>
#include <random>

#include "bsim/simengine.hpp"
#include "gradchecks.hpp"

using namespace bsim;

namespace {

struct Scene {
  MapData map;
  SceneLog log;
};

Scene scene(MapKind kind, int agents, double seconds, std::uint64_t seed) {
  MapSpec s;
  s.kind = kind;
  s.seed = seed;
  Scene sc{gen_map(s), {}};
  sc.log = gen_expert_log(sc.map, agents, seconds, seed);
  return sc;
}

SemanticGrid open_grid() {
  SemanticGrid g;
  g.rows = 40;
  g.cols = 40;
  g.data.assign(static_cast<std::size_t>(kNumSemanticLayers) * 40 * 40, 0.0f);
  for (int r = 0; r < 40; ++r) {
    for (int c = 0; c < 20; ++c) g.at(kDrivable, r, c) = 1.0f;
  }
  return g;
}

void randomize(nn::ParamStore& ps, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-0.2, 0.2);
  for (auto& p : ps.params()) {
    for (double& v : p.value.data) v += u(rng);
  }
}

SimConfig short_sim() {
  SimConfig c;
  c.steps = 15;
  c.samples = 6;
  return c;
}

}  // namespace

TEST_CASE("policy names") {
  for (const char* n : {"bits", "bits_max", "bits_sample", "bc_baseline", "log_replay"}) {
    CHECK(to_string(policy_from_string(n)) == n);
  }
  CHECK_THROWS_AS(policy_from_string("greedy"), Error);
  CHECK(policy_is_stochastic(PolicyKind::kBits));
  CHECK_FALSE(policy_is_stochastic(PolicyKind::kBitsMax));
}

TEST_CASE("log replay reproduces the log exactly") {
  const Scene sc = scene(MapKind::kFourWay, 6, 12.0, 3);
  const Rollout r = run_rollout(sc.log, sc.map, PolicyKind::kLogReplay, {}, short_sim(), 1);
  REQUIRE(r.frames.size() == 26);
  for (std::size_t t = 0; t < r.frames.size(); ++t) CHECK(r.frames[t] == sc.log.frames[t]);
  CHECK(r.events.events.empty());
}

TEST_CASE("expert logs have no failure events") {
  for (MapKind k : {MapKind::kStraight, MapKind::kArc, MapKind::kFourWay}) {
    const Scene sc = scene(k, 8, 20.0, 11);
    CHECK(compute_events(sc.log.frames, 0, sc.map.grid).events.empty());
  }
}

TEST_CASE("collision types") {
  const AgentState a{.x = 0, .y = 0};
  CHECK(collision_type(a, AgentState{.x = 3, .y = 0.5}) == CollisionType::kFront);
  CHECK(collision_type(a, AgentState{.x = -3, .y = 0.5}) == CollisionType::kRear);
  CHECK(collision_type(a, AgentState{.x = 0.5, .y = 2}) == CollisionType::kSide);
  CHECK(collision_type(AgentState{.heading = kPi / 2}, AgentState{.x = 0.2, .y = 3}) == CollisionType::kFront);

  Frame f{AgentState{.x = 0, .y = 0, .id = 1}, AgentState{.x = 4, .y = 0, .id = 2}, AgentState{.x = 40, .y = 0, .id = 3}};
  const auto c = detect_collisions(f);
  REQUIRE(c.size() == 1);
  CHECK(c[0].a == 1);
  CHECK(c[0].type_a == CollisionType::kFront);
  CHECK(c[0].type_b == CollisionType::kRear);
  f[1].x = 4.5 + 1e-9;
  CHECK(detect_collisions(f).empty());
}

TEST_CASE("collision events: one per agent and type") {
  const SemanticGrid g = open_grid();
  std::vector<Frame> frames;
  for (int t = 0; t < 6; ++t) {
    frames.push_back({AgentState{.x = 3, .y = 5, .id = 1}, AgentState{.x = 6, .y = 5, .id = 2}});
  }
  frames.push_back({AgentState{.x = 3, .y = 5, .id = 1}, AgentState{.x = 3.5, .y = 6.5, .id = 2}});
  const EventSummary e = compute_events(frames, 0, g);
  REQUIRE(e.events.size() == 4);
  CHECK(e.events[0] == FailureEvent{1, "collision", 0, CollisionType::kFront});
  CHECK(e.events[1] == FailureEvent{2, "collision", 0, CollisionType::kRear});
  CHECK(e.events[2].first_step == 6);
  CHECK(e.events[2].type == CollisionType::kSide);
  CHECK(e.agents.size() == 2);
  CHECK(e.agents[0].steps == 7);
  CHECK(compute_events(frames, 7, g).events.empty());
}

TEST_CASE("offroad events need more than the allowed run") {
  const SemanticGrid g = open_grid();
  const auto run = [&](int off_steps) {
    std::vector<Frame> frames;
    for (int t = 0; t < 3; ++t) frames.push_back({AgentState{.x = 5, .y = 5, .id = 4}});
    for (int t = 0; t < off_steps; ++t) frames.push_back({AgentState{.x = 15, .y = 5, .id = 4}});
    for (int t = 0; t < 3; ++t) frames.push_back({AgentState{.x = 5, .y = 5, .id = 4}});
    return compute_events(frames, 0, g, 10);
  };
  CHECK(run(10).events.empty());
  CHECK(run(10).agents[0].offroad_steps == 10);
  const EventSummary e = run(11);
  REQUIRE(e.events.size() == 1);
  CHECK(e.events[0] == FailureEvent{4, "offroad", 3, std::nullopt});
}

TEST_CASE("closed loop rollouts") {
  const ModelConfig cfg = oracle::tiny_model_config();
  GoalNet goal(cfg);
  PolicyPredictorNet pol(cfg);
  BcNet bc(cfg);
  randomize(goal.params, 1);
  randomize(pol.params, 2);
  randomize(bc.params, 3);
  const PolicyModels models{&goal, &pol, &bc};
  const Scene sc = scene(MapKind::kStraight, 5, 6.0, 8);
  const SimConfig sim = short_sim();

  const Rollout a = run_rollout(sc.log, sc.map, PolicyKind::kBitsMax, models, sim, 1);
  const Rollout b = run_rollout(sc.log, sc.map, PolicyKind::kBitsMax, models, sim, 99);
  CHECK(a.frames == b.frames);
  for (int t = 0; t <= sim.start_step; ++t) CHECK(a.frames[t] == sc.log.frames[t]);
  CHECK(a.frames.size() <= static_cast<std::size_t>(sim.start_step + sim.steps + 1));

  const Rollout s1 = run_rollout(sc.log, sc.map, PolicyKind::kBitsSample, models, sim, 1);
  const Rollout s2 = run_rollout(sc.log, sc.map, PolicyKind::kBitsSample, models, sim, 1);
  const Rollout s3 = run_rollout(sc.log, sc.map, PolicyKind::kBitsSample, models, sim, 2);
  CHECK(s1.frames == s2.frames);
  CHECK(s1.frames != s3.frames);

  const Rollout full = run_rollout(sc.log, sc.map, PolicyKind::kBits, models, sim, 3);
  CHECK_FALSE(full.decisions.empty());
  for (const auto& d : full.decisions) {
    CHECK(d.decision.total.size() == static_cast<std::size_t>(sim.samples));
    CHECK(d.step >= sim.start_step);
    CHECK((d.step - sim.start_step) % sim.replan_every == 0);
  }
  CHECK(compute_events(full.frames, full.first_step, sc.map.grid) == full.events);

  const Rollout c = run_rollout(sc.log, sc.map, PolicyKind::kBc, models, sim, 5);
  CHECK(c.frames == run_rollout(sc.log, sc.map, PolicyKind::kBc, models, sim, 6).frames);

  CHECK_THROWS_AS(run_rollout(sc.log, sc.map, PolicyKind::kBits, {}, sim, 1), Error);
  SimConfig bad = sim;
  bad.start_step = 10000;
  CHECK_THROWS_AS(run_rollout(sc.log, sc.map, PolicyKind::kLogReplay, {}, bad, 1), Error);

  const auto dir = std::filesystem::temp_directory_path() / "bsim_sim_test";
  std::filesystem::create_directories(dir);
  const std::string path = (dir / "r.json").string();
  save_rollout(path, full);
  const Rollout back = load_rollout(path);
  CHECK(back.frames == full.frames);
  CHECK(back.events == full.events);
  CHECK(back.decisions.size() == full.decisions.size());
  CHECK(back.decisions.back().decision.total == full.decisions.back().decision.total);
  CHECK(back.map == full.map);
  write_file_atomic(path, "{\"format\": \"bsim-rollout\", \"version\": 7}");
  CHECK_THROWS_AS(load_rollout(path), ParseError);
  std::filesystem::remove_all(dir);
}
