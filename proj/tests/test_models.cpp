#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <random>

#include "bsim/models.hpp"
#include "bsim/world.hpp"
#include "gradchecks.hpp"

using namespace bsim;

namespace {

RasterContext context_for(const std::vector<Frame>& frames, const SemanticGrid& grid, AgentId ego, int t,
                          const ModelConfig& cfg) {
  return rasterize_context(frames, grid, ego, t, cfg.raster);
}

struct Scene {
  MapData map;
  SceneLog log;
};

Scene small_scene() {
  MapSpec s;
  s.kind = MapKind::kStraight;
  s.lanes = 2;
  s.seed = 3;
  Scene sc{gen_map(s), {}};
  sc.log = gen_expert_log(sc.map, 4, 5.0, 1);
  return sc;
}

void randomize(nn::ParamStore& ps, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-0.3, 0.3);
  for (auto& p : ps.params()) {
    for (double& v : p.value.data) v += u(rng);
  }
}

}  // namespace

TEST_CASE("untrained goal net is uniform with zero residuals") {
  const ModelConfig cfg = oracle::tiny_model_config();
  const GoalNet net(cfg);
  const Scene sc = small_scene();
  const AgentId ego = sc.log.frames[12][0].id;
  const GoalMap gm = goalnet_forward(net, context_for(sc.log.frames, sc.map.grid, ego, 12, cfg));
  for (double v : gm.data) CHECK(v == 0.0);
  const GoalPose g = gm.decode(5);
  CHECK(g.log_likelihood == doctest::Approx(-std::log(32.0 * 32.0)));
  const Vec2 c = cfg.raster.local_from_pixel(0, 5);
  CHECK(g.x == c.x);
  CHECK(g.y == c.y);
}

TEST_CASE("goal decode stays inside the window") {
  ModelConfig cfg = oracle::tiny_model_config();
  GoalMap gm;
  gm.raster = cfg.raster;
  const int S = cfg.raster.size;
  gm.data.assign(4 * S * S, 0.0);
  std::mt19937_64 rng(2);
  std::normal_distribution<double> nd(0.0, 3.0);
  for (double& v : gm.data) v = nd(rng);
  for (int cell = 0; cell < S * S; ++cell) {
    const GoalPose g = gm.decode(cell);
    CHECK(cfg.raster.local_in_window({g.x, g.y}));
    CHECK(gm.cell_of(g.x, g.y) == cell);
  }
  CHECK_THROWS_AS(gm.decode(S * S), Error);
}

TEST_CASE("goal sampling") {
  const ModelConfig cfg = oracle::tiny_model_config();
  const int S = cfg.raster.size;
  GoalMap gm;
  gm.raster = cfg.raster;
  gm.data.assign(4 * S * S, 0.0);
  std::mt19937_64 rng(5);

  GoalMap one = gm;
  std::fill(one.data.begin(), one.data.begin() + S * S, -1e9);
  one.data[77] = 0.0;
  for (const auto& g : sample_goals(one, 50, 1.0, rng)) CHECK(g.cell == 77);

  GoalMap peaked = gm;
  std::normal_distribution<double> nd(0.0, 1.0);
  for (int i = 0; i < S * S; ++i) peaked.data[i] = nd(rng);
  peaked.data[300] = 4.0;
  for (const auto& g : sample_goals(peaked, 50, 1e-3, rng)) CHECK(g.cell == 300);
  const auto mx = sample_goals(peaked, 50, 1.0, rng, GoalMode::kMax);
  REQUIRE(mx.size() == 1);
  CHECK(mx[0].cell == 300);

  // uniform: per-cell counts against binomial bounds
  const int N = S * S, K = 50, reps = 1000;
  std::vector<int> counts(N, 0);
  for (int r = 0; r < reps; ++r) {
    for (const auto& g : sample_goals(gm, K, 1.0, rng)) ++counts[g.cell];
  }
  const double n = static_cast<double>(K) * reps, p = 1.0 / N;
  const double mean = n * p, sd = std::sqrt(n * p * (1 - p));
  int within3 = 0;
  for (int c : counts) {
    within3 += std::abs(c - mean) <= 3.0 * sd;
    CHECK(std::abs(c - mean) <= 5.0 * sd);
  }
  CHECK(within3 >= static_cast<int>(0.99 * N));

  CHECK_THROWS_AS(sample_goals(gm, 0, 1.0, rng), Error);
  CHECK_THROWS_AS(sample_goals(gm, 5, 0.0, rng), Error);
}

TEST_CASE("goal net only sees the raster window") {
  const ModelConfig cfg = oracle::tiny_model_config();
  GoalNet net(cfg);
  randomize(net.params, 3);
  const Scene sc = small_scene();
  const AgentId ego = sc.log.frames[12][0].id;
  std::vector<Frame> far = sc.log.frames;
  for (auto& f : far) {
    f.push_back(AgentState{.x = 1000.0, .y = 1000.0, .id = 999});
    normalize_frame(f);
  }
  const GoalMap a = goalnet_forward(net, context_for(sc.log.frames, sc.map.grid, ego, 12, cfg));
  const GoalMap b = goalnet_forward(net, context_for(far, sc.map.grid, ego, 12, cfg));
  CHECK(a.data == b.data);
}

TEST_CASE("policy is conditioned on the goal and predictor is per agent") {
  const ModelConfig cfg = oracle::tiny_model_config();
  PolicyPredictorNet net(cfg);
  randomize(net.params, 4);
  const Scene sc = small_scene();
  const AgentId ego = sc.log.frames[12][0].id;
  const RasterContext ctx = context_for(sc.log.frames, sc.map.grid, ego, 12, cfg);
  const std::vector<GoalPose> goals{{5.0, 0.0, 0.0}, {3.0, 1.0, 0.4}};
  const auto u = policy_forward(net, ctx, goals);
  REQUIRE(u.size() == 2);
  CHECK(u[0].size() == static_cast<std::size_t>(cfg.horizon));
  CHECK(u[0] != u[1]);

  CHECK(predictor_forward(net, ctx, std::span<const AgentState>{}).empty());
  std::vector<AgentState> nb;
  for (const auto& a : sc.log.frames[12]) {
    if (a.id != ego) nb.push_back(a);
  }
  REQUIRE(nb.size() >= 2);
  const auto p1 = predictor_forward(net, ctx, nb);
  std::vector<AgentState> rev(nb.rbegin(), nb.rend());
  const auto p2 = predictor_forward(net, ctx, rev);
  REQUIRE(p1.size() == nb.size());
  for (std::size_t i = 0; i < nb.size(); ++i) CHECK(p1[i] == p2[nb.size() - 1 - i]);

  const PlanForward pf = plan_forward(net, ctx, goals, nb);
  CHECK(pf.controls == u);
  CHECK(pf.neighbour_paths == p1);
}

TEST_CASE("untrained occupancy net is uniform per step") {
  const ModelConfig cfg = oracle::tiny_model_config();
  const OccupancyNet net(cfg);
  const Scene sc = small_scene();
  const AgentId ego = sc.log.frames[12][0].id;
  const OccupancyPrediction p = occupancy_forward(net, context_for(sc.log.frames, sc.map.grid, ego, 12, cfg));
  CHECK(p.steps == cfg.occ_steps);
  const int n = p.size * p.size;
  for (int k = 0; k < p.steps; ++k) {
    double s = 0.0;
    for (int c = 0; c < n; ++c) {
      CHECK(p.at(k, c) == doctest::Approx(1.0 / n));
      s += p.at(k, c);
    }
    CHECK(std::abs(s - 1.0) < 1e-6);
  }
}

TEST_CASE("model checkpoints round trip and check their kind") {
  const ModelConfig cfg = oracle::tiny_model_config();
  GoalNet net(cfg);
  randomize(net.params, 9);
  const auto dir = std::filesystem::temp_directory_path() / "bsim_models_test";
  std::filesystem::create_directories(dir);
  const std::string path = (dir / "goal.ckpt").string();
  save_model(path, net);
  const GoalNet back = load_goal_net(path);
  CHECK(back.params[0].value.data == net.params[0].value.data);
  CHECK(to_json(back.cfg) == to_json(cfg));
  CHECK_THROWS_AS(load_policy_net(path), Error);
  CHECK_THROWS_AS(load_bc_net((dir / "none.ckpt").string()), Error);
  std::filesystem::remove_all(dir);
}

TEST_CASE("model config validation") {
  ModelConfig c = oracle::tiny_model_config();
  c.raster.size = 40;
  CHECK_THROWS_AS(c.validate(), Error);
  c = oracle::tiny_model_config();
  c.enc_channels = {4, 4};
  CHECK_THROWS_AS(GoalNet{c}, Error);
  CHECK(model_config_from_json(to_json(oracle::tiny_model_config())).raster.size == 32);
}
