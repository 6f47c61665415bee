#include <doctest.h>

#include <cmath>
#include <random>

#include "bsim/raster.hpp"
#include "bsim/world.hpp"
#include "oracles.hpp"

using namespace bsim;

namespace {

std::vector<std::uint8_t> random_mask(std::mt19937_64& rng, int rows, int cols) {
  std::bernoulli_distribution fill(std::uniform_real_distribution<double>(0.0, 0.2)(rng));
  std::vector<std::uint8_t> m(static_cast<std::size_t>(rows) * cols);
  for (auto& v : m) v = fill(rng);
  return m;
}

double occupied(const RasterContext& c, int channel, int r, int col) { return c.at(channel, r, col); }

SemanticGrid blank_grid() {
  SemanticGrid g;
  g.rows = g.cols = 4;
  g.origin_x = g.origin_y = -1000.0;
  g.data.assign(4 * 16, 0.0f);
  return g;
}

}  // namespace

TEST_CASE("distance map small cases") {
  const std::vector<std::uint8_t> all(9, 1);
  const auto z = distance_map(all, 3, 3, 20);
  for (int v : z.values) CHECK(v == 0);

  std::vector<std::uint8_t> centre(9, 0);
  centre[4] = 1;
  const auto d = distance_map(centre, 3, 3, 2);
  CHECK(d.values == std::vector<int>{2, 1, 2, 1, 0, 1, 2, 1, 2});

  const std::vector<std::uint8_t> none(12, 0);
  const auto e = distance_map(none, 3, 4, 20);
  CHECK(e.empty_mask);
  for (int v : e.values) CHECK(v == 20);
  CHECK_THROWS_AS(distance_map(none, 3, 3, 20), Error);
}

TEST_CASE("distance map equals BFS and is 1-Lipschitz") {
  std::mt19937_64 rng(42);
  for (int trial = 0; trial < 30; ++trial) {
    const auto m = random_mask(rng, 40, 48);
    const auto d = distance_map(m, 40, 48, 20);
    CHECK(d.values == oracle::bfs_distance(m, 40, 48, 20));
    for (int r = 0; r < 40; ++r) {
      for (int c = 0; c + 1 < 48; ++c) CHECK(std::abs(d.at(r, c) - d.at(r, c + 1)) <= 1);
    }
    for (int r = 0; r + 1 < 40; ++r) {
      for (int c = 0; c < 48; ++c) CHECK(std::abs(d.at(r, c) - d.at(r + 1, c)) <= 1);
    }
  }
}

TEST_CASE("roi crop exactness") {
  const int rows = 20, cols = 24;
  std::vector<double> constant(rows * cols, 3.25);
  for (double v : roi_crop(constant, 1, rows, cols, RoiWindow{10.3, 7.7, 0.4, 5.0, 3.0})) CHECK(v == doctest::Approx(3.25));

  std::vector<double> idx(rows * cols);
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<double>(i);
  const auto copy = roi_crop(idx, 1, rows, cols, RoiWindow{10.0, 8.0, 0.0, 7.0, 7.0});
  for (int b = 0; b < 7; ++b) {
    for (int a = 0; a < 7; ++a) CHECK(copy[b * 7 + a] == idx[(8 - 3 + b) * cols + (10 - 3 + a)]);
  }

  std::vector<double> affine(2 * rows * cols);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      affine[r * cols + c] = c;
      affine[rows * cols + r * cols + c] = 1.5 - 0.25 * c + 2.0 * r;
    }
  }
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-kPi, kPi);
  for (int k = 0; k < 50; ++k) {
    const RoiWindow w{11.0 + u(rng), 9.0 + u(rng), u(rng), 6.0, 4.0};
    const auto out = roi_crop(affine, 2, rows, cols, w);
    const auto pts = roi_lattice(w, 7);
    for (std::size_t p = 0; p < pts.size(); ++p) {
      CHECK(out[p] == doctest::Approx(pts[p].x).epsilon(1e-12));
      CHECK(out[49 + p] == doctest::Approx(1.5 - 0.25 * pts[p].x + 2.0 * pts[p].y).epsilon(1e-12));
    }
  }
  CHECK_THROWS_AS(roi_crop(constant, 1, rows, cols, RoiWindow{NAN, 0.0, 0.0, 1.0, 1.0}), Error);
}

TEST_CASE("ego box is aligned with the ego frame") {
  RasterConfig cfg;
  const std::vector<Frame> frames{{AgentState{.x = 4.0, .y = 9.0, .heading = kPi / 2, .length = 4.5, .width = 1.8, .id = 1}}};
  const auto ctx = rasterize_context(frames, blank_grid(), 1, 0, cfg);
  const int now = kNumSemanticLayers + cfg.history;
  const int r = cfg.ego_row(), c = cfg.ego_col();
  CHECK(occupied(ctx, now, r, c + 3) == 1.0);
  CHECK(occupied(ctx, now, r, c - 4) == 1.0);
  CHECK(occupied(ctx, now, r, c + 4) == 0.0);
  CHECK(occupied(ctx, now, r + 3, c) == 0.0);
  CHECK(occupied(ctx, now, r - 3, c) == 0.0);
  for (int f = 0; f < cfg.history; ++f) {
    for (int rr = 0; rr < cfg.size; ++rr) CHECK(occupied(ctx, kNumSemanticLayers + f, rr, c) == 0.0);
  }
}

TEST_CASE("neighbour ten metres ahead lands twenty pixels ahead") {
  RasterConfig cfg;
  cfg.history = 0;
  const std::vector<Frame> frames{{AgentState{.x = 0.0, .y = 0.0, .heading = 0.3, .id = 1},
                                   AgentState{.x = 10.0 * std::cos(0.3), .y = 10.0 * std::sin(0.3), .heading = 0.3, .id = 2}}};
  const auto ctx = rasterize_context(frames, blank_grid(), 1, 0, cfg);
  auto centroid = [&](int c0, int c1) {
    double sc = 0.0, sr = 0.0, n = 0.0;
    for (int r = 0; r < cfg.size; ++r) {
      for (int c = c0; c < c1; ++c) {
        if (ctx.at(kNumSemanticLayers, r, c) > 0.0) {
          sc += c;
          sr += r;
          n += 1.0;
        }
      }
    }
    REQUIRE(n > 0.0);
    return Vec2{sc / n, sr / n};
  };
  const Vec2 ego = centroid(0, cfg.ego_col() + 10);
  const Vec2 other = centroid(cfg.ego_col() + 10, cfg.size);
  CHECK(other.x - ego.x == doctest::Approx(20.0));
  CHECK(other.y - ego.y == doctest::Approx(0.0));
}

TEST_CASE("history frames follow the lifespan") {
  RasterConfig cfg;
  std::vector<Frame> frames(4);
  for (int t = 2; t < 4; ++t) frames[t].push_back(AgentState{.x = 0.5 * t, .id = 3});
  const auto ctx = rasterize_context(frames, blank_grid(), 3, 3, cfg);
  for (int f = 0; f <= cfg.history; ++f) {
    double s = 0.0;
    for (int r = 0; r < cfg.size; ++r) {
      for (int c = 0; c < cfg.size; ++c) s += ctx.at(kNumSemanticLayers + f, r, c);
    }
    if (f < 9) {
      CHECK(s == 0.0);
    } else {
      CHECK(s > 0.0);
    }
  }
  CHECK_THROWS_AS(rasterize_context(frames, blank_grid(), 3, 1, cfg), Error);
}

TEST_CASE("rasterization is covariant under rigid motion") {
  MapSpec spec;
  spec.kind = MapKind::kArc;
  spec.sweep_deg = 180.0;
  spec.seed = 3;
  const MapData m0 = gen_map(spec);
  const SceneLog log = gen_expert_log(m0, 3, 3.0, 5);
  RasterConfig cfg;
  const AgentId ego = log.frames[15][0].id;

  // Pixel-aligned translation: exact.
  MapSpec moved = spec;
  moved.pose = {20.0, -35.5, 0.0};
  const MapData m1 = gen_map(moved);
  std::vector<Frame> shifted = log.frames;
  for (auto& f : shifted) {
    for (auto& a : f) {
      a.x += 20.0;
      a.y -= 35.5;
    }
  }
  const auto c0 = rasterize_context(log.frames, m0.grid, ego, 15, cfg);
  const auto c1 = rasterize_context(shifted, m1.grid, ego, 15, cfg);
  CHECK(c0.data == c1.data);

  // Rotation: occupancy layers agree up to boundary pixels.
  std::vector<Frame> turned = log.frames;
  const Pose2 rot{3.0, 4.0, 1.1};
  for (auto& f : turned) {
    for (auto& a : f) {
      const Pose2 p = to_world(rot, a.pose());
      a.x = p.x;
      a.y = p.y;
      a.heading = p.heading;
    }
  }
  const auto c2 = rasterize_context(turned, blank_grid(), ego, 15, cfg);
  const auto c3 = rasterize_context(log.frames, blank_grid(), ego, 15, cfg);
  int diff = 0, occ = 0;
  for (std::size_t i = 0; i < c2.data.size(); ++i) {
    diff += c2.data[i] != c3.data[i];
    occ += c3.data[i] > 0.0;
  }
  REQUIRE(occ > 0);
  CHECK(diff <= occ / 50 + 2);
}
