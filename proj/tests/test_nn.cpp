#include <doctest.h>

#include <cmath>
#include <random>

#include "bsim/nn/checkpoint.hpp"
#include "bsim/nn/losses.hpp"
#include "bsim/nn/ops.hpp"
#include "bsim/nn/optim.hpp"
#include "gradchecks.hpp"

using namespace bsim;
using namespace bsim::nn;

TEST_CASE("gradients of every layer, loss and decoder match finite differences") {
  for (const auto& [name, res] : oracle::run_gradchecks(100, 1)) {
    INFO(name);
    CHECK(res.checked >= 100);
    CHECK(res.max_rel < 1e-3);
  }
}

TEST_CASE("identity linear layer and zero head") {
  ParamStore ps;
  Tensor eye({3, 3});
  for (int i = 0; i < 3; ++i) eye.data[i * 3 + i] = 1.0;
  const int w = ps.add("w", eye);
  const int b = ps.add_zeros("b", {3});
  Graph g(ps);
  const Tensor x({2, 3}, std::vector<double>{1, 2, 3, -4, 5, -6});
  CHECK(g.value(linear(g, g.input(x), g.param(w), g.param(b))).data == x.data);

  ParamStore z;
  const int zw = z.add_zeros("w", {2, 3, 3, 3});
  const int zb = z.add_zeros("b", {2});
  Graph g2(z);
  std::mt19937_64 rng(1);
  Tensor in({1, 3, 4, 4});
  for (double& v : in.data) v = std::normal_distribution<double>()(rng);
  for (double v : g2.value(conv2d(g2, g2.input(in), g2.param(zw), g2.param(zb), 1)).data) CHECK(v == 0.0);
  CHECK_THROWS_AS(conv2d(g2, g2.input(Tensor({1, 2, 4, 4})), g2.param(zw), g2.param(zb), 1), Error);
}

TEST_CASE("initialization is deterministic per seed") {
  std::mt19937_64 a(9), b(9);
  ParamStore pa, pb;
  pa.add_kaiming("w", {4, 3, 3, 3}, 27, a);
  pb.add_kaiming("w", {4, 3, 3, 3}, 27, b);
  CHECK(pa[0].value.data == pb[0].value.data);
  const double bound = std::sqrt(6.0 / 27.0);
  for (double v : pa[0].value.data) CHECK(std::abs(v) <= bound);
}

TEST_CASE("backward basics") {
  ParamStore ps;
  const int p = ps.add("p", Tensor({2, 3}, std::vector<double>{1, 2, 3, 4, 5, 6}));
  const int q = ps.add("q", Tensor({2}, std::vector<double>{7, 8}));
  ps.zero_grad();
  Graph g(&ps);
  g.param(q);
  g.backward(sum(g, g.param(p)));
  for (double v : ps[p].grad.data) CHECK(v == 1.0);
  for (double v : ps[q].grad.data) CHECK(v == 0.0);
}

TEST_CASE("adam update rules") {
  ParamStore ps;
  ps.add("w", Tensor({3}, std::vector<double>{1.0, -2.0, 0.5}));
  ps.zero_grad();
  AdamState st;
  st.lr = 1e-3;
  REQUIRE(adam_step(ps, st));
  CHECK(ps[0].value.data == std::vector<double>{1.0, -2.0, 0.5});

  ps[0].grad.data = {0.3, -5.0, 1e-3};
  AdamState s1;
  s1.lr = 1e-3;
  ParamStore p1 = ps;
  p1[0].grad = ps[0].grad;
  REQUIRE(adam_step(p1, s1));
  CHECK(p1[0].value.data[0] == doctest::Approx(1.0 - 1e-3).epsilon(1e-6));
  CHECK(p1[0].value.data[1] == doctest::Approx(-2.0 + 1e-3).epsilon(1e-6));
  CHECK(p1[0].value.data[2] == doctest::Approx(0.5 - 1e-3).epsilon(1e-4));
  // zero gradient afterwards: moments decay
  const double m_before = s1.m[0][0];
  p1.zero_grad();
  adam_step(p1, s1);
  CHECK(s1.m[0][0] == doctest::Approx(0.9 * m_before));

  AdamState s2;
  s2.lr = 1e-2;
  ParamStore p2;
  p2.add("w", Tensor({1}, 0.0));
  double last = 0.0;
  for (int i = 0; i < 2000; ++i) {
    p2[0].grad = Tensor({1}, 0.37);
    const double before = p2[0].value.data[0];
    adam_step(p2, s2);
    last = before - p2[0].value.data[0];
  }
  CHECK(last == doctest::Approx(1e-2).epsilon(1e-4));

  p2[0].grad = Tensor({1}, NAN);
  const double keep = p2[0].value.data[0];
  CHECK_FALSE(adam_step(p2, s2));
  CHECK(p2[0].value.data[0] == keep);
  CHECK(s2.skipped == 1);
}

TEST_CASE("spatial cross-entropy closed forms") {
  Graph g;
  for (int n : {1, 4, 37, 96 * 96}) {
    const Var x = g.input(Tensor({1, 1, 1, n}, 0.25));
    const std::vector<int> t{n / 2};
    CHECK(std::abs(g.value(spatial_cross_entropy(g, x, t)).data[0] - std::log(static_cast<double>(n))) < 1e-9);
  }
  const Var two = g.input(Tensor({1, 1, 1, 2}, std::vector<double>{0.0, std::log(3.0)}));
  const std::vector<int> t0{0};
  CHECK(g.value(spatial_cross_entropy(g, two, t0)).data[0] == doctest::Approx(std::log(4.0)));
  const Var peaked = g.input(Tensor({1, 1, 1, 3}, std::vector<double>{500.0, 0.0, 0.0}));
  CHECK(g.value(spatial_cross_entropy(g, peaked, t0)).data[0] < 1e-12);

  std::mt19937_64 rng(4);
  std::normal_distribution<double> nd(0.0, 5.0);
  std::vector<double> logits(50);
  for (double& v : logits) v = nd(rng);
  const auto p = spatial_softmax(logits);
  double s = 0.0;
  for (double v : p) s += v;
  CHECK(std::abs(s - 1.0) < 1e-6);
}

TEST_CASE("masked residual loss") {
  Graph g;
  Tensor x({1, 4, 2, 2});
  for (double& v : x.data) v = 99.0;  // garbage outside the target cell
  const int cell = 3;
  x.data[4 + cell] = 0.1;
  x.data[8 + cell] = 0.2;
  x.data[12 + cell] = kPi - 0.1;
  const std::vector<int> cells{cell};
  const std::vector<std::array<double, 3>> exact{{0.1, 0.2, kPi - 0.1}};
  CHECK(g.value(masked_residual_loss(g, g.input(x), cells, exact)).data[0] == doctest::Approx(0.0));
  const std::vector<std::array<double, 3>> wrapped{{0.1, 0.2, -kPi + 0.1}};
  CHECK(g.value(masked_residual_loss(g, g.input(x), cells, wrapped)).data[0] == doctest::Approx(0.04));
  Tensor z({1, 4, 2, 2});
  const std::vector<std::array<double, 3>> t{{0.25, -0.25, 0.0}};
  CHECK(g.value(masked_residual_loss(g, g.input(z), cells, t)).data[0] == doctest::Approx(0.125));
}

TEST_CASE("trajectory loss") {
  Graph g;
  Tensor ref({2, 60});
  for (std::size_t i = 0; i < ref.size(); ++i) ref.data[i] = 0.01 * static_cast<double>(i % 7);
  CHECK(g.value(l2_traj_loss(g, g.input(ref), ref)).data[0] == 0.0);
  Tensor off = ref;
  for (std::size_t i = 0; i < off.size(); i += 3) off.data[i] += 1.0;
  CHECK(g.value(l2_traj_loss(g, g.input(off), ref)).data[0] == doctest::Approx(1.0));

  // gradient reaches the first control through the dynamics
  ParamStore ps;
  const int raw = ps.add_zeros("raw", {1, 40});
  Tensor moving({1, 60});
  for (int k = 0; k < 20; ++k) moving.data[3 * k] = 1.0 * (k + 1);
  ps.zero_grad();
  Graph gg(&ps);
  const std::vector<AgentState> start{AgentState{.speed = 5.0}};
  gg.backward(l2_traj_loss(gg, control_rollout(gg, gg.param(raw), start, Limits{}), moving));
  CHECK(ps[raw].grad.data[0] != 0.0);
}

TEST_CASE("checkpoint round trip and errors") {
  Checkpoint ck;
  ck.kind = "goal_net";
  ck.meta = {{"a", 1}};
  std::mt19937_64 rng(3);
  ck.params.add_kaiming("w", {3, 4}, 4, rng);
  ck.params.add_zeros("b", {3});
  const std::string bytes = serialize_checkpoint(ck);
  const Checkpoint back = parse_checkpoint(bytes);
  CHECK(back.kind == "goal_net");
  CHECK(back.meta == ck.meta);
  CHECK(back.params[0].value.data == ck.params[0].value.data);
  CHECK(back.params[1].name == "b");
  CHECK_THROWS_AS(parse_checkpoint(bytes.substr(0, bytes.size() - 3)), Error);
  CHECK_THROWS_AS(parse_checkpoint("bsim-ckpt 7\n{}\n"), Error);
}
