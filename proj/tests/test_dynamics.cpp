#include <doctest.h>

#include <cmath>
#include <random>

#include "bsim/dynamics.hpp"

using namespace bsim;

TEST_CASE("step basics") {
  const Limits lim;
  AgentState s;
  CHECK(step(s, {0.0, 0.0}, lim) == s);

  s.speed = 10.0;
  const AgentState n = step(s, {10.0, 0.0}, lim);
  CHECK(n.x == doctest::Approx(1.0));
  CHECK(n.y == 0.0);
  CHECK(n.heading == 0.0);
  CHECK(n.speed == 10.0);

  CHECK(step(s, {100.0, 0.0}, lim).speed == doctest::Approx(11.0));
  CHECK(step(s, {-5.0, 0.0}, lim).speed == doctest::Approx(9.0));
  CHECK(step(s, {0.0, 10.0}, lim).heading == doctest::Approx(kPi / 2 * 0.1));
  CHECK_THROWS_AS(step(s, {NAN, 0.0}, lim), Error);
}

TEST_CASE("clamp is a projection") {
  const Limits lim;
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-50.0, 50.0), v(0.0, 30.0);
  for (int i = 0; i < 2000; ++i) {
    const double prev = v(rng);
    const Control c = clamp_control({u(rng), u(rng)}, prev, lim);
    CHECK(clamp_control(c, prev, lim) == c);
    CHECK(c.speed_cmd >= 0.0);
    CHECK(c.speed_cmd <= lim.v_max);
    CHECK(std::abs(c.speed_cmd - prev) <= lim.a_max * lim.dt + 1e-12);
    CHECK(std::abs(c.yaw_rate) <= lim.omega_max);
  }
}

TEST_CASE("rollout from rest with zero controls stays put") {
  AgentState s{.x = 3.0, .y = -2.0, .heading = 0.7};
  const std::vector<Control> u(20);
  const auto traj = rollout_controls(s, u, Limits{});
  REQUIRE(traj.size() == 20);
  for (const auto& t : traj) CHECK(t == s);
  CHECK_THROWS_AS(rollout_controls(s, std::span<const Control>{}, Limits{}), Error);
}

namespace {

double arc_error(double dt) {
  Limits lim;
  lim.dt = dt;
  const int n = static_cast<int>(std::lround(2.0 / dt));
  AgentState s{.speed = 5.0};
  const std::vector<Control> u(static_cast<std::size_t>(n), Control{5.0, 0.5});
  const auto traj = rollout_controls(s, u, lim);
  const double th = 0.5 * 2.0;
  const double ex = 10.0 * std::sin(th), ey = 10.0 * (1.0 - std::cos(th));
  return std::hypot(traj.back().x - ex, traj.back().y - ey);
}

}  // namespace

TEST_CASE("constant controls trace a circle and converge at first order") {
  Limits lim;
  AgentState s{.speed = 5.0};
  const std::vector<Control> u(20, Control{5.0, 0.5});
  const auto traj = rollout_controls(s, u, lim);
  CHECK(traj.back().heading == doctest::Approx(1.0));
  CHECK(arc_error(0.1) < 0.5);
  const double e1 = arc_error(0.1), e2 = arc_error(0.05), e3 = arc_error(0.025);
  CHECK(e1 / e2 == doctest::Approx(2.0).epsilon(0.15));
  CHECK(e2 / e3 == doctest::Approx(2.0).epsilon(0.15));
}

TEST_CASE("rollout_vjp matches finite differences") {
  const Limits lim;
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-0.4, 0.4);
  AgentState s{.x = 1.0, .y = 2.0, .heading = 0.3, .speed = 8.0};
  std::vector<Control> c(20);
  for (auto& k : c) k = {8.0 + 2.0 * u(rng), u(rng)};
  std::vector<StateAdjoint> w(20);
  for (auto& a : w) a = {u(rng), u(rng), u(rng), u(rng)};
  auto loss = [&](const std::vector<Control>& cc) {
    const auto t = rollout_controls(s, cc, lim);
    double l = 0.0;
    for (std::size_t k = 0; k < t.size(); ++k) {
      l += w[k].x * t[k].x + w[k].y * t[k].y + w[k].heading * t[k].heading + w[k].speed * t[k].speed;
    }
    return l;
  };
  const auto g = rollout_vjp(s, c, lim, w);
  const double h = 1e-6;
  for (std::size_t k = 0; k < c.size(); ++k) {
    for (int comp = 0; comp < 2; ++comp) {
      auto p = c, m = c;
      (comp == 0 ? p[k].speed_cmd : p[k].yaw_rate) += h;
      (comp == 0 ? m[k].speed_cmd : m[k].yaw_rate) -= h;
      const double num = (loss(p) - loss(m)) / (2 * h);
      const double ana = comp == 0 ? g[k].speed_cmd : g[k].yaw_rate;
      CHECK(std::abs(num - ana) <= 1e-4 * std::max(1.0, std::abs(num)));
    }
  }

  // final x with respect to the first yaw rate
  std::vector<StateAdjoint> only_x(20);
  only_x.back().x = 1.0;
  const auto gx = rollout_vjp(s, c, lim, only_x);
  auto p = c, m = c;
  p[0].yaw_rate += h;
  m[0].yaw_rate -= h;
  const double num = (rollout_controls(s, p, lim).back().x - rollout_controls(s, m, lim).back().x) / (2 * h);
  CHECK(gx[0].yaw_rate == doctest::Approx(num).epsilon(1e-4));
  CHECK(gx[0].yaw_rate != 0.0);
}

TEST_CASE("back-derived controls reproduce the states") {
  const Limits lim;
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  AgentState s{.speed = 6.0};
  std::vector<Control> c(30);
  for (auto& k : c) k = {6.0 + u(rng), 0.5 * u(rng)};
  auto traj = rollout_controls(s, c, lim);
  traj.insert(traj.begin(), s);
  const auto d = back_derive_controls(traj, lim.dt);
  const auto again = rollout_controls(s, d, lim);
  for (std::size_t k = 0; k < again.size(); ++k) {
    CHECK(std::abs(again[k].x - traj[k + 1].x) < 1e-9);
    CHECK(std::abs(again[k].y - traj[k + 1].y) < 1e-9);
  }
}
