#include "bsim/dynamics.hpp"

#include <algorithm>
#include <cmath>

namespace bsim {

void validate(const AgentState& s) {
  if (!std::isfinite(s.x) || !std::isfinite(s.y) || !std::isfinite(s.heading) ||
      !std::isfinite(s.speed) || !std::isfinite(s.length) || !std::isfinite(s.width)) {
    throw Error("agent " + std::to_string(s.id) + ": non-finite state");
  }
  if (s.heading <= -kPi || s.heading > kPi) {
    throw Error("agent " + std::to_string(s.id) + ": heading not normalized");
  }
  if (s.speed < 0.0) throw Error("agent " + std::to_string(s.id) + ": negative speed");
  if (s.length <= 0.0 || s.width <= 0.0) {
    throw Error("agent " + std::to_string(s.id) + ": non-positive extent");
  }
}

const AgentState* find_agent(const Frame& frame, AgentId id) {
  auto it = std::lower_bound(frame.begin(), frame.end(), id,
                             [](const AgentState& a, AgentId v) { return a.id < v; });
  if (it == frame.end() || it->id != id) return nullptr;
  return &*it;
}

void normalize_frame(Frame& frame) {
  std::sort(frame.begin(), frame.end(),
            [](const AgentState& a, const AgentState& b) { return a.id < b.id; });
  for (std::size_t i = 1; i < frame.size(); ++i) {
    if (frame[i].id == frame[i - 1].id) {
      throw Error("duplicate agent id " + std::to_string(frame[i].id) + " in frame");
    }
  }
}

void Limits::validate() const {
  if (!(v_max > 0.0 && a_max > 0.0 && omega_max > 0.0 && dt > 0.0)) {
    throw Error("dynamics limits must be strictly positive");
  }
}

namespace {

struct SpeedBounds {
  double lo;
  double hi;
  bool lo_is_slew;
  bool hi_is_slew;
};

SpeedBounds speed_bounds(double prev, const Limits& l) {
  const double slew = l.a_max * l.dt;
  SpeedBounds b{0.0, l.v_max, false, false};
  if (prev - slew > b.lo) {
    b.lo = prev - slew;
    b.lo_is_slew = true;
  }
  if (prev + slew < b.hi) {
    b.hi = prev + slew;
    b.hi_is_slew = true;
  }
  return b;
}

}  // namespace

Control clamp_control(const Control& u, double prev_speed, const Limits& limits) {
  const SpeedBounds b = speed_bounds(prev_speed, limits);
  Control out;
  // lo <= hi always holds because prev lies in [0, v_max] for valid states.
  out.speed_cmd = std::clamp(u.speed_cmd, b.lo, std::max(b.lo, b.hi));
  out.yaw_rate = std::clamp(u.yaw_rate, -limits.omega_max, limits.omega_max);
  return out;
}

AgentState step(const AgentState& state, const Control& u, const Limits& limits) {
  if (!std::isfinite(u.speed_cmd) || !std::isfinite(u.yaw_rate)) {
    throw Error("step: non-finite control");
  }
  if (!std::isfinite(state.x) || !std::isfinite(state.y) || !std::isfinite(state.heading) ||
      !std::isfinite(state.speed)) {
    throw Error("step: non-finite state");
  }
  const Control c = clamp_control(u, state.speed, limits);
  AgentState next = state;
  next.x = state.x + c.speed_cmd * std::cos(state.heading) * limits.dt;
  next.y = state.y + c.speed_cmd * std::sin(state.heading) * limits.dt;
  next.heading = wrap_angle(state.heading + c.yaw_rate * limits.dt);
  next.speed = c.speed_cmd;
  return next;
}

std::vector<AgentState> rollout_controls(const AgentState& start, std::span<const Control> controls,
                                         const Limits& limits) {
  if (controls.empty()) throw Error("rollout_controls: horizon must be >= 1");
  std::vector<AgentState> traj;
  traj.reserve(controls.size());
  AgentState s = start;
  for (const Control& u : controls) {
    s = step(s, u, limits);
    traj.push_back(s);
  }
  return traj;
}

std::vector<Control> rollout_vjp(const AgentState& start, std::span<const Control> controls,
                                 const Limits& limits, std::span<const StateAdjoint> d_traj) {
  const std::size_t n = controls.size();
  if (d_traj.size() != n) throw Error("rollout_vjp: adjoint length mismatch");

  // Forward pass recording the quantities the reverse sweep needs.
  std::vector<double> heading_before(n), speed(n);
  std::vector<char> speed_free(n), speed_slew(n), yaw_free(n);
  AgentState s = start;
  for (std::size_t k = 0; k < n; ++k) {
    const SpeedBounds b = speed_bounds(s.speed, limits);
    const double hi = std::max(b.lo, b.hi);
    const double u = controls[k].speed_cmd;
    double v;
    if (u < b.lo) {
      v = b.lo;
      speed_free[k] = 0;
      speed_slew[k] = b.lo_is_slew;
    } else if (u > hi) {
      v = hi;
      speed_free[k] = 0;
      speed_slew[k] = (hi == b.hi) ? b.hi_is_slew : b.lo_is_slew;
    } else {
      v = u;
      speed_free[k] = 1;
      speed_slew[k] = 0;
    }
    yaw_free[k] = std::abs(controls[k].yaw_rate) <= limits.omega_max;
    heading_before[k] = s.heading;
    speed[k] = v;
    s = step(s, controls[k], limits);
  }

  std::vector<Control> grad(n);
  StateAdjoint carry;  // adjoint flowing from step k+1 into state k
  for (std::size_t kk = n; kk-- > 0;) {
    const double gx = carry.x + d_traj[kk].x;
    const double gy = carry.y + d_traj[kk].y;
    const double gh = carry.heading + d_traj[kk].heading;
    double gv = carry.speed + d_traj[kk].speed;

    const double c = std::cos(heading_before[kk]);
    const double sn = std::sin(heading_before[kk]);
    const double dt = limits.dt;
    gv += gx * c * dt + gy * sn * dt;
    StateAdjoint prev;
    prev.x = gx;
    prev.y = gy;
    prev.heading = gh - gx * speed[kk] * sn * dt + gy * speed[kk] * c * dt;
    prev.speed = speed_slew[kk] ? gv : 0.0;

    grad[kk].speed_cmd = speed_free[kk] ? gv : 0.0;
    grad[kk].yaw_rate = yaw_free[kk] ? gh * dt : 0.0;
    carry = prev;
  }
  return grad;
}

std::vector<Control> back_derive_controls(std::span<const AgentState> states, double dt) {
  std::vector<Control> out;
  if (states.size() < 2) return out;
  out.reserve(states.size() - 1);
  for (std::size_t i = 1; i < states.size(); ++i) {
    out.push_back({states[i].speed, wrap_angle(states[i].heading - states[i - 1].heading) / dt});
  }
  return out;
}

}  // namespace bsim
