#pragma once

#include <span>
#include <vector>

#include "bsim/state.hpp"

namespace bsim {

/// Commanded speed and yaw rate for one step.
struct Control {
  double speed_cmd = 0.0;
  double yaw_rate = 0.0;
  bool operator==(const Control&) const = default;
};

struct Limits {
  double v_max = 30.0;
  double a_max = 10.0;
  double omega_max = kPi / 2.0;
  double dt = 0.1;

  void validate() const;
};

/// Projects a control onto the feasible set given the previous speed:
/// 0 <= v <= v_max, |v - prev| <= a_max*dt, |omega| <= omega_max.
Control clamp_control(const Control& u, double prev_speed, const Limits& limits);

/// Unicycle Euler step. The clamped commanded speed drives the position update.
AgentState step(const AgentState& state, const Control& u, const Limits& limits);

/// Sequential application of step(); returns H states (excluding the start).
std::vector<AgentState> rollout_controls(const AgentState& start, std::span<const Control> controls,
                                         const Limits& limits);

/// Adjoint of a trajectory state (x, y, heading, speed).
struct StateAdjoint {
  double x = 0.0;
  double y = 0.0;
  double heading = 0.0;
  double speed = 0.0;
};

/// Vector-Jacobian product of rollout_controls: given dL/d(trajectory[k]) for
/// every step, returns dL/d(controls[k]). Clamped components get the
/// subgradient of the projection.
std::vector<Control> rollout_vjp(const AgentState& start, std::span<const Control> controls,
                                 const Limits& limits, std::span<const StateAdjoint> d_traj);

/// Recovers the controls that reproduce consecutive states under step().
std::vector<Control> back_derive_controls(std::span<const AgentState> states, double dt);

}  // namespace bsim
