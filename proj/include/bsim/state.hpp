#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "bsim/common.hpp"

namespace bsim {

using AgentId = std::uint32_t;

/// Kinematic state and box extent of one vehicle at one step.
struct AgentState {
  double x = 0.0;
  double y = 0.0;
  double heading = 0.0;  // (-pi, pi]
  double speed = 0.0;    // >= 0
  double length = 4.5;
  double width = 1.8;
  AgentId id = 0;

  Pose2 pose() const { return {x, y, heading}; }
  bool operator==(const AgentState&) const = default;
};

/// Throws if the state violates its invariants (finite, normalized heading,
/// non-negative speed, positive extent).
void validate(const AgentState& s);

/// All agents alive at one step, sorted by id.
using Frame = std::vector<AgentState>;

/// Binary search by id in a sorted frame.
const AgentState* find_agent(const Frame& frame, AgentId id);

/// Sorts by id and rejects duplicates.
void normalize_frame(Frame& frame);

}  // namespace bsim
