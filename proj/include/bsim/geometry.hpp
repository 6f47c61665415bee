#pragma once

#include <array>

#include "bsim/state.hpp"

namespace bsim {

/// Corners of an oriented box, counter-clockwise starting at rear-right.
std::array<Vec2, 4> box_corners(const AgentState& s);
std::array<Vec2, 4> box_corners(const Pose2& pose, double length, double width);

/// Separating-axis test for two oriented rectangles. Touching boxes (zero
/// overlap area) count as separated.
bool boxes_overlap(const AgentState& a, const AgentState& b);

/// Point-in-convex-polygon for counter-clockwise vertices (boundary inclusive).
bool point_in_convex(const std::array<Vec2, 4>& poly, Vec2 p);

}  // namespace bsim
