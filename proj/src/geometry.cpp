#include "bsim/geometry.hpp"

#include <algorithm>
#include <cmath>

namespace bsim {

std::array<Vec2, 4> box_corners(const Pose2& pose, double length, double width) {
  const double c = std::cos(pose.heading);
  const double s = std::sin(pose.heading);
  const double hl = 0.5 * length;
  const double hw = 0.5 * width;
  const double u[4] = {-hl, hl, hl, -hl};
  const double v[4] = {-hw, -hw, hw, hw};
  std::array<Vec2, 4> out;
  for (int i = 0; i < 4; ++i) {
    out[i] = {pose.x + u[i] * c - v[i] * s, pose.y + u[i] * s + v[i] * c};
  }
  return out;
}

std::array<Vec2, 4> box_corners(const AgentState& s) {
  return box_corners(s.pose(), s.length, s.width);
}

namespace {

bool separated_on(const std::array<Vec2, 4>& a, const std::array<Vec2, 4>& b, Vec2 axis) {
  double amin = 1e300, amax = -1e300, bmin = 1e300, bmax = -1e300;
  for (int i = 0; i < 4; ++i) {
    const double pa = a[i].x * axis.x + a[i].y * axis.y;
    const double pb = b[i].x * axis.x + b[i].y * axis.y;
    amin = std::min(amin, pa);
    amax = std::max(amax, pa);
    bmin = std::min(bmin, pb);
    bmax = std::max(bmax, pb);
  }
  return amax <= bmin || bmax <= amin;
}

}  // namespace

bool boxes_overlap(const AgentState& a, const AgentState& b) {
  const auto ca = box_corners(a);
  const auto cb = box_corners(b);
  const Vec2 axes[4] = {{std::cos(a.heading), std::sin(a.heading)},
                        {-std::sin(a.heading), std::cos(a.heading)},
                        {std::cos(b.heading), std::sin(b.heading)},
                        {-std::sin(b.heading), std::cos(b.heading)}};
  for (const Vec2& ax : axes) {
    if (separated_on(ca, cb, ax)) return false;
  }
  return true;
}

bool point_in_convex(const std::array<Vec2, 4>& poly, Vec2 p) {
  for (int i = 0; i < 4; ++i) {
    const Vec2& a = poly[i];
    const Vec2& b = poly[(i + 1) % 4];
    if ((b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x) < 0.0) return false;
  }
  return true;
}

}  // namespace bsim
