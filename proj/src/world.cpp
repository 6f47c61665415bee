#include "bsim/world.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <random>
#include <sstream>

#include "bsim/geometry.hpp"

namespace bsim {

std::string to_string(MapKind kind) {
  switch (kind) {
    case MapKind::kStraight: return "straight";
    case MapKind::kArc: return "arc";
    case MapKind::kFourWay: return "four_way";
  }
  return "?";
}

MapKind map_kind_from_string(const std::string& s) {
  if (s == "straight") return MapKind::kStraight;
  if (s == "arc") return MapKind::kArc;
  if (s == "four_way") return MapKind::kFourWay;
  throw Error("unknown map kind '" + s + "'");
}

void MapSpec::validate() const {
  std::ostringstream why;
  if (!(lane_width >= 3.0 && lane_width <= 4.0)) why << "lane width " << lane_width << " outside [3, 4] m; ";
  if (!(pixel_size > 0.0)) why << "pixel size must be positive; ";
  if (!(margin >= 0.0)) why << "margin must be >= 0; ";
  switch (kind) {
    case MapKind::kStraight:
      if (lanes < 1 || lanes > 4) why << "lanes must be in [1, 4]; ";
      if (!(length >= 50.0 && length <= 2000.0)) why << "length must be in [50, 2000] m; ";
      break;
    case MapKind::kArc:
      if (lanes < 1 || lanes > 4) why << "lanes must be in [1, 4]; ";
      if (!(radius >= 15.0)) why << "arc radius " << radius << " below 15 m; ";
      if (radius - 0.5 * lanes * lane_width < 10.0) {
        why << "arc radius " << radius << " too small for " << lanes << " lanes of width "
            << lane_width << " (inner edge must stay >= 10 m from the centre); ";
      }
      if (!(sweep_deg >= 30.0 && sweep_deg <= 360.0)) why << "sweep must be in [30, 360] deg; ";
      break;
    case MapKind::kFourWay:
      if (!(plaza >= lane_width + 3.0)) why << "plaza half size too small for the lane width; ";
      if (!(arm >= plaza + 20.0)) why << "arm must exceed plaza half size by >= 20 m; ";
      break;
  }
  const std::string msg = why.str();
  if (!msg.empty()) throw Error("invalid map geometry: " + msg.substr(0, msg.size() - 2));
}

bool LaneGraph::inside_drivable(Vec2 p) const {
  for (const auto& poly : drivable) {
    bool inside = true;
    for (std::size_t i = 0; i < poly.size() && inside; ++i) {
      const Vec2& a = poly[i];
      const Vec2& b = poly[(i + 1) % poly.size()];
      inside = (b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x) >= 0.0;
    }
    if (inside) return true;
  }
  return false;
}

namespace {

constexpr double kLaneSpacing = 0.5;  // metres between centerline samples

struct LaneBuilder {
  std::vector<Vec2> pts;
  std::vector<double> hdg;

  void line(Vec2 a, Vec2 b) {
    const double len = std::hypot(b.x - a.x, b.y - a.y);
    const double h = std::atan2(b.y - a.y, b.x - a.x);
    const int n = std::max(1, static_cast<int>(std::ceil(len / kLaneSpacing)));
    for (int i = pts.empty() ? 0 : 1; i <= n; ++i) {
      const double f = static_cast<double>(i) / n;
      pts.push_back({a.x + f * (b.x - a.x), a.y + f * (b.y - a.y)});
      hdg.push_back(h);
    }
  }
  /// Arc around `c` from angle a0 to a1 (ccw if a1 > a0).
  void arc(Vec2 c, double r, double a0, double a1) {
    const double len = std::abs(a1 - a0) * r;
    const int n = std::max(2, static_cast<int>(std::ceil(len / kLaneSpacing)));
    const double dir = a1 > a0 ? 1.0 : -1.0;
    for (int i = pts.empty() ? 0 : 1; i <= n; ++i) {
      const double a = a0 + (a1 - a0) * i / n;
      pts.push_back({c.x + r * std::cos(a), c.y + r * std::sin(a)});
      hdg.push_back(wrap_angle(a + dir * kPi / 2.0));
    }
  }
  Lane finish(bool closed, int group) {
    Lane lane;
    lane.points = std::move(pts);
    lane.headings = std::move(hdg);
    lane.closed = closed;
    lane.entry_group = group;
    lane.arclen.resize(lane.points.size());
    lane.arclen[0] = 0.0;
    for (std::size_t i = 1; i < lane.points.size(); ++i) {
      lane.arclen[i] = lane.arclen[i - 1] + std::hypot(lane.points[i].x - lane.points[i - 1].x,
                                                       lane.points[i].y - lane.points[i - 1].y);
    }
    return lane;
  }
};

std::vector<Vec2> rect(double x0, double y0, double x1, double y1) {
  return {{x0, y0}, {x1, y0}, {x1, y1}, {x0, y1}};
}

Vec2 rotate(Vec2 p, double a) {
  const double c = std::cos(a), s = std::sin(a);
  return {c * p.x - s * p.y, s * p.x + c * p.y};
}

struct LocalExtent {
  double x0, y0, x1, y1;
};

void build_straight(const MapSpec& m, LaneGraph& g, LocalExtent& ext) {
  const double half = 0.5 * m.lanes * m.lane_width;
  for (int i = 0; i < m.lanes; ++i) {
    const double y = (i - 0.5 * (m.lanes - 1)) * m.lane_width;
    LaneBuilder b;
    b.line({0.0, y}, {m.length, y});
    g.lanes.push_back(b.finish(false, i));
    g.spawn_points.push_back({0.0, y});
    g.exits.push_back({{m.length, y}, {1.0, 0.0}, 0.5 * m.lane_width});
  }
  g.drivable.push_back(rect(0.0, -half, m.length, half));
  ext = {0.0, -half - m.margin, m.length, half + m.margin};
}

void build_arc(const MapSpec& m, LaneGraph& g, LocalExtent& ext) {
  const double sweep = m.sweep_deg * kPi / 180.0;
  const bool closed = m.sweep_deg >= 360.0;
  const double a0 = -kPi / 2.0;
  for (int i = 0; i < m.lanes; ++i) {
    const double r = m.radius + (i - 0.5 * (m.lanes - 1)) * m.lane_width;
    LaneBuilder b;
    b.arc({0.0, 0.0}, r, a0, a0 + sweep);
    if (closed) {
      b.pts.pop_back();  // the closing point duplicates the first sample
      b.hdg.pop_back();
    }
    Lane lane = b.finish(closed, i);
    if (closed) {
      const Vec2& p = lane.points.back();
      const Vec2& q = lane.points.front();
      lane.arclen.push_back(lane.arclen.back() + std::hypot(q.x - p.x, q.y - p.y));
    }
    g.lanes.push_back(std::move(lane));
    g.spawn_points.push_back({r * std::cos(a0), r * std::sin(a0)});
    if (!closed) {
      const double a1 = a0 + sweep;
      g.exits.push_back({{r * std::cos(a1), r * std::sin(a1)},
                         {std::cos(a1 + kPi / 2.0), std::sin(a1 + kPi / 2.0)},
                         0.5 * m.lane_width});
    }
  }
  const double rin = m.radius - 0.5 * m.lanes * m.lane_width;
  const double rout = m.radius + 0.5 * m.lanes * m.lane_width;
  const int segs = std::max(8, static_cast<int>(std::ceil(m.sweep_deg / 3.0)));
  for (int k = 0; k < segs; ++k) {
    const double t0 = a0 + sweep * k / segs;
    const double t1 = a0 + sweep * (k + 1) / segs;
    // Chords of the outer circle slightly undercut the road; extend them so the
    // polygon contains the true annulus sector.
    const double ro = rout / std::cos(0.5 * (t1 - t0));
    g.drivable.push_back({{rin * std::cos(t0), rin * std::sin(t0)},
                          {ro * std::cos(t0), ro * std::sin(t0)},
                          {ro * std::cos(t1), ro * std::sin(t1)},
                          {rin * std::cos(t1), rin * std::sin(t1)}});
  }
  const double e = rout / std::cos(kPi / segs) + m.margin;
  ext = {-e, -e, e, e};
}

void build_four_way(const MapSpec& m, LaneGraph& g, LocalExtent& ext) {
  const double w = m.lane_width;
  const double a = m.arm;
  const double p = m.plaza;
  const double r_right = p - 0.5 * w - 1.0;
  const double r_left = p + 0.5 * w - 1.0;
  for (int arm = 0; arm < 4; ++arm) {
    const double rot = arm * kPi / 2.0;
    auto R = [rot](Vec2 v) { return rotate(v, rot); };
    std::vector<Lane> movements;
    {
      LaneBuilder b;  // through
      b.line(R({-a, -0.5 * w}), R({a, -0.5 * w}));
      movements.push_back(b.finish(false, arm));
    }
    {
      LaneBuilder b;  // right turn
      const Vec2 c{-0.5 * w - r_right, -0.5 * w - r_right};
      b.line(R({-a, -0.5 * w}), R({c.x, -0.5 * w}));
      const Vec2 cr = R(c);
      b.arc(cr, r_right, kPi / 2.0 + rot, rot);
      b.line(R({-0.5 * w, c.y}), R({-0.5 * w, -a}));
      movements.push_back(b.finish(false, arm));
    }
    {
      LaneBuilder b;  // left turn
      const Vec2 c{0.5 * w - r_left, -0.5 * w + r_left};
      b.line(R({-a, -0.5 * w}), R({c.x, -0.5 * w}));
      b.arc(R(c), r_left, -kPi / 2.0 + rot, rot);
      b.line(R({0.5 * w, c.y}), R({0.5 * w, a}));
      movements.push_back(b.finish(false, arm));
    }
    for (auto& l : movements) g.lanes.push_back(std::move(l));
    g.spawn_points.push_back(R({-a, -0.5 * w}));
    // Outgoing lane of this arm (traffic leaving along -x in the arm's frame).
    g.exits.push_back({R({-a, 0.5 * w}), R({-1.0, 0.0}), 0.5 * w});
  }
  g.drivable.push_back(rect(-a, -w, a, w));
  g.drivable.push_back(rect(-w, -a, w, a));
  g.drivable.push_back(rect(-p, -p, p, p));
  g.conflict_center = {0.0, 0.0};
  g.conflict_half = p;
  ext = {-a, -a, a, a};
}

void place(const Pose2& pose, LaneGraph& g) {
  auto tp = [&](Vec2 v) { return to_world(pose, v); };
  for (auto& lane : g.lanes) {
    for (auto& pt : lane.points) pt = tp(pt);
    for (auto& h : lane.headings) h = wrap_angle(h + pose.heading);
  }
  for (auto& poly : g.drivable) {
    for (auto& v : poly) v = tp(v);
  }
  for (auto& s : g.spawn_points) s = tp(s);
  for (auto& e : g.exits) {
    e.point = tp(e.point);
    e.direction = rotate(e.direction, pose.heading);
  }
  g.conflict_center = tp(g.conflict_center);
}

SemanticGrid rasterize_map(const MapSpec& m, const LaneGraph& g, const LocalExtent& ext) {
  double min_x = 1e300, min_y = 1e300, max_x = -1e300, max_y = -1e300;
  for (Vec2 c : {Vec2{ext.x0, ext.y0}, Vec2{ext.x1, ext.y0}, Vec2{ext.x1, ext.y1}, Vec2{ext.x0, ext.y1}}) {
    const Vec2 w = to_world(m.pose, c);
    min_x = std::min(min_x, w.x);
    min_y = std::min(min_y, w.y);
    max_x = std::max(max_x, w.x);
    max_y = std::max(max_y, w.y);
  }
  const double ps = m.pixel_size;
  SemanticGrid grid;
  grid.pixel_size = ps;
  grid.origin_x = std::floor(min_x / ps + 1e-6) * ps;
  grid.origin_y = std::floor(min_y / ps + 1e-6) * ps;
  grid.cols = static_cast<int>(std::ceil((max_x - grid.origin_x) / ps - 1e-6));
  grid.rows = static_cast<int>(std::ceil((max_y - grid.origin_y) / ps - 1e-6));
  grid.data.assign(static_cast<std::size_t>(kNumSemanticLayers) * grid.rows * grid.cols, 0.0f);

  // Drivable layer: pixel-centre containment with bounding-box prefilter.
  for (const auto& poly : g.drivable) {
    double px0 = 1e300, py0 = 1e300, px1 = -1e300, py1 = -1e300;
    for (const Vec2& v : poly) {
      px0 = std::min(px0, v.x);
      py0 = std::min(py0, v.y);
      px1 = std::max(px1, v.x);
      py1 = std::max(py1, v.y);
    }
    const int c0 = std::max(0, static_cast<int>(std::floor((px0 - grid.origin_x) / ps)) - 1);
    const int c1 = std::min(grid.cols - 1, static_cast<int>(std::ceil((px1 - grid.origin_x) / ps)) + 1);
    const int r0 = std::max(0, static_cast<int>(std::floor((py0 - grid.origin_y) / ps)) - 1);
    const int r1 = std::min(grid.rows - 1, static_cast<int>(std::ceil((py1 - grid.origin_y) / ps)) + 1);
    LaneGraph one;
    one.drivable.push_back(poly);
    for (int r = r0; r <= r1; ++r) {
      for (int c = c0; c <= c1; ++c) {
        if (grid.at(kDrivable, r, c) > 0.5f) continue;
        if (one.inside_drivable(grid.world_from_pixel(r, c))) grid.at(kDrivable, r, c) = 1.0f;
      }
    }
  }

  // Centerlines and lane direction (nearest lane sample wins).
  std::vector<double> best(static_cast<std::size_t>(grid.rows) * grid.cols,
                           std::numeric_limits<double>::infinity());
  const double reach = m.lane_width;
  const int rp = static_cast<int>(std::ceil(reach / ps)) + 1;
  for (const Lane& lane : g.lanes) {
    for (std::size_t i = 0; i < lane.points.size(); ++i) {
      const Vec2 pt = lane.points[i];
      int pr = 0, pc = 0;
      if (grid.cell_of(pt, pr, pc)) grid.at(kCenterline, pr, pc) = 1.0f;
      const Vec2 pix = grid.pixel_from_world(pt);
      const int cc = static_cast<int>(std::lround(pix.x));
      const int rr = static_cast<int>(std::lround(pix.y));
      for (int r = std::max(0, rr - rp); r <= std::min(grid.rows - 1, rr + rp); ++r) {
        for (int c = std::max(0, cc - rp); c <= std::min(grid.cols - 1, cc + rp); ++c) {
          if (grid.at(kDrivable, r, c) < 0.5f) continue;
          const Vec2 w = grid.world_from_pixel(r, c);
          const double d = std::hypot(w.x - pt.x, w.y - pt.y);
          const std::size_t o = static_cast<std::size_t>(r) * grid.cols + c;
          if (d > reach || d >= best[o]) continue;
          best[o] = d;
          grid.at(kLaneDirCos, r, c) = static_cast<float>(0.5 * (1.0 + std::cos(lane.headings[i])));
          grid.at(kLaneDirSin, r, c) = static_cast<float>(0.5 * (1.0 + std::sin(lane.headings[i])));
        }
      }
    }
  }
  return grid;
}

}  // namespace

MapData gen_map(const MapSpec& spec) {
  spec.validate();
  MapData out;
  out.spec = spec;
  LocalExtent ext{};
  switch (spec.kind) {
    case MapKind::kStraight: build_straight(spec, out.graph, ext); break;
    case MapKind::kArc: build_arc(spec, out.graph, ext); break;
    case MapKind::kFourWay: build_four_way(spec, out.graph, ext); break;
  }
  place(spec.pose, out.graph);
  out.grid = rasterize_map(spec, out.graph, ext);

  // Spawn slots: spaced positions along lanes that still leave room to drive.
  std::mt19937_64 rng(mix_seed(spec.seed, 0x5107));
  const double spacing = ExpertParams{}.min_spacing;
  std::uniform_real_distribution<double> jitter(0.0, 2.0);
  std::vector<int> seen_group;
  for (std::size_t li = 0; li < out.graph.lanes.size(); ++li) {
    const Lane& lane = out.graph.lanes[li];
    if (spec.kind == MapKind::kFourWay) {
      // One slot column per incoming arm; the movement is chosen at spawn time.
      if (std::find(seen_group.begin(), seen_group.end(), lane.entry_group) != seen_group.end()) continue;
      seen_group.push_back(lane.entry_group);
      const double limit = spec.arm - spec.plaza - 12.0;
      for (double s = 4.0 + jitter(rng); s <= limit; s += spacing) {
        out.graph.spawn_slots.push_back({static_cast<int>(li), s});
      }
    } else if (lane.closed) {
      const int n = static_cast<int>(std::floor(lane.length() / spacing));
      const double off = jitter(rng);
      for (int k = 0; k < n; ++k) out.graph.spawn_slots.push_back({static_cast<int>(li), off + k * spacing});
    } else {
      const double limit = std::max(10.0, lane.length() * 0.45);
      for (double s = 4.0 + jitter(rng); s <= limit; s += spacing) {
        out.graph.spawn_slots.push_back({static_cast<int>(li), s});
      }
    }
  }
  return out;
}

Pose2 lane_pose_at(const Lane& lane, double s) {
  const double total = lane.length();
  if (lane.closed) {
    s = std::fmod(s, total);
    if (s < 0.0) s += total;
  }
  const std::size_t n = lane.points.size();
  if (!lane.closed) {
    if (s <= 0.0) {
      const double h = lane.headings.front();
      return {lane.points[0].x + s * std::cos(h), lane.points[0].y + s * std::sin(h), h};
    }
    if (s >= total) {
      const double h = lane.headings.back();
      const double e = s - total;
      return {lane.points[n - 1].x + e * std::cos(h), lane.points[n - 1].y + e * std::sin(h), h};
    }
  }
  auto it = std::upper_bound(lane.arclen.begin(), lane.arclen.end(), s);
  std::size_t i = static_cast<std::size_t>(std::max<std::ptrdiff_t>(1, it - lane.arclen.begin())) - 1;
  const std::size_t j = (i + 1) % n;
  const double seg = lane.arclen[i + 1] - lane.arclen[i];
  const double f = seg > 0.0 ? (s - lane.arclen[i]) / seg : 0.0;
  const Vec2 a = lane.points[i];
  const Vec2 b = lane.points[j];
  const double dh = wrap_angle(lane.headings[j] - lane.headings[i]);
  return {a.x + f * (b.x - a.x), a.y + f * (b.y - a.y), wrap_angle(lane.headings[i] + f * dh)};
}

double lane_project(const Lane& lane, Vec2 p, double hint) {
  const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(lane.points.size());
  const std::ptrdiff_t segs = lane.closed ? n : n - 1;
  std::ptrdiff_t lo = 0, hi = segs;
  if (hint >= 0.0 && segs > 200) {
    double h = hint;
    if (lane.closed) {
      h = std::fmod(h, lane.length());
      if (h < 0.0) h += lane.length();
    }
    const auto it = std::upper_bound(lane.arclen.begin(), lane.arclen.end(), h);
    const std::ptrdiff_t c = std::clamp<std::ptrdiff_t>(it - lane.arclen.begin() - 1, 0, segs - 1);
    lo = c - 100;  // about 50 m either side at the lane sampling step
    hi = c + 101;
  }
  double best_d = std::numeric_limits<double>::infinity();
  double best_s = 0.0;
  for (std::ptrdiff_t kk = lo; kk < hi; ++kk) {
    std::ptrdiff_t k = kk;
    if (lane.closed) {
      k = ((kk % segs) + segs) % segs;
    } else if (k < 0 || k >= segs) {
      continue;
    }
    const Vec2 a = lane.points[k];
    const Vec2 b = lane.points[(k + 1) % n];
    const double vx = b.x - a.x, vy = b.y - a.y;
    const double len2 = vx * vx + vy * vy;
    double f = len2 > 0.0 ? ((p.x - a.x) * vx + (p.y - a.y) * vy) / len2 : 0.0;
    f = std::clamp(f, 0.0, 1.0);
    const double dx = a.x + f * vx - p.x;
    const double dy = a.y + f * vy - p.y;
    const double d = dx * dx + dy * dy;
    if (d < best_d) {
      best_d = d;
      best_s = lane.arclen[k] + f * (lane.arclen[k + 1] - lane.arclen[k]);
    }
  }
  if (!lane.closed) {
    const Pose2 e = lane_pose_at(lane, lane.length());
    const double past = (p.x - e.x) * std::cos(e.heading) + (p.y - e.y) * std::sin(e.heading);
    if (past > 0.0 && best_s >= lane.length() - 1e-9) return lane.length() + past;
    const Pose2 s0 = lane_pose_at(lane, 0.0);
    const double before = (p.x - s0.x) * std::cos(s0.heading) + (p.y - s0.y) * std::sin(s0.heading);
    if (before < 0.0 && best_s <= 1e-9) return before;
  }
  return best_s;
}

std::vector<AgentId> agent_ids(const SceneLog& log) {
  std::vector<AgentId> ids;
  for (const Frame& f : log.frames) {
    for (const AgentState& a : f) ids.push_back(a.id);
  }
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  return ids;
}

std::vector<AgentState> agent_track(const SceneLog& log, AgentId id, int& first_step) {
  std::vector<AgentState> track;
  first_step = -1;
  for (std::size_t t = 0; t < log.frames.size(); ++t) {
    if (const AgentState* a = find_agent(log.frames[t], id)) {
      if (first_step < 0) first_step = static_cast<int>(t);
      track.push_back(*a);
    } else if (first_step >= 0) {
      break;
    }
  }
  return track;
}

void validate(const SceneLog& log) {
  if (!(log.dt > 0.0)) throw Error("scene log: dt must be positive");
  std::map<AgentId, std::pair<int, int>> life;  // first, last
  for (std::size_t t = 0; t < log.frames.size(); ++t) {
    const Frame& f = log.frames[t];
    for (std::size_t i = 0; i < f.size(); ++i) {
      if (i > 0 && f[i].id <= f[i - 1].id) throw Error("scene log: frame " + std::to_string(t) + " not sorted by id");
      validate(f[i]);
      auto [it, inserted] = life.try_emplace(f[i].id, static_cast<int>(t), static_cast<int>(t));
      if (!inserted) {
        if (it->second.second != static_cast<int>(t) - 1) {
          throw Error("scene log: agent " + std::to_string(f[i].id) + " has a gap in its lifespan");
        }
        it->second.second = static_cast<int>(t);
      }
    }
  }
}

double idm_accel(const ExpertParams& p, double v, double v_desired, double gap, double dv) {
  const double vd = std::max(v_desired, 0.1);
  double a = p.accel * (1.0 - std::pow(v / vd, 4.0));
  if (std::isfinite(gap)) {
    const double s_star = p.s0 + std::max(0.0, v * p.time_headway + v * dv / (2.0 * std::sqrt(p.accel * p.decel)));
    const double s = std::max(gap, 0.1);
    a -= p.accel * (s_star / s) * (s_star / s);
  }
  return a;
}

int spawn_capacity(const MapData& map, const ExpertParams&) {
  return static_cast<int>(map.graph.spawn_slots.size());
}

bool past_exit_gate(const LaneGraph& g, Vec2 p) {
  for (const ExitGate& e : g.exits) {
    const double dx = p.x - e.point.x;
    const double dy = p.y - e.point.y;
    const double along = dx * e.direction.x + dy * e.direction.y;
    const double lat = -dx * e.direction.y + dy * e.direction.x;
    if (along > 0.0 && std::abs(lat) <= e.half_width + 1.0) return true;
  }
  return false;
}

namespace {

struct ExpertAgent {
  AgentState state;
  int lane = 0;
  double s = 0.0;
  int group = 0;
  double waiting = 0.0;
  bool active = true;
};

struct LaneInfo {
  std::vector<double> curve_speed;  // per sample
  double enter_s = std::numeric_limits<double>::infinity();
  double exit_s = -1.0;
};

std::vector<LaneInfo> lane_infos(const MapData& map, const ExpertParams& p) {
  std::vector<LaneInfo> info(map.graph.lanes.size());
  const LaneGraph& g = map.graph;
  for (std::size_t li = 0; li < g.lanes.size(); ++li) {
    const Lane& lane = g.lanes[li];
    const std::size_t n = lane.points.size();
    info[li].curve_speed.assign(n, p.v0);
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t i0 = i == 0 ? (lane.closed ? n - 1 : 0) : i - 1;
      const std::size_t i1 = i + 1 < n ? i + 1 : (lane.closed ? 0 : n - 1);
      double ds = std::hypot(lane.points[i1].x - lane.points[i0].x, lane.points[i1].y - lane.points[i0].y);
      if (ds <= 0.0) continue;
      const double kappa = std::abs(wrap_angle(lane.headings[i1] - lane.headings[i0])) / ds;
      if (kappa > 1e-6) info[li].curve_speed[i] = std::min(p.v0, std::sqrt(p.lat_accel / kappa));
    }
    if (g.conflict_half > 0.0) {
      for (std::size_t i = 0; i < n; ++i) {
        const Vec2 q = lane.points[i];
        const bool in = std::abs(q.x - g.conflict_center.x) <= g.conflict_half &&
                        std::abs(q.y - g.conflict_center.y) <= g.conflict_half;
        if (in) {
          info[li].enter_s = std::min(info[li].enter_s, lane.arclen[i]);
          info[li].exit_s = std::max(info[li].exit_s, lane.arclen[i]);
        }
      }
    }
  }
  return info;
}

double desired_speed(const Lane& lane, const LaneInfo& info, double s, double v, const ExpertParams& p) {
  double vd = p.v0;
  const double horizon = v * v / (2.0 * p.decel) + 25.0;
  for (double d = 0.0; d <= horizon; d += 1.0) {
    double q = s + d;
    if (lane.closed) {
      q = std::fmod(q, lane.length());
      if (q < 0) q += lane.length();
    } else if (q > lane.length()) {
      break;
    } else if (q < 0.0) {
      continue;
    }
    const auto it = std::upper_bound(lane.arclen.begin(), lane.arclen.end(), q);
    const std::size_t i = std::min<std::size_t>(lane.points.size() - 1,
                                                static_cast<std::size_t>(std::max<std::ptrdiff_t>(1, it - lane.arclen.begin()) - 1));
    const double vc = info.curve_speed[i];
    vd = std::min(vd, std::sqrt(vc * vc + 2.0 * p.decel * d));
  }
  return vd;
}

struct Attempt {
  std::vector<Frame> frames;
  bool ok = false;
};

Attempt simulate_expert(const MapData& map, int n_agents, int steps, std::uint64_t seed,
                        const ExpertParams& p, const Limits& limits, const std::vector<LaneInfo>& info) {
  const LaneGraph& g = map.graph;
  std::mt19937_64 rng(seed);
  std::vector<int> slots(g.spawn_slots.size());
  for (std::size_t i = 0; i < slots.size(); ++i) slots[i] = static_cast<int>(i);
  std::shuffle(slots.begin(), slots.end(), rng);
  std::uniform_real_distribution<double> u01(0.0, 1.0);

  std::vector<ExpertAgent> agents;
  for (int k = 0; k < n_agents; ++k) {
    const SpawnSlot& slot = g.spawn_slots[slots[k]];
    ExpertAgent a;
    a.lane = slot.lane;
    if (map.spec.kind == MapKind::kFourWay) {
      // Lanes of one arm are stored consecutively: through, right, left.
      const int base = slot.lane - slot.lane % 3;
      a.lane = base + static_cast<int>(u01(rng) * 3.0) % 3;
    }
    a.s = slot.s;
    a.group = g.lanes[a.lane].entry_group;
    const Pose2 pose = lane_pose_at(g.lanes[a.lane], a.s);
    a.state.x = pose.x;
    a.state.y = pose.y;
    a.state.heading = pose.heading;
    a.state.speed = p.init_speed_min + (p.init_speed_max - p.init_speed_min) * u01(rng);
    a.state.length = 4.2 + 0.8 * u01(rng);
    a.state.width = 1.7 + 0.3 * u01(rng);
    a.state.id = static_cast<AgentId>(k + 1);
    agents.push_back(a);
  }

  Attempt out;
  out.frames.reserve(steps + 1);
  auto snapshot = [&]() {
    Frame f;
    for (const auto& a : agents) {
      if (a.active) f.push_back(a.state);
    }
    normalize_frame(f);
    out.frames.push_back(std::move(f));
  };
  snapshot();

  const bool has_box = g.conflict_half > 0.0;
  int owner = -1;
  int granted = -1;  // agent holding the right of way until it clears the box
  for (int t = 0; t < steps; ++t) {
    if (has_box) {
      int inside_group = -1;
      for (const auto& a : agents) {
        if (!a.active) continue;
        const LaneInfo& li = info[a.lane];
        const double hl = 0.5 * a.state.length;
        if (a.s + hl >= li.enter_s - 0.5 && a.s - hl <= li.exit_s + 0.5) inside_group = a.group;
      }
      if (granted >= 0) {
        const ExpertAgent& ga = agents[granted];
        if (!ga.active || ga.s - 0.5 * ga.state.length > info[ga.lane].exit_s + 0.5) granted = -1;
      }
      if (granted < 0 && inside_group < 0) {
        double best_key = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < agents.size(); ++i) {
          const ExpertAgent& a = agents[i];
          if (!a.active) continue;
          const LaneInfo& li = info[a.lane];
          const double d_stop = li.enter_s - a.s - 0.5 * a.state.length - 1.0;
          if (d_stop < -0.5 || d_stop > 30.0) continue;
          const bool committed = d_stop < a.state.speed * a.state.speed / 8.0;
          const double key = (committed ? -1e6 : 0.0) - 10.0 * a.waiting + d_stop;
          if (key < best_key) {
            best_key = key;
            granted = static_cast<int>(i);
          }
        }
      }
      owner = inside_group >= 0 ? inside_group : (granted >= 0 ? agents[granted].group : -1);
    }

    std::vector<Control> controls(agents.size());
    for (std::size_t i = 0; i < agents.size(); ++i) {
      ExpertAgent& a = agents[i];
      if (!a.active) continue;
      const Lane& lane = g.lanes[a.lane];
      const double v = a.state.speed;
      const double vd = desired_speed(lane, info[a.lane], a.s, v, p);

      double gap = std::numeric_limits<double>::infinity();
      double dv = 0.0;
      for (std::size_t j = 0; j < agents.size(); ++j) {
        if (j == i || !agents[j].active) continue;
        const AgentState& o = agents[j].state;
        const double ddx = o.x - a.state.x, ddy = o.y - a.state.y;
        if (ddx * ddx + ddy * ddy > 90.0 * 90.0) continue;
        const double so = lane_project(lane, {o.x, o.y}, a.s + std::hypot(ddx, ddy));
        double ahead = so - a.s;
        if (lane.closed) {
          ahead = std::fmod(ahead, lane.length());
          if (ahead < 0) ahead += lane.length();
        }
        if (ahead <= 0.0 || ahead > 80.0) continue;
        const Pose2 lp = lane_pose_at(lane, so);
        const double lat = std::hypot(o.x - lp.x, o.y - lp.y);
        if (lat > 0.5 * (a.state.width + o.width) + 0.8) continue;
        const double gp = ahead - 0.5 * (a.state.length + o.length);
        if (gp < gap) {
          gap = gp;
          dv = v - o.speed;
        }
      }
      if (has_box && owner != a.group) {
        const LaneInfo& li = info[a.lane];
        const double d_stop = li.enter_s - a.s - 0.5 * a.state.length - 1.0;
        if (d_stop > -0.5 && d_stop < 40.0 && d_stop < gap) {
          gap = std::max(d_stop, 0.05);  // stop line acts as a standing leader
          dv = v;
        }
      }
      if (has_box) {
        const LaneInfo& li = info[a.lane];
        const double d_stop = li.enter_s - a.s - 0.5 * a.state.length - 1.0;
        a.waiting = (owner != a.group && d_stop > -0.5 && d_stop < 30.0 && v < 1.0) ? a.waiting + limits.dt : 0.0;
      }

      const double acc = idm_accel(p, v, vd, gap, dv);
      const double v_cmd = std::max(0.0, v + acc * limits.dt);

      const double ld = std::max(p.lookahead_min, p.lookahead_time * v);
      const Pose2 target = lane_pose_at(lane, a.s + ld);
      const Pose2 local = to_local(a.state.pose(), target);
      const double alpha = std::atan2(local.y, local.x);
      const double kappa = 2.0 * std::sin(alpha) / ld;
      controls[i] = {v_cmd, std::max(v_cmd, 0.5) * kappa};
    }

    for (std::size_t i = 0; i < agents.size(); ++i) {
      ExpertAgent& a = agents[i];
      if (!a.active) continue;
      a.state = step(a.state, controls[i], limits);
      a.s = lane_project(g.lanes[a.lane], {a.state.x, a.state.y}, a.s);
      if (!g.lanes[a.lane].closed && past_exit_gate(g, {a.state.x, a.state.y})) a.active = false;
    }
    snapshot();
  }

  // Contract: no contact and no road departure anywhere in the log.
  for (const Frame& f : out.frames) {
    for (std::size_t i = 0; i < f.size(); ++i) {
      if (!map.grid.drivable_at({f[i].x, f[i].y})) return out;
      for (std::size_t j = i + 1; j < f.size(); ++j) {
        if (boxes_overlap(f[i], f[j])) return out;
      }
    }
  }
  out.ok = true;
  return out;
}

}  // namespace

SceneLog gen_expert_log(const MapData& map, int n_agents, double duration_s, std::uint64_t seed,
                        const ExpertParams& params, const Limits& limits) {
  limits.validate();
  const int cap = spawn_capacity(map, params);
  if (n_agents < 1 || n_agents > cap) {
    throw Error("gen_expert_log: n_agents " + std::to_string(n_agents) + " outside [1, " +
                std::to_string(cap) + "]");
  }
  if (!(duration_s >= 2.0)) throw Error("gen_expert_log: duration must be >= 2 s");
  const int steps = static_cast<int>(std::lround(duration_s / limits.dt));
  const auto info = lane_infos(map, params);

  SceneLog log;
  log.map = map.spec;
  log.dt = limits.dt;
  log.meta.seed = seed;
  log.meta.agents_requested = n_agents;
  log.meta.label_noise = params.label_noise;
  int attempts = 0;
  for (int n = n_agents; n >= 1; --n) {
    for (int r = 0; r < params.max_retries; ++r) {
      ++attempts;
      Attempt a = simulate_expert(map, n, steps, mix_seed(seed, static_cast<std::uint64_t>(attempts)), params,
                                  limits, info);
      if (!a.ok) continue;
      log.frames = std::move(a.frames);
      log.meta.agents_spawned = n;
      log.meta.attempts = attempts;
      log.meta.congested = n < n_agents;
      if (log.meta.congested) {
        log_warn("gen_expert_log: spawn congestion, " + std::to_string(n) + " of " +
                 std::to_string(n_agents) + " agents placed");
      }
      if (params.label_noise > 0.0) {
        std::mt19937_64 rng(mix_seed(seed, 0x1abe1));
        std::normal_distribution<double> nd(0.0, params.label_noise);
        for (Frame& f : log.frames) {
          for (AgentState& s : f) {
            s.x += nd(rng);
            s.y += nd(rng);
            s.heading = wrap_angle(s.heading + nd(rng) * 0.1);
          }
        }
      }
      return log;
    }
  }
  throw Error("gen_expert_log: could not place a single agent without conflict");
}

std::vector<Sample> extract_samples(const SceneLog& log, int stride, int horizon, const RasterConfig& raster,
                                    SampleStats* stats, int log_index) {
  if (stride < 1) throw Error("extract_samples: stride must be >= 1");
  if (horizon < 1) throw Error("extract_samples: horizon must be >= 1");
  SampleStats st;
  std::vector<Sample> out;
  const int h = raster.history;
  const int n_frames = static_cast<int>(log.frames.size());
  if (h + horizon >= n_frames) {
    st.too_short = true;
    log_warn("extract_samples: history + horizon exceed the episode length; no samples");
    if (stats) *stats = st;
    return out;
  }
  for (AgentId id : agent_ids(log)) {
    int first = 0;
    const auto track = agent_track(log, id, first);
    const int last = first + static_cast<int>(track.size()) - 1;
    for (int t = h; t + horizon < n_frames; t += stride) {
      if (t - h < first || t + horizon > last) continue;
      ++st.anchors;
      const AgentState& ego = track[t - first];
      Sample s;
      s.log_index = log_index;
      s.ego = id;
      s.t = t;
      s.ego_state = ego;
      bool inside = true;
      for (int k = 1; k <= horizon; ++k) {
        AgentState f = track[t + k - first];
        const Pose2 l = to_local(ego.pose(), f.pose());
        f.x = l.x;
        f.y = l.y;
        f.heading = l.heading;
        inside = inside && raster.local_in_window({l.x, l.y});
        s.future.push_back(f);
      }
      if (!inside) {
        ++st.dropped_outside;
        continue;
      }
      s.goal = s.future.back().pose();
      out.push_back(std::move(s));
      ++st.kept;
    }
  }
  if (stats) *stats = st;
  return out;
}

}  // namespace bsim
