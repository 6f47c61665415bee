#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "bsim/dynamics.hpp"
#include "bsim/raster.hpp"
#include "bsim/state.hpp"

namespace bsim {

enum class MapKind { kStraight, kArc, kFourWay };

std::string to_string(MapKind kind);
MapKind map_kind_from_string(const std::string& s);

/// Geometry parameters for the procedural map generator. Which fields apply
/// depends on `kind`.
struct MapSpec {
  MapKind kind = MapKind::kStraight;
  std::uint64_t seed = 0;
  double lane_width = 3.5;  // [3, 4] m
  int lanes = 2;            // straight/arc: parallel lanes in one direction
  double length = 200.0;    // straight
  double radius = 40.0;     // arc: radius of the road centre
  double sweep_deg = 360.0; // arc: 360 closes the ring
  double arm = 60.0;        // four_way: arm length from the centre
  double plaza = 10.0;      // four_way: half size of the central square
  double margin = 8.0;      // non-drivable border around the road
  double pixel_size = 0.5;
  Pose2 pose;               // rigid placement of the whole map in the world

  void validate() const;
  bool operator==(const MapSpec&) const = default;
};

/// A lane end where agents leave the map.
struct ExitGate {
  Vec2 point;
  Vec2 direction;  // unit
  double half_width = 2.0;
};

struct Lane {
  std::vector<Vec2> points;      // >= 2
  std::vector<double> headings;  // per point
  std::vector<double> arclen;    // cumulative
  bool closed = false;           // ring lanes wrap around
  int entry_group = 0;           // four_way: incoming arm index; otherwise lane index
  double length() const { return arclen.back(); }
};

struct SpawnSlot {
  int lane = 0;
  double s = 0.0;  // arc length along the lane
};

/// Lane centerlines, drivable polygons and spawn/exit topology.
struct LaneGraph {
  std::vector<Lane> lanes;
  std::vector<std::vector<Vec2>> drivable;  // convex polygons, counter-clockwise
  std::vector<Vec2> spawn_points;           // lane entry points
  std::vector<SpawnSlot> spawn_slots;       // candidate initial positions
  std::vector<ExitGate> exits;
  Vec2 conflict_center;  // four_way: centre of the shared square
  double conflict_half = 0.0;

  bool inside_drivable(Vec2 p) const;
};

struct MapData {
  MapSpec spec;
  LaneGraph graph;
  SemanticGrid grid;
};

/// Deterministic procedural map with its world-frame semantic raster.
MapData gen_map(const MapSpec& spec);

/// Position/heading on a lane at arc length s (extrapolates past the ends).
Pose2 lane_pose_at(const Lane& lane, double s);
/// Arc length of the closest point to p, searched near `hint` when >= 0.
double lane_project(const Lane& lane, Vec2 p, double hint = -1.0);

struct LogMetadata {
  std::uint64_t seed = 0;
  int agents_requested = 0;
  int agents_spawned = 0;
  int attempts = 0;
  bool congested = false;
  double label_noise = 0.0;
  bool operator==(const LogMetadata&) const = default;
};

/// Multi-agent log at a fixed step time.
struct SceneLog {
  MapSpec map;
  double dt = 0.1;
  LogMetadata meta;
  std::vector<Frame> frames;

  bool operator==(const SceneLog&) const = default;
};

/// Per-agent state sequence; empty when the id never appears.
std::vector<AgentState> agent_track(const SceneLog& log, AgentId id, int& first_step);
std::vector<AgentId> agent_ids(const SceneLog& log);

/// Checks dt, frame ordering and lifespan contiguity.
void validate(const SceneLog& log);

struct ExpertParams {
  double v0 = 12.0;        // IDM desired speed
  double time_headway = 1.5;
  double s0 = 2.0;
  double accel = 1.5;
  double decel = 2.0;
  double lookahead_time = 1.5;
  double lookahead_min = 3.0;
  double lat_accel = 2.5;  // curve speed limit sqrt(a_lat / kappa)
  double init_speed_min = 6.0;
  double init_speed_max = 11.0;
  double min_spacing = 18.0;
  int max_retries = 8;
  double label_noise = 0.0;  // std-dev of Gaussian pose jitter, 0 = off
};

/// Expert driver: pure pursuit steering and IDM longitudinal control. The
/// resulting log is verified collision-free and on-road; conflicting seeds
/// are retried and agents dropped after max_retries.
SceneLog gen_expert_log(const MapData& map, int n_agents, double duration_s, std::uint64_t seed,
                        const ExpertParams& params = {}, const Limits& limits = {});

/// Whether a point has crossed one of the exit gates.
bool past_exit_gate(const LaneGraph& g, Vec2 p);

/// Maximum number of agents the map can spawn.
int spawn_capacity(const MapData& map, const ExpertParams& params = {});

/// IDM acceleration for the given gap (bumper to bumper) and closing speed.
double idm_accel(const ExpertParams& p, double v, double v_desired, double gap, double dv);

/// One supervised example anchored at step t for one agent.
struct Sample {
  int log_index = 0;
  AgentId ego = 0;
  int t = 0;
  AgentState ego_state;               // world frame at t
  Pose2 goal;                         // ego frame, recorded pose at t+H
  std::vector<AgentState> future;     // ego frame, steps t+1..t+H
};

struct SampleStats {
  int anchors = 0;
  int kept = 0;
  int dropped_outside = 0;
  bool too_short = false;
};

/// Anchors t = h, h+stride, ... with the agent alive over [t-h, t+H]. Futures
/// leaving the raster window are dropped and counted.
std::vector<Sample> extract_samples(const SceneLog& log, int stride, int horizon,
                                    const RasterConfig& raster, SampleStats* stats = nullptr,
                                    int log_index = 0);

}  // namespace bsim
