#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "bsim/models.hpp"
#include "bsim/planner.hpp"
#include "bsim/world.hpp"

namespace bsim {

enum class PolicyKind { kBits, kBitsMax, kBitsSample, kBc, kLogReplay };

std::string to_string(PolicyKind p);
/// Accepts bits, bits_max, bits_sample, bc_baseline, log_replay.
PolicyKind policy_from_string(const std::string& s);
bool policy_is_stochastic(PolicyKind p);

enum class CollisionType { kFront, kRear, kSide };
std::string to_string(CollisionType t);
CollisionType collision_type_from_string(const std::string& s);

/// Bearing of `other`'s centre in `self`'s frame: |phi| < 45 deg front,
/// > 135 deg rear, otherwise side.
CollisionType collision_type(const AgentState& self, const AgentState& other);

struct Contact {
  AgentId a = 0;
  AgentId b = 0;
  CollisionType type_a = CollisionType::kFront;  // as seen from a
  CollisionType type_b = CollisionType::kFront;  // as seen from b
};

/// All overlapping pairs (a < b) in one frame.
std::vector<Contact> detect_collisions(const Frame& frame);
/// Per-agent centroid offroad flags, in frame order.
std::vector<std::uint8_t> detect_offroad(const Frame& frame, const SemanticGrid& grid);

struct FailureEvent {
  AgentId agent = 0;
  std::string kind;  // "collision" or "offroad"
  int first_step = 0;
  std::optional<CollisionType> type;
  bool operator==(const FailureEvent&) const = default;
};

struct AgentSummary {
  AgentId agent = 0;
  int steps = 0;          // simulated steps alive
  int offroad_steps = 0;
  bool operator==(const AgentSummary&) const = default;
};

struct EventSummary {
  std::vector<FailureEvent> events;
  std::vector<AgentSummary> agents;
  bool operator==(const EventSummary&) const = default;
};

/// Events over frames[first_step..]. Collision events: one per (agent, type)
/// at the first contact of that type. Offroad: one per agent when a run of
/// offroad steps exceeds `offroad_fail_steps`, stamped with the run start.
EventSummary compute_events(const std::vector<Frame>& frames, int first_step, const SemanticGrid& grid,
                            int offroad_fail_steps = 10);

struct PlanRecord {
  int step = 0;
  AgentId agent = 0;
  PlanDecision decision;
};

struct SimConfig {
  int steps = 200;
  int start_step = 10;
  int samples = 50;
  int replan_every = 5;
  double temperature = 1.0;
  CostWeights weights;
  int offroad_fail_steps = 10;
  int distance_saturation = 20;
  bool record_decisions = true;
  bool retire_at_exits = true;

  void validate() const;
};

struct PolicyModels {
  const GoalNet* goal = nullptr;
  const PolicyPredictorNet* policy = nullptr;
  const BcNet* bc = nullptr;
};

struct Rollout {
  static constexpr int kVersion = 1;
  std::string policy;
  std::uint64_t seed = 0;
  std::string scene;
  MapSpec map;
  double dt = 0.1;
  int first_step = 0;          // frames before this are the source history
  std::vector<Frame> frames;
  EventSummary events;
  std::vector<PlanRecord> decisions;
};

/// Closed-loop simulation of every agent present at `cfg.start_step`, all
/// driven by replicas of one policy with synchronized updates. Agents that
/// cross an exit gate leave the scene; failed agents keep driving.
Rollout run_rollout(const SceneLog& log, const MapData& map, PolicyKind policy, const PolicyModels& models,
                    const SimConfig& cfg, std::uint64_t seed, const std::string& scene = "");

nlohmann::json rollout_to_json(const Rollout& r);
Rollout rollout_from_json(const nlohmann::json& j);
void save_rollout(const std::string& path, const Rollout& r);
Rollout load_rollout(const std::string& path);

}  // namespace bsim
