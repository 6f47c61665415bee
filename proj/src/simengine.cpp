#include "bsim/simengine.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <set>

#include "bsim/geometry.hpp"
#include "bsim/log_format.hpp"

namespace bsim {

std::string to_string(PolicyKind p) {
  switch (p) {
    case PolicyKind::kBits: return "bits";
    case PolicyKind::kBitsMax: return "bits_max";
    case PolicyKind::kBitsSample: return "bits_sample";
    case PolicyKind::kBc: return "bc_baseline";
    case PolicyKind::kLogReplay: return "log_replay";
  }
  return "?";
}

PolicyKind policy_from_string(const std::string& s) {
  for (PolicyKind p : {PolicyKind::kBits, PolicyKind::kBitsMax, PolicyKind::kBitsSample, PolicyKind::kBc,
                       PolicyKind::kLogReplay}) {
    if (to_string(p) == s) return p;
  }
  throw Error("unknown policy '" + s + "' (expected bits, bits_max, bits_sample, bc_baseline or log_replay)");
}

bool policy_is_stochastic(PolicyKind p) { return p == PolicyKind::kBits || p == PolicyKind::kBitsSample; }

std::string to_string(CollisionType t) {
  switch (t) {
    case CollisionType::kFront: return "front";
    case CollisionType::kRear: return "rear";
    case CollisionType::kSide: return "side";
  }
  return "?";
}

CollisionType collision_type_from_string(const std::string& s) {
  if (s == "front") return CollisionType::kFront;
  if (s == "rear") return CollisionType::kRear;
  if (s == "side") return CollisionType::kSide;
  throw Error("unknown collision type '" + s + "'");
}

CollisionType collision_type(const AgentState& self, const AgentState& other) {
  const Pose2 l = to_local(self.pose(), Pose2{other.x, other.y, 0.0});
  const double phi = std::abs(std::atan2(l.y, l.x));
  if (phi < kPi / 4.0) return CollisionType::kFront;
  if (phi > 3.0 * kPi / 4.0) return CollisionType::kRear;
  return CollisionType::kSide;
}

std::vector<Contact> detect_collisions(const Frame& frame) {
  std::vector<Contact> out;
  for (std::size_t i = 0; i < frame.size(); ++i) {
    for (std::size_t j = i + 1; j < frame.size(); ++j) {
      const AgentState& a = frame[i];
      const AgentState& b = frame[j];
      const double reach = 0.5 * (std::hypot(a.length, a.width) + std::hypot(b.length, b.width));
      if (std::abs(a.x - b.x) > reach || std::abs(a.y - b.y) > reach) continue;
      if (!boxes_overlap(a, b)) continue;
      out.push_back({a.id, b.id, collision_type(a, b), collision_type(b, a)});
    }
  }
  return out;
}

std::vector<std::uint8_t> detect_offroad(const Frame& frame, const SemanticGrid& grid) {
  std::vector<std::uint8_t> out;
  out.reserve(frame.size());
  for (const AgentState& a : frame) out.push_back(grid.drivable_at({a.x, a.y}) ? 0 : 1);
  return out;
}

EventSummary compute_events(const std::vector<Frame>& frames, int first_step, const SemanticGrid& grid,
                            int offroad_fail_steps) {
  struct Track {
    int steps = 0;
    int offroad_steps = 0;
    int run = 0;
    int run_start = 0;
    bool offroad_failed = false;
    std::set<CollisionType> types;
  };
  std::map<AgentId, Track> tracks;
  EventSummary out;
  for (int t = std::max(first_step, 0); t < static_cast<int>(frames.size()); ++t) {
    const Frame& f = frames[t];
    const auto off = detect_offroad(f, grid);
    for (std::size_t i = 0; i < f.size(); ++i) {
      Track& tr = tracks[f[i].id];
      ++tr.steps;
      if (off[i]) {
        ++tr.offroad_steps;
        if (tr.run == 0) tr.run_start = t;
        ++tr.run;
        if (tr.run > offroad_fail_steps && !tr.offroad_failed) {
          tr.offroad_failed = true;
          out.events.push_back({f[i].id, "offroad", tr.run_start, std::nullopt});
        }
      } else {
        tr.run = 0;
      }
    }
    for (const Contact& c : detect_collisions(f)) {
      for (const auto& [id, type] : {std::pair{c.a, c.type_a}, std::pair{c.b, c.type_b}}) {
        if (tracks[id].types.insert(type).second) out.events.push_back({id, "collision", t, type});
      }
    }
  }
  for (const auto& [id, tr] : tracks) out.agents.push_back({id, tr.steps, tr.offroad_steps});
  std::stable_sort(out.events.begin(), out.events.end(), [](const FailureEvent& a, const FailureEvent& b) {
    return a.first_step < b.first_step || (a.first_step == b.first_step && a.agent < b.agent);
  });
  return out;
}

void SimConfig::validate() const {
  if (steps < 1) throw Error("sim: steps must be >= 1");
  if (start_step < 0) throw Error("sim: start_step must be >= 0");
  if (samples < 1) throw Error("sim: samples K must be >= 1");
  if (replan_every < 1) throw Error("sim: replan stride must be >= 1");
  if (!(temperature > 0.0)) throw Error("sim: temperature must be positive");
  if (offroad_fail_steps < 0) throw Error("sim: offroad_fail_steps must be >= 0");
  weights.validate();
}

namespace {

struct AgentRuntime {
  AgentState state;
  std::mt19937_64 rng;
  std::vector<Control> plan;
  std::size_t cursor = 0;
};

void require_models(PolicyKind p, const PolicyModels& m) {
  switch (p) {
    case PolicyKind::kBits:
    case PolicyKind::kBitsMax:
    case PolicyKind::kBitsSample:
      if (!m.goal || !m.policy) throw Error("policy " + to_string(p) + " needs goal and policy checkpoints");
      break;
    case PolicyKind::kBc:
      if (!m.bc) throw Error("policy bc_baseline needs a bc checkpoint");
      break;
    case PolicyKind::kLogReplay: break;
  }
}

}  // namespace

Rollout run_rollout(const SceneLog& log, const MapData& map, PolicyKind policy, const PolicyModels& models,
                    const SimConfig& cfg, std::uint64_t seed, const std::string& scene) {
  cfg.validate();
  require_models(policy, models);
  const int start = cfg.start_step;
  if (static_cast<int>(log.frames.size()) <= start) {
    throw Error("rollout: log has " + std::to_string(log.frames.size()) + " frames, start step is " +
                std::to_string(start));
  }
  if (log.frames[start].empty()) throw Error("rollout: no agent at the start step");
  Rollout r;
  r.policy = to_string(policy);
  r.seed = seed;
  r.scene = scene;
  r.map = log.map;
  r.dt = log.dt;
  r.first_step = start;
  const std::size_t end = std::min<std::size_t>(log.frames.size(), static_cast<std::size_t>(start + cfg.steps + 1));
  if (policy == PolicyKind::kLogReplay) {
    r.frames.assign(log.frames.begin(), log.frames.begin() + static_cast<std::ptrdiff_t>(end));
    r.events = compute_events(r.frames, start, map.grid, cfg.offroad_fail_steps);
    return r;
  }
  r.frames.assign(log.frames.begin(), log.frames.begin() + start + 1);

  const ModelConfig& mc = policy == PolicyKind::kBc ? models.bc->cfg : models.goal->cfg;
  const Limits& limits = mc.limits;
  const OffroadField field = make_offroad_field(map.grid, cfg.distance_saturation);
  std::map<AgentId, AgentRuntime> agents;
  for (const AgentState& a : log.frames[start]) {
    agents.emplace(a.id, AgentRuntime{a, std::mt19937_64(mix_seed(seed, a.id)), {}, 0});
  }

  for (int t = start; t < start + cfg.steps; ++t) {
    std::vector<AgentId> replan;
    for (auto& [id, a] : agents) {
      if (a.cursor >= a.plan.size() || a.cursor >= static_cast<std::size_t>(cfg.replan_every)) replan.push_back(id);
    }
    if (!replan.empty()) {
      std::vector<RasterContext> ctx;
      ctx.reserve(replan.size());
      for (AgentId id : replan) ctx.push_back(rasterize_context(r.frames, map.grid, id, t, mc.raster));
      std::vector<GoalMap> goal_maps;
      if (policy != PolicyKind::kBc) {
        std::vector<const RasterContext*> ptrs;
        for (const auto& c : ctx) ptrs.push_back(&c);
        goal_maps = goalnet_forward(*models.goal, ptrs);
      }
      for (std::size_t i = 0; i < replan.size(); ++i) {
        AgentRuntime& a = agents.at(replan[i]);
        std::vector<Control> plan;
        if (policy == PolicyKind::kBc) {
          plan = bc_forward(*models.bc, ctx[i]);
        } else if (policy == PolicyKind::kBitsMax || policy == PolicyKind::kBitsSample) {
          const auto goals = sample_goals(goal_maps[i], 1, cfg.temperature, a.rng,
                                          policy == PolicyKind::kBitsMax ? GoalMode::kMax : GoalMode::kSample);
          plan = policy_forward(*models.policy, ctx[i], goals.front());
        } else {
          const auto goals = sample_goals(goal_maps[i], cfg.samples, cfg.temperature, a.rng);
          std::vector<AgentState> others;
          for (const AgentState& s : r.frames[t]) {
            if (s.id != replan[i]) others.push_back(s);
          }
          const PlanForward pf = plan_forward(*models.policy, ctx[i], goals, others);
          std::vector<CandidatePlan> cands;
          for (std::size_t k = 0; k < goals.size(); ++k) {
            cands.push_back({rollout_controls(a.state, pf.controls[k], limits), goals[k].log_likelihood});
          }
          PlanDecision d = select_action(cands, pf.neighbour_paths, field, cfg.weights);
          plan = pf.controls[static_cast<std::size_t>(d.chosen)];
          if (cfg.record_decisions) r.decisions.push_back({t, replan[i], std::move(d)});
        }
        a.plan = std::move(plan);
        a.cursor = 0;
      }
    }
    Frame next;
    std::vector<AgentId> gone;
    for (auto& [id, a] : agents) {
      a.state = step(a.state, a.plan[a.cursor++], limits);
      const bool ring = map.spec.kind == MapKind::kArc && map.spec.sweep_deg >= 360.0;
      if (cfg.retire_at_exits && !ring && past_exit_gate(map.graph, {a.state.x, a.state.y})) {
        gone.push_back(id);
        continue;
      }
      next.push_back(a.state);
    }
    for (AgentId id : gone) agents.erase(id);
    normalize_frame(next);
    r.frames.push_back(std::move(next));
    if (agents.empty()) break;
  }
  r.events = compute_events(r.frames, start, map.grid, cfg.offroad_fail_steps);
  return r;
}

namespace {

nlohmann::json frame_to_json(const Frame& f) {
  nlohmann::json a = nlohmann::json::array();
  for (const AgentState& s : f) a.push_back({s.id, s.x, s.y, s.heading, s.speed, s.length, s.width});
  return a;
}

Frame frame_from_json(const nlohmann::json& j) {
  Frame f;
  for (const auto& e : j) {
    if (!e.is_array() || e.size() != 7) throw ParseError("rollout: agent entry must have 7 fields", 0);
    AgentState s;
    s.id = e[0].get<AgentId>();
    s.x = e[1].get<double>();
    s.y = e[2].get<double>();
    s.heading = e[3].get<double>();
    s.speed = e[4].get<double>();
    s.length = e[5].get<double>();
    s.width = e[6].get<double>();
    f.push_back(s);
  }
  return f;
}

}  // namespace

nlohmann::json rollout_to_json(const Rollout& r) {
  nlohmann::json j;
  j["format"] = "bsim-rollout";
  j["version"] = Rollout::kVersion;
  j["policy"] = r.policy;
  j["seed"] = r.seed;
  j["scene"] = r.scene;
  j["map"] = serialize_map_spec(r.map);
  j["dt"] = r.dt;
  j["first_step"] = r.first_step;
  auto& frames = j["frames"] = nlohmann::json::array();
  for (const Frame& f : r.frames) frames.push_back(frame_to_json(f));
  auto& ev = j["events"] = nlohmann::json::array();
  for (const FailureEvent& e : r.events.events) {
    nlohmann::json x{{"agent", e.agent}, {"kind", e.kind}, {"first_step", e.first_step}};
    if (e.type) x["type"] = to_string(*e.type);
    ev.push_back(x);
  }
  auto& ag = j["agents"] = nlohmann::json::array();
  for (const AgentSummary& a : r.events.agents) ag.push_back({a.agent, a.steps, a.offroad_steps});
  auto& dec = j["decisions"] = nlohmann::json::array();
  for (const PlanRecord& p : r.decisions) {
    dec.push_back({{"step", p.step},
                   {"agent", p.agent},
                   {"chosen", p.decision.chosen},
                   {"tie_break", p.decision.tie_break},
                   {"total", p.decision.total},
                   {"collision", p.decision.collision},
                   {"offroad", p.decision.offroad}});
  }
  return j;
}

Rollout rollout_from_json(const nlohmann::json& j) {
  if (!j.is_object() || j.value("format", "") != "bsim-rollout") throw ParseError("not a rollout archive", 0);
  const int version = j.at("version").get<int>();
  if (version != Rollout::kVersion) {
    throw ParseError("unsupported rollout version " + std::to_string(version), 0);
  }
  Rollout r;
  r.policy = j.at("policy").get<std::string>();
  r.seed = j.at("seed").get<std::uint64_t>();
  r.scene = j.at("scene").get<std::string>();
  r.map = parse_map_spec(j.at("map").get<std::string>());
  r.dt = j.at("dt").get<double>();
  r.first_step = j.at("first_step").get<int>();
  for (const auto& f : j.at("frames")) r.frames.push_back(frame_from_json(f));
  for (const auto& e : j.at("events")) {
    FailureEvent x{e.at("agent").get<AgentId>(), e.at("kind").get<std::string>(), e.at("first_step").get<int>(),
                   std::nullopt};
    if (e.contains("type")) x.type = collision_type_from_string(e.at("type").get<std::string>());
    r.events.events.push_back(x);
  }
  for (const auto& a : j.at("agents")) r.events.agents.push_back({a[0].get<AgentId>(), a[1].get<int>(), a[2].get<int>()});
  for (const auto& d : j.at("decisions")) {
    PlanRecord p;
    p.step = d.at("step").get<int>();
    p.agent = d.at("agent").get<AgentId>();
    p.decision.chosen = d.at("chosen").get<int>();
    p.decision.tie_break = d.at("tie_break").get<std::string>();
    p.decision.total = d.at("total").get<std::vector<double>>();
    p.decision.collision = d.at("collision").get<std::vector<double>>();
    p.decision.offroad = d.at("offroad").get<std::vector<double>>();
    r.decisions.push_back(std::move(p));
  }
  return r;
}

void save_rollout(const std::string& path, const Rollout& r) { write_file_atomic(path, rollout_to_json(r).dump()); }

Rollout load_rollout(const std::string& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(path + ": " + e.what(), e.byte);
  }
  try {
    return rollout_from_json(j);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path + ": malformed rollout archive: " + e.what(), 0);
  }
}

}  // namespace bsim
