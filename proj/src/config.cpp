#include "bsim/config.hpp"

#include <set>

namespace bsim {

using nlohmann::json;

void RunConfig::validate() const {
  policy_from_string(policy);
  if (scenes < 1) throw ConfigError("scenes must be >= 1");
  if (trials < 1) throw ConfigError("trials must be >= 1");
  if (jobs < 1) throw ConfigError("jobs must be >= 1");
  if (paths.outputs.empty()) throw ConfigError("paths.outputs must not be empty");
  if (data.train_scenes < 1 || data.val_scenes < 1 || data.eval_scenes < 1) {
    throw ConfigError("data: every split needs at least one scene");
  }
  if (data.agents < 1) throw ConfigError("data.agents must be >= 1");
  if (!(data.duration_s > 0.0)) throw ConfigError("data.duration_s must be positive");
  if (data.map_kinds.empty()) throw ConfigError("data.map_kinds must not be empty");
  for (const auto& k : data.map_kinds) map_kind_from_string(k);
  if (data.label_noise < 0.0) throw ConfigError("data.label_noise must be >= 0");
  if (data.sample_stride < 1) throw ConfigError("data.sample_stride must be >= 1");
  if (scenes > data.eval_scenes) throw ConfigError("scenes exceeds data.eval_scenes");
  model.validate();
  if (train.iterations < 0 || train.batch < 1 || !(train.lr > 0.0) || train.val_every < 1) {
    throw ConfigError("train: iterations >= 0, batch >= 1, lr > 0 and val_every >= 1 required");
  }
  sim.validate();
  if (metrics.ou_theta < 0.0) throw ConfigError("metrics.ou_theta must be >= 0");
  for (double s : metrics.ou_sigmas) {
    if (s < 0.0) throw ConfigError("metrics.ou_sigmas must be >= 0");
  }
  if (metrics.likelihood_stride < 1) throw ConfigError("metrics.likelihood_stride must be >= 1");
  for (const auto& [c, o] : sweep.cost_weights) {
    if (c < 0.0 || o < 0.0) throw ConfigError("sweep.cost_weights must be non-negative");
  }
  for (int h : sweep.horizons) {
    if (h < 1) throw ConfigError("sweep.horizons must be >= 1");
  }
}

json to_json(const RunConfig& c) {
  json j;
  j["version"] = RunConfig::kVersion;
  j["seed"] = c.seed;
  j["policy"] = c.policy;
  j["scenes"] = c.scenes;
  j["trials"] = c.trials;
  j["jobs"] = c.jobs;
  j["paths"] = {{"outputs", c.paths.outputs}, {"logs", c.paths.logs}, {"checkpoints", c.paths.checkpoints}};
  j["data"] = {{"train_scenes", c.data.train_scenes}, {"val_scenes", c.data.val_scenes},
               {"eval_scenes", c.data.eval_scenes},   {"agents", c.data.agents},
               {"duration_s", c.data.duration_s},     {"map_kinds", c.data.map_kinds},
               {"label_noise", c.data.label_noise},   {"sample_stride", c.data.sample_stride}};
  j["model"] = to_json(c.model);
  j["train"] = {{"iterations", c.train.iterations},
                {"batch", c.train.batch},
                {"lr", c.train.lr},
                {"val_every", c.train.val_every},
                {"max_val_samples", c.train.max_val_samples},
                {"max_neighbours", c.train.max_neighbours},
                {"stop_ratio", c.train.stop_ratio},
                {"occ_iterations", c.occ_iterations},
                {"bc_iterations", c.bc_iterations},
                {"verbose", c.train.verbose}};
  j["sim"] = {{"steps", c.sim.steps},
              {"start_step", c.sim.start_step},
              {"samples", c.sim.samples},
              {"replan_every", c.sim.replan_every},
              {"temperature", c.sim.temperature},
              {"offroad_fail_steps", c.sim.offroad_fail_steps},
              {"distance_saturation", c.sim.distance_saturation},
              {"record_decisions", c.sim.record_decisions},
              {"retire_at_exits", c.sim.retire_at_exits}};
  j["planner"] = {{"w_collision", c.sim.weights.w_collision},
                  {"w_offroad", c.sim.weights.w_offroad},
                  {"alpha", c.sim.weights.alpha},
                  {"beta", c.sim.weights.beta},
                  {"literal_dmin", c.sim.weights.literal_dmin}};
  j["metrics"] = {{"kde_bandwidth", c.metrics.eval.kde_bandwidth},
                  {"kde_cell", c.metrics.eval.kde_cell},
                  {"coverage_threshold", c.metrics.eval.coverage_threshold},
                  {"ou_theta", c.metrics.ou_theta},
                  {"ou_sigmas", c.metrics.ou_sigmas},
                  {"likelihood_stride", c.metrics.likelihood_stride},
                  {"likelihood_in_eval", c.metrics.likelihood_in_eval}};
  json cw = json::array();
  for (const auto& [a, b] : c.sweep.cost_weights) cw.push_back({a, b});
  j["sweep"] = {{"cost_weights", cw}, {"horizons", c.sweep.horizons}};
  return j;
}

namespace {

bool same_kind(const json& a, const json& b) {
  if (a.is_number() && b.is_number()) {
    if (a.is_number_integer() && b.is_number_float()) return false;
    return true;
  }
  return a.type() == b.type();
}

void overlay(json& base, const json& user, const std::string& where) {
  if (!user.is_object()) throw ConfigError(where + ": expected an object");
  for (auto it = user.begin(); it != user.end(); ++it) {
    const std::string key = where.empty() ? it.key() : where + "." + it.key();
    if (!base.contains(it.key())) throw ConfigError("unknown config key '" + key + "'");
    json& b = base[it.key()];
    if (b.is_object()) {
      overlay(b, it.value(), key);
    } else {
      if (!same_kind(b, it.value())) {
        throw ConfigError("config key '" + key + "' expects " + std::string(b.type_name()) + ", got " +
                          std::string(it.value().type_name()));
      }
      b = it.value();
    }
  }
}

}  // namespace

RunConfig run_config_from_json(const json& user) {
  if (!user.is_object()) throw ConfigError("config must be a JSON object");
  if (!user.contains("version")) throw ConfigError("config is missing 'version'");
  if (!user["version"].is_number_integer() || user["version"].get<int>() != RunConfig::kVersion) {
    throw ConfigError("unsupported config version " + user["version"].dump() + " (expected " +
                      std::to_string(RunConfig::kVersion) + ")");
  }
  json j = to_json(RunConfig{});
  overlay(j, user, "");
  RunConfig c;
  try {
    c.seed = j["seed"].get<std::uint64_t>();
    c.policy = j["policy"];
    c.scenes = j["scenes"];
    c.trials = j["trials"];
    c.jobs = j["jobs"];
    const json& p = j["paths"];
    c.paths.outputs = p["outputs"];
    c.paths.logs = p["logs"];
    c.paths.checkpoints = p["checkpoints"];
    const json& d = j["data"];
    c.data.train_scenes = d["train_scenes"];
    c.data.val_scenes = d["val_scenes"];
    c.data.eval_scenes = d["eval_scenes"];
    c.data.agents = d["agents"];
    c.data.duration_s = d["duration_s"];
    c.data.map_kinds = d["map_kinds"].get<std::vector<std::string>>();
    c.data.label_noise = d["label_noise"];
    c.data.sample_stride = d["sample_stride"];
    c.model = model_config_from_json(j["model"]);
    const json& t = j["train"];
    c.train.iterations = t["iterations"];
    c.train.batch = t["batch"];
    c.train.lr = t["lr"];
    c.train.val_every = t["val_every"];
    c.train.max_val_samples = t["max_val_samples"];
    c.train.max_neighbours = t["max_neighbours"];
    c.train.stop_ratio = t["stop_ratio"];
    c.train.verbose = t["verbose"];
    c.occ_iterations = t["occ_iterations"];
    c.bc_iterations = t["bc_iterations"];
    const json& s = j["sim"];
    c.sim.steps = s["steps"];
    c.sim.start_step = s["start_step"];
    c.sim.samples = s["samples"];
    c.sim.replan_every = s["replan_every"];
    c.sim.temperature = s["temperature"];
    c.sim.offroad_fail_steps = s["offroad_fail_steps"];
    c.sim.distance_saturation = s["distance_saturation"];
    c.sim.record_decisions = s["record_decisions"];
    c.sim.retire_at_exits = s["retire_at_exits"];
    const json& w = j["planner"];
    c.sim.weights.w_collision = w["w_collision"];
    c.sim.weights.w_offroad = w["w_offroad"];
    c.sim.weights.alpha = w["alpha"];
    c.sim.weights.beta = w["beta"];
    c.sim.weights.literal_dmin = w["literal_dmin"];
    const json& m = j["metrics"];
    c.metrics.eval.kde_bandwidth = m["kde_bandwidth"];
    c.metrics.eval.kde_cell = m["kde_cell"];
    c.metrics.eval.coverage_threshold = m["coverage_threshold"];
    c.metrics.ou_theta = m["ou_theta"];
    c.metrics.ou_sigmas = m["ou_sigmas"].get<std::vector<double>>();
    c.metrics.likelihood_stride = m["likelihood_stride"];
    c.metrics.likelihood_in_eval = m["likelihood_in_eval"];
    c.sweep.cost_weights.clear();
    for (const json& e : j["sweep"]["cost_weights"]) {
      if (!e.is_array() || e.size() != 2) throw ConfigError("sweep.cost_weights entries must be [w_collision, w_offroad]");
      c.sweep.cost_weights.push_back({e[0].get<double>(), e[1].get<double>()});
    }
    c.sweep.horizons = j["sweep"]["horizons"].get<std::vector<int>>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
  try {
    c.validate();
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
  return c;
}

RunConfig load_run_config(const std::string& path) {
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    throw ConfigError(path + ": invalid JSON: " + e.what());
  }
  return run_config_from_json(j);
}

}  // namespace bsim
