#include "bsim/pipeline.hpp"

#include <atomic>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <mutex>
#include <random>
#include <sstream>
#include <thread>

#include "bsim/log_format.hpp"

namespace bsim {

namespace fs = std::filesystem;
using nlohmann::json;

std::string to_string(LogSplit s) {
  switch (s) {
    case LogSplit::kTrain: return "train";
    case LogSplit::kVal: return "val";
    case LogSplit::kEval: return "eval";
  }
  return "?";
}

namespace {

std::string hex_hash(const json& key) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(key.dump())));
  return buf;
}

struct Stage {
  fs::path dir;
  std::string hash;
  bool complete = false;
};

Stage open_stage(const std::string& outputs, const std::string& kind, const json& key) {
  Stage s;
  s.hash = hex_hash(key);
  s.dir = fs::path(outputs) / kind / s.hash;
  s.complete = fs::exists(s.dir / "manifest.json");
  return s;
}

void finish_stage(const Stage& s, const RunConfig& cfg, json manifest) {
  write_file_atomic((s.dir / "config.json").string(), to_json(cfg).dump(2) + "\n");
  manifest["hash"] = s.hash;
  write_file_atomic((s.dir / "manifest.json").string(), manifest.dump(2) + "\n");
}

json read_manifest(const fs::path& dir) {
  const fs::path p = dir / "manifest.json";
  if (!fs::exists(p)) throw Error("missing stage output: " + p.string());
  try {
    return json::parse(read_file(p.string()));
  } catch (const json::parse_error& e) {
    throw ParseError(p.string() + ": " + e.what(), e.byte);
  }
}

StageResult result_of(const Stage& s, bool reused) { return {s.dir.string(), s.hash, reused}; }

std::string scene_file(int i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "scene_%04d.log", i);
  return buf;
}

std::string rollout_file(int scene, int trial) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "scene_%04d_trial_%02d.json", scene, trial);
  return buf;
}

int split_size(const RunConfig& cfg, LogSplit s) {
  switch (s) {
    case LogSplit::kTrain: return cfg.data.train_scenes;
    case LogSplit::kVal: return cfg.data.val_scenes;
    case LogSplit::kEval: return cfg.data.eval_scenes;
  }
  return 0;
}

template <typename Fn>
void parallel_for(int n, int jobs, Fn fn) {
  std::atomic<int> next{0};
  std::exception_ptr error;
  std::mutex m;
  auto worker = [&]() {
    while (true) {
      const int i = next++;
      if (i >= n) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(m);
        if (!error) error = std::current_exception();
        next = n;
      }
    }
  };
  const int k = std::max(1, std::min(jobs, n));
  std::vector<std::thread> pool;
  for (int t = 1; t < k; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

bool is_learned(PolicyKind p) { return p != PolicyKind::kLogReplay; }

}  // namespace

MapSpec scene_map_spec(const RunConfig& cfg, LogSplit split, int index) {
  const std::uint64_t seed = mix_seed(mix_seed(cfg.seed, static_cast<std::uint64_t>(split) + 1), index);
  std::mt19937_64 rng(mix_seed(seed, 0x6d6170));
  std::uniform_real_distribution<double> u(0.0, 1.0);
  MapSpec s;
  s.kind = map_kind_from_string(cfg.data.map_kinds[static_cast<std::size_t>(index) % cfg.data.map_kinds.size()]);
  s.seed = seed;
  s.lane_width = 3.2 + 0.6 * u(rng);
  s.lanes = 1 + static_cast<int>(u(rng) * 2.0);
  s.length = 160.0 + 80.0 * u(rng);
  s.radius = 32.0 + 16.0 * u(rng);
  s.sweep_deg = u(rng) < 0.5 ? 360.0 : 150.0 + 120.0 * u(rng);
  s.arm = 55.0 + 15.0 * u(rng);
  s.pose = {0.0, 0.0, kPi * (2.0 * u(rng) - 1.0)};
  s.validate();
  return s;
}

SceneLog make_scene(const RunConfig& cfg, LogSplit split, int index) {
  const MapSpec spec = scene_map_spec(cfg, split, index);
  const MapData map = gen_map(spec);
  ExpertParams p;
  p.label_noise = cfg.data.label_noise;
  const int n = std::min(cfg.data.agents, spawn_capacity(map, p));
  if (n < 1) throw Error("scene " + std::to_string(index) + ": map has no spawn capacity");
  return gen_expert_log(map, n, cfg.data.duration_s, mix_seed(spec.seed, 0x6c6f67), p, cfg.model.limits);
}

StageResult cmd_gen(const RunConfig& cfg) {
  if (!cfg.paths.logs.empty()) {
    const json m = read_manifest(cfg.paths.logs);
    return {cfg.paths.logs, m.at("hash").get<std::string>(), true};
  }
  json d = to_json(cfg)["data"];
  const json key{{"stage", "logs"}, {"version", 1}, {"seed", cfg.seed}, {"data", d}, {"limits", to_json(cfg.model)["limits"]}};
  const Stage s = open_stage(cfg.paths.outputs, "logs", key);
  if (s.complete) return result_of(s, true);
  json counts;
  for (LogSplit split : {LogSplit::kTrain, LogSplit::kVal, LogSplit::kEval}) {
    const int n = split_size(cfg, split);
    std::vector<std::string> texts(static_cast<std::size_t>(n));
    parallel_for(n, cfg.jobs, [&](int i) { texts[static_cast<std::size_t>(i)] = serialize_log(make_scene(cfg, split, i)); });
    for (int i = 0; i < n; ++i) {
      write_file_atomic((s.dir / to_string(split) / scene_file(i)).string(), texts[static_cast<std::size_t>(i)]);
    }
    counts[to_string(split)] = n;
  }
  finish_stage(s, cfg, {{"format", "bsim-logs"}, {"version", 1}, {"splits", counts}});
  log_info("gen: wrote logs to " + s.dir.string());
  return result_of(s, false);
}

std::vector<SceneLog> load_split(const std::string& logs_dir, LogSplit split, int limit) {
  const json m = read_manifest(logs_dir);
  int n = m.at("splits").at(to_string(split)).get<int>();
  if (limit >= 0) {
    if (limit > n) {
      throw Error("requested " + std::to_string(limit) + " " + to_string(split) + " scenes, only " +
                  std::to_string(n) + " generated");
    }
    n = limit;
  }
  std::vector<SceneLog> logs;
  for (int i = 0; i < n; ++i) logs.push_back(load_log((fs::path(logs_dir) / to_string(split) / scene_file(i)).string()));
  return logs;
}

namespace {

json report_json(const TrainReport& r) {
  return {{"initial_val", r.initial_val},
          {"best_val", r.best_val},
          {"best_iter", r.best_iter},
          {"iterations_run", r.iterations_run},
          {"skipped_steps", r.skipped_steps}};
}

void write_curves(const fs::path& dir, const std::string& name, const TrainReport& r) {
  write_file_atomic((dir / ("losses_" + name + ".csv")).string(), r.curves.to_csv());
  std::vector<double> x(r.curves.val_iter.begin(), r.curves.val_iter.end());
  std::vector<std::pair<std::string, std::vector<double>>> series;
  for (const auto& [k, v] : r.curves.val) series.push_back({k, v});
  write_file_atomic((dir / ("losses_" + name + ".svg")).string(), plot_series_svg(name + " validation loss", x, series));
}

}  // namespace

StageResult cmd_train(const RunConfig& cfg, const TrainTargets& what) {
  const StageResult logs = cmd_gen(cfg);
  json t = to_json(cfg)["train"];
  t.erase("verbose");
  const json key{{"stage", "checkpoints"}, {"version", 1},           {"seed", cfg.seed},
                 {"logs", logs.hash},      {"model", to_json(cfg.model)}, {"train", t},
                 {"targets", {what.bits, what.occupancy, what.bc}}};
  const Stage s = open_stage(cfg.paths.outputs, "checkpoints", key);
  if (s.complete) return result_of(s, true);
  const int horizon = what.occupancy ? std::max(cfg.model.horizon, cfg.model.occ_steps) : cfg.model.horizon;
  const Dataset train = build_dataset(load_split(logs.dir, LogSplit::kTrain), cfg.data.sample_stride, horizon,
                                      cfg.model.raster);
  const Dataset val = build_dataset(load_split(logs.dir, LogSplit::kVal), cfg.data.sample_stride, horizon,
                                    cfg.model.raster);
  if (train.samples.empty() || val.samples.empty()) {
    throw Error("no training samples for horizon " + std::to_string(horizon) + " (" +
                std::to_string(train.stats.dropped_outside) + " left the raster window" +
                (train.stats.too_short ? ", episodes too short" : "") + ")");
  }
  log_info("train: " + std::to_string(train.samples.size()) + " train / " + std::to_string(val.samples.size()) +
           " val samples");
  TrainConfig tc = cfg.train;
  tc.seed = cfg.seed;
  json manifest{{"format", "bsim-checkpoints"}, {"version", 1}, {"logs", logs.hash}};
  if (what.bits) {
    TrainReport rep;
    const BitsModels m = train_bits(train, val, cfg.model, tc, &rep);
    save_model((s.dir / "goal.ckpt").string(), m.goal);
    save_model((s.dir / "policy.ckpt").string(), m.policy);
    write_curves(s.dir, "bits", rep);
    manifest["bits"] = report_json(rep);
  }
  if (what.occupancy) {
    TrainConfig oc = tc;
    if (cfg.occ_iterations >= 0) oc.iterations = cfg.occ_iterations;
    TrainReport rep;
    save_model((s.dir / "occupancy.ckpt").string(), train_occupancy(train, val, cfg.model, oc, &rep));
    write_curves(s.dir, "occupancy", rep);
    manifest["occupancy"] = report_json(rep);
  }
  if (what.bc) {
    TrainConfig bc = tc;
    if (cfg.bc_iterations >= 0) bc.iterations = cfg.bc_iterations;
    TrainReport rep;
    save_model((s.dir / "bc.ckpt").string(), train_bc(train, val, cfg.model, bc, &rep));
    write_curves(s.dir, "bc", rep);
    manifest["bc"] = report_json(rep);
  }
  finish_stage(s, cfg, manifest);
  log_info("train: wrote checkpoints to " + s.dir.string());
  return result_of(s, false);
}

namespace {

StageResult checkpoints_for(const RunConfig& cfg) {
  if (!cfg.paths.checkpoints.empty()) {
    const json m = read_manifest(cfg.paths.checkpoints);
    return {cfg.paths.checkpoints, m.at("hash").get<std::string>(), true};
  }
  return cmd_train(cfg);
}

struct LoadedModels {
  std::optional<GoalNet> goal;
  std::optional<PolicyPredictorNet> policy;
  std::optional<BcNet> bc;
  PolicyModels view() const {
    return {goal ? &*goal : nullptr, policy ? &*policy : nullptr, bc ? &*bc : nullptr};
  }
};

LoadedModels load_models(const std::string& dir, PolicyKind p) {
  LoadedModels m;
  const fs::path d(dir);
  if (p == PolicyKind::kBc) {
    m.bc = load_bc_net((d / "bc.ckpt").string());
  } else if (p != PolicyKind::kLogReplay) {
    m.goal = load_goal_net((d / "goal.ckpt").string());
    m.policy = load_policy_net((d / "policy.ckpt").string());
  }
  return m;
}

json sim_key(const RunConfig& cfg, const std::string& logs_hash, const std::string& ckpt_hash) {
  json j = to_json(cfg);
  return {{"stage", "rollouts"}, {"version", Rollout::kVersion}, {"seed", cfg.seed},     {"logs", logs_hash},
          {"checkpoints", ckpt_hash}, {"policy", cfg.policy},     {"scenes", cfg.scenes}, {"trials", cfg.trials},
          {"sim", j["sim"]},          {"planner", j["planner"]}};
}

}  // namespace

StageResult cmd_sim(const RunConfig& cfg) {
  cfg.validate();
  const PolicyKind policy = policy_from_string(cfg.policy);
  const StageResult logs = cmd_gen(cfg);
  std::string ckpt_dir, ckpt_hash;
  if (is_learned(policy)) {
    const StageResult c = checkpoints_for(cfg);
    ckpt_dir = c.dir;
    ckpt_hash = c.hash;
  }
  const Stage s = open_stage(cfg.paths.outputs, "rollouts", sim_key(cfg, logs.hash, ckpt_hash));
  if (s.complete) return result_of(s, true);
  const LoadedModels models = load_models(ckpt_dir, policy);
  const auto scenes = load_split(logs.dir, LogSplit::kEval, cfg.scenes);
  std::vector<MapData> maps;
  for (const SceneLog& l : scenes) maps.push_back(gen_map(l.map));
  const int trials = policy == PolicyKind::kLogReplay ? 1 : cfg.trials;
  const int jobs_total = cfg.scenes * trials;
  parallel_for(jobs_total, cfg.jobs, [&](int k) {
    const int scene = k / trials, trial = k % trials;
    const std::uint64_t seed = mix_seed(mix_seed(cfg.seed, static_cast<std::uint64_t>(scene)), trial);
    const Rollout r = run_rollout(scenes[scene], maps[scene], policy, models.view(), cfg.sim, seed,
                                  "eval/" + scene_file(scene));
    save_rollout((s.dir / rollout_file(scene, trial)).string(), r);
  });
  finish_stage(s, cfg,
               {{"format", "bsim-rollouts"}, {"version", Rollout::kVersion}, {"policy", cfg.policy},
                {"logs", logs.hash}, {"logs_dir", logs.dir}, {"checkpoints", ckpt_hash}, {"checkpoints_dir", ckpt_dir},
                {"scenes", cfg.scenes}, {"trials", trials}});
  log_info("sim: wrote " + std::to_string(jobs_total) + " rollouts to " + s.dir.string());
  return result_of(s, false);
}

MetricReport cmd_eval(const RunConfig& cfg, StageResult* where) {
  const StageResult sim = cmd_sim(cfg);
  const json sm = read_manifest(sim.dir);
  json mk = to_json(cfg)["metrics"];
  const json key{{"stage", "reports"}, {"version", 1}, {"rollouts", sim.hash}, {"metrics", mk}};
  const Stage s = open_stage(cfg.paths.outputs, "reports", key);
  const int scenes = sm.at("scenes").get<int>();
  const int trials = sm.at("trials").get<int>();
  const auto logs = load_split(cmd_gen(cfg).dir, LogSplit::kEval, scenes);
  std::vector<MapData> maps;
  for (const SceneLog& l : logs) maps.push_back(gen_map(l.map));
  std::vector<std::vector<Rollout>> rollouts(static_cast<std::size_t>(scenes));
  for (int i = 0; i < scenes; ++i) {
    for (int t = 0; t < trials; ++t) {
      rollouts[static_cast<std::size_t>(i)].push_back(load_rollout((fs::path(sim.dir) / rollout_file(i, t)).string()));
    }
  }
  std::vector<const SceneLog*> lp;
  std::vector<const MapData*> mp;
  for (int i = 0; i < scenes; ++i) {
    lp.push_back(&logs[static_cast<std::size_t>(i)]);
    mp.push_back(&maps[static_cast<std::size_t>(i)]);
  }
  MetricReport rep = evaluate_rollouts(rollouts, lp, mp, cfg.metrics.eval);
  rep.label = cfg.policy;
  if (cfg.metrics.likelihood_in_eval) {
    const StageResult ck = checkpoints_for(cfg);
    const OccupancyNet occ = load_occupancy_net((fs::path(ck.dir) / "occupancy.ckpt").string());
    std::vector<double> scores(rollouts.size() * static_cast<std::size_t>(trials));
    parallel_for(static_cast<int>(scores.size()), cfg.jobs, [&](int k) {
      const Rollout& r = rollouts[static_cast<std::size_t>(k / trials)][static_cast<std::size_t>(k % trials)];
      scores[static_cast<std::size_t>(k)] =
          likelihood_score(r.frames, maps[static_cast<std::size_t>(k / trials)].grid, occ, cfg.metrics.likelihood_stride)
              .score;
    });
    double sum = 0.0;
    for (double v : scores) sum += v;
    rep.likelihood = sum / static_cast<double>(scores.size());
  }
  if (!s.complete) {
    write_file_atomic((s.dir / "report.json").string(), rep.to_json().dump(2) + "\n");
    write_file_atomic((s.dir / "report.csv").string(), MetricReport::csv_header() + "\n" + rep.csv_row() + "\n");
    finish_stage(s, cfg, {{"format", "bsim-report"}, {"version", 1}, {"rollouts", sim.hash}});
  }
  if (where) *where = result_of(s, s.complete);
  return rep;
}

namespace {

void write_sweep(const Stage& s, const RunConfig& cfg, const std::string& axis, const std::vector<double>& x,
                 const std::vector<MetricReport>& reps) {
  std::string csv = "value," + MetricReport::csv_header() + "\n";
  json arr = json::array();
  std::vector<double> fr, coll, off, lik;
  for (std::size_t i = 0; i < reps.size(); ++i) {
    csv += format_double(x[i]) + "," + reps[i].csv_row() + "\n";
    json e = reps[i].to_json();
    e["value"] = x[i];
    arr.push_back(e);
    const bool ok = reps[i].status == "ok";
    const double nan = std::numeric_limits<double>::quiet_NaN();
    fr.push_back(ok ? reps[i].failures.fr : nan);
    coll.push_back(ok ? reps[i].failures.coll_fr : nan);
    off.push_back(ok ? reps[i].failures.offroad_fr : nan);
    lik.push_back(reps[i].likelihood.value_or(nan));
  }
  write_file_atomic((s.dir / (axis + ".csv")).string(), csv);
  write_file_atomic((s.dir / (axis + ".json")).string(), arr.dump(2) + "\n");
  std::vector<std::pair<std::string, std::vector<double>>> series;
  if (axis == "ou_sigma") {
    series.push_back({"likelihood", lik});
  } else {
    series = {{"FR", fr}, {"collision FR", coll}, {"offroad FR", off}};
  }
  write_file_atomic((s.dir / (axis + ".svg")).string(), plot_series_svg(axis, x, series));
  finish_stage(s, cfg, {{"format", "bsim-sweep"}, {"version", 1}, {"axis", axis}});
}

}  // namespace

std::vector<MetricReport> cmd_sweep(const RunConfig& cfg, const std::string& axis, StageResult* where) {
  cfg.validate();
  std::vector<MetricReport> reps;
  std::vector<double> x;
  if (axis == "cost_weights") {
    for (const auto& [wc, wo] : cfg.sweep.cost_weights) {
      RunConfig c = cfg;
      c.policy = "bits";
      c.sim.weights.w_collision = wc;
      c.sim.weights.w_offroad = wo;
      MetricReport r = cmd_eval(c);
      r.label = "w_collision=" + format_double(wc) + ";w_offroad=" + format_double(wo);
      reps.push_back(r);
      x.push_back(wc);
    }
  } else if (axis == "horizon") {
    for (int h : cfg.sweep.horizons) {
      RunConfig c = cfg;
      c.policy = "bits";
      c.model.horizon = h;
      MetricReport r;
      try {
        const StageResult ck = cmd_train(c, TrainTargets{true, false, false});
        c.paths.checkpoints = ck.dir;
        r = cmd_eval(c);
      } catch (const Error& e) {
        if (std::string(e.what()).rfind("no training samples", 0) != 0) throw;
        log_warn("sweep horizon " + std::to_string(h) + ": " + e.what());
        r.policy = "bits";
        r.status = "no_samples";
      }
      r.label = "horizon=" + std::to_string(h);
      reps.push_back(r);
      x.push_back(h);
    }
  } else if (axis == "ou_sigma") {
    const StageResult logs = cmd_gen(cfg);
    const StageResult ck = checkpoints_for(cfg);
    const OccupancyNet occ = load_occupancy_net((fs::path(ck.dir) / "occupancy.ckpt").string());
    const auto scenes = load_split(logs.dir, LogSplit::kEval, cfg.scenes);
    std::vector<MapData> maps;
    for (const SceneLog& l : scenes) maps.push_back(gen_map(l.map));
    for (double sigma : cfg.metrics.ou_sigmas) {
      std::vector<double> score(scenes.size());
      parallel_for(static_cast<int>(scenes.size()), cfg.jobs, [&](int i) {
        const SceneLog& l = scenes[static_cast<std::size_t>(i)];
        const std::size_t end =
            std::min(l.frames.size(), static_cast<std::size_t>(cfg.sim.start_step + cfg.sim.steps + 1));
        const std::vector<Frame> base(l.frames.begin(), l.frames.begin() + static_cast<std::ptrdiff_t>(end));
        const auto pert = ou_perturb_frames(base, cfg.sim.start_step, cfg.metrics.ou_theta, sigma, l.dt,
                                            mix_seed(cfg.seed, static_cast<std::uint64_t>(i)));
        score[static_cast<std::size_t>(i)] =
            likelihood_score(pert, maps[static_cast<std::size_t>(i)].grid, occ, cfg.metrics.likelihood_stride).score;
      });
      MetricReport r;
      r.label = "sigma=" + format_double(sigma);
      r.policy = "log_replay";
      r.scenes = static_cast<int>(scenes.size());
      r.trials = 1;
      double sum = 0.0;
      for (double v : score) sum += v;
      r.likelihood = sum / static_cast<double>(score.size());
      reps.push_back(r);
      x.push_back(sigma);
    }
  } else {
    throw ConfigError("unknown sweep axis '" + axis + "' (expected cost_weights, horizon or ou_sigma)");
  }
  const json key{{"stage", "sweep"}, {"version", 1}, {"axis", axis}, {"config", to_json(cfg)}};
  const Stage s = open_stage(cfg.paths.outputs, "sweeps", key);
  write_sweep(s, cfg, axis, x, reps);
  if (where) *where = result_of(s, false);
  return reps;
}

std::string cmd_plot(const std::string& rollout_path, const std::string& out_svg) {
  const Rollout r = load_rollout(rollout_path);
  const MapData map = gen_map(r.map);
  const std::string out = out_svg.empty() ? fs::path(rollout_path).replace_extension(".svg").string() : out_svg;
  write_file_atomic(out, plot_rollout_svg(r, map.grid));
  return out;
}

}  // namespace bsim
