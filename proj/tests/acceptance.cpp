#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <optional>
#include <random>
#include <sstream>

#include <CLI11.hpp>

#include "bsim/geometry.hpp"
#include "bsim/nn/losses.hpp"
#include "bsim/pipeline.hpp"
#include "gradchecks.hpp"
#include "oracles.hpp"

using namespace bsim;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Verdict {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void report(int id, const std::string& name, const std::function<Verdict()>& fn) {
  const auto t0 = Clock::now();
  Verdict v;
  try {
    v = fn();
  } catch (const std::exception& e) {
    v = {false, std::string("exception: ") + e.what()};
  }
  char tail[64];
  std::snprintf(tail, sizeof tail, " [%.1fs]", seconds_since(t0));
  std::cout << (v.pass ? "PASS" : "FAIL") << " " << id << " " << name << ": " << v.detail << tail << std::endl;
  if (!v.pass) ++failures;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

Verdict oracle_equivalence() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(101);
  int dm_bad = 0;
  for (int k = 0; k < 200; ++k) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const double density = 0.002 + 0.3 * u(rng);
    std::vector<std::uint8_t> mask(64 * 64);
    for (auto& m : mask) m = u(rng) < density ? 1 : 0;
    const DistanceMap dm = distance_map(mask, 64, 64, 20);
    const auto ref = oracle::bfs_distance(mask, 64, 64, 20);
    for (std::size_t i = 0; i < ref.size(); ++i) {
      if (static_cast<int>(dm.values[i]) != ref[i]) {
        ++dm_bad;
        break;
      }
    }
  }

  double emd_err = 0.0;
  DensityGrid g;
  g.rows = 16;
  g.cols = 16;
  const auto sparse = [&](std::mt19937_64& r) {
    std::uniform_int_distribution<int> nd(1, 12), cd(0, g.rows * g.cols - 1);
    std::uniform_real_distribution<double> w(0.05, 1.0);
    DensityProfile p;
    p.grid = g;
    p.mass.assign(static_cast<std::size_t>(g.rows) * g.cols, 0.0);
    const int n = nd(r);
    for (int i = 0; i < n; ++i) p.mass[cd(r)] += w(r);
    const double z = p.total();
    for (double& m : p.mass) m /= z;
    p.normalized = true;
    return p;
  };
  for (int k = 0; k < 100; ++k) {
    const DensityProfile a = sparse(rng), b = sparse(rng);
    std::vector<Vec2> xs, ys;
    std::vector<double> wa, wb;
    for (std::size_t i = 0; i < a.mass.size(); ++i) {
      if (a.mass[i] > 0) {
        xs.push_back(g.center(static_cast<int>(i)));
        wa.push_back(a.mass[i]);
      }
      if (b.mass[i] > 0) {
        ys.push_back(g.center(static_cast<int>(i)));
        wb.push_back(b.mass[i]);
      }
    }
    emd_err = std::max(emd_err, std::abs(emd(a, b) - oracle::lp_transport(xs, wa, ys, wb)));
  }

  int sat_bad = 0, overlaps = 0;
  std::uniform_real_distribution<double> pos(-6.0, 6.0), ang(-kPi, kPi), len(0.5, 6.0), wid(0.3, 3.0);
  for (int k = 0; k < 10000; ++k) {
    const AgentState a{.x = pos(rng), .y = pos(rng), .heading = wrap_angle(ang(rng)), .length = len(rng), .width = wid(rng)};
    const AgentState b{.x = pos(rng), .y = pos(rng), .heading = wrap_angle(ang(rng)), .length = len(rng), .width = wid(rng)};
    const auto ca = box_corners(a), cb = box_corners(b);
    const bool expect = oracle::convex_intersection_area({ca.begin(), ca.end()}, {cb.begin(), cb.end()}) > 1e-9;
    overlaps += expect;
    if (boxes_overlap(a, b) != expect || boxes_overlap(b, a) != expect) ++sat_bad;
  }
  const double secs = seconds_since(t0);
  std::ostringstream o;
  o << "distance-map mismatches " << dm_bad << "/200, max |emd - lp| " << fmt(emd_err) << " over 100, SAT mismatches "
    << sat_bad << "/10000 (" << overlaps << " overlapping), " << fmt(secs) << "s";
  return {dm_bad == 0 && emd_err <= 1e-6 && sat_bad == 0 && secs < 120.0, o.str()};
}

Verdict gradient_integrity() {
  const auto results = oracle::run_gradchecks(128, 11);
  bool ok = !results.empty();
  double worst = 0.0;
  std::string worst_name;
  int fewest = 1 << 30;
  for (const auto& [name, gc] : results) {
    ok = ok && gc.checked >= 100 && gc.max_rel < 1e-3;
    fewest = std::min(fewest, gc.checked);
    if (gc.max_rel >= worst) {
      worst = gc.max_rel;
      worst_name = name;
    }
  }
  return {ok, std::to_string(results.size()) + " checks, >= " + std::to_string(fewest) +
                  " parameters each, worst relative error " + fmt(worst) + " (" + worst_name + ")"};
}

Verdict closed_form(const RunConfig& cfg) {
  const CostWeights w;
  const AgentState a{.x = 0.0}, b{.x = 4.5};
  const std::vector<AgentState> ego{a};
  const std::vector<std::vector<AgentState>> nb{{b}};
  const double contact = collision_cost(ego, nb, w);
  const int S = cfg.model.raster.size;
  const int N = S * S;
  nn::Graph gr;
  const nn::Var logits = gr.input(nn::Tensor({1, 1, S, S}, 0.0));
  const nn::Var ce = nn::spatial_cross_entropy(gr, logits, std::vector<int>{N / 3});
  const double l = gr.value(ce).data[0];
  const bool ok = std::abs(contact - 0.017986) <= 1e-6 && std::abs(l - std::log(static_cast<double>(N))) <= 1e-9;
  return {ok, "collision term at contact " + fmt(contact) + ", uniform cross-entropy " + fmt(l) + " vs ln " +
                  std::to_string(N) + " = " + fmt(std::log(static_cast<double>(N)))};
}

std::string rollout_name(int scene, int trial) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "scene_%04d_trial_%02d.json", scene, trial);
  return buf;
}

std::vector<std::vector<Rollout>> load_rollouts(const StageResult& sim, int scenes, int trials) {
  std::vector<std::vector<Rollout>> out(static_cast<std::size_t>(scenes));
  for (int s = 0; s < scenes; ++s) {
    for (int t = 0; t < trials; ++t) out[static_cast<std::size_t>(s)].push_back(load_rollout((fs::path(sim.dir) / rollout_name(s, t)).string()));
  }
  return out;
}

std::vector<double> per_scene_diversity(const std::vector<std::vector<Rollout>>& trials,
                                        const std::vector<MapData>& maps, const EvalOptions& opt) {
  std::vector<double> out;
  for (std::size_t s = 0; s < trials.size(); ++s) {
    const DensityGrid grid = density_grid_for(maps[s].grid, opt.kde_cell);
    std::vector<DensityProfile> ps;
    for (const Rollout& r : trials[s]) ps.push_back(kde_density(rollout_positions(r), grid, opt.kde_bandwidth));
    out.push_back(diversity(ps));
  }
  return out;
}

Verdict replay_identity(const RunConfig& base) {
  RunConfig cfg = base;
  cfg.policy = "log_replay";
  const MetricReport rep = cmd_eval(cfg);
  const StageResult sim = cmd_sim(cfg);
  const auto logs = load_split(cmd_gen(cfg).dir, LogSplit::kEval, cfg.scenes);
  const auto rollouts = load_rollouts(sim, cfg.scenes, 1);
  int exact = 0;
  for (int s = 0; s < cfg.scenes; ++s) {
    const Rollout& r = rollouts[static_cast<std::size_t>(s)][0];
    bool same = r.frames.size() == std::min<std::size_t>(logs[static_cast<std::size_t>(s)].frames.size(),
                                                         static_cast<std::size_t>(cfg.sim.start_step + cfg.sim.steps + 1));
    for (std::size_t t = 0; same && t < r.frames.size(); ++t) same = r.frames[t] == logs[static_cast<std::size_t>(s)].frames[t];
    exact += same;
  }
  const DatasetMetrics& d = rep.dataset;
  const bool zero = d.speed == 0.0 && d.lon_acc == 0.0 && d.lat_acc == 0.0 && d.jerk == 0.0 && d.sade == 0.0 &&
                    d.sfde == 0.0;
  return {exact == cfg.scenes && zero && rep.failures.fr == 0.0,
          std::to_string(exact) + "/" + std::to_string(cfg.scenes) + " scenes bit-exact; speed " + fmt(d.speed) +
              " lon " + fmt(d.lon_acc) + " lat " + fmt(d.lat_acc) + " jerk " + fmt(d.jerk) + " sADE " + fmt(d.sade) +
              " sFDE " + fmt(d.sfde) + " FR " + fmt(rep.failures.fr)};
}

struct PolicyRun {
  MetricReport report;
  std::vector<double> scene_diversity;
};

PolicyRun run_policy(const RunConfig& base, const std::string& policy, const std::vector<MapData>& maps) {
  RunConfig cfg = base;
  cfg.policy = policy;
  PolicyRun out;
  out.report = cmd_eval(cfg);
  const StageResult sim = cmd_sim(cfg);
  out.scene_diversity = per_scene_diversity(load_rollouts(sim, cfg.scenes, cfg.trials), maps, cfg.metrics.eval);
  std::cout << "  " << policy << ": FR " << fmt(out.report.failures.fr) << " coll " << fmt(out.report.failures.coll_fr)
            << " offroad " << fmt(out.report.failures.offroad_fr) << " coverage " << fmt(out.report.coverage_total())
            << " diversity " << fmt(out.report.diversity) << " sADE " << fmt(out.report.dataset.sade) << std::endl;
  return out;
}

Verdict memorization(const RunConfig& cfg) {
  const StageResult logs = cmd_gen(cfg);
  const int horizon = std::max(cfg.model.horizon, cfg.model.occ_steps);
  const Dataset all = build_dataset(load_split(logs.dir, LogSplit::kTrain, std::min(cfg.data.train_scenes, 4)),
                                    cfg.data.sample_stride, horizon, cfg.model.raster);
  const Dataset d = take_samples(all, 50);
  if (d.samples.size() != 50) return {false, "only " + std::to_string(d.samples.size()) + " samples"};
  TrainConfig tc;
  tc.iterations = 2000;
  tc.batch = 50;
  tc.lr = 1e-3;
  tc.val_every = 25;
  tc.max_val_samples = 50;
  tc.max_neighbours = cfg.train.max_neighbours;
  tc.seed = cfg.seed;
  tc.stop_ratio = 0.1;

  std::ostringstream o;
  bool ok = true;
  const auto check = [&](const std::string& model, const TrainReport& a, const TrainReport& b) {
    const bool same = a.curves == b.curves;
    ok = ok && same;
    o << model << " (" << a.iterations_run << " it" << (same ? "" : ", NOT reproducible") << ")";
    for (const auto& [k, v0] : a.initial_val) {
      const double v = a.best_val.at(k);
      ok = ok && v < 0.1 * v0;
      o << " " << k << " " << fmt(v / v0);
    }
    o << "; ";
  };
  TrainReport a, b;
  train_bits(d, d, cfg.model, tc, &a);
  train_bits(d, d, cfg.model, tc, &b);
  check("bits", a, b);
  a = b = {};
  train_occupancy(d, d, cfg.model, tc, &a);
  train_occupancy(d, d, cfg.model, tc, &b);
  check("occupancy", a, b);
  a = b = {};
  train_bc(d, d, cfg.model, tc, &a);
  train_bc(d, d, cfg.model, tc, &b);
  check("bc", a, b);
  return {ok, "final/initial loss: " + o.str()};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance checks"};
  std::string work = (fs::temp_directory_path() / "bsim_acceptance").string();
  std::string config = BSIM_DESK_CONFIG;
  int jobs = 1;
  std::vector<int> only;
  app.add_option("--work", work, "output root for the pipeline stages");
  app.add_option("--config", config, "run configuration")->check(CLI::ExistingFile);
  app.add_option("--jobs", jobs, "parallel workers");
  app.add_option("--only", only, "criteria to run");
  CLI11_PARSE(app, argc, argv);

  RunConfig cfg = load_run_config(config);
  cfg.paths.outputs = work;
  cfg.jobs = jobs;
  set_log_level(1);
  const auto selected = [&](int id) { return only.empty() || std::find(only.begin(), only.end(), id) != only.end(); };
  const auto t0 = Clock::now();

  if (selected(1)) report(1, "oracle equivalences", oracle_equivalence);
  if (selected(2)) report(2, "gradient integrity", gradient_integrity);
  if (selected(3)) report(3, "closed-form constants", [&] { return closed_form(cfg); });
  if (selected(4)) report(4, "replay identity", [&] { return replay_identity(cfg); });

  if (selected(5) || selected(6)) {
    std::vector<MapData> maps;
    for (const SceneLog& l : load_split(cmd_gen(cfg).dir, LogSplit::kEval, cfg.scenes)) maps.push_back(gen_map(l.map));
    std::optional<PolicyRun> bc, mx, smp, full;
    const auto pipeline_start = Clock::now();
    try {
      cmd_train(cfg);
      bc = run_policy(cfg, "bc_baseline", maps);
      mx = run_policy(cfg, "bits_max", maps);
      smp = run_policy(cfg, "bits_sample", maps);
      full = run_policy(cfg, "bits", maps);
    } catch (const std::exception& e) {
      std::cout << "  pipeline error: " << e.what() << std::endl;
    }
    const double pipeline_secs = seconds_since(pipeline_start);
    if (selected(5)) {
      report(5, "determinism and diversity zero-case", [&]() -> Verdict {
        if (!bc || !smp) return {false, "pipeline did not complete"};
        int zero_bc = 0, zero_max = 0, positive = 0;
        for (double v : bc->scene_diversity) zero_bc += v == 0.0;
        for (double v : mx->scene_diversity) zero_max += v == 0.0;
        for (double v : smp->scene_diversity) positive += v > 0.0;
        const int n = cfg.scenes;
        const int need = static_cast<int>(std::ceil(0.9 * n));
        return {zero_bc == n && zero_max == n && positive >= need,
                "diversity exactly 0 on " + std::to_string(zero_bc) + "/" + std::to_string(n) + " scenes (bc_baseline), " +
                    std::to_string(zero_max) + "/" + std::to_string(n) + " (bits_max); bits_sample > 0 on " +
                    std::to_string(positive) + "/" + std::to_string(n) + " (need " + std::to_string(need) + ")"};
      });
    }
    if (selected(6)) {
      report(6, "planner and sampling orderings", [&]() -> Verdict {
        if (!full || !smp || !mx) return {false, "pipeline did not complete"};
        const double fr_bits = full->report.failures.fr, fr_smp = smp->report.failures.fr;
        const double cd_bits = full->report.coverage_total() + full->report.diversity;
        const double cd_max = mx->report.coverage_total() + mx->report.diversity;
        return {fr_bits <= fr_smp && cd_bits >= cd_max,
                "FR(bits) " + fmt(fr_bits) + " <= FR(bits_sample) " + fmt(fr_smp) + "; coverage+diversity(bits) " +
                    fmt(cd_bits) + " >= (bits_max) " + fmt(cd_max) + "; " + std::to_string(cfg.scenes) + " scenes x " +
                    std::to_string(cfg.trials) + " trials, train+sim+eval " + fmt(pipeline_secs / 60.0) + " min"};
      });
    }
  }

  if (selected(7)) {
    report(7, "likelihood under OU perturbation", [&]() -> Verdict {
      const auto reps = cmd_sweep(cfg, "ou_sigma");
      std::vector<double> v;
      for (const auto& r : reps) v.push_back(r.likelihood.value_or(std::nan("")));
      int inversions = 0;
      bool small = true;
      std::string series;
      for (std::size_t i = 0; i < v.size(); ++i) {
        series += (i ? ", " : "") + fmt(v[i]);
        if (i > 0 && !(v[i] < v[i - 1])) {
          ++inversions;
          small = small && v[i] <= 1.05 * v[i - 1];
        }
      }
      return {v.size() == 4 && inversions <= 1 && small && std::isfinite(v[0]),
              "sigma {0, 0.5, 1, 2} -> " + series + " (" + std::to_string(inversions) + " inversions)"};
    });
  }

  if (selected(8)) {
    report(8, "collision weight ablation", [&]() -> Verdict {
      RunConfig c0 = cfg, c10 = cfg;
      c0.policy = c10.policy = "bits";
      c0.sim.weights.w_collision = 0.0;
      c10.sim.weights.w_collision = 10.0;
      c0.sim.weights.w_offroad = c10.sim.weights.w_offroad = 1.0;
      const double f10 = cmd_eval(c10).failures.coll_fr;
      const double f0 = cmd_eval(c0).failures.coll_fr;
      return {f10 <= f0, "collision FR " + fmt(f10) + " at w=10 vs " + fmt(f0) + " at w=0"};
    });
  }

  if (selected(9)) report(9, "training smoke", [&] { return memorization(cfg); });

  std::cout << (failures == 0 ? "ALL PASS" : std::to_string(failures) + " FAILED") << " in "
            << fmt(seconds_since(t0) / 60.0) << " min" << std::endl;
  return failures == 0 ? 0 : 1;
}
