#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "bsim/pipeline.hpp"

namespace {

struct Overrides {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<int> jobs;
  std::optional<int> scenes;
  std::optional<int> trials;
  std::optional<std::string> policy;
  std::optional<std::string> out;
  bool quiet = false;
};

void add_common(CLI::App* app, Overrides& o) {
  app->add_option("--config", o.config, "run configuration (JSON)")->check(CLI::ExistingFile);
  app->add_option("--seed", o.seed, "master seed");
  app->add_option("--jobs", o.jobs, "parallel workers")->check(CLI::PositiveNumber);
  app->add_option("--scenes", o.scenes, "evaluation scenes")->check(CLI::PositiveNumber);
  app->add_option("--trials", o.trials, "trials per scene (default 5)")->check(CLI::PositiveNumber);
  app->add_option("--policy", o.policy, "bits | bits_max | bits_sample | bc_baseline | log_replay");
  app->add_option("--out", o.out, "output root directory");
  app->add_flag("-q,--quiet", o.quiet, "only print warnings");
}

bsim::RunConfig resolve(const Overrides& o) {
  bsim::RunConfig c = o.config.empty() ? bsim::RunConfig{} : bsim::load_run_config(o.config);
  if (o.seed) c.seed = *o.seed;
  if (o.jobs) c.jobs = *o.jobs;
  if (o.scenes) {
    c.scenes = *o.scenes;
    c.data.eval_scenes = std::max(c.data.eval_scenes, *o.scenes);
  }
  if (o.trials) c.trials = *o.trials;
  if (o.policy) c.policy = *o.policy;
  if (o.out) c.paths.outputs = *o.out;
  try {
    c.validate();
  } catch (const bsim::ConfigError&) {
    throw;
  } catch (const bsim::Error& e) {
    throw bsim::ConfigError(e.what());
  }
  bsim::set_log_level(o.quiet ? 1 : 0);
  return c;
}

void print_report(const bsim::MetricReport& r) {
  std::cout << bsim::MetricReport::csv_header() << '\n' << r.csv_row() << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"bsim: closed-loop traffic simulation"};
  app.require_subcommand(1);
  Overrides o;

  auto* gen = app.add_subcommand("gen", "generate expert logs");
  auto* train = app.add_subcommand("train", "train goal, policy/predictor, occupancy and bc models");
  auto* sim = app.add_subcommand("sim", "run closed-loop rollouts");
  auto* eval = app.add_subcommand("eval", "evaluate rollouts into a metric report");
  auto* sweep = app.add_subcommand("sweep", "ablation sweep");
  auto* plot = app.add_subcommand("plot", "render a rollout archive as SVG");
  auto* show = app.add_subcommand("config", "print the resolved configuration");
  for (auto* s : {gen, train, sim, eval, sweep, show}) add_common(s, o);
  std::string axis;
  sweep->add_option("axis", axis, "cost_weights | horizon | ou_sigma")->required();
  std::string rollout_path, svg_out;
  plot->add_option("rollout", rollout_path, "rollout archive")->required()->check(CLI::ExistingFile);
  plot->add_option("--out", svg_out, "SVG path (default: next to the archive)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (plot->parsed()) {
      std::cout << bsim::cmd_plot(rollout_path, svg_out) << '\n';
      return 0;
    }
    const bsim::RunConfig cfg = resolve(o);
    if (show->parsed()) {
      std::cout << bsim::to_json(cfg).dump(2) << '\n';
    } else if (gen->parsed()) {
      std::cout << bsim::cmd_gen(cfg).dir << '\n';
    } else if (train->parsed()) {
      std::cout << bsim::cmd_train(cfg).dir << '\n';
    } else if (sim->parsed()) {
      std::cout << bsim::cmd_sim(cfg).dir << '\n';
    } else if (eval->parsed()) {
      bsim::StageResult where;
      const auto r = bsim::cmd_eval(cfg, &where);
      print_report(r);
      std::cout << where.dir << '\n';
    } else if (sweep->parsed()) {
      bsim::StageResult where;
      const auto reps = bsim::cmd_sweep(cfg, axis, &where);
      std::cout << bsim::MetricReport::csv_header() << '\n';
      for (const auto& r : reps) std::cout << r.csv_row() << '\n';
      std::cout << where.dir << '\n';
    }
  } catch (const bsim::ConfigError& e) {
    std::cerr << "bsim: config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "bsim: error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
