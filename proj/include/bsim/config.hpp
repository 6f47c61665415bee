#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "bsim/metrics.hpp"
#include "bsim/models.hpp"
#include "bsim/simengine.hpp"
#include "bsim/training.hpp"

namespace bsim {

/// Schema violation in a run configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

struct DataConfig {
  int train_scenes = 40;
  int val_scenes = 8;
  int eval_scenes = 20;
  int agents = 8;
  double duration_s = 22.0;
  std::vector<std::string> map_kinds{"four_way", "arc", "straight"};
  double label_noise = 0.0;
  int sample_stride = 5;
};

struct PathsConfig {
  std::string outputs = "bsim_out";
  std::string logs;         // empty: content-addressed under outputs
  std::string checkpoints;  // empty: content-addressed under outputs
};

struct MetricsConfig {
  EvalOptions eval;
  double ou_theta = 0.5;
  std::vector<double> ou_sigmas{0.0, 0.5, 1.0, 2.0};
  int likelihood_stride = 10;
  bool likelihood_in_eval = false;
};

struct SweepConfig {
  std::vector<std::pair<double, double>> cost_weights{{0.0, 1.0}, {1.0, 1.0}, {10.0, 1.0}, {100.0, 1.0}};
  std::vector<int> horizons{10, 20, 50, 80};
};

struct RunConfig {
  static constexpr int kVersion = 1;
  std::uint64_t seed = 0;
  std::string policy = "bits";
  int scenes = 20;  // evaluation scenes used by sim/eval
  int trials = 5;
  int jobs = 1;
  PathsConfig paths;
  DataConfig data;
  ModelConfig model;
  TrainConfig train;
  int occ_iterations = -1;  // -1: same as train.iterations
  int bc_iterations = -1;
  SimConfig sim;
  MetricsConfig metrics;
  SweepConfig sweep;

  void validate() const;
};

nlohmann::json to_json(const RunConfig& c);
/// Overlays `j` on the defaults. Unknown keys, type mismatches and a missing
/// or different version are ConfigErrors.
RunConfig run_config_from_json(const nlohmann::json& j);
RunConfig load_run_config(const std::string& path);

}  // namespace bsim
