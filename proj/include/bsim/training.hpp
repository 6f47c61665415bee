#pragma once

#include <map>
#include <string>
#include <vector>

#include "bsim/models.hpp"
#include "bsim/world.hpp"

namespace bsim {

/// Logs, their regenerated maps and the supervised samples drawn from them.
struct Dataset {
  std::vector<SceneLog> logs;
  std::vector<int> map_of_log;
  std::vector<MapData> maps;
  std::vector<Sample> samples;
  SampleStats stats;
};

/// Extracts samples with futures of `horizon` steps from every log.
Dataset build_dataset(std::vector<SceneLog> logs, int stride, int horizon, const RasterConfig& raster);
/// Keeps the first n samples (logs are shared).
Dataset take_samples(const Dataset& d, std::size_t n);

struct TrainConfig {
  int iterations = 20000;
  int batch = 100;
  double lr = 1e-4;
  int val_every = 100;
  int max_val_samples = 400;
  int max_neighbours = 8;
  std::uint64_t seed = 0;
  /// Stop once every validation loss is below this fraction of its initial
  /// value; 0 disables.
  double stop_ratio = 0.0;
  bool verbose = false;
};

struct LossCurves {
  std::vector<int> train_iter;
  std::map<std::string, std::vector<double>> train;
  std::vector<int> val_iter;
  std::map<std::string, std::vector<double>> val;

  std::string to_csv() const;
  bool operator==(const LossCurves&) const = default;
};

struct TrainReport {
  LossCurves curves;
  std::map<std::string, double> initial_val;
  std::map<std::string, double> best_val;
  std::map<std::string, int> best_iter;
  int iterations_run = 0;
  long skipped_steps = 0;
};

struct BitsModels {
  GoalNet goal;
  PolicyPredictorNet policy;
};

/// Goal net (cross-entropy + masked residual) and the shared-encoder policy
/// and predictor (L2 through the dynamics). Parameters are the ones with the
/// best validation loss. Throws on an empty train split or a non-finite loss.
BitsModels train_bits(const Dataset& train, const Dataset& val, const ModelConfig& cfg, const TrainConfig& tc,
                      TrainReport* report = nullptr);
OccupancyNet train_occupancy(const Dataset& train, const Dataset& val, const ModelConfig& cfg, const TrainConfig& tc,
                             TrainReport* report = nullptr);
BcNet train_bc(const Dataset& train, const Dataset& val, const ModelConfig& cfg, const TrainConfig& tc,
               TrainReport* report = nullptr);

/// Validation-style losses of frozen models on up to `max_samples` samples.
std::map<std::string, double> evaluate_bits(const BitsModels& m, const Dataset& d, int max_samples, int max_neighbours);
double evaluate_occupancy(const OccupancyNet& m, const Dataset& d, int max_samples);

struct LikelihoodResult {
  double score = 0.0;
  int agents = 0;
  int anchors = 0;
  bool truncated = false;  // some agent had fewer than T future steps
};

/// Receding-horizon occupancy likelihood of the trajectories in `frames`:
/// per anchor, the mean over k = 1..T of the predicted probability of the
/// visited cell; averaged over anchors, then over agents.
LikelihoodResult likelihood_score(std::span<const Frame> frames, const SemanticGrid& grid, const OccupancyNet& net,
                                  int anchor_stride = 10);

}  // namespace bsim
