#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "bsim/dynamics.hpp"
#include "bsim/nn/checkpoint.hpp"
#include "bsim/nn/graph.hpp"
#include "bsim/nn/ops.hpp"
#include "bsim/raster.hpp"

namespace bsim {

/// Architecture and geometry shared by all learned models.
struct ModelConfig {
  RasterConfig raster;
  std::vector<int> enc_channels{16, 32, 64, 64};  // four stride-2 stages
  std::vector<int> dec_channels{32, 16, 16, 8};   // U-Net decoder, coarse to fine
  int feature_dim = 64;
  int hidden = 128;
  int horizon = 20;       // policy / predictor steps
  int occ_steps = 20;     // occupancy channels
  int roi_size = 7;
  double roi_extent = 12.0;  // metres covered by the predictor crop
  nn::ControlScaling scaling;
  Limits limits;
  std::uint64_t init_seed = 0;

  void validate() const;
  /// Occupancy cell size in metres (4 raster pixels).
  double occ_cell() const { return 4.0 * raster.pixel_size; }
  int occ_size() const { return raster.size / 4; }
};

nlohmann::json to_json(const ModelConfig& c);
ModelConfig model_config_from_json(const nlohmann::json& j);

struct GoalPose {
  double x = 0.0;  // ego frame
  double y = 0.0;
  double heading = 0.0;
  double log_likelihood = 0.0;
  int cell = 0;
};

/// Four planes over the raster: goal logits, x/y residuals (m), heading (rad).
struct GoalMap {
  RasterConfig raster;
  std::vector<double> data;  // [4][size][size]

  std::span<const double> logits() const {
    return {data.data(), static_cast<std::size_t>(raster.size) * raster.size};
  }
  /// Cell centre plus residual (limited to the cell) and heading.
  GoalPose decode(int cell) const;
  /// Raster cell containing an ego-frame point, or -1 outside the window.
  int cell_of(double x, double y) const;
};

enum class GoalMode { kSample, kMax };

/// K independent draws from softmax(logits / temperature); kMax returns the
/// single argmax cell.
std::vector<GoalPose> sample_goals(const GoalMap& map, int K, double temperature, std::mt19937_64& rng,
                                   GoalMode mode = GoalMode::kSample);

/// Encoder parameter indices.
struct EncoderParams {
  std::vector<int> w, b;
  int fc_w = -1, fc_b = -1;
};

struct EncoderOut {
  std::vector<nn::Var> stages;  // resolutions 1/2, 1/4, 1/8, 1/16
  nn::Var global;               // [N, feature_dim] when built with fc
};

/// Common base: configuration plus parameters.
struct Model {
  std::string kind;
  ModelConfig cfg;
  nn::ParamStore params;

  nn::Checkpoint to_checkpoint() const;
};

struct GoalNet : Model {
  EncoderParams enc;
  std::vector<int> dec_w, dec_b;
  int head_w = -1, head_b = -1;
  explicit GoalNet(const ModelConfig& cfg);
  /// x [N, C, S, S], speed one per row -> [N, 4, S, S].
  nn::Var forward(nn::Graph& g, nn::Var x, std::span<const double> speeds) const;
};

/// Policy and predictor heads on a shared encoder.
struct PolicyPredictorNet : Model {
  EncoderParams enc;
  std::vector<int> pol_w, pol_b;
  std::vector<int> pred_w, pred_b;
  explicit PolicyPredictorNet(const ModelConfig& cfg);

  EncoderOut encode(nn::Graph& g, nn::Var x) const;
  /// Goals [M, 4] features, rows map to batch entries -> raw controls [M, 2H].
  nn::Var policy_head(nn::Graph& g, const EncoderOut& e, std::span<const int> batch_of_row,
                      std::span<const GoalPose> goals, std::span<const double> ego_speeds) const;
  /// Neighbour states in the ego frame of their batch entry -> raw controls [M, 2H].
  nn::Var predictor_head(nn::Graph& g, const EncoderOut& e, std::span<const int> batch_of_row,
                         std::span<const AgentState> neighbours_local) const;
};

struct OccupancyNet : Model {
  EncoderParams enc;
  std::vector<int> dec_w, dec_b;
  int head_w = -1, head_b = -1;
  explicit OccupancyNet(const ModelConfig& cfg);
  /// -> [N, T, S/4, S/4] logits.
  nn::Var forward(nn::Graph& g, nn::Var x, std::span<const double> speeds) const;
};

/// Deterministic single-level behaviour-cloning baseline.
struct BcNet : Model {
  EncoderParams enc;
  std::vector<int> mlp_w, mlp_b;
  explicit BcNet(const ModelConfig& cfg);
  nn::Var forward(nn::Graph& g, nn::Var x, std::span<const double> speeds) const;
};

/// Loads a checkpoint and checks its model kind.
GoalNet load_goal_net(const std::string& path);
PolicyPredictorNet load_policy_net(const std::string& path);
OccupancyNet load_occupancy_net(const std::string& path);
BcNet load_bc_net(const std::string& path);
void save_model(const std::string& path, const Model& m);

// Inference on frozen models. Contexts share the model's raster geometry.

std::vector<GoalMap> goalnet_forward(const GoalNet& net, std::span<const RasterContext* const> ctx);
GoalMap goalnet_forward(const GoalNet& net, const RasterContext& ctx);

/// Controls for each goal, all conditioned on the same context.
std::vector<std::vector<Control>> policy_forward(const PolicyPredictorNet& net, const RasterContext& ctx,
                                                 std::span<const GoalPose> goals);
std::vector<Control> policy_forward(const PolicyPredictorNet& net, const RasterContext& ctx, const GoalPose& goal);

/// Predicted world-frame trajectories (H states each) for world-frame
/// neighbours that are visible in the raster; invisible ones get an empty
/// trajectory.
std::vector<std::vector<AgentState>> predictor_forward(const PolicyPredictorNet& net, const RasterContext& ctx,
                                                       std::span<const AgentState> neighbours);

/// Both heads over one encoder pass.
struct PlanForward {
  std::vector<std::vector<Control>> controls;             // per goal
  std::vector<std::vector<AgentState>> neighbour_paths;   // per neighbour (world frame)
};
PlanForward plan_forward(const PolicyPredictorNet& net, const RasterContext& ctx, std::span<const GoalPose> goals,
                         std::span<const AgentState> neighbours);

std::vector<Control> bc_forward(const BcNet& net, const RasterContext& ctx);

/// Per-step distributions over the coarse ego-frame grid (softmaxed).
struct OccupancyPrediction {
  int steps = 0;
  int size = 0;
  double cell = 2.0;
  RasterConfig raster;
  std::vector<double> prob;  // [steps][size][size]

  /// Cell index of an ego-frame point, or -1 outside the grid.
  int cell_of(double x, double y) const;
  double at(int k, int cell) const { return prob[static_cast<std::size_t>(k) * size * size + cell]; }
};
std::vector<OccupancyPrediction> occupancy_forward(const OccupancyNet& net, std::span<const RasterContext* const> ctx);
OccupancyPrediction occupancy_forward(const OccupancyNet& net, const RasterContext& ctx);

/// Whether a world-frame point falls inside the context window.
bool visible_in(const RasterContext& ctx, const RasterConfig& raster, const AgentState& s);

}  // namespace bsim
