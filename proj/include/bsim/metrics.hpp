#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "bsim/simengine.hpp"

namespace bsim {

struct FailureRates {
  double fr = 0.0;  // percent of agents with any failure
  double coll_fr = 0.0;
  double offroad_fr = 0.0;
  double coll_front = 0.0;
  double coll_rear = 0.0;
  double coll_side = 0.0;
  double offroad_fraction = 0.0;  // percent of agent-steps offroad
  int agents = 0;
};

/// Per-rollout agent fractions averaged over rollouts.
FailureRates failure_rates(std::span<const Rollout> rollouts);
FailureRates failure_rates(const EventSummary& events);

/// Cell lattice shared by density profiles of one map.
struct DensityGrid {
  double origin_x = 0.0;
  double origin_y = 0.0;
  double cell = 2.0;
  int rows = 0;
  int cols = 0;

  Vec2 center(int idx) const { return {origin_x + (idx % cols + 0.5) * cell, origin_y + (idx / cols + 0.5) * cell}; }
  bool operator==(const DensityGrid&) const = default;
};
DensityGrid density_grid_for(const SemanticGrid& map, double cell = 2.0);

struct DensityProfile {
  DensityGrid grid;
  std::vector<double> mass;  // rows * cols
  bool normalized = false;

  double total() const;
  bool empty() const { return mass.empty(); }
};

/// Isotropic Gaussian kernel evaluated at cell centres, truncated at
/// `truncate` bandwidths and normalized to unit mass. No samples gives an
/// empty profile.
DensityProfile kde_density(std::span<const Vec2> positions, const DensityGrid& grid, double bandwidth = 2.0,
                           double truncate = 3.0);
/// Agent centres at every simulated step.
std::vector<Vec2> rollout_positions(const Rollout& r);

struct CoverageCounts {
  int drivable = 0;
  int non_drivable = 0;
  int total() const { return drivable + non_drivable; }
};

/// Cells where the per-cell maximum over trials exceeds `threshold`, split by
/// the drivable class of the cell centre.
CoverageCounts coverage(std::span<const DensityProfile> profiles, const SemanticGrid& map, double threshold = 1e-3);

/// Exact earth mover's distance with Euclidean ground distance between cell
/// centres (transportation simplex).
double emd(const DensityProfile& a, const DensityProfile& b);

/// Transport between explicit point masses (equal totals within 1e-9).
double emd_points(std::span<const Vec2> xs, std::span<const double> a, std::span<const Vec2> ys,
                  std::span<const double> b);

/// Mean pairwise EMD; 0 for fewer than two profiles.
double diversity(std::span<const DensityProfile> profiles);

struct Histogram {
  double lo = 0.0;
  double hi = 1.0;
  std::vector<double> counts;

  double bin_width() const { return (hi - lo) / static_cast<double>(counts.size()); }
  /// Values outside [lo, hi] fall in the edge bins.
  void add(double v);
};

/// Sum of |CDF differences| times the bin width (both normalized to unit mass).
double wasserstein_1d(const Histogram& a, const Histogram& b);

struct DrivingProfile {
  Histogram speed{0.0, 30.0, std::vector<double>(20)};
  Histogram lon_acc{0.0, 10.0, std::vector<double>(20)};
  Histogram lat_acc{0.0, 10.0, std::vector<double>(20)};
  Histogram jerk{0.0, 10.0, std::vector<double>(20)};
};

/// Adds every agent track over frames[first..last].
void accumulate_profile(DrivingProfile& p, std::span<const Frame> frames, int first, int last, double dt);

struct DatasetMetrics {
  double speed = 0.0;
  double lon_acc = 0.0;
  double lat_acc = 0.0;
  double jerk = 0.0;
  double sade = 0.0;
  double sfde = 0.0;
  bool horizon_mismatch = false;
};

/// Histogram distances (normalized by bin width x bin count) and sADE/sFDE of
/// rollouts against their source logs. rollouts[i] pairs with logs[i].
DatasetMetrics dataset_metrics(std::span<const Rollout> rollouts, std::span<const SceneLog* const> logs);

/// Additive 2-D Ornstein-Uhlenbeck noise on positions, started at zero.
std::vector<AgentState> ou_perturb(std::span<const AgentState> traj, double theta, double sigma, double dt,
                                   std::uint64_t seed);
/// Perturbs every agent track of the frames from `first` on, with per-agent
/// streams derived from the seed.
std::vector<Frame> ou_perturb_frames(std::span<const Frame> frames, int first, double theta, double sigma, double dt,
                                     std::uint64_t seed);

struct MetricReport {
  std::string label;
  std::string policy;
  std::string status = "ok";
  int scenes = 0;
  int trials = 0;
  FailureRates failures;
  double coverage_drivable = 0.0;
  double coverage_non_drivable = 0.0;
  double diversity = 0.0;
  DatasetMetrics dataset;
  std::optional<double> likelihood;

  double coverage_total() const { return coverage_drivable + coverage_non_drivable; }
  nlohmann::json to_json() const;
  static std::string csv_header();
  std::string csv_row() const;
};

struct EvalOptions {
  double kde_bandwidth = 2.0;
  double kde_cell = 2.0;
  double coverage_threshold = 1e-3;
};

/// Report over scenes; trials[s] are the rollouts of scene s, all starting from
/// logs[s] on maps[s].
MetricReport evaluate_rollouts(const std::vector<std::vector<Rollout>>& trials,
                               std::span<const SceneLog* const> logs, std::span<const MapData* const> maps,
                               const EvalOptions& opt = {});

/// Trajectories coloured by time step over the drivable area.
std::string plot_rollout_svg(const Rollout& r, const SemanticGrid& grid);
/// Line chart of several named series sharing an x axis.
std::string plot_series_svg(const std::string& title, const std::vector<double>& x,
                            const std::vector<std::pair<std::string, std::vector<double>>>& series);

}  // namespace bsim
