#pragma once

#include <span>
#include <string>
#include <vector>

#include "bsim/raster.hpp"
#include "bsim/state.hpp"

namespace bsim {

struct CostWeights {
  double w_collision = 10.0;
  double w_offroad = 1.0;
  double alpha = 1.0;
  double beta = 4.0;
  /// Use the max over all corner terms instead of the nearest-corner minimum.
  bool literal_dmin = false;

  void validate() const;
};

/// Signed box-to-box distance (metres): minimum over the corners and centre
/// of each box, expressed in the other box's frame, of
/// max(|dx| - L/2, |dy| - W/2). Zero at contact, negative on overlap.
double corner_distance(const AgentState& ego, const AgentState& other, bool literal = false);

double sigmoid(double x);

/// Sum over steps of the per-step maximum over neighbours of
/// sigmoid(-alpha * d - beta). Neighbour paths may be empty (ignored); the
/// horizon is the common prefix.
double collision_cost(std::span<const AgentState> ego, std::span<const std::vector<AgentState>> neighbours,
                      const CostWeights& w);

/// World-frame distance map as doubles for bilinear sampling.
struct OffroadField {
  int rows = 0;
  int cols = 0;
  double pixel_size = 0.5;
  double origin_x = 0.0;
  double origin_y = 0.0;
  int saturation = 20;
  std::vector<double> values;
};
OffroadField make_offroad_field(const SemanticGrid& grid, int saturation = 20);

/// Mean of a 7x7 bilinear crop of the distance map over one footprint.
double footprint_offroad(const AgentState& s, const OffroadField& f, int n = 7);
/// Sum of footprint_offroad over the trajectory.
double offroad_cost(std::span<const AgentState> ego, const OffroadField& f);

struct CandidatePlan {
  std::vector<AgentState> trajectory;  // world frame, H states
  double log_likelihood = 0.0;
};

struct PlanDecision {
  int chosen = 0;
  std::vector<double> total;
  std::vector<double> collision;
  std::vector<double> offroad;
  std::string tie_break;  // "cost", "likelihood" or "index"
};

/// Argmin of w_collision * collision + w_offroad * offroad; exact ties go to
/// the highest goal log-likelihood, then the lowest index.
PlanDecision select_action(std::span<const CandidatePlan> candidates,
                           std::span<const std::vector<AgentState>> neighbour_predictions, const OffroadField& field,
                           const CostWeights& w);
/// Selection on precomputed cost terms.
PlanDecision select_from_costs(std::vector<double> collision, std::vector<double> offroad,
                               std::span<const double> log_likelihoods, const CostWeights& w);

}  // namespace bsim
