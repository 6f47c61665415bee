#include "bsim/planner.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "bsim/geometry.hpp"

namespace bsim {

void CostWeights::validate() const {
  if (!(w_collision >= 0.0) || !(w_offroad >= 0.0)) throw Error("cost weights must be non-negative");
  if (!std::isfinite(alpha) || !std::isfinite(beta)) throw Error("cost sigmoid parameters must be finite");
}

namespace {

void corner_terms(const AgentState& frame_of, const AgentState& other, double& lo, double& hi) {
  const Pose2 p = frame_of.pose();
  const auto term = [&](Vec2 w) {
    const Pose2 l = to_local(p, {w.x, w.y, 0.0});
    return std::max(std::abs(l.x) - frame_of.length / 2.0, std::abs(l.y) - frame_of.width / 2.0);
  };
  for (const Vec2& c : box_corners(other)) {
    const double t = term(c);
    lo = std::min(lo, t);
    hi = std::max(hi, t);
  }
  lo = std::min(lo, term({other.x, other.y}));
}

}  // namespace

double corner_distance(const AgentState& ego, const AgentState& other, bool literal) {
  if (!(ego.length > 0.0 && ego.width > 0.0 && other.length > 0.0 && other.width > 0.0)) {
    throw Error("corner_distance: boxes must have positive extent");
  }
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  corner_terms(ego, other, lo, hi);
  corner_terms(other, ego, lo, hi);
  return literal ? hi : lo;
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double collision_cost(std::span<const AgentState> ego, std::span<const std::vector<AgentState>> neighbours,
                      const CostWeights& w) {
  double total = 0.0;
  for (std::size_t k = 0; k < ego.size(); ++k) {
    double worst = 0.0;
    bool any = false;
    for (const auto& path : neighbours) {
      if (k >= path.size()) continue;
      const double d = corner_distance(ego[k], path[k], w.literal_dmin);
      worst = std::max(worst, sigmoid(-w.alpha * d - w.beta));
      any = true;
    }
    if (any) total += worst;
  }
  return total;
}

OffroadField make_offroad_field(const SemanticGrid& grid, int saturation) {
  const DistanceMap dm = distance_map(grid.drivable_mask(), grid.rows, grid.cols, saturation);
  OffroadField f;
  f.rows = grid.rows;
  f.cols = grid.cols;
  f.pixel_size = grid.pixel_size;
  f.origin_x = grid.origin_x;
  f.origin_y = grid.origin_y;
  f.saturation = saturation;
  f.values.assign(dm.values.begin(), dm.values.end());
  return f;
}

double footprint_offroad(const AgentState& s, const OffroadField& f, int n) {
  RoiWindow win;
  win.cx = (s.x - f.origin_x) / f.pixel_size - 0.5;
  win.cy = (s.y - f.origin_y) / f.pixel_size - 0.5;
  win.heading = s.heading;
  win.length = s.length / f.pixel_size;
  win.width = s.width / f.pixel_size;
  const auto v = roi_crop(f.values, 1, f.rows, f.cols, win, n);
  double sum = 0.0;
  for (double x : v) sum += x;
  return sum / static_cast<double>(v.size());
}

double offroad_cost(std::span<const AgentState> ego, const OffroadField& f) {
  double total = 0.0;
  for (const AgentState& s : ego) total += footprint_offroad(s, f);
  return total;
}

PlanDecision select_from_costs(std::vector<double> collision, std::vector<double> offroad,
                               std::span<const double> log_likelihoods, const CostWeights& w) {
  const std::size_t K = collision.size();
  if (K == 0) throw Error("select_action: no candidates");
  if (offroad.size() != K || log_likelihoods.size() != K) throw Error("select_action: cost size mismatch");
  PlanDecision d;
  d.collision = std::move(collision);
  d.offroad = std::move(offroad);
  d.total.resize(K);
  for (std::size_t i = 0; i < K; ++i) d.total[i] = w.w_collision * d.collision[i] + w.w_offroad * d.offroad[i];
  const double best = *std::min_element(d.total.begin(), d.total.end());
  std::vector<int> tied;
  for (std::size_t i = 0; i < K; ++i) {
    if (d.total[i] == best) tied.push_back(static_cast<int>(i));
  }
  d.chosen = tied.front();
  d.tie_break = "cost";
  if (tied.size() > 1) {
    double ll = -std::numeric_limits<double>::infinity();
    int n_best = 0;
    for (int i : tied) {
      if (log_likelihoods[i] > ll) {
        ll = log_likelihoods[i];
        d.chosen = i;
        n_best = 1;
      } else if (log_likelihoods[i] == ll) {
        ++n_best;
      }
    }
    d.tie_break = n_best > 1 ? "index" : "likelihood";
  }
  return d;
}

PlanDecision select_action(std::span<const CandidatePlan> candidates,
                           std::span<const std::vector<AgentState>> neighbour_predictions, const OffroadField& field,
                           const CostWeights& w) {
  std::vector<double> col, off, ll;
  for (const CandidatePlan& c : candidates) {
    col.push_back(collision_cost(c.trajectory, neighbour_predictions, w));
    off.push_back(offroad_cost(c.trajectory, field));
    ll.push_back(c.log_likelihood);
  }
  return select_from_costs(std::move(col), std::move(off), ll, w);
}

}  // namespace bsim
