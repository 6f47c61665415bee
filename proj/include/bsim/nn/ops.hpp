#pragma once

#include <span>
#include <vector>

#include "bsim/dynamics.hpp"
#include "bsim/nn/graph.hpp"
#include "bsim/raster.hpp"

namespace bsim::nn {

/// 3x3 convolution with zero padding 1. x [N,C,H,W], w [O,C,3,3], b [O].
Var conv2d(Graph& g, Var x, Var w, Var b, int stride);
Var relu(Graph& g, Var x);
Var add(Graph& g, Var a, Var b);
Var scale(Graph& g, Var x, double s);
/// Nearest-neighbour 2x upsampling of [N,C,H,W].
Var upsample2x(Graph& g, Var x);
Var concat_channels(Graph& g, const std::vector<Var>& xs);
/// [N,C,H,W] -> [N,C]
Var global_avg_pool(Graph& g, Var x);
/// x [N,F], w [O,F], b [O] -> [N,O]
Var linear(Graph& g, Var x, Var w, Var b);
Var concat_cols(Graph& g, const std::vector<Var>& xs);
/// Selects rows of a [N,...] tensor.
Var gather_rows(Graph& g, Var x, std::span<const int> rows);
/// Sum of all elements -> [1].
Var sum(Graph& g, Var x);
/// Weighted sum of scalar nodes -> [1].
Var weighted_sum(Graph& g, const std::vector<Var>& xs, const std::vector<double>& w);

struct RoiRequest {
  int batch = 0;
  RoiWindow window;  // in feature pixel coordinates
};
/// Bilinear n x n crop per request from feat [N,C,H,W] -> [R, C*n*n].
Var roi_align(Graph& g, Var feat, std::span<const RoiRequest> rois, int n = 7);

/// Maps raw network outputs to controls relative to the start speed.
struct ControlScaling {
  double speed = 2.0;  // speed_cmd = v_start + speed * raw
  double yaw = 0.5;    // yaw_rate = yaw * raw
};
std::vector<Control> decode_controls(std::span<const double> raw, double start_speed, const ControlScaling& s);

/// Differentiable dynamics: raw [R, 2H] (interleaved per step), one start
/// state per row -> trajectory [R, 3H] of (x, y, heading) per step.
Var control_rollout(Graph& g, Var raw, std::span<const AgentState> starts, const Limits& limits,
                    const ControlScaling& scaling = {});

}  // namespace bsim::nn
