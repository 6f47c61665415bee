#pragma once

#include <array>
#include <span>
#include <vector>

#include "bsim/nn/graph.hpp"

namespace bsim::nn {

/// Per-(sample, channel) softmax over the H*W cells of x [N,C,H,W]; loss is
/// the mean of -log p[target] over entries whose target is >= 0. `targets`
/// holds N*C flat cell indices.
Var spatial_cross_entropy(Graph& g, Var x, std::span<const int> targets);

/// Squared error of channels 1..3 at one cell per sample (heading wrapped);
/// mean over samples. x [N,4,H,W].
Var masked_residual_loss(Graph& g, Var x, std::span<const int> cells,
                         std::span<const std::array<double, 3>> targets);

/// Mean over rows and steps of dx^2 + dy^2 + wrap(dheading)^2 for
/// trajectories laid out [R, 3H].
Var l2_traj_loss(Graph& g, Var pred, const Tensor& ref);

/// Softmax over the cells of one (sample, channel) plane.
std::vector<double> spatial_softmax(std::span<const double> logits, double temperature = 1.0);

}  // namespace bsim::nn
