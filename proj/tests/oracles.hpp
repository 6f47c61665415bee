#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <vector>

#include "bsim/common.hpp"
#include "bsim/nn/tensor.hpp"

namespace oracle {

/// Multi-source breadth-first search from drivable cells, 4-neighbourhood,
/// capped at `saturation`.
std::vector<int> bfs_distance(std::span<const std::uint8_t> mask, int rows, int cols, int saturation);

/// Dense two-phase simplex (Bland's rule) on the transportation LP.
double lp_transport(std::span<const bsim::Vec2> xs, std::span<const double> a, std::span<const bsim::Vec2> ys,
                    std::span<const double> b);

/// Area of the intersection of two convex counter-clockwise polygons
/// (Sutherland-Hodgman clipping).
double convex_intersection_area(const std::vector<bsim::Vec2>& p, const std::vector<bsim::Vec2>& q);

struct GradCheck {
  int checked = 0;
  double max_rel = 0.0;
};

/// Central differences on `samples` randomly chosen scalar parameters.
/// `loss` evaluates the loss from the current values; `analytic` fills the
/// store's gradients. Relative error uses max(|a|, |n|, floor) as denominator.
GradCheck check_gradients(bsim::nn::ParamStore& store, const std::function<double()>& loss,
                          const std::function<void()>& analytic, int samples, std::uint64_t seed, double h = 1e-5,
                          double floor = 1e-6);

}  // namespace oracle
