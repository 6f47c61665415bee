#pragma once

#include <vector>

#include "bsim/nn/tensor.hpp"

namespace bsim::nn {

struct AdamState {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  long step = 0;
  long skipped = 0;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
};

/// Bias-corrected Adam update from the store's gradients. A step containing
/// any non-finite gradient is skipped and counted; returns false then.
bool adam_step(ParamStore& store, AdamState& state);

}  // namespace bsim::nn
