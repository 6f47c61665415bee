#pragma once

#include <string>
#include <utility>
#include <vector>

#include "bsim/models.hpp"
#include "oracles.hpp"

namespace oracle {

/// Small model geometry used by the gradient and training checks.
bsim::ModelConfig tiny_model_config();

/// Central-difference checks of every layer type, every loss and the
/// dynamics-in-the-loop decoder; one entry per check.
std::vector<std::pair<std::string, GradCheck>> run_gradchecks(int samples, std::uint64_t seed);

}  // namespace oracle
