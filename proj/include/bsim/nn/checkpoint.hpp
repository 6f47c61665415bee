#pragma once

#include <string>

#include <json.hpp>

#include "bsim/nn/tensor.hpp"

namespace bsim::nn {

inline constexpr int kCheckpointVersion = 1;

/// Archive layout: magic line "bsim-ckpt <version>", one JSON header line
/// {kind, meta, params: [{name, shape}]}, then little-endian doubles in
/// parameter order.
struct Checkpoint {
  std::string kind;
  nlohmann::json meta;
  ParamStore params;
};

std::string serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint parse_checkpoint(std::string_view bytes);
void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace bsim::nn
