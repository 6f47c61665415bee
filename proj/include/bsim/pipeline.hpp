#pragma once

#include <string>
#include <vector>

#include "bsim/config.hpp"

namespace bsim {

/// Output directory of one pipeline stage, named by the hash of everything
/// that determines its content.
struct StageResult {
  std::string dir;
  std::string hash;
  bool reused = false;
};

enum class LogSplit { kTrain, kVal, kEval };
std::string to_string(LogSplit s);

/// Map geometry for scene `index` of a split.
MapSpec scene_map_spec(const RunConfig& cfg, LogSplit split, int index);
/// Expert log for scene `index` of a split (deterministic in the seed).
SceneLog make_scene(const RunConfig& cfg, LogSplit split, int index);

StageResult cmd_gen(const RunConfig& cfg);

struct TrainTargets {
  bool bits = true;
  bool occupancy = true;
  bool bc = true;
};
/// Trains from the generated logs; `reports` (optional) receives one entry per
/// trained model. Throws Error("no training samples ...") when extraction
/// yields nothing.
StageResult cmd_train(const RunConfig& cfg, const TrainTargets& what = {});

StageResult cmd_sim(const RunConfig& cfg);
MetricReport cmd_eval(const RunConfig& cfg, StageResult* where = nullptr);

/// axis is cost_weights, horizon or ou_sigma.
std::vector<MetricReport> cmd_sweep(const RunConfig& cfg, const std::string& axis, StageResult* where = nullptr);

/// Renders a rollout archive as SVG; returns the written path.
std::string cmd_plot(const std::string& rollout_path, const std::string& out_svg);

/// Loads the logs of one split from a gen stage directory.
std::vector<SceneLog> load_split(const std::string& logs_dir, LogSplit split, int limit = -1);

}  // namespace bsim
