#pragma once

#include <cstdint>
#include <string>

#include "model/model.hpp"
#include "train/rollout.hpp"
#include "world/world.hpp"

namespace seqnav {

// The full run description: one seed drives world generation, model
// initialization and training. Unknown or ill-typed fields are rejected with
// their path.
struct RunConfig {
  uint64_t seed = 1;
  std::string task_mode = "r2r";  // default evaluation mode
  WorldSetConfig world;
  ModelConfig model;  // vocab/taxonomy/feature extents are derived from the worlds
  TrainConfig train;
};

RunConfig parse_run_config(const std::string& text);
std::string run_config_to_json(const RunConfig& cfg);

}  // namespace seqnav
