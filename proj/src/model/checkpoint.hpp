#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "core/tensor.hpp"
#include "model/model.hpp"

namespace seqnav {

// Binary checkpoint: "ORST" magic, u32 format version, length-prefixed JSON
// header, then named parameter blocks (name length + name + extent list +
// little-endian float32 payload). Load/save round-trips bit-exactly.
struct NamedBlock {
  std::string name;
  Shape shape;
  std::vector<float> data;
};

struct Checkpoint {
  static constexpr uint32_t kVersion = 1;

  std::string header_json;  // model config plus optional trainer state
  std::vector<NamedBlock> blocks;

  void save(const std::string& path) const;
  static Checkpoint load(const std::string& path);

  const NamedBlock* find(const std::string& name) const;
};

// Header helpers. The header always carries the model config; a trainer
// state object is present in checkpoints written by training.
std::string make_checkpoint_header(const ModelConfig& cfg, const std::string& trainer_state_json);
ModelConfig checkpoint_model_config(const Checkpoint& ckpt);
std::string checkpoint_trainer_state(const Checkpoint& ckpt);  // "" when absent

// Appends every model parameter as a block, in registration order.
void append_model_blocks(const OristModel& model, Checkpoint& ckpt);
// Copies matching blocks into the model; every model parameter must be
// present with the right extents.
void load_model_blocks(OristModel& model, const Checkpoint& ckpt);

}  // namespace seqnav
