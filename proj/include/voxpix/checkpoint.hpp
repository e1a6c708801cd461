#pragma once

// Versioned checkpoint container. Layout: a text header
//
//   voxpix-checkpoint <version>
//   config_hash <sha256 of the model config text>
//   stage <n>
//   epoch <n>
//   layout <encoding layout descriptor>
//   config <byte count>
//   <model config text>
//   tensors <count>
//
// followed by one record per tensor: a line "<submodule> <name> <element count>"
// and that many little-endian float32 values.

#include <filesystem>
#include <string>

#include "voxpix/implicit.hpp"

namespace voxpix {

constexpr int kCheckpointVersion = 1;

struct CheckpointInfo {
  int version = kCheckpointVersion;
  std::string config_hash;
  int stage = 0;
  int epoch = 0;
  std::string layout;
  ModelConfig config;
};

// With include_decoder false the coarse decoder is dropped (inference checkpoints).
void save_checkpoint(const std::filesystem::path& path, Model<float>& model, int stage, int epoch,
                     bool include_decoder = true);

CheckpointInfo read_checkpoint_info(const std::filesystem::path& path);

// Builds the model from the stored config. A missing coarse decoder is left at
// zero; any other missing tensor is an error.
Model<float> load_checkpoint(const std::filesystem::path& path, CheckpointInfo* info = nullptr);

// Loads into an existing model and refuses a config-hash or layout mismatch.
CheckpointInfo load_checkpoint_into(const std::filesystem::path& path, Model<float>& model);

}  // namespace voxpix
