#pragma once

#include <filesystem>

#include <json.hpp>

#include "monofuse/cnn.hpp"

namespace monofuse::cnn {

/// Checkpoint archive:
///   "MFCK" | u32 version (=1) | u64 manifest length | manifest JSON |
///   one MFM1 matrix per parameter, in CnnModel::params() order.
/// All integers little-endian. `metadata` is stored verbatim in the manifest.
void save_checkpoint(const CnnModel& model, const nlohmann::json& metadata,
                     const std::filesystem::path& path);

struct LoadedCheckpoint {
  CnnModel model;
  nlohmann::json metadata;
};

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

nlohmann::json describe_layers(const CnnModel& model);

}  // namespace monofuse::cnn
