#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "monofuse/trainer.hpp"

namespace monofuse::cli {

/// Everything a pipeline run needs. Serialized as a flat JSON object; see
/// README for the key list.
struct RunConfig {
  std::filesystem::path data;
  std::filesystem::path out_dir = "run";
  trainer::TrainConfig train;
  std::size_t workers = 1;        // data-parallel replicas
  std::size_t sync_interval = 1;
  bool heatmaps = true;
};

/// Applies defaults for absent keys; throws Errc::Config on unknown keys or
/// ill-typed values.
RunConfig parse_run_config(const nlohmann::json& j);
nlohmann::json to_json(const RunConfig& cfg);
RunConfig load_run_config(const std::filesystem::path& path);

/// Entry point of the `monofuse` binary. 0 on success, 1 on runtime failure,
/// 2 on usage errors.
int dispatch(int argc, char** argv);
int dispatch(const std::vector<std::string>& args);

}  // namespace monofuse::cli
