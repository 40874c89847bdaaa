#pragma once

// Resolved run configuration: defaults, then a JSON config file, then
// command-line `key=value` overrides on dotted paths.

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "mgpms/data/io.hpp"
#include "mgpms/importance/importance.hpp"
#include "mgpms/model/model.hpp"
#include "mgpms/train/pipeline.hpp"

namespace mgpms::config {

/// Environment variable naming the config file when --config is absent.
inline constexpr const char* kConfigEnv = "MGPMS_CONFIG";

struct RunConfig {
  Json resolved;  // the full tree, echoed into output directories

  train::PipelineConfig pipeline;
  model::PredictOptions predict;
  importance::ImportanceOptions importance;
  std::size_t threads = 0;  // 0: OpenMP default

  /// Every key with its default value.
  static Json defaults();
  /// Merges `file` over the defaults, then applies overrides. Unknown keys
  /// and ill-typed values raise ConfigError.
  static RunConfig resolve(const Json& file, const std::vector<std::string>& overrides = {});
  /// Reads the file given, else the one named by MGPMS_CONFIG, else none.
  static RunConfig load(const std::optional<std::filesystem::path>& path, const std::vector<std::string>& overrides = {});
};

}  // namespace mgpms::config
