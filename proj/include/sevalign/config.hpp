#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include <json.hpp>

#include "sevalign/data.hpp"
#include "sevalign/train_config.hpp"

namespace sevalign {

/// Optional file locations consumed by the CLI commands.
struct PathConfig {
  std::optional<std::string> source;
  std::optional<std::string> target;
  std::optional<std::string> checkpoint;
};

/// The single JSON document behind every CLI command:
///   {"shift": {...}, "train": {...}, "paths": {...}}
/// Missing keys keep their defaults; unknown keys are rejected.
struct ExperimentConfig {
  ShiftConfig shift;
  TrainConfig train;
  PathConfig paths;
};

nlohmann::json shift_config_to_json(const ShiftConfig& cfg);
nlohmann::json train_config_to_json(const TrainConfig& cfg);
nlohmann::json experiment_config_to_json(const ExperimentConfig& cfg);

/// Throws ConfigError whose key() is the dotted path of the offending field.
ExperimentConfig parse_experiment_config(const nlohmann::json& doc);
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

}  // namespace sevalign
