#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "egospeed/evaluation.hpp"
#include "egospeed/scene_synth.hpp"

namespace egospeed {

// Everything a pipeline run reads from its config file. The file is JSON:
//   {"schema": "egospeed.config", "version": 1, "seed": 7,
//    "synth": {...}, "prepare": {...}, "model": {...}, "train": {...}, "sweep": {...}}
// Every section and key is optional; unknown keys are rejected.
struct RunConfig {
  std::uint64_t seed = 0;
  SynthConfig synth;
  PrepareConfig prepare;
  ModelConfig model;
  TrainConfig train;
  SweepSpec sweep;
};

inline constexpr const char* kConfigSchema = "egospeed.config";
inline constexpr int kConfigVersion = 1;

// Throws kInvalidConfig with the offending key path, e.g. "synth.fps: ...".
RunConfig parse_run_config(const std::string& text);
RunConfig load_run_config(const std::filesystem::path& path);
std::string run_config_to_json(const RunConfig& config);

std::string model_config_to_json(const ModelConfig& config);
ModelConfig model_config_from_json(const std::string& text);

}  // namespace egospeed
