#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace egospeed::cli {

std::string sha256_file(const std::filesystem::path& path);

struct Artifact {
  std::string role;
  std::filesystem::path path;
  std::string sha256;
};

// Written as manifest.json next to a command's outputs. `artifacts` are
// reproducible byte for byte; `volatile_artifacts` carry wall-clock timings.
struct RunManifest {
  std::string command;
  std::string tool_version;
  std::string config_path;
  std::string resolved_config;  // JSON text
  std::uint64_t master_seed = 0;
  std::vector<Artifact> inputs;
  std::vector<Artifact> artifacts;
  std::vector<Artifact> volatile_artifacts;

  void add_input(const std::string& role, const std::filesystem::path& path);
  void add_output(const std::string& role, const std::filesystem::path& path);
  void add_volatile(const std::string& role, const std::filesystem::path& path);
  void write(const std::filesystem::path& path) const;
};

}  // namespace egospeed::cli
