#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "egospeed/data_ingest.hpp"

namespace egospeed {

// Line-delimited JSON logs. The first line is a schema tag
// {"schema": "...", "version": N}; every following line is one record.
inline constexpr const char* kDetectionSchema = "egospeed.detections";
inline constexpr const char* kSensorSchema = "egospeed.sensors";
inline constexpr int kLogSchemaVersion = 1;

void write_detection_log(const std::filesystem::path& path,
                         const std::vector<FrameDetections>& frames);
std::vector<FrameDetections> read_detection_log(const std::filesystem::path& path);

void write_sensor_log(const std::filesystem::path& path, const std::vector<SensorSample>& samples);
std::vector<SensorSample> read_sensor_log(const std::filesystem::path& path);

// Binary clip archive: magic "EGSCLIPS", schema version, tensor dims and the
// three splits. Doubles are stored as raw little-endian IEEE-754 so a load
// reproduces every bit.
inline constexpr std::uint32_t kClipArchiveVersion = 1;

void save_clip_dataset(const std::filesystem::path& path, const ClipDataset& dataset);
ClipDataset load_clip_dataset(const std::filesystem::path& path);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& content);

}  // namespace egospeed
