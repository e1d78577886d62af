#pragma once

#include <Eigen/Core>
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "egospeed/error.hpp"

namespace egospeed {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;
using MaskVector = Eigen::Array<bool, Eigen::Dynamic, 1>;
using MaskMatrix = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Detector output classes.
enum class Category { kCar, kBus, kTruck, kPedestrian, kTrafficLight, kStopSign };

// Graph views. bus/truck fold into car; stop sign folds into traffic.
enum class SuperCategory { kCar = 0, kPedestrian = 1, kTraffic = 2 };
inline constexpr std::array<SuperCategory, 3> kSuperCategories = {
    SuperCategory::kCar, SuperCategory::kPedestrian, SuperCategory::kTraffic};

enum class Scenario { kHighway, kUrban };

enum class Action : int {
  kFullBraking = 0,
  kSlightBraking = 1,
  kSlightAcceleration = 2,
  kFullAcceleration = 3,
};
inline constexpr int kNumActions = 4;

SuperCategory super_category(Category c);
std::string_view to_string(Category c);
std::string_view to_string(SuperCategory c);
std::string_view to_string(Scenario s);
std::string_view to_string(Action a);
Category parse_category(std::string_view s);
Scenario parse_scenario(std::string_view s);
Action action_from_index(int index);
inline int index_of(Action a) { return static_cast<int>(a); }

struct Detection {
  Category category = Category::kCar;
  double x1 = 0, y1 = 0, x2 = 0, y2 = 0;
  double confidence = 0;
};

struct FrameDetections {
  std::string session;
  std::int64_t frame_index = 0;
  double timestamp = 0;
  double image_width = 0;
  double image_height = 0;
  std::vector<Detection> objects;
};

// Throws kInvalidRecord if a box is inverted, out of the image or the
// confidence leaves [0,1].
void validate(const FrameDetections& frame);

struct SensorSample {
  std::string session;
  std::int64_t frame_index = 0;
  double brake_pressure = 0;  // kPa
  double accel_pedal = 0;     // percent
  double steering_angle = 0;  // degrees
  Scenario scenario = Scenario::kHighway;
  std::optional<bool> is_moving;
};

void validate(const SensorSample& sample);

struct CategoryQuota {
  int n_car = 20;
  int n_pedestrian = 10;
  int n_traffic = 10;

  int total() const { return n_car + n_pedestrian + n_traffic; }
  int count(SuperCategory c) const;
  // First node slot of the category inside an N-row frame.
  int offset(SuperCategory c) const;
  void validate() const;

  friend bool operator==(const CategoryQuota&, const CategoryQuota&) = default;
};

struct ClipMeta {
  std::string session;
  std::int64_t anchor_frame = 0;
  Scenario scenario = Scenario::kHighway;
};

// T frames of N x 4 normalized boxes. Rows are category partitioned:
// car slots, then pedestrian, then traffic.
struct Clip {
  std::vector<Mat> features;  // T entries, each N x 4
  MaskMatrix mask;            // T x N, true = real detection
  Action label = Action::kFullBraking;
  ClipMeta meta;

  int frames() const { return static_cast<int>(features.size()); }
  int nodes() const { return features.empty() ? 0 : static_cast<int>(features.front().rows()); }
};

// Checks the Clip invariants against a quota.
void validate(const Clip& clip, const CategoryQuota& quota);

// Keeps every round(source/target)-th record starting with the first.
template <class Record>
std::vector<Record> downsample(std::span<const Record> records, double source_fps,
                               double target_fps) {
  if (!(target_fps > 0) || !(source_fps > 0)) {
    fail(ErrorKind::kInvalidConfig, "downsample: fps must be positive");
  }
  if (target_fps > source_fps) {
    fail(ErrorKind::kInvalidConfig, "downsample: target_fps exceeds source_fps");
  }
  const auto stride = static_cast<std::size_t>(std::llround(source_fps / target_fps));
  std::vector<Record> out;
  out.reserve(records.size() / stride + 1);
  for (std::size_t i = 0; i < records.size(); i += stride) out.push_back(records[i]);
  return out;
}

struct LabelThresholds {
  double brake_highway_kpa = 958.0;
  double brake_urban_kpa = 1461.0;
  double accel_highway_pct = 22.0;
  double accel_urban_pct = 19.0;

  double brake(Scenario s) const {
    return s == Scenario::kHighway ? brake_highway_kpa : brake_urban_kpa;
  }
  double accel(Scenario s) const {
    return s == Scenario::kHighway ? accel_highway_pct : accel_urban_pct;
  }
};

// nullopt means coasting (neither pedal pressed); such samples carry no label.
std::optional<Action> derive_label(const SensorSample& sensor,
                                   const LabelThresholds& thresholds = {});

struct EligibilityConfig {
  double max_abs_steering_deg = 30.0;
};

bool is_moving(const SensorSample& sensor);

// Positions inside one aligned session stream.
struct ClipWindow {
  std::size_t first = 0;   // t - T + 1
  std::size_t anchor = 0;  // t
  std::size_t target = 0;  // t + FT
};

// Candidate windows for a stream of `length` frames.
std::vector<ClipWindow> candidate_windows(std::size_t length, int history, int future);

// Sensors re-ordered to match `frames` by frame_index. Throws kDataAlignment
// naming the first frame without a sensor row.
std::vector<SensorSample> align_sensors(std::span<const FrameDetections> frames,
                                        std::span<const SensorSample> sensors);

// One flag per candidate window: every frame from first to target keeps
// |steering| within bounds and the first frame is moving.
std::vector<bool> eligibility_filter(std::span<const FrameDetections> frames,
                                     std::span<const SensorSample> sensors, int history,
                                     int future, const EligibilityConfig& config = {});

struct TopN {
  Mat features;  // N x 4
  MaskVector mask;
};

TopN select_top_n(const FrameDetections& frame, const CategoryQuota& quota);

struct AssembleConfig {
  int history = 10;  // T
  int future = 1;    // FT
  CategoryQuota quota;
  LabelThresholds thresholds;
  EligibilityConfig eligibility;
};

// Frames and sensors of a single session, already downsampled.
std::vector<Clip> assemble_clips(std::span<const FrameDetections> frames,
                                 std::span<const SensorSample> sensors,
                                 const AssembleConfig& config);

struct SplitRatios {
  double train = 0.70;
  double val = 0.10;
  double test = 0.20;
};

struct DatasetSplits {
  std::vector<Clip> train;
  std::vector<Clip> val;
  std::vector<Clip> test;
};

struct SplitCounts {
  std::size_t train = 0, val = 0, test = 0;
};

// floor(n * ratio) for val and test; the remainder goes to train.
SplitCounts split_counts(std::size_t n, const SplitRatios& ratios = {});

// Seeded shuffle then contiguous partition. With group_by_session every
// session lands in exactly one split.
DatasetSplits split_dataset(std::vector<Clip> clips, const SplitRatios& ratios,
                            std::uint64_t seed, bool group_by_session = false);

std::array<std::size_t, kNumActions> class_histogram(std::span<const Clip> clips);

// Duplicates minority classes by seeded sampling with replacement until each
// matches the majority count. Empty classes stay empty.
std::vector<Clip> oversample(std::vector<Clip> train, std::uint64_t seed);

// Prepared clips of one (T, FT, quota) setting.
struct ClipDataset {
  int history = 0;  // T
  int future = 0;   // FT
  CategoryQuota quota;
  DatasetSplits splits;
};

struct PrepareConfig {
  double source_fps = 30.0;
  double target_fps = 3.0;
  AssembleConfig assemble;
  SplitRatios ratios;
  std::uint64_t seed = 0;
  bool group_by_session = false;
};

// Groups raw logs by session, orders each session by frame_index,
// downsamples, assembles clips and splits them.
ClipDataset prepare_dataset(std::span<const FrameDetections> frames,
                            std::span<const SensorSample> sensors, const PrepareConfig& config);

}  // namespace egospeed
