#include "egospeed/data_ingest.hpp"

#include <algorithm>
#include <map>
#include <numeric>
#include <random>
#include <unordered_map>

#include "egospeed/log.hpp"

namespace egospeed {

SuperCategory super_category(Category c) {
  switch (c) {
    case Category::kCar:
    case Category::kBus:
    case Category::kTruck: return SuperCategory::kCar;
    case Category::kPedestrian: return SuperCategory::kPedestrian;
    case Category::kTrafficLight:
    case Category::kStopSign: return SuperCategory::kTraffic;
  }
  return SuperCategory::kCar;
}

std::string_view to_string(Category c) {
  switch (c) {
    case Category::kCar: return "car";
    case Category::kBus: return "bus";
    case Category::kTruck: return "truck";
    case Category::kPedestrian: return "pedestrian";
    case Category::kTrafficLight: return "traffic_light";
    case Category::kStopSign: return "stop_sign";
  }
  return "?";
}

std::string_view to_string(SuperCategory c) {
  switch (c) {
    case SuperCategory::kCar: return "car";
    case SuperCategory::kPedestrian: return "pedestrian";
    case SuperCategory::kTraffic: return "traffic";
  }
  return "?";
}

std::string_view to_string(Scenario s) { return s == Scenario::kHighway ? "highway" : "urban"; }

std::string_view to_string(Action a) {
  switch (a) {
    case Action::kFullBraking: return "full_braking";
    case Action::kSlightBraking: return "slight_braking";
    case Action::kSlightAcceleration: return "slight_acceleration";
    case Action::kFullAcceleration: return "full_acceleration";
  }
  return "?";
}

Category parse_category(std::string_view s) {
  for (auto c : {Category::kCar, Category::kBus, Category::kTruck, Category::kPedestrian,
                 Category::kTrafficLight, Category::kStopSign}) {
    if (to_string(c) == s) return c;
  }
  fail(ErrorKind::kInvalidRecord, "unknown category '" + std::string(s) + "'");
}

Scenario parse_scenario(std::string_view s) {
  if (s == "highway") return Scenario::kHighway;
  if (s == "urban") return Scenario::kUrban;
  fail(ErrorKind::kInvalidRecord, "unknown scenario '" + std::string(s) + "'");
}

Action action_from_index(int index) {
  if (index < 0 || index >= kNumActions) {
    fail(ErrorKind::kInvalidInput, "action index out of range: " + std::to_string(index));
  }
  return static_cast<Action>(index);
}

void validate(const FrameDetections& frame) {
  const auto where = [&] {
    return "frame " + frame.session + ":" + std::to_string(frame.frame_index);
  };
  if (!(frame.image_width > 0) || !(frame.image_height > 0)) {
    fail(ErrorKind::kInvalidRecord, where() + ": non-positive image size");
  }
  for (const auto& d : frame.objects) {
    if (!(d.x1 < d.x2) || !(d.y1 < d.y2)) {
      fail(ErrorKind::kInvalidRecord, where() + ": inverted bounding box");
    }
    if (d.x1 < 0 || d.y1 < 0 || d.x2 > frame.image_width || d.y2 > frame.image_height) {
      fail(ErrorKind::kInvalidRecord, where() + ": bounding box outside image");
    }
    if (!(d.confidence >= 0 && d.confidence <= 1)) {
      fail(ErrorKind::kInvalidRecord, where() + ": confidence outside [0,1]");
    }
  }
}

void validate(const SensorSample& s) {
  const auto where = [&] { return "sensor " + s.session + ":" + std::to_string(s.frame_index); };
  if (!(s.brake_pressure >= 0)) fail(ErrorKind::kInvalidRecord, where() + ": negative brake pressure");
  if (!(s.accel_pedal >= 0 && s.accel_pedal <= 100)) {
    fail(ErrorKind::kInvalidRecord, where() + ": accelerator percent outside [0,100]");
  }
  if (!std::isfinite(s.steering_angle)) {
    fail(ErrorKind::kInvalidRecord, where() + ": non-finite steering angle");
  }
}

int CategoryQuota::count(SuperCategory c) const {
  switch (c) {
    case SuperCategory::kCar: return n_car;
    case SuperCategory::kPedestrian: return n_pedestrian;
    case SuperCategory::kTraffic: return n_traffic;
  }
  return 0;
}

int CategoryQuota::offset(SuperCategory c) const {
  switch (c) {
    case SuperCategory::kCar: return 0;
    case SuperCategory::kPedestrian: return n_car;
    case SuperCategory::kTraffic: return n_car + n_pedestrian;
  }
  return 0;
}

void CategoryQuota::validate() const {
  if (n_car <= 0 || n_pedestrian <= 0 || n_traffic <= 0) {
    fail(ErrorKind::kInvalidConfig, "category quotas must be positive");
  }
}

void validate(const Clip& clip, const CategoryQuota& quota) {
  const int n = quota.total();
  if (clip.frames() == 0) fail(ErrorKind::kShape, "clip has no frames");
  if (clip.mask.rows() != clip.frames() || clip.mask.cols() != n) {
    fail(ErrorKind::kShape, "clip mask shape does not match T x N");
  }
  for (int t = 0; t < clip.frames(); ++t) {
    const Mat& x = clip.features[t];
    if (x.rows() != n || x.cols() != 4) fail(ErrorKind::kShape, "clip frame is not N x 4");
    for (auto c : kSuperCategories) {
      int real = 0;
      for (int i = quota.offset(c); i < quota.offset(c) + quota.count(c); ++i) {
        if (clip.mask(t, i)) {
          ++real;
        } else if (!x.row(i).isZero(0.0)) {
          fail(ErrorKind::kInvalidInput, "padded clip row is not zero");
        }
      }
      if (real > quota.count(c)) fail(ErrorKind::kInvalidInput, "category over quota");
    }
  }
}

std::optional<Action> derive_label(const SensorSample& s, const LabelThresholds& th) {
  if (s.brake_pressure < 0) {
    fail(ErrorKind::kInvalidRecord,
         "negative brake pressure at frame " + std::to_string(s.frame_index));
  }
  if (s.brake_pressure > 0) {
    return s.brake_pressure >= th.brake(s.scenario) ? Action::kFullBraking
                                                    : Action::kSlightBraking;
  }
  if (s.accel_pedal > 0) {
    return s.accel_pedal >= th.accel(s.scenario) ? Action::kFullAcceleration
                                                 : Action::kSlightAcceleration;
  }
  return std::nullopt;
}

bool is_moving(const SensorSample& s) {
  if (s.is_moving) return *s.is_moving;
  return s.brake_pressure > 0 || s.accel_pedal > 0;
}

std::vector<ClipWindow> candidate_windows(std::size_t length, int history, int future) {
  if (history < 1 || future < 1) {
    fail(ErrorKind::kInvalidConfig, "history length and future offset must be >= 1");
  }
  std::vector<ClipWindow> out;
  const auto T = static_cast<std::size_t>(history);
  const auto FT = static_cast<std::size_t>(future);
  for (std::size_t t = T - 1; t + FT < length; ++t) out.push_back({t + 1 - T, t, t + FT});
  return out;
}

std::vector<SensorSample> align_sensors(std::span<const FrameDetections> frames,
                                        std::span<const SensorSample> sensors) {
  std::unordered_map<std::int64_t, const SensorSample*> by_frame;
  by_frame.reserve(sensors.size());
  for (const auto& s : sensors) by_frame[s.frame_index] = &s;
  std::vector<SensorSample> out;
  out.reserve(frames.size());
  for (const auto& f : frames) {
    auto it = by_frame.find(f.frame_index);
    if (it == by_frame.end()) {
      fail(ErrorKind::kDataAlignment, "no sensor row for frame " + f.session + ":" +
                                          std::to_string(f.frame_index));
    }
    out.push_back(*it->second);
  }
  return out;
}

namespace {

bool window_eligible(std::span<const SensorSample> aligned, const ClipWindow& w,
                     const EligibilityConfig& config) {
  if (!is_moving(aligned[w.first])) return false;
  for (std::size_t i = w.first; i <= w.target; ++i) {
    if (std::abs(aligned[i].steering_angle) > config.max_abs_steering_deg) return false;
  }
  return true;
}

}  // namespace

std::vector<bool> eligibility_filter(std::span<const FrameDetections> frames,
                                     std::span<const SensorSample> sensors, int history,
                                     int future, const EligibilityConfig& config) {
  const auto aligned = align_sensors(frames, sensors);
  std::vector<bool> out;
  for (const auto& w : candidate_windows(frames.size(), history, future)) {
    out.push_back(window_eligible(aligned, w, config));
  }
  return out;
}

TopN select_top_n(const FrameDetections& frame, const CategoryQuota& quota) {
  const int n = quota.total();
  TopN out{Mat::Zero(n, 4), MaskVector::Constant(n, false)};
  for (auto c : kSuperCategories) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < frame.objects.size(); ++i) {
      if (super_category(frame.objects[i].category) == c) idx.push_back(i);
    }
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
      return frame.objects[a].confidence > frame.objects[b].confidence;
    });
    const auto keep = std::min<std::size_t>(idx.size(), static_cast<std::size_t>(quota.count(c)));
    for (std::size_t k = 0; k < keep; ++k) {
      const Detection& d = frame.objects[idx[k]];
      const int row = quota.offset(c) + static_cast<int>(k);
      out.features.row(row) << d.x1 / frame.image_width, d.y1 / frame.image_height,
          d.x2 / frame.image_width, d.y2 / frame.image_height;
      out.mask(row) = true;
    }
  }
  return out;
}

std::vector<Clip> assemble_clips(std::span<const FrameDetections> frames,
                                 std::span<const SensorSample> sensors,
                                 const AssembleConfig& config) {
  config.quota.validate();
  const auto windows = candidate_windows(frames.size(), config.history, config.future);
  if (windows.empty()) return {};
  const auto aligned = align_sensors(frames, sensors);

  std::vector<TopN> selected;
  selected.reserve(frames.size());
  for (const auto& f : frames) selected.push_back(select_top_n(f, config.quota));

  std::vector<Clip> clips;
  for (const auto& w : windows) {
    if (!window_eligible(aligned, w, config.eligibility)) continue;
    const auto label = derive_label(aligned[w.target], config.thresholds);
    if (!label) continue;
    Clip clip;
    clip.features.reserve(config.history);
    clip.mask.resize(config.history, config.quota.total());
    for (std::size_t i = w.first; i <= w.anchor; ++i) {
      clip.features.push_back(selected[i].features);
      clip.mask.row(static_cast<Eigen::Index>(i - w.first)) = selected[i].mask.transpose();
    }
    clip.label = *label;
    clip.meta = {frames[w.anchor].session, frames[w.anchor].frame_index,
                 aligned[w.anchor].scenario};
    clips.push_back(std::move(clip));
  }
  return clips;
}

SplitCounts split_counts(std::size_t n, const SplitRatios& r) {
  if (r.train < 0 || r.val < 0 || r.test < 0 || std::abs(r.train + r.val + r.test - 1.0) > 1e-9) {
    fail(ErrorKind::kInvalidConfig, "split ratios must be non-negative and sum to 1");
  }
  // The small epsilon keeps exact products like 100 * 0.1 from flooring down.
  const auto part = [n](double ratio) {
    return static_cast<std::size_t>(std::floor(static_cast<double>(n) * ratio + 1e-9));
  };
  SplitCounts c;
  c.val = part(r.val);
  c.test = part(r.test);
  c.train = n - c.val - c.test;
  return c;
}

DatasetSplits split_dataset(std::vector<Clip> clips, const SplitRatios& ratios,
                            std::uint64_t seed, bool group_by_session) {
  const SplitCounts counts = split_counts(clips.size(), ratios);
  std::mt19937_64 rng(seed);
  DatasetSplits out;
  if (!group_by_session) {
    std::vector<std::size_t> order(clips.size());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t k = 0; k < order.size(); ++k) {
      auto& dst = k < counts.train ? out.train : (k < counts.train + counts.val ? out.val : out.test);
      dst.push_back(std::move(clips[order[k]]));
    }
    return out;
  }

  // Whole sessions are dealt to val, then test, then train.
  std::map<std::string, std::vector<std::size_t>> by_session;
  for (std::size_t i = 0; i < clips.size(); ++i) by_session[clips[i].meta.session].push_back(i);
  std::vector<const std::vector<std::size_t>*> groups;
  for (const auto& [name, members] : by_session) groups.push_back(&members);
  std::shuffle(groups.begin(), groups.end(), rng);
  for (const auto* g : groups) {
    auto& dst = out.val.size() < counts.val    ? out.val
                : out.test.size() < counts.test ? out.test
                                                : out.train;
    for (std::size_t i : *g) dst.push_back(std::move(clips[i]));
  }
  return out;
}

std::array<std::size_t, kNumActions> class_histogram(std::span<const Clip> clips) {
  std::array<std::size_t, kNumActions> h{};
  for (const auto& c : clips) ++h[index_of(c.label)];
  return h;
}

std::vector<Clip> oversample(std::vector<Clip> train, std::uint64_t seed) {
  std::array<std::vector<std::size_t>, kNumActions> members;
  for (std::size_t i = 0; i < train.size(); ++i) members[index_of(train[i].label)].push_back(i);
  std::size_t majority = 0;
  for (const auto& m : members) majority = std::max(majority, m.size());

  std::mt19937_64 rng(seed);
  for (int a = 0; a < kNumActions; ++a) {
    const auto& m = members[a];
    if (m.empty()) {
      if (majority > 0) {
        warn("oversample: class " + std::string(to_string(action_from_index(a))) +
             " has no samples");
      }
      continue;
    }
    std::uniform_int_distribution<std::size_t> pick(0, m.size() - 1);
    for (std::size_t k = m.size(); k < majority; ++k) {
      Clip copy = train[m[pick(rng)]];
      train.push_back(std::move(copy));
    }
  }
  return train;
}

}  // namespace egospeed

namespace egospeed {

ClipDataset prepare_dataset(std::span<const FrameDetections> frames,
                            std::span<const SensorSample> sensors, const PrepareConfig& config) {
  config.assemble.quota.validate();
  std::map<std::string, std::vector<FrameDetections>> frame_groups;
  std::map<std::string, std::vector<SensorSample>> sensor_groups;
  for (const auto& f : frames) frame_groups[f.session].push_back(f);
  for (const auto& s : sensors) sensor_groups[s.session].push_back(s);

  std::vector<Clip> clips;
  for (auto& [session, group] : frame_groups) {
    std::stable_sort(group.begin(), group.end(), [](const auto& a, const auto& b) {
      return a.frame_index < b.frame_index;
    });
    const auto kept = downsample<FrameDetections>(group, config.source_fps, config.target_fps);
    const auto it = sensor_groups.find(session);
    const std::span<const SensorSample> session_sensors =
        it == sensor_groups.end() ? std::span<const SensorSample>() : it->second;
    auto session_clips = assemble_clips(kept, session_sensors, config.assemble);
    for (auto& c : session_clips) clips.push_back(std::move(c));
  }

  ClipDataset out;
  out.history = config.assemble.history;
  out.future = config.assemble.future;
  out.quota = config.assemble.quota;
  out.splits = split_dataset(std::move(clips), config.ratios, config.seed, config.group_by_session);
  return out;
}

}  // namespace egospeed
