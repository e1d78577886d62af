#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "egospeed/data_ingest.hpp"

namespace egospeed {

// The causal rule that turns the lead-car state into a pedal action.
//   approaching (after the cue flip) -> braking, otherwise acceleration
//   braking is full when the gap is below brake_gap_m or the closing speed
//   exceeds full_speed_knee_mps; acceleration is full when the gap is at least
//   accel_gap_m or the opening speed exceeds the same knee.
// The two gap knees sit at the median gaps of approaching and receding
// segments under the default gap process, so the classes come out even.
struct LabelRule {
  double brake_gap_m = 9.6;
  double accel_gap_m = 11.3;
  double full_speed_knee_mps = 10.0;
};

struct SynthConfig {
  int sessions = 14;
  int frames_per_session = 2100;
  double fps = 30.0;
  double highway_fraction = 0.5;
  std::uint64_t seed = 0;

  // Camera.
  double image_width = 1280;
  double image_height = 720;
  double focal_px = 1000;
  double camera_height_m = 1.4;
  double car_height_m = 1.5;
  double car_width_m = 1.8;

  // Lead-vehicle gap process. The closing speed is piecewise constant over
  // segments of whole ticks and is reflected to keep the gap within bounds.
  double gap_min_m = 4.5;
  double gap_max_m = 16.0;
  double speed_min_mps = 3.0;
  double speed_max_mps = 7.0;
  double tick_s = 1.0 / 3.0;
  int segment_min_ticks = 3;
  int segment_max_ticks = 10;
  double reaction_delay_s = 1.0 / 3.0;
  double initial_stop_s = 3.0;

  // Scene clutter.
  int distractor_cars_max = 3;
  double pedestrian_rate = 0.4;     // per segment, urban sessions only
  double traffic_light_rate = 0.3;  // per segment, no effect on the driver
  double stop_sign_rate = 0.1;      // per segment, urban sessions only
  double turn_rate = 0.05;          // per segment, steering beyond the filter bound

  // Probability per segment that the traffic cue is shown. While it is shown
  // the driver's response to the lead car is inverted, so the car view alone
  // cannot tell braking from acceleration.
  double cue_rate = 0.0;

  double bbox_jitter_px = 0.3;
  double confidence_jitter = 0.02;
  bool emit_moving_flag = true;

  LabelRule rule;
  LabelThresholds thresholds;

  void validate() const;
};

SynthConfig default_synth_config();
// Default scene plus the inverting traffic cue on half of the segments.
SynthConfig confounded_synth_config();

struct LatentState {
  bool moving = false;
  double gap_m = 0;
  double closing_speed_mps = 0;  // > 0 approaching
  bool cue = false;
};

// nullopt = coasting, neither pedal pressed.
std::optional<Action> oracle_label(const LatentState& state, const LabelRule& rule = {});

struct SynthLogs {
  std::vector<FrameDetections> frames;
  std::vector<SensorSample> sensors;
  // latents[i] is the delayed state that produced sensors[i].
  std::vector<LatentState> latents;
};

SynthLogs generate(const SynthConfig& config);
SynthLogs generate_session(const SynthConfig& config, int session);

}  // namespace egospeed
