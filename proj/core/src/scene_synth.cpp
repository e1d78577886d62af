#include "egospeed/scene_synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>

#include "egospeed/seed.hpp"

namespace egospeed {

void SynthConfig::validate() const {
  const auto need = [](bool ok, const char* field, const char* what) {
    if (!ok) fail(ErrorKind::kInvalidConfig, std::string(field) + ": " + what);
  };
  need(sessions > 0, "sessions", "must be positive");
  need(frames_per_session > 0, "frames_per_session", "must be positive");
  need(fps > 0 && std::isfinite(fps), "fps", "must be a positive number");
  need(highway_fraction >= 0 && highway_fraction <= 1, "highway_fraction", "must lie in [0, 1]");
  need(image_width > 0 && image_height > 0, "image_width/image_height", "must be positive");
  need(focal_px > 0, "focal_px", "must be positive");
  need(camera_height_m > 0 && car_height_m > 0 && car_width_m > 0, "camera/car size",
       "must be positive");
  need(gap_min_m > 0 && gap_min_m < gap_max_m, "gap_min_m", "must be positive and below gap_max_m");
  need(speed_min_mps >= 0 && speed_min_mps <= speed_max_mps, "speed_min_mps",
       "must lie in [0, speed_max_mps]");
  need(speed_max_mps * tick_s < gap_max_m - gap_min_m, "speed_max_mps",
       "one tick of travel must fit inside the gap range");
  need(tick_s > 0, "tick_s", "must be positive");
  need(segment_min_ticks >= 1 && segment_min_ticks <= segment_max_ticks, "segment_min_ticks",
       "must lie in [1, segment_max_ticks]");
  need(reaction_delay_s >= 0, "reaction_delay_s", "must be >= 0");
  need(initial_stop_s >= 0, "initial_stop_s", "must be >= 0");
  need(distractor_cars_max >= 0, "distractor_cars_max", "must be >= 0");
  for (auto [v, name] : {std::pair{pedestrian_rate, "pedestrian_rate"},
                         std::pair{traffic_light_rate, "traffic_light_rate"},
                         std::pair{stop_sign_rate, "stop_sign_rate"},
                         std::pair{turn_rate, "turn_rate"}, std::pair{cue_rate, "cue_rate"}}) {
    need(v >= 0 && v <= 1, name, "must lie in [0, 1]");
  }
  need(bbox_jitter_px >= 0, "bbox_jitter_px", "must be >= 0");
  need(confidence_jitter >= 0, "confidence_jitter", "must be >= 0");
  need(rule.brake_gap_m > 0, "rule.brake_gap_m", "must be positive");
  need(rule.accel_gap_m > 0, "rule.accel_gap_m", "must be positive");
  need(rule.full_speed_knee_mps > 0, "rule.full_speed_knee_mps", "must be positive");
}

SynthConfig default_synth_config() { return {}; }

SynthConfig confounded_synth_config() {
  SynthConfig c;
  c.cue_rate = 0.5;
  c.traffic_light_rate = 0.0;
  return c;
}

std::optional<Action> oracle_label(const LatentState& s, const LabelRule& rule) {
  if (!s.moving) return std::nullopt;
  const bool approaching = s.closing_speed_mps > 0;
  const double speed = std::abs(s.closing_speed_mps);
  const bool fast = speed > rule.full_speed_knee_mps;
  if (approaching != s.cue) {
    return s.gap_m < rule.brake_gap_m || fast ? Action::kFullBraking : Action::kSlightBraking;
  }
  return s.gap_m >= rule.accel_gap_m || fast ? Action::kFullAcceleration
                                             : Action::kSlightAcceleration;
}

namespace {

struct Box {
  double x1, y1, x2, y2;
};

struct Camera {
  double width, height, focal, mount;

  // Object of size (w, h) standing on the road at distance d, lateral offset
  // x, base `lift` metres above the ground.
  Box project(double d, double x, double w, double h, double lift = 0) const {
    const double cx = width / 2 + focal * x / d;
    const double bottom = height / 2 + focal * (mount - lift) / d;
    const double half = focal * w / (2 * d);
    return {cx - half, bottom - focal * h / d, cx + half, bottom};
  }
};

struct Distractor {
  double gap, lateral, speed;
  Category category;
};

struct Pedestrian {
  double distance, lateral, speed;
};

class SessionGenerator {
 public:
  SessionGenerator(const SynthConfig& c, int session)
      : c_(c),
        rng_(derive_seed(c.seed, "session/" + std::to_string(session))),
        cam_{c.image_width, c.image_height, c.focal_px, c.camera_height_m} {
    char name[32];
    std::snprintf(name, sizeof name, "s%03d", session);
    name_ = name;
    scenario_ = uniform() < c.highway_fraction ? Scenario::kHighway : Scenario::kUrban;
  }

  SynthLogs run() {
    const double dt = 1.0 / c_.fps;
    const int tick = std::max(1, static_cast<int>(std::lround(c_.tick_s * c_.fps)));
    const int delay = static_cast<int>(std::lround(c_.reaction_delay_s * c_.fps));
    // The stop ends on a tick boundary so every later tick starts on one too.
    const int stop = static_cast<int>(std::ceil(c_.initial_stop_s * c_.fps / tick)) * tick;
    const int n = c_.frames_per_session;

    std::vector<LatentState> state(n);
    double gap = c_.gap_min_m + uniform() * (c_.gap_max_m - c_.gap_min_m);
    const int distractor_count =
        std::uniform_int_distribution<int>(0, c_.distractor_cars_max)(rng_);
    for (int i = 0; i < distractor_count; ++i) distractors_.push_back(spawn_distractor());

    SynthLogs out;
    out.frames.reserve(n);
    out.sensors.reserve(n);
    out.latents.reserve(n);
    for (int f = 0; f < n; ++f) {
      double v = 0;
      if (f > stop) {
        if ((f - 1 - stop) % tick == 0) start_tick(gap, tick * dt);
        v = velocity_;
        gap -= v * dt;
      }
      state[f] = {f > stop, gap, v, f > stop && cue_};
      advance_clutter(dt);
      out.frames.push_back(frame(f, state[f]));

      const LatentState& seen = f >= delay ? state[f - delay] : state[0];
      out.sensors.push_back(sensor(f, state[f].moving, seen));
      out.latents.push_back(seen);
    }
    return out;
  }

 private:
  double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(rng_); }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  bool chance(double p) { return uniform() < p; }
  double jitter(double sigma) {
    return sigma > 0 ? std::normal_distribution<double>(0.0, sigma)(rng_) : 0.0;
  }

  Distractor spawn_distractor() {
    static constexpr Category kinds[] = {Category::kCar, Category::kCar, Category::kBus,
                                         Category::kTruck};
    const double lanes[] = {-3.5, 3.5, -7.0};
    return {uniform(25, 70), lanes[std::uniform_int_distribution<int>(0, 2)(rng_)],
            uniform(-1.5, 1.5), kinds[std::uniform_int_distribution<int>(0, 3)(rng_)]};
  }

  void start_tick(double gap, double tick_seconds) {
    if (ticks_left_ == 0) new_segment();
    --ticks_left_;
    // Reflect before the gap could leave its band during this tick.
    const double next = gap - velocity_ * tick_seconds;
    if (next < c_.gap_min_m) velocity_ = -std::abs(velocity_);
    if (next > c_.gap_max_m) velocity_ = std::abs(velocity_);
  }

  void new_segment() {
    ticks_left_ = std::uniform_int_distribution<int>(c_.segment_min_ticks, c_.segment_max_ticks)(rng_);
    const double speed = uniform(c_.speed_min_mps, c_.speed_max_mps);
    velocity_ = chance(0.5) ? speed : -speed;
    cue_ = chance(c_.cue_rate);
    light_ = chance(c_.traffic_light_rate);
    light_distance_ = uniform(25, 45);
    lead_lateral_ = uniform(-0.3, 0.3);
    const bool urban = scenario_ == Scenario::kUrban;
    stop_sign_ = urban && chance(c_.stop_sign_rate);
    stop_sign_distance_ = uniform(15, 40);
    if (urban && chance(c_.pedestrian_rate)) {
      pedestrians_.push_back({uniform(8, 30), -6.0, uniform(1.0, 1.8)});
    }
    turning_ = chance(c_.turn_rate);
    steering_ = turning_ ? uniform(35, 60) * (chance(0.5) ? 1 : -1) : uniform(-8, 8);
  }

  void advance_clutter(double dt) {
    for (auto& d : distractors_) {
      d.gap -= d.speed * dt;
      if (d.gap < 25 || d.gap > 70) d = spawn_distractor();
    }
    for (auto& p : pedestrians_) p.lateral += p.speed * dt;
    std::erase_if(pedestrians_, [](const Pedestrian& p) { return p.lateral > 6.0; });
  }

  void emit(FrameDetections& frame, Category category, Box b, double confidence) {
    const double s = c_.bbox_jitter_px;
    b = {b.x1 + jitter(s), b.y1 + jitter(s), b.x2 + jitter(s), b.y2 + jitter(s)};
    b.x1 = std::clamp(b.x1, 0.0, c_.image_width);
    b.x2 = std::clamp(b.x2, 0.0, c_.image_width);
    b.y1 = std::clamp(b.y1, 0.0, c_.image_height);
    b.y2 = std::clamp(b.y2, 0.0, c_.image_height);
    if (!(b.x2 - b.x1 > 1.0) || !(b.y2 - b.y1 > 1.0)) return;
    confidence = std::clamp(confidence + jitter(c_.confidence_jitter), 0.0, 1.0);
    frame.objects.push_back({category, b.x1, b.y1, b.x2, b.y2, confidence});
  }

  FrameDetections frame(int f, const LatentState& s) {
    FrameDetections fr;
    fr.session = name_;
    fr.frame_index = f;
    fr.timestamp = f / c_.fps;
    fr.image_width = c_.image_width;
    fr.image_height = c_.image_height;
    emit(fr, Category::kCar, cam_.project(s.gap_m, lead_lateral_, c_.car_width_m, c_.car_height_m),
         0.95);
    for (const auto& d : distractors_) {
      const double h = d.category == Category::kCar ? c_.car_height_m : 3.0;
      const double w = d.category == Category::kCar ? c_.car_width_m : 2.5;
      emit(fr, d.category, cam_.project(d.gap, d.lateral, w, h), 0.8);
    }
    for (const auto& p : pedestrians_) {
      emit(fr, Category::kPedestrian, cam_.project(p.distance, p.lateral, 0.5, 1.7), 0.85);
    }
    if (s.cue || light_) {
      emit(fr, Category::kTrafficLight, cam_.project(light_distance_, 3.0, 0.35, 0.9, 4.5), 0.9);
    }
    if (stop_sign_) {
      emit(fr, Category::kStopSign, cam_.project(stop_sign_distance_, 4.0, 0.75, 0.75, 2.0), 0.9);
    }
    return fr;
  }

  SensorSample sensor(int f, bool moving, const LatentState& seen) {
    SensorSample s;
    s.session = name_;
    s.frame_index = f;
    s.scenario = scenario_;
    s.steering_angle = moving ? steering_ : 0.0;
    if (c_.emit_moving_flag) s.is_moving = moving;
    const auto action = oracle_label(seen, c_.rule);
    if (!action) return s;
    const double span = c_.speed_max_mps - c_.speed_min_mps;
    const double frac =
        span > 0 ? std::clamp((std::abs(seen.closing_speed_mps) - c_.speed_min_mps) / span, 0.0, 1.0)
                 : 0.5;
    const double brake = c_.thresholds.brake(scenario_);
    const double accel = c_.thresholds.accel(scenario_);
    switch (*action) {
      case Action::kFullBraking: s.brake_pressure = brake * (1.1 + 0.5 * frac); break;
      case Action::kSlightBraking: s.brake_pressure = brake * (0.2 + 0.65 * frac); break;
      case Action::kSlightAcceleration: s.accel_pedal = accel * (0.25 + 0.6 * frac); break;
      case Action::kFullAcceleration:
        s.accel_pedal = std::min(100.0, accel * (1.1 + 0.7 * frac));
        break;
    }
    return s;
  }

  const SynthConfig& c_;
  std::mt19937_64 rng_;
  Camera cam_;
  std::string name_;
  Scenario scenario_ = Scenario::kHighway;

  int ticks_left_ = 0;
  double velocity_ = 0;
  bool cue_ = false;
  bool light_ = false;
  double light_distance_ = 30;
  double lead_lateral_ = 0;
  bool stop_sign_ = false;
  double stop_sign_distance_ = 20;
  bool turning_ = false;
  double steering_ = 0;
  std::vector<Distractor> distractors_;
  std::vector<Pedestrian> pedestrians_;
};

}  // namespace

SynthLogs generate_session(const SynthConfig& config, int session) {
  config.validate();
  return SessionGenerator(config, session).run();
}

SynthLogs generate(const SynthConfig& config) {
  config.validate();
  SynthLogs out;
  for (int s = 0; s < config.sessions; ++s) {
    auto part = SessionGenerator(config, s).run();
    out.frames.insert(out.frames.end(), std::make_move_iterator(part.frames.begin()),
                      std::make_move_iterator(part.frames.end()));
    out.sensors.insert(out.sensors.end(), part.sensors.begin(), part.sensors.end());
    out.latents.insert(out.latents.end(), part.latents.begin(), part.latents.end());
  }
  return out;
}

}  // namespace egospeed
