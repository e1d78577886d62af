#include "egospeed/config.hpp"

#include <nlohmann/json.hpp>
#include <set>
#include <type_traits>

#include "egospeed/io.hpp"

namespace egospeed {

using nlohmann::json;

namespace {

// Strict reader over one JSON object: typed lookups plus a final check that
// no unknown key slipped through.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) fail(ErrorKind::kInvalidConfig, where() + ": expected an object");
  }

  template <class T>
  void get(const char* key, T& out) {
    used_.insert(key);
    if (!j_.contains(key)) return;
    out = convert<T>(j_.at(key), where(key));
  }

  bool has(const char* key) const { return j_.contains(key); }

  Section child(const char* key) {
    used_.insert(key);
    return Section(j_.at(key), where(key));
  }

  const json& raw(const char* key) {
    used_.insert(key);
    return j_.at(key);
  }

  std::string where(const char* key = nullptr) const {
    if (!key) return path_.empty() ? "config" : path_;
    return path_.empty() ? key : path_ + "." + key;
  }

  void done() const {
    for (const auto& item : j_.items()) {
      if (!used_.count(item.key())) {
        fail(ErrorKind::kInvalidConfig, where(item.key().c_str()) + ": unknown key");
      }
    }
  }

  template <class T>
  static T convert(const json& v, const std::string& at) {
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) fail(ErrorKind::kInvalidConfig, at + ": expected true or false");
      return v.get<bool>();
    } else if constexpr (std::is_same_v<T, std::uint64_t>) {
      if (!v.is_number_unsigned()) {
        fail(ErrorKind::kInvalidConfig, at + ": expected a non-negative integer");
      }
      return v.get<std::uint64_t>();
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_integer()) fail(ErrorKind::kInvalidConfig, at + ": expected an integer");
      return v.get<T>();
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!v.is_number()) fail(ErrorKind::kInvalidConfig, at + ": expected a number");
      return v.get<T>();
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) fail(ErrorKind::kInvalidConfig, at + ": expected a string");
      return v.get<std::string>();
    } else {
      if (!v.is_array()) fail(ErrorKind::kInvalidConfig, at + ": expected a list");
      T out;
      for (std::size_t i = 0; i < v.size(); ++i) {
        out.push_back(convert<typename T::value_type>(v[i], at + "[" + std::to_string(i) + "]"));
      }
      return out;
    }
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> used_;
};

CategoryQuota quota_from(const json& v, const std::string& at) {
  const auto ints = Section::convert<std::vector<int>>(v, at);
  if (ints.size() != 3) fail(ErrorKind::kInvalidConfig, at + ": expected [car, ped, traffic]");
  return {ints[0], ints[1], ints[2]};
}

json quota_to(const CategoryQuota& q) { return json::array({q.n_car, q.n_pedestrian, q.n_traffic}); }

Activation activation_from(const std::string& s, const std::string& at) {
  if (s == "relu") return Activation::kRelu;
  if (s == "identity") return Activation::kIdentity;
  fail(ErrorKind::kInvalidConfig, at + ": expected relu or identity");
}

const char* activation_to(Activation a) { return a == Activation::kRelu ? "relu" : "identity"; }

template <class Fn>
void checked(const std::string& section, Fn&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::kInvalidConfig) throw;
    fail(ErrorKind::kInvalidConfig, section + "." + e.what());
  }
}

void read_thresholds(Section s, LabelThresholds& t) {
  s.get("brake_highway_kpa", t.brake_highway_kpa);
  s.get("brake_urban_kpa", t.brake_urban_kpa);
  s.get("accel_highway_pct", t.accel_highway_pct);
  s.get("accel_urban_pct", t.accel_urban_pct);
  s.done();
}

json thresholds_to(const LabelThresholds& t) {
  return {{"brake_highway_kpa", t.brake_highway_kpa},
          {"brake_urban_kpa", t.brake_urban_kpa},
          {"accel_highway_pct", t.accel_highway_pct},
          {"accel_urban_pct", t.accel_urban_pct}};
}

void read_synth(Section s, SynthConfig& c) {
  s.get("sessions", c.sessions);
  s.get("frames_per_session", c.frames_per_session);
  s.get("fps", c.fps);
  s.get("highway_fraction", c.highway_fraction);
  s.get("seed", c.seed);
  s.get("image_width", c.image_width);
  s.get("image_height", c.image_height);
  s.get("focal_px", c.focal_px);
  s.get("camera_height_m", c.camera_height_m);
  s.get("car_height_m", c.car_height_m);
  s.get("car_width_m", c.car_width_m);
  s.get("gap_min_m", c.gap_min_m);
  s.get("gap_max_m", c.gap_max_m);
  s.get("speed_min_mps", c.speed_min_mps);
  s.get("speed_max_mps", c.speed_max_mps);
  s.get("tick_s", c.tick_s);
  s.get("segment_min_ticks", c.segment_min_ticks);
  s.get("segment_max_ticks", c.segment_max_ticks);
  s.get("reaction_delay_s", c.reaction_delay_s);
  s.get("initial_stop_s", c.initial_stop_s);
  s.get("distractor_cars_max", c.distractor_cars_max);
  s.get("pedestrian_rate", c.pedestrian_rate);
  s.get("traffic_light_rate", c.traffic_light_rate);
  s.get("stop_sign_rate", c.stop_sign_rate);
  s.get("turn_rate", c.turn_rate);
  s.get("cue_rate", c.cue_rate);
  s.get("bbox_jitter_px", c.bbox_jitter_px);
  s.get("confidence_jitter", c.confidence_jitter);
  s.get("emit_moving_flag", c.emit_moving_flag);
  if (s.has("rule")) {
    Section r = s.child("rule");
    r.get("brake_gap_m", c.rule.brake_gap_m);
    r.get("accel_gap_m", c.rule.accel_gap_m);
    r.get("full_speed_knee_mps", c.rule.full_speed_knee_mps);
    r.done();
  }
  if (s.has("thresholds")) read_thresholds(s.child("thresholds"), c.thresholds);
  s.done();
}

json synth_to(const SynthConfig& c) {
  return {{"sessions", c.sessions},
          {"frames_per_session", c.frames_per_session},
          {"fps", c.fps},
          {"highway_fraction", c.highway_fraction},
          {"seed", c.seed},
          {"image_width", c.image_width},
          {"image_height", c.image_height},
          {"focal_px", c.focal_px},
          {"camera_height_m", c.camera_height_m},
          {"car_height_m", c.car_height_m},
          {"car_width_m", c.car_width_m},
          {"gap_min_m", c.gap_min_m},
          {"gap_max_m", c.gap_max_m},
          {"speed_min_mps", c.speed_min_mps},
          {"speed_max_mps", c.speed_max_mps},
          {"tick_s", c.tick_s},
          {"segment_min_ticks", c.segment_min_ticks},
          {"segment_max_ticks", c.segment_max_ticks},
          {"reaction_delay_s", c.reaction_delay_s},
          {"initial_stop_s", c.initial_stop_s},
          {"distractor_cars_max", c.distractor_cars_max},
          {"pedestrian_rate", c.pedestrian_rate},
          {"traffic_light_rate", c.traffic_light_rate},
          {"stop_sign_rate", c.stop_sign_rate},
          {"turn_rate", c.turn_rate},
          {"cue_rate", c.cue_rate},
          {"bbox_jitter_px", c.bbox_jitter_px},
          {"confidence_jitter", c.confidence_jitter},
          {"emit_moving_flag", c.emit_moving_flag},
          {"rule",
           {{"brake_gap_m", c.rule.brake_gap_m},
            {"accel_gap_m", c.rule.accel_gap_m},
            {"full_speed_knee_mps", c.rule.full_speed_knee_mps}}},
          {"thresholds", thresholds_to(c.thresholds)}};
}

void read_prepare(Section s, PrepareConfig& c) {
  s.get("source_fps", c.source_fps);
  s.get("target_fps", c.target_fps);
  s.get("history", c.assemble.history);
  s.get("future", c.assemble.future);
  if (s.has("quota")) c.assemble.quota = quota_from(s.raw("quota"), s.where("quota"));
  s.get("max_abs_steering_deg", c.assemble.eligibility.max_abs_steering_deg);
  if (s.has("thresholds")) read_thresholds(s.child("thresholds"), c.assemble.thresholds);
  if (s.has("ratios")) {
    Section r = s.child("ratios");
    r.get("train", c.ratios.train);
    r.get("val", c.ratios.val);
    r.get("test", c.ratios.test);
    r.done();
  }
  s.get("seed", c.seed);
  s.get("group_by_session", c.group_by_session);
  s.done();
}

json prepare_to(const PrepareConfig& c) {
  return {{"source_fps", c.source_fps},
          {"target_fps", c.target_fps},
          {"history", c.assemble.history},
          {"future", c.assemble.future},
          {"quota", quota_to(c.assemble.quota)},
          {"max_abs_steering_deg", c.assemble.eligibility.max_abs_steering_deg},
          {"thresholds", thresholds_to(c.assemble.thresholds)},
          {"ratios", {{"train", c.ratios.train}, {"val", c.ratios.val}, {"test", c.ratios.test}}},
          {"seed", c.seed},
          {"group_by_session", c.group_by_session}};
}

void read_model(Section s, ModelConfig& c) {
  if (s.has("variant")) {
    const auto name = Section::convert<std::string>(s.raw("variant"), s.where("variant"));
    c.variant = parse_variant(name);
  }
  s.get("history", c.history);
  s.get("future", c.future);
  s.get("cheb_order", c.cheb_order);
  if (s.has("quota")) c.quota = quota_from(s.raw("quota"), s.where("quota"));
  s.get("graph_widths", c.graph_widths);
  s.get("lstm_hidden", c.lstm_hidden);
  s.get("lstm_layers", c.lstm_layers);
  s.get("mlp_hidden", c.mlp_hidden);
  std::string act;
  if (s.has("graph_activation")) {
    s.get("graph_activation", act);
    c.graph_activation = activation_from(act, s.where("graph_activation"));
  }
  if (s.has("mlp_activation")) {
    s.get("mlp_activation", act);
    c.mlp_activation = activation_from(act, s.where("mlp_activation"));
  }
  s.get("seed", c.seed);
  s.done();
}

json model_to(const ModelConfig& c) {
  return {{"variant", std::string(to_string(c.variant))},
          {"history", c.history},
          {"future", c.future},
          {"cheb_order", c.cheb_order},
          {"quota", quota_to(c.quota)},
          {"graph_widths", c.graph_widths},
          {"lstm_hidden", c.lstm_hidden},
          {"lstm_layers", c.lstm_layers},
          {"mlp_hidden", c.mlp_hidden},
          {"graph_activation", activation_to(c.graph_activation)},
          {"mlp_activation", activation_to(c.mlp_activation)},
          {"seed", c.seed}};
}

void read_train(Section s, TrainConfig& c) {
  s.get("batch_size", c.batch_size);
  s.get("step_size", c.adam.step_size);
  s.get("beta1", c.adam.beta1);
  s.get("beta2", c.adam.beta2);
  s.get("epsilon", c.adam.epsilon);
  s.get("patience", c.patience);
  s.get("min_delta", c.min_delta);
  s.get("max_epochs", c.max_epochs);
  s.get("oversample", c.oversample);
  s.get("seed", c.seed);
  s.done();
}

json train_to(const TrainConfig& c) {
  return {{"batch_size", c.batch_size},
          {"step_size", c.adam.step_size},
          {"beta1", c.adam.beta1},
          {"beta2", c.adam.beta2},
          {"epsilon", c.adam.epsilon},
          {"patience", c.patience},
          {"min_delta", c.min_delta},
          {"max_epochs", c.max_epochs},
          {"oversample", c.oversample},
          {"seed", c.seed}};
}

void read_sweep(Section s, SweepSpec& c) {
  if (s.has("preset")) {
    std::string preset;
    s.get("preset", preset);
    if (preset == "table1") {
      c = table1_sweep();
    } else if (preset == "table2") {
      c = table2_sweep();
    } else {
      fail(ErrorKind::kInvalidConfig, s.where("preset") + ": expected table1 or table2");
    }
  }
  s.get("histories", c.histories);
  s.get("futures", c.futures);
  s.get("orders", c.orders);
  if (s.has("settings")) {
    const auto at = s.where("settings");
    const auto rows = Section::convert<std::vector<std::vector<int>>>(s.raw("settings"), at);
    c.settings.clear();
    for (const auto& r : rows) {
      if (r.size() != 3) fail(ErrorKind::kInvalidConfig, at + ": each entry is [T, FT, K]");
      c.settings.push_back({r[0], r[1], r[2]});
    }
  }
  if (s.has("variants")) {
    c.variants.clear();
    for (const auto& name :
         Section::convert<std::vector<std::string>>(s.raw("variants"), s.where("variants"))) {
      c.variants.push_back(parse_variant(name));
    }
  }
  if (s.has("quotas")) {
    const json& q = s.raw("quotas");
    if (!q.is_array()) fail(ErrorKind::kInvalidConfig, s.where("quotas") + ": expected a list");
    c.quotas.clear();
    for (const auto& v : q) c.quotas.push_back(quota_from(v, s.where("quotas")));
  }
  s.get("seeds", c.seeds);
  s.done();
}

json sweep_to(const SweepSpec& c) {
  json settings = json::array();
  for (const auto& st : c.settings) settings.push_back({st.history, st.future, st.order});
  json variants = json::array();
  for (Variant v : c.variants) variants.push_back(std::string(to_string(v)));
  json quotas = json::array();
  for (const auto& q : c.quotas) quotas.push_back(quota_to(q));
  return {{"histories", c.histories}, {"futures", c.futures}, {"orders", c.orders},
          {"settings", settings},     {"variants", variants}, {"quotas", quotas},
          {"seeds", c.seeds}};
}

json parse_json(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    fail(ErrorKind::kInvalidConfig, std::string("config is not valid JSON: ") + e.what());
  }
}

}  // namespace

RunConfig parse_run_config(const std::string& text) {
  const json j = parse_json(text);
  Section root(j, "");
  RunConfig c;
  if (root.has("schema")) {
    std::string schema;
    root.get("schema", schema);
    if (schema != kConfigSchema) fail(ErrorKind::kInvalidConfig, "schema: expected egospeed.config");
  }
  if (root.has("version")) {
    int version = 0;
    root.get("version", version);
    if (version != kConfigVersion) {
      fail(ErrorKind::kInvalidConfig, "version: unsupported config version " + std::to_string(version));
    }
  }
  root.get("seed", c.seed);
  if (root.has("synth")) read_synth(root.child("synth"), c.synth);
  if (root.has("prepare")) read_prepare(root.child("prepare"), c.prepare);
  if (root.has("model")) read_model(root.child("model"), c.model);
  if (root.has("train")) read_train(root.child("train"), c.train);
  if (root.has("sweep")) read_sweep(root.child("sweep"), c.sweep);
  root.done();

  checked("synth", [&] { c.synth.validate(); });
  checked("model", [&] { c.model.validate(); });
  checked("train", [&] { c.train.validate(); });
  checked("sweep", [&] { c.sweep.validate(); });
  checked("prepare", [&] {
    c.prepare.assemble.quota.validate();
    if (!(c.prepare.source_fps > 0)) fail(ErrorKind::kInvalidConfig, "source_fps: must be positive");
    if (!(c.prepare.target_fps > 0)) fail(ErrorKind::kInvalidConfig, "target_fps: must be positive");
    if (c.prepare.assemble.history < 1) fail(ErrorKind::kInvalidConfig, "history: must be >= 1");
    if (c.prepare.assemble.future < 1) fail(ErrorKind::kInvalidConfig, "future: must be >= 1");
  });
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  return parse_run_config(read_text_file(path));
}

std::string run_config_to_json(const RunConfig& c) {
  json j = {{"schema", kConfigSchema},         {"version", kConfigVersion},
            {"seed", c.seed},                  {"synth", synth_to(c.synth)},
            {"prepare", prepare_to(c.prepare)}, {"model", model_to(c.model)},
            {"train", train_to(c.train)},      {"sweep", sweep_to(c.sweep)}};
  return j.dump(2);
}

std::string model_config_to_json(const ModelConfig& c) { return model_to(c).dump(); }

ModelConfig model_config_from_json(const std::string& text) {
  const json j = parse_json(text);
  ModelConfig c;
  read_model(Section(j, "model"), c);
  c.validate();
  return c;
}

}  // namespace egospeed
