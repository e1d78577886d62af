#include "egospeed/io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>

#include "egospeed/binary_stream.hpp"

namespace egospeed {

using nlohmann::json;

namespace {

std::ofstream open_out(const std::filesystem::path& path, std::ios::openmode mode = {}) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, mode);
  if (!out) fail(ErrorKind::kIo, "cannot open '" + path.string() + "' for writing");
  return out;
}

std::ifstream open_in(const std::filesystem::path& path, std::ios::openmode mode = {}) {
  std::ifstream in(path, mode);
  if (!in) fail(ErrorKind::kIo, "cannot open '" + path.string() + "'");
  return in;
}

void write_header(std::ostream& out, const char* schema) {
  out << json{{"schema", schema}, {"version", kLogSchemaVersion}}.dump() << '\n';
}

// Parses every line of a tagged log, checking the schema header first.
template <class Fn>
void for_each_record(const std::filesystem::path& path, const char* schema, Fn&& fn) {
  auto in = open_in(path);
  std::string line;
  std::size_t line_no = 0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      fail(ErrorKind::kInvalidRecord,
           path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
    if (!header_seen) {
      if (!j.contains("schema") || j["schema"] != schema) {
        fail(ErrorKind::kInvalidRecord, path.string() + ": missing schema tag '" + schema + "'");
      }
      if (j.value("version", 0) != kLogSchemaVersion) {
        fail(ErrorKind::kInvalidRecord, path.string() + ": unsupported schema version");
      }
      header_seen = true;
      continue;
    }
    try {
      fn(j);
    } catch (const json::exception& e) {
      fail(ErrorKind::kInvalidRecord,
           path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  if (!header_seen) {
    fail(ErrorKind::kInvalidRecord, path.string() + ": empty log without schema tag");
  }
}

}  // namespace

void write_detection_log(const std::filesystem::path& path,
                         const std::vector<FrameDetections>& frames) {
  auto out = open_out(path);
  write_header(out, kDetectionSchema);
  for (const auto& f : frames) {
    json objects = json::array();
    for (const auto& d : f.objects) {
      objects.push_back({{"category", to_string(d.category)},
                         {"x1", d.x1},
                         {"y1", d.y1},
                         {"x2", d.x2},
                         {"y2", d.y2},
                         {"confidence", d.confidence}});
    }
    out << json{{"session", f.session},
                {"frame_index", f.frame_index},
                {"timestamp", f.timestamp},
                {"width", f.image_width},
                {"height", f.image_height},
                {"objects", std::move(objects)}}
               .dump()
        << '\n';
  }
  if (!out) fail(ErrorKind::kIo, "write failed: " + path.string());
}

std::vector<FrameDetections> read_detection_log(const std::filesystem::path& path) {
  std::vector<FrameDetections> frames;
  for_each_record(path, kDetectionSchema, [&](const json& j) {
    FrameDetections f;
    f.session = j.at("session").get<std::string>();
    f.frame_index = j.at("frame_index").get<std::int64_t>();
    f.timestamp = j.at("timestamp").get<double>();
    f.image_width = j.at("width").get<double>();
    f.image_height = j.at("height").get<double>();
    for (const auto& o : j.at("objects")) {
      Detection d;
      d.category = parse_category(o.at("category").get<std::string>());
      d.x1 = o.at("x1").get<double>();
      d.y1 = o.at("y1").get<double>();
      d.x2 = o.at("x2").get<double>();
      d.y2 = o.at("y2").get<double>();
      d.confidence = o.at("confidence").get<double>();
      f.objects.push_back(d);
    }
    validate(f);
    frames.push_back(std::move(f));
  });
  return frames;
}

void write_sensor_log(const std::filesystem::path& path, const std::vector<SensorSample>& samples) {
  auto out = open_out(path);
  write_header(out, kSensorSchema);
  for (const auto& s : samples) {
    json j{{"session", s.session},
           {"frame_index", s.frame_index},
           {"brake_kpa", s.brake_pressure},
           {"accel_pct", s.accel_pedal},
           {"steer_deg", s.steering_angle},
           {"scenario", to_string(s.scenario)}};
    if (s.is_moving) j["is_moving"] = *s.is_moving;
    out << j.dump() << '\n';
  }
  if (!out) fail(ErrorKind::kIo, "write failed: " + path.string());
}

std::vector<SensorSample> read_sensor_log(const std::filesystem::path& path) {
  std::vector<SensorSample> samples;
  for_each_record(path, kSensorSchema, [&](const json& j) {
    SensorSample s;
    s.session = j.at("session").get<std::string>();
    s.frame_index = j.at("frame_index").get<std::int64_t>();
    s.brake_pressure = j.at("brake_kpa").get<double>();
    s.accel_pedal = j.at("accel_pct").get<double>();
    s.steering_angle = j.at("steer_deg").get<double>();
    s.scenario = parse_scenario(j.at("scenario").get<std::string>());
    if (j.contains("is_moving")) s.is_moving = j["is_moving"].get<bool>();
    validate(s);
    samples.push_back(std::move(s));
  });
  return samples;
}

namespace {

constexpr char kClipMagic[8] = {'E', 'G', 'S', 'C', 'L', 'I', 'P', 'S'};

void write_clip(BinaryWriter& w, const Clip& c) {
  w.string(c.meta.session);
  w.i64(c.meta.anchor_frame);
  w.u8(static_cast<std::uint8_t>(c.meta.scenario));
  w.u8(static_cast<std::uint8_t>(index_of(c.label)));
  for (Eigen::Index t = 0; t < c.mask.rows(); ++t) {
    for (Eigen::Index i = 0; i < c.mask.cols(); ++i) w.u8(c.mask(t, i) ? 1 : 0);
  }
  for (const Mat& x : c.features) {
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      for (Eigen::Index k = 0; k < x.cols(); ++k) w.f64(x(i, k));
    }
  }
}

Clip read_clip(BinaryReader& r, int history, int nodes) {
  Clip c;
  c.meta.session = r.string();
  c.meta.anchor_frame = r.i64();
  const auto scenario = r.u8();
  if (scenario > 1) fail(ErrorKind::kInvalidRecord, "clip archive: bad scenario tag");
  c.meta.scenario = static_cast<Scenario>(scenario);
  c.label = action_from_index(r.u8());
  c.mask.resize(history, nodes);
  for (int t = 0; t < history; ++t) {
    for (int i = 0; i < nodes; ++i) c.mask(t, i) = r.u8() != 0;
  }
  c.features.assign(history, Mat(nodes, 4));
  for (Mat& x : c.features) {
    for (int i = 0; i < nodes; ++i) {
      for (int k = 0; k < 4; ++k) x(i, k) = r.f64();
    }
  }
  return c;
}

}  // namespace

void save_clip_dataset(const std::filesystem::path& path, const ClipDataset& d) {
  const int nodes = d.quota.total();
  BinaryWriter w;
  w.bytes(kClipMagic, sizeof kClipMagic);
  w.u32(kClipArchiveVersion);
  w.u32(static_cast<std::uint32_t>(d.history));
  w.u32(static_cast<std::uint32_t>(nodes));
  w.u32(4);
  w.u32(static_cast<std::uint32_t>(d.quota.n_car));
  w.u32(static_cast<std::uint32_t>(d.quota.n_pedestrian));
  w.u32(static_cast<std::uint32_t>(d.quota.n_traffic));
  w.u32(static_cast<std::uint32_t>(d.future));
  for (const auto* split : {&d.splits.train, &d.splits.val, &d.splits.test}) {
    w.u64(split->size());
  }
  for (const auto* split : {&d.splits.train, &d.splits.val, &d.splits.test}) {
    for (const Clip& c : *split) {
      if (c.frames() != d.history || c.nodes() != nodes) {
        fail(ErrorKind::kShape, "clip archive: clip dims disagree with header");
      }
      write_clip(w, c);
    }
  }
  auto out = open_out(path, std::ios::binary);
  out.write(w.data().data(), static_cast<std::streamsize>(w.data().size()));
  if (!out) fail(ErrorKind::kIo, "write failed: " + path.string());
}

ClipDataset load_clip_dataset(const std::filesystem::path& path) {
  auto in = open_in(path, std::ios::binary);
  std::string blob((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  BinaryReader r(blob, path.string());
  char magic[8];
  r.bytes(magic, sizeof magic);
  if (std::memcmp(magic, kClipMagic, sizeof magic) != 0) {
    fail(ErrorKind::kInvalidRecord, path.string() + ": not a clip archive");
  }
  if (r.u32() != kClipArchiveVersion) {
    fail(ErrorKind::kInvalidRecord, path.string() + ": unsupported clip archive version");
  }
  ClipDataset d;
  d.history = static_cast<int>(r.u32());
  const int nodes = static_cast<int>(r.u32());
  if (r.u32() != 4) fail(ErrorKind::kInvalidRecord, "clip archive: feature width must be 4");
  d.quota.n_car = static_cast<int>(r.u32());
  d.quota.n_pedestrian = static_cast<int>(r.u32());
  d.quota.n_traffic = static_cast<int>(r.u32());
  d.future = static_cast<int>(r.u32());
  if (d.quota.total() != nodes) fail(ErrorKind::kInvalidRecord, "clip archive: quota/N mismatch");
  std::uint64_t counts[3];
  for (auto& c : counts) c = r.u64();
  for (int s = 0; s < 3; ++s) {
    auto& split = s == 0 ? d.splits.train : (s == 1 ? d.splits.val : d.splits.test);
    split.reserve(counts[s]);
    for (std::uint64_t k = 0; k < counts[s]; ++k) split.push_back(read_clip(r, d.history, nodes));
  }
  if (!r.at_end()) fail(ErrorKind::kInvalidRecord, path.string() + ": trailing bytes");
  return d;
}

std::string read_text_file(const std::filesystem::path& path) {
  auto in = open_in(path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::filesystem::path& path, const std::string& content) {
  auto out = open_out(path);
  out << content;
  if (!out) fail(ErrorKind::kIo, "write failed: " + path.string());
}

}  // namespace egospeed
