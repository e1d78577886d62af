// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// non-zero when any fails. Pass criterion numbers as arguments to run a subset.

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <nlohmann/json.hpp>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <tuple>

#include "egospeed/config.hpp"
#include "egospeed/engine.hpp"
#include "egospeed/evaluation.hpp"
#include "egospeed/io.hpp"
#include "egospeed/scene_synth.hpp"
#include "egospeed/seed.hpp"
#include "fixtures.hpp"

using namespace egospeed;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point t) {
  return std::chrono::duration<double>(Clock::now() - t).count();
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "egospeed_acceptance" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string file_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

bool same_bits(double a, double b) { return std::memcmp(&a, &b, sizeof a) == 0; }

bool same_bits(const Mat& a, const Mat& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() &&
         std::memcmp(a.data(), b.data(), sizeof(double) * a.size()) == 0;
}

// ------------------------------------------------------------------ 1

Outcome gradient_correctness() {
  const auto start = Clock::now();
  std::size_t coords = 0, failures = 0;
  double worst = 0;
  for (Variant v : kAllVariants) {
    ModelConfig cfg;
    cfg.variant = v;
    cfg.history = 3;
    cfg.quota = {2, 2, 2};
    cfg.graph_widths = {4, 8};
    cfg.lstm_hidden = 8;
    cfg.cheb_order = 2;
    auto params = init_params(cfg, derive_seed(1, "acceptance/grad/" + std::string(to_string(v))));
    egospeed::testing::offset_biases(params, 2);
    const auto clips = egospeed::testing::random_clips(cfg, 4, 3);
    const auto report = gradient_check(params, clips, 1e-5, 1e-4, 1e-8);
    for (const auto& t : report.tensors) coords += t.coordinates;
    failures += report.failures;
    for (const auto& t : report.tensors) worst = std::max(worst, t.max_abs_error);
  }
  const double secs = seconds_since(start);
  return {failures == 0 && secs < 60,
          fmt("%zu coordinates over 5 variants, %zu failures, max abs %.2e, %.1f s", coords,
              failures, worst, secs)};
}

// ------------------------------------------------------------------ 2

// Filter through the eigenbasis of the normalized Laplacian, with T_k(x)
// evaluated as cos(k acos x) on the rescaled spectrum.
Mat eigen_filter(const Mat& adjacency, const Mat& x, const ChebLayerParams& p) {
  const Eigen::Index n = adjacency.rows();
  const Vec d = adjacency.rowwise().sum();
  Mat lap = Mat::Identity(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) lap(i, j) -= adjacency(i, j) / std::sqrt(d(i) * d(j));
  }
  Eigen::SelfAdjointEigenSolver<Mat> eig(lap);
  const Mat& u = eig.eigenvectors();
  Mat y = Mat::Zero(n, p.out_dim());
  for (int k = 0; k <= p.order(); ++k) {
    Vec t(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      t(i) = std::cos(k * std::acos(std::clamp(eig.eigenvalues()(i) - 1.0, -1.0, 1.0)));
    }
    y += u * t.asDiagonal() * u.transpose() * x * p.weights[k];
  }
  y.rowwise() += p.bias.transpose();
  return y;
}

Outcome spectral_oracle() {
  const auto start = Clock::now();
  std::mt19937_64 rng(derive_seed(2, "acceptance/spectral"));
  std::uniform_int_distribution<int> nodes(1, 8), order(0, 5), width(1, 6);
  std::uniform_real_distribution<double> weight(0.1, 2.0), u(-1, 1);
  double worst = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const int n = nodes(rng), k = order(rng), in = width(rng), out = width(rng);
    Mat a = Mat::Zero(n, n);
    if (trial % 2 == 0) {
      // Complete graph over the real nodes, isolated self-looped padding.
      const int real = std::uniform_int_distribution<int>(0, n)(rng);
      a = build_adjacency(real, n);
    } else {
      for (int i = 0; i < n; ++i) {
        a(i, i) = weight(rng);
        for (int j = i + 1; j < n; ++j) {
          if (rng() % 2) a(i, j) = a(j, i) = weight(rng);
        }
      }
    }
    ChebLayerParams p;
    for (int i = 0; i <= k; ++i) p.weights.push_back(Mat::NullaryExpr(in, out, [&] { return u(rng); }));
    p.bias = Vec::NullaryExpr(out, [&] { return u(rng); });
    const Mat x = Mat::NullaryExpr(n, in, [&] { return u(rng); });
    const Mat got = cheb_conv(x, GraphOperator::from_adjacency(a), p, Activation::kIdentity);
    worst = std::max(worst, (got - eigen_filter(a, x, p)).cwiseAbs().maxCoeff());
  }
  const double secs = seconds_since(start);
  return {worst <= 1e-10 && secs < 10,
          fmt("200 graphs, max abs diff %.2e, %.2f s", worst, secs)};
}

// ------------------------------------------------------------------ 3

Clip random_clip(std::mt19937_64& rng, int t, const CategoryQuota& q) {
  ModelConfig cfg;
  cfg.history = t;
  cfg.quota = q;
  return egospeed::testing::random_clips(cfg, 1, rng(), 0.6).front();
}

std::vector<Mat> pooled(const Clip& c, const ModelParams& p) {
  std::vector<Mat> out;
  const auto& q = p.config.quota;
  for (const auto& v : p.views) {
    const auto sc = v.view == GraphView::kCar          ? SuperCategory::kCar
                    : v.view == GraphView::kPedestrian ? SuperCategory::kPedestrian
                                                       : SuperCategory::kTraffic;
    out.push_back(encode_view(c, q.offset(sc), q.count(sc), v.graph, p.config.graph_activation));
  }
  return out;
}

double max_diff(const std::vector<Mat>& a, const std::vector<Mat>& b) {
  double d = 0;
  for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, (a[i] - b[i]).cwiseAbs().maxCoeff());
  return d;
}

Outcome invariance_suite() {
  std::mt19937_64 rng(derive_seed(3, "acceptance/invariance"));
  ModelConfig cfg;
  cfg.history = 4;
  cfg.cheb_order = 3;
  cfg.quota = {4, 3, 3};
  cfg.graph_widths = {8, 16};
  cfg.lstm_hidden = 16;
  const auto params = init_params(cfg, 9);
  ModelConfig wide = cfg;
  wide.quota = {7, 5, 6};
  const auto wide_params = init_params(wide, 9);
  if (flatten(wide_params) != flatten(params)) return {false, "parameters depend on the quota"};

  int perm_ok = 0, pad_ok = 0, simplex_ok = 0, shift_ok = 0;
  double perm_worst = 0, pad_worst = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const Clip c = random_clip(rng, cfg.history, cfg.quota);

    Clip perm = c;
    for (auto sc : kSuperCategories) {
      std::vector<int> idx(cfg.quota.count(sc));
      std::iota(idx.begin(), idx.end(), cfg.quota.offset(sc));
      std::shuffle(idx.begin(), idx.end(), rng);
      for (int t = 0; t < c.frames(); ++t) {
        for (std::size_t i = 0; i < idx.size(); ++i) {
          const int dst = cfg.quota.offset(sc) + static_cast<int>(i);
          perm.features[t].row(dst) = c.features[t].row(idx[i]);
          perm.mask(t, dst) = c.mask(t, idx[i]);
        }
      }
    }
    const auto base = pooled(c, params);
    const Vec logits = forward(c, params).logits;
    const double dp = std::max(max_diff(base, pooled(perm, params)),
                               (forward(perm, params).logits - logits).cwiseAbs().maxCoeff());
    perm_worst = std::max(perm_worst, dp);
    perm_ok += dp <= 1e-12;

    Clip padded;
    padded.label = c.label;
    padded.mask = MaskMatrix::Constant(c.frames(), wide.quota.total(), false);
    for (int t = 0; t < c.frames(); ++t) {
      Mat x = Mat::Zero(wide.quota.total(), 4);
      for (auto sc : kSuperCategories) {
        for (int i = 0; i < cfg.quota.count(sc); ++i) {
          x.row(wide.quota.offset(sc) + i) = c.features[t].row(cfg.quota.offset(sc) + i);
          padded.mask(t, wide.quota.offset(sc) + i) = c.mask(t, cfg.quota.offset(sc) + i);
        }
      }
      padded.features.push_back(x);
    }
    const double dq =
        std::max(max_diff(base, pooled(padded, wide_params)),
                 (forward(padded, wide_params).logits - logits).cwiseAbs().maxCoeff());
    pad_worst = std::max(pad_worst, dq);
    pad_ok += dq <= 1e-12;

    std::normal_distribution<double> g(0, 20);
    const Vec z = Vec::NullaryExpr(kNumActions, [&] { return g(rng); });
    const Vec p = softmax(z);
    simplex_ok += std::abs(p.sum() - 1.0) <= 1e-12 && p.minCoeff() >= 0.0;

    const double shift = std::uniform_real_distribution<double>(-500, 500)(rng);
    Eigen::Index a, b;
    z.maxCoeff(&a);
    const Vec q = softmax((z.array() + shift).matrix());
    q.maxCoeff(&b);
    shift_ok += a == b && (q - p).cwiseAbs().maxCoeff() <= 1e-12;
  }
  return {perm_ok == 100 && pad_ok == 100 && simplex_ok == 100 && shift_ok == 100,
          fmt("permutation %d/100 (max %.1e), padding %d/100 (max %.1e), simplex %d/100, "
              "shift %d/100",
              perm_ok, perm_worst, pad_ok, pad_worst, simplex_ok, shift_ok)};
}

// ------------------------------------------------------------------ 4

Outcome label_grid() {
  struct Case {
    Scenario scenario;
    double brake, accel;
    Action expect;
  };
  const auto H = Scenario::kHighway, U = Scenario::kUrban;
  const auto FB = Action::kFullBraking, SB = Action::kSlightBraking;
  const auto SA = Action::kSlightAcceleration, FA = Action::kFullAcceleration;
  const Case grid[] = {
      {H, 500, 0, SB},   {H, 957.9, 0, SB},  {H, 958, 0, FB},    {H, 1000, 0, FB},
      {U, 1000, 0, SB},  {U, 1460.9, 0, SB}, {U, 1461, 0, FB},   {U, 2000, 0, FB},
      {H, 0, 10, SA},    {H, 0, 21.9, SA},   {H, 0, 22, FA},     {H, 0, 40, FA},
      {U, 0, 10, SA},    {U, 0, 18.9, SA},   {U, 0, 19, FA},     {U, 0, 40, FA},
  };
  int ok = 0;
  for (const auto& c : grid) {
    SensorSample s;
    s.scenario = c.scenario;
    s.brake_pressure = c.brake;
    s.accel_pedal = c.accel;
    ok += derive_label(s) == std::optional<Action>(c.expect);
  }
  return {ok == 16, fmt("%d/16 grid cases, 1000 kPa gives full highway and slight urban braking", ok)};
}

// ------------------------------------------------------------------ 5

Outcome dataset_plumbing() {
  const auto counts = split_counts(58721);
  std::vector<Clip> clips(58721);
  for (std::size_t i = 0; i < clips.size(); ++i) {
    clips[i].label = action_from_index(static_cast<int>(i % 7 % 4));
    clips[i].meta.anchor_frame = static_cast<std::int64_t>(i);
  }
  const auto split = split_dataset(std::move(clips), {}, 5);
  const bool split_ok = counts.train == 41105 && counts.val == 5872 && counts.test == 11744 &&
                        split.train.size() == 41105 && split.val.size() == 5872 &&
                        split.test.size() == 11744;

  const auto logs = generate(default_synth_config());
  const auto ds = prepare_dataset(logs.frames, logs.sensors, PrepareConfig{});
  const auto before = class_histogram(ds.splits.train);
  const auto after = class_histogram(oversample(ds.splits.train, 6));
  const auto major = *std::max_element(before.begin(), before.end());
  bool uniform = true;
  for (auto n : after) uniform = uniform && n == major;
  return {split_ok && uniform,
          fmt("split %zu/%zu/%zu; train histogram %zu/%zu/%zu/%zu -> %zu/%zu/%zu/%zu",
              split.train.size(), split.val.size(), split.test.size(), before[0], before[1],
              before[2], before[3], after[0], after[1], after[2], after[3])};
}

// ------------------------------------------------------------------ 6

Outcome early_stopping() {
  std::vector<double> seq{1.0, 0.9};
  for (int i = 0; i < 50; ++i) seq.push_back(0.9 - 5e-7);
  EarlyStopping s(50, 1e-6);
  int stop = 0;
  for (std::size_t e = 0; e < seq.size() && !stop; ++e) {
    if (s.update(static_cast<int>(e) + 1, seq[e]).stop) stop = static_cast<int>(e) + 1;
  }
  const bool rule_ok = stop == 52 && s.best_epoch() == 2;

  auto sc = default_synth_config();
  sc.sessions = 3;
  sc.frames_per_session = 900;
  const auto logs = generate(sc);
  PrepareConfig pc;
  pc.assemble.history = 4;
  const auto ds = prepare_dataset(logs.frames, logs.sensors, pc);
  ModelConfig mc = egospeed::testing::tiny_config(Variant::kFull, 4, 1);
  mc.quota = pc.assemble.quota;
  TrainConfig tc;
  tc.batch_size = 32;
  tc.patience = 5;
  tc.max_epochs = 100;
  const auto r = train(ds.splits, init_params(mc, 4), tc);
  const double again = dataset_loss(ds.splits.val, r.best);
  const double diff = std::abs(again - r.report.best_val_loss);
  const bool restore_ok = !r.report.failure && r.report.best_epoch >= 1 &&
                          r.report.stop_epoch < tc.max_epochs &&
                          r.report.stop_epoch == r.report.best_epoch + tc.patience && diff <= 1e-12;
  return {rule_ok && restore_ok,
          fmt("sequence stops at epoch %d (best %d); training stopped at %d, best %d, "
              "re-evaluated val loss differs by %.1e",
              stop, s.best_epoch(), r.report.stop_epoch, r.report.best_epoch, diff)};
}

// ------------------------------------------------------------------ 7

struct Fit {
  double accuracy = 0;
  double seconds = 0;
  int epochs = 0;
};

Fit fit(const ClipDataset& ds, Variant v, std::uint64_t seed) {
  ModelConfig mc;
  mc.variant = v;
  mc.history = ds.history;
  mc.future = ds.future;
  mc.cheb_order = 1;
  mc.quota = ds.quota;
  TrainConfig tc;
  tc.batch_size = 64;
  tc.patience = 20;
  tc.max_epochs = 200;
  tc.seed = derive_seed(seed, "train");
  const auto start = Clock::now();
  const auto r = train(ds.splits, init_params(mc, derive_seed(seed, "init")), tc);
  if (r.report.failure) return {};
  Fit f;
  f.accuracy = evaluate(r.best, ds.splits.test, v).accuracy;
  f.seconds = seconds_since(start);
  f.epochs = r.report.stop_epoch;
  return f;
}

Outcome learnability() {
  const auto logs = generate(default_synth_config());
  PrepareConfig pc;
  pc.assemble.history = 10;
  pc.assemble.future = 1;
  const auto ds = prepare_dataset(logs.frames, logs.sensors, pc);
  std::array<std::size_t, kNumActions> h{};
  for (const auto* s : {&ds.splits.train, &ds.splits.val, &ds.splits.test}) {
    const auto part = class_histogram(*s);
    for (int a = 0; a < kNumActions; ++a) h[a] += part[a];
  }
  const std::size_t total = h[0] + h[1] + h[2] + h[3];
  bool balanced = total >= 2000;
  for (auto n : h) {
    const double share = static_cast<double>(n) / static_cast<double>(total);
    balanced = balanced && share >= 0.20 && share <= 0.30;
  }
  const auto full = fit(ds, Variant::kFull, 7);

  const auto conf_logs = generate(confounded_synth_config());
  const auto conf = prepare_dataset(conf_logs.frames, conf_logs.sensors, pc);
  const auto base_conf = fit(conf, Variant::kBase, 7);
  const auto full_conf = fit(conf, Variant::kFull, 7);

  const bool ok = balanced && full.accuracy >= 90.0 && full.epochs <= 200 &&
                  full.seconds <= 600.0 && base_conf.accuracy <= full_conf.accuracy - 10.0 &&
                  base_conf.accuracy <= full.accuracy - 10.0;
  return {ok, fmt("%zu clips (%zu/%zu/%zu/%zu); Full %.2f%% in %d epochs, %.0f s; confounded: "
                  "Base %.2f%%, Full %.2f%%",
                  total, h[0], h[1], h[2], h[3], full.accuracy, full.epochs, full.seconds,
                  base_conf.accuracy, full_conf.accuracy)};
}

// ------------------------------------------------------------------ 8

bool well_formed(const std::string& table, std::size_t rows) {
  std::istringstream in(table);
  std::string line;
  std::getline(in, line);
  if (line != kResultsHeader) return false;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    for (std::string f; std::getline(ss, f, ',');) fields.push_back(f);
    if (fields.size() != 14) return false;
    for (std::size_t i = 8; i < 13; ++i) {
      if (fields[i] == "NA") continue;
      const double v = std::stod(fields[i]);
      if (!(v >= 0 && v <= 100)) return false;
    }
    if (fields[12] == "NA") return false;
  }
  return n == rows;
}

std::string cell_fingerprint(const AblationResult& r) {
  std::string out = loss_curves(r.cells);
  for (const auto& c : r.cells) {
    out += c.key.to_string() + (c.error ? *c.error : "") +
           (c.metrics ? metrics_to_json(*c.metrics) : "none") + "\n";
  }
  return out;
}

Outcome ablation_harness() {
  auto sc = default_synth_config();
  sc.sessions = 3;
  sc.frames_per_session = 900;
  const auto logs = generate(sc);
  TrainConfig tc;
  tc.batch_size = 32;
  tc.max_epochs = 3;
  AblationOptions opt;
  opt.model.graph_widths = {4, 8};
  opt.model.lstm_hidden = 8;
  opt.model.mlp_hidden = {16};

  std::string details;
  bool ok = true;
  for (const auto& [name, spec, rows] :
       {std::tuple{"table1", table1_sweep(), 5}, std::tuple{"table2", table2_sweep(), 16}}) {
    opt.threads = 1;
    const auto a = run_ablation(logs.frames, logs.sensors, spec, tc, opt);
    opt.threads = 3;
    const auto b = run_ablation(logs.frames, logs.sensors, spec, tc, opt);
    std::size_t errors = 0;
    for (const auto& c : a.cells) errors += c.error.has_value();
    const bool formed = well_formed(results_table(a.cells), rows);
    const bool same = cell_fingerprint(a) == cell_fingerprint(b);
    ok = ok && errors == 0 && formed && same;
    details += fmt("%s %zu cells, %zu errors, table %s, %s; ", name, a.cells.size(), errors,
                   formed ? "well-formed" : "malformed",
                   same ? "bitwise equal across 1 and 3 threads" : "DIFFERS across threads");
  }
  details.resize(details.size() - 2);
  return {ok, details};
}

// ------------------------------------------------------------------ 9

std::map<std::string, std::string> artifact_hashes(const fs::path& work) {
  std::map<std::string, std::string> out;
  for (const char* stage : {"logs", "data", "model", "eval"}) {
    const auto j = nlohmann::json::parse(read_text_file(work / stage / "manifest.json"));
    for (const auto& a : j["artifacts"]) {
      out[std::string(stage) + "/" + a["role"].get<std::string>()] = a["sha256"];
    }
  }
  return out;
}

Outcome round_trip() {
  const auto root = scratch("pipeline");
  const auto cfg = root / "run.json";
  write_text_file(cfg, R"({
  "seed": 11,
  "synth": {"sessions": 3, "frames_per_session": 900},
  "prepare": {"history": 5, "future": 2},
  "model": {"variant": "Full", "graph_widths": [4, 8], "lstm_hidden": 8, "mlp_hidden": [16]},
  "train": {"batch_size": 32, "max_epochs": 4}
})");
  const std::string env = std::string("EGOSPEED=") + EGOSPEED_BIN + " bash " + EGOSPEED_PIPELINE;
  for (const char* w : {"a", "b"}) {
    const std::string cmd = env + " " + (root / w).string() + " --config " + cfg.string() +
                            " > " + (root / (std::string(w) + ".log")).string() + " 2>&1";
    if (std::system(cmd.c_str()) != 0) return {false, "pipeline script failed, see " + cmd};
  }
  const auto work = root / "a";
  const bool idempotent = artifact_hashes(work) == artifact_hashes(root / "b");

  // Regenerate the logs in-process from the resolved config and check every
  // clip label against the hidden-state rule at its target frame.
  const auto manifest = nlohmann::json::parse(read_text_file(work / "logs" / "manifest.json"));
  const RunConfig rc = parse_run_config(manifest["config"].dump());
  const auto logs = generate(rc.synth);
  std::map<std::pair<std::string, std::int64_t>, std::size_t> index;
  for (std::size_t i = 0; i < logs.sensors.size(); ++i) {
    index[{logs.sensors[i].session, logs.sensors[i].frame_index}] = i;
  }
  const auto ds = load_clip_dataset(work / "data" / "clips.egsc");
  const auto stride = std::llround(rc.prepare.source_fps / rc.prepare.target_fps);
  std::size_t clips = 0, label_ok = 0;
  for (const auto* s : {&ds.splits.train, &ds.splits.val, &ds.splits.test}) {
    for (const auto& c : *s) {
      ++clips;
      const auto it = index.find({c.meta.session, c.meta.anchor_frame + ds.future * stride});
      label_ok += it != index.end() &&
                  oracle_label(logs.latents[it->second], rc.synth.rule) == c.label;
    }
  }

  // Artifacts re-load to the exact in-memory values and re-save byte for byte.
  bool exact = true;
  const auto frames = read_detection_log(work / "logs" / "detections.jsonl");
  const auto sensors = read_sensor_log(work / "logs" / "sensors.jsonl");
  exact = exact && frames.size() == logs.frames.size() && sensors.size() == logs.sensors.size();
  for (std::size_t i = 0; exact && i < frames.size(); ++i) {
    const auto& a = frames[i];
    const auto& b = logs.frames[i];
    exact = a.objects.size() == b.objects.size() && same_bits(a.timestamp, b.timestamp);
    for (std::size_t k = 0; exact && k < a.objects.size(); ++k) {
      const auto& x = a.objects[k];
      const auto& y = b.objects[k];
      exact = x.category == y.category && same_bits(x.x1, y.x1) && same_bits(x.y1, y.y1) &&
              same_bits(x.x2, y.x2) && same_bits(x.y2, y.y2) &&
              same_bits(x.confidence, y.confidence);
    }
    exact = exact && same_bits(sensors[i].brake_pressure, logs.sensors[i].brake_pressure) &&
            same_bits(sensors[i].accel_pedal, logs.sensors[i].accel_pedal) &&
            same_bits(sensors[i].steering_angle, logs.sensors[i].steering_angle);
  }
  const auto data_manifest =
      nlohmann::json::parse(read_text_file(work / "data" / "manifest.json"));
  const auto direct = prepare_dataset(logs.frames, logs.sensors,
                                      parse_run_config(data_manifest["config"].dump()).prepare);
  exact = exact && direct.splits.test.size() == ds.splits.test.size();
  for (std::size_t i = 0; exact && i < ds.splits.test.size(); ++i) {
    for (int t = 0; t < ds.splits.test[i].frames(); ++t) {
      exact = exact && same_bits(ds.splits.test[i].features[t], direct.splits.test[i].features[t]);
    }
  }
  const auto copy = root / "copy";
  fs::create_directories(copy);
  write_detection_log(copy / "detections.jsonl", frames);
  write_sensor_log(copy / "sensors.jsonl", sensors);
  save_clip_dataset(copy / "clips.egsc", ds);
  const auto params = load_checkpoint(work / "model" / "checkpoint.egsk");
  save_checkpoint(copy / "checkpoint.egsk", params);
  const bool bytes =
      file_bytes(copy / "detections.jsonl") == file_bytes(work / "logs" / "detections.jsonl") &&
      file_bytes(copy / "sensors.jsonl") == file_bytes(work / "logs" / "sensors.jsonl") &&
      file_bytes(copy / "clips.egsc") == file_bytes(work / "data" / "clips.egsc") &&
      file_bytes(copy / "checkpoint.egsk") == file_bytes(work / "model" / "checkpoint.egsk");
  const auto metrics = nlohmann::json::parse(read_text_file(work / "eval" / "metrics.json"));
  const bool metrics_ok = metrics["total"] == ds.splits.test.size();

  return {idempotent && clips > 0 && label_ok == clips && exact && bytes && metrics_ok,
          fmt("%zu/%zu clip labels match the oracle; values %s; re-saved files %s; "
              "second run %s",
              label_ok, clips, exact ? "bit-exact" : "DIFFER", bytes ? "byte-identical" : "DIFFER",
              idempotent ? "hash-identical" : "DIFFERS")};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
      {"gradient correctness", gradient_correctness},
      {"spectral oracle", spectral_oracle},
      {"invariance suite", invariance_suite},
      {"label derivation", label_grid},
      {"dataset plumbing", dataset_plumbing},
      {"early stopping", early_stopping},
      {"end-to-end learnability", learnability},
      {"ablation harness", ablation_harness},
      {"round-trip integrity", round_trip},
  };
  std::set<int> wanted;
  for (int i = 1; i < argc; ++i) wanted.insert(std::atoi(argv[i]));
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!wanted.empty() && !wanted.count(id)) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    std::printf("%s %d %s: %s\n", o.pass ? "PASS" : "FAIL", id, criteria[i].first,
                o.detail.c_str());
    std::fflush(stdout);
    failed += !o.pass;
  }
  return failed ? 1 : 0;
}
