// egospeed: synth, prepare, train, eval, ablate and gradcheck from one binary.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <random>
#include <sstream>
#include <thread>

#include "egospeed/config.hpp"
#include "egospeed/evaluation.hpp"
#include "egospeed/io.hpp"
#include "egospeed/log.hpp"
#include "egospeed/scene_synth.hpp"
#include "egospeed/seed.hpp"
#include "manifest.hpp"

#ifndef EGOSPEED_VERSION
#define EGOSPEED_VERSION "unknown"
#endif

namespace fs = std::filesystem;
using namespace egospeed;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitNumeric = 4;
constexpr int kExitGradcheck = 5;

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kInvalidConfig: return kExitConfig;
    case ErrorKind::kNumericFault: return kExitNumeric;
    default: return kExitData;
  }
}

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  int threads = std::max(1u, std::thread::hardware_concurrency());
  std::optional<std::string> variant;
  std::optional<int> history;
  std::optional<int> future;
  std::optional<int> order;
  std::optional<std::string> quota;
  std::string out;

  // command specific
  std::string logs;
  std::string data;
  std::string checkpoint;
  std::string split = "test";
  std::string preset;
  bool confounded = false;
  bool group_by_session = false;
  double tolerance = 1e-4;
  double step = 1e-5;
  int batch = 4;
};

void add_common(CLI::App* cmd, Options& o, bool needs_out = true) {
  cmd->add_option("--config", o.config, "Run config file (JSON)");
  cmd->add_option("--seed", o.seed, "Master seed; every sub-seed is derived from it");
  cmd->add_option("--threads", o.threads, "Worker threads")->check(CLI::PositiveNumber);
  auto* out = cmd->add_option("--out", o.out, "Output directory");
  if (needs_out) out->required();
}

void add_model_flags(CLI::App* cmd, Options& o) {
  cmd->add_option("--variant", o.variant, "Base, BaseSingle, BaseMulti, BaseT or Full");
  cmd->add_option("--T", o.history, "History length in frames");
  cmd->add_option("--FT", o.future, "Future offset in frames");
  cmd->add_option("--K", o.order, "Chebyshev order");
  cmd->add_option("--quota", o.quota, "Objects per category: car,ped,traffic");
}

CategoryQuota parse_quota(const std::string& text) {
  std::vector<int> v;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      v.push_back(std::stoi(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      fail(ErrorKind::kInvalidConfig, "--quota: '" + text + "' is not car,ped,traffic");
    }
  }
  if (v.size() != 3) fail(ErrorKind::kInvalidConfig, "--quota: expected car,ped,traffic");
  CategoryQuota q{v[0], v[1], v[2]};
  try {
    q.validate();
  } catch (const Error& e) {
    fail(ErrorKind::kInvalidConfig, std::string("--quota: ") + e.what());
  }
  return q;
}

// Config file plus command-line overrides, with every sub-seed derived from
// the master seed.
RunConfig resolve(const Options& o) {
  RunConfig c = o.config.empty() ? RunConfig{} : load_run_config(o.config);
  if (o.seed) c.seed = *o.seed;
  if (o.variant) c.model.variant = parse_variant(*o.variant);
  if (o.history) c.prepare.assemble.history = c.model.history = *o.history;
  if (o.future) c.prepare.assemble.future = c.model.future = *o.future;
  if (o.order) c.model.cheb_order = *o.order;
  if (o.quota) c.prepare.assemble.quota = c.model.quota = parse_quota(*o.quota);
  c.synth.seed = derive_seed(c.seed, "synth");
  c.prepare.seed = derive_seed(c.seed, "split");
  c.train.seed = derive_seed(c.seed, "train");
  c.model.seed = derive_seed(c.seed, "init");
  return c;
}

cli::RunManifest start_manifest(const std::string& command, const Options& o, const RunConfig& c) {
  cli::RunManifest m;
  m.command = command;
  m.tool_version = EGOSPEED_VERSION;
  m.config_path = o.config;
  m.resolved_config = run_config_to_json(c);
  m.master_seed = c.seed;
  return m;
}

fs::path prepare_out(const Options& o) {
  const fs::path dir(o.out);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) fail(ErrorKind::kIo, "cannot create " + dir.string() + ": " + ec.message());
  return dir;
}

std::string histogram_line(std::span<const Clip> clips) {
  const auto h = class_histogram(clips);
  std::ostringstream ss;
  for (int a = 0; a < kNumActions; ++a) {
    ss << (a ? " " : "") << to_string(action_from_index(a)) << "=" << h[a];
  }
  return ss.str();
}

// ---------------------------------------------------------------- synth

int cmd_synth(const Options& o) {
  RunConfig c = resolve(o);
  if (o.confounded) {
    c.synth.cue_rate = confounded_synth_config().cue_rate;
    c.synth.traffic_light_rate = confounded_synth_config().traffic_light_rate;
  }
  try {
    c.synth.validate();
  } catch (const Error& e) {
    fail(ErrorKind::kInvalidConfig, std::string("synth.") + e.what());
  }
  const auto logs = generate(c.synth);
  const fs::path dir = prepare_out(o);
  write_detection_log(dir / "detections.jsonl", logs.frames);
  write_sensor_log(dir / "sensors.jsonl", logs.sensors);

  std::ostringstream oracle;
  oracle << "session,frame_index,label\n";
  for (std::size_t i = 0; i < logs.sensors.size(); ++i) {
    const auto a = oracle_label(logs.latents[i], c.synth.rule);
    oracle << logs.sensors[i].session << ',' << logs.sensors[i].frame_index << ','
           << (a ? to_string(*a) : "coast") << '\n';
  }
  write_text_file(dir / "oracle_labels.csv", oracle.str());

  auto m = start_manifest("synth", o, c);
  m.add_output("detections", dir / "detections.jsonl");
  m.add_output("sensors", dir / "sensors.jsonl");
  m.add_output("oracle_labels", dir / "oracle_labels.csv");
  m.write(dir / "manifest.json");
  std::cout << "wrote " << logs.frames.size() << " frames from " << c.synth.sessions
            << " sessions to " << dir.string() << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------- prepare

std::map<std::pair<std::string, std::int64_t>, std::string> read_oracle(const fs::path& path) {
  std::map<std::pair<std::string, std::int64_t>, std::string> out;
  std::istringstream in(read_text_file(path));
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    const auto a = line.find(',');
    const auto b = line.find(',', a + 1);
    if (a == std::string::npos || b == std::string::npos) {
      fail(ErrorKind::kInvalidRecord, "malformed oracle line: " + line);
    }
    out[{line.substr(0, a), std::stoll(line.substr(a + 1, b - a - 1))}] = line.substr(b + 1);
  }
  return out;
}

int cmd_prepare(const Options& o) {
  RunConfig c = resolve(o);
  c.prepare.group_by_session = c.prepare.group_by_session || o.group_by_session;
  const fs::path logs(o.logs);
  const auto frames = read_detection_log(logs / "detections.jsonl");
  const auto sensors = read_sensor_log(logs / "sensors.jsonl");
  const auto dataset = prepare_dataset(frames, sensors, c.prepare);
  const auto& s = dataset.splits;
  const std::size_t total = s.train.size() + s.val.size() + s.test.size();
  if (total == 0) warn("no clips assembled from " + logs.string() + "; writing an empty archive");

  const fs::path dir = prepare_out(o);
  save_clip_dataset(dir / "clips.egsc", dataset);

  std::cout << "clips: " << total << " (train " << s.train.size() << ", val " << s.val.size()
            << ", test " << s.test.size() << ")\n";
  std::cout << "train: " << histogram_line(s.train) << "\n";
  std::cout << "val:   " << histogram_line(s.val) << "\n";
  std::cout << "test:  " << histogram_line(s.test) << "\n";

  const fs::path oracle_path = logs / "oracle_labels.csv";
  if (fs::exists(oracle_path)) {
    const auto oracle = read_oracle(oracle_path);
    const auto stride = std::llround(c.prepare.source_fps / c.prepare.target_fps);
    std::size_t checked = 0, mismatched = 0;
    for (const auto* split : {&s.train, &s.val, &s.test}) {
      for (const auto& clip : *split) {
        const auto target = clip.meta.anchor_frame + dataset.future * stride;
        const auto it = oracle.find({clip.meta.session, target});
        ++checked;
        if (it == oracle.end() || it->second != to_string(clip.label)) ++mismatched;
      }
    }
    std::cout << "oracle check: " << checked - mismatched << " of " << checked
              << " clip labels match\n";
    if (mismatched) fail(ErrorKind::kInvalidRecord, "clip labels disagree with the oracle");
  }

  auto m = start_manifest("prepare", o, c);
  m.add_input("detections", logs / "detections.jsonl");
  m.add_input("sensors", logs / "sensors.jsonl");
  m.add_output("clip_archive", dir / "clips.egsc");
  m.write(dir / "manifest.json");
  return kExitOk;
}

// ---------------------------------------------------------------- train

ModelConfig model_for(const RunConfig& c, const Options& o, const ClipDataset& d) {
  ModelConfig mc = c.model;
  const auto mismatch = [](const char* flag) {
    fail(ErrorKind::kInvalidConfig, std::string(flag) + " does not match the clip archive");
  };
  if (o.history && *o.history != d.history) mismatch("--T");
  if (o.future && *o.future != d.future) mismatch("--FT");
  if (o.quota && !(parse_quota(*o.quota) == d.quota)) mismatch("--quota");
  mc.history = d.history;
  mc.future = d.future;
  mc.quota = d.quota;
  mc.validate();
  return mc;
}

int cmd_train(const Options& o) {
  const RunConfig c = resolve(o);
  const auto dataset = load_clip_dataset(o.data);
  const ModelConfig mc = model_for(c, o, dataset);
  const fs::path dir = prepare_out(o);

  std::cout << "training " << to_string(mc.variant) << " on " << dataset.splits.train.size()
            << " clips (T=" << mc.history << ", FT=" << mc.future << ", K=" << mc.cheb_order
            << ")\n";
  auto result = train(dataset.splits, init_params(mc, c.model.seed), c.train,
                      [](const EpochRecord& e) {
                        std::printf("epoch %4d  train %.6f  val %.6f  %.2fs\n", e.epoch,
                                    e.train_loss, e.val_loss, e.seconds);
                        std::fflush(stdout);
                      });
  const auto& r = result.report;
  write_text_file(dir / "train_report.json", train_report_to_json(r) + "\n");
  write_text_file(dir / "loss_curve.csv", train_report_table(r));
  auto m = start_manifest("train", o, c);
  m.add_input("clip_archive", o.data);
  if (r.best_epoch > 0) {
    save_checkpoint(dir / "checkpoint.egsk", result.best);
    m.add_output("checkpoint", dir / "checkpoint.egsk");
  }
  m.add_output("loss_curve", dir / "loss_curve.csv");
  m.add_volatile("train_report", dir / "train_report.json");
  m.write(dir / "manifest.json");

  if (r.failure) {
    std::cerr << "error: training aborted: " << *r.failure << "\n";
    return kExitNumeric;
  }
  std::printf("stopped at epoch %d, best epoch %d, best val loss %.17g\n", r.stop_epoch,
              r.best_epoch, r.best_val_loss);
  return kExitOk;
}

// ---------------------------------------------------------------- eval

int cmd_eval(const Options& o) {
  const auto dataset = load_clip_dataset(o.data);
  const auto params = load_checkpoint(o.checkpoint);
  const Variant variant = o.variant ? parse_variant(*o.variant) : params.config.variant;
  if (variant != params.config.variant) {
    fail(ErrorKind::kInvalidConfig, "--variant " + std::string(to_string(variant)) +
                                        " but the checkpoint holds " +
                                        std::string(to_string(params.config.variant)));
  }
  if (params.config.history != dataset.history || !(params.config.quota == dataset.quota)) {
    fail(ErrorKind::kInvalidConfig, "checkpoint and clip archive disagree on T or quota");
  }
  const std::vector<Clip>* clips = o.split == "test"    ? &dataset.splits.test
                                   : o.split == "val"   ? &dataset.splits.val
                                   : o.split == "train" ? &dataset.splits.train
                                                        : nullptr;
  if (!clips) fail(ErrorKind::kInvalidConfig, "--split: expected train, val or test");
  const auto metrics = evaluate(params, *clips, variant);
  const auto timing = measure_inference(params, *clips, variant);

  std::printf("variant %s, %s split, %zu clips\n", std::string(to_string(variant)).c_str(),
              o.split.c_str(), metrics.total);
  for (int a = 0; a < kNumActions; ++a) {
    std::printf("recall %-20s %s\n", std::string(to_string(action_from_index(a))).c_str(),
                metrics.recall[a] ? std::to_string(*metrics.recall[a]).c_str() : "NA");
  }
  std::printf("accuracy: %.2f\n", metrics.accuracy);
  if (!dataset.splits.val.empty()) {
    std::printf("val_loss: %.17g\n", dataset_loss(dataset.splits.val, params));
  }
  std::printf("inference: %.3f us per clip\n", timing.per_clip_us);

  if (!o.out.empty()) {
    const fs::path dir = prepare_out(o);
    write_text_file(dir / "metrics.json", metrics_to_json(metrics) + "\n");
    RunConfig c;
    c.model = params.config;
    auto m = start_manifest("eval", o, c);
    m.add_input("clip_archive", o.data);
    m.add_input("checkpoint", o.checkpoint);
    m.add_output("metrics", dir / "metrics.json");
    m.write(dir / "manifest.json");
  }
  return kExitOk;
}

// ---------------------------------------------------------------- ablate

int cmd_ablate(const Options& o) {
  RunConfig c = resolve(o);
  if (o.preset == "table1") {
    c.sweep = table1_sweep();
  } else if (o.preset == "table2") {
    c.sweep = table2_sweep();
  } else if (!o.preset.empty()) {
    fail(ErrorKind::kInvalidConfig, "--preset: expected table1 or table2");
  }
  if (o.seed) c.sweep.seeds = {c.seed};
  const fs::path logs(o.logs);
  const auto frames = read_detection_log(logs / "detections.jsonl");
  const auto sensors = read_sensor_log(logs / "sensors.jsonl");

  AblationOptions opts;
  opts.model = c.model;
  opts.prepare = c.prepare;
  opts.threads = o.threads;
  opts.on_cell = [](const CellResult& r) {
    if (r.error) {
      std::printf("%-40s error: %s\n", r.key.to_string().c_str(), r.error->c_str());
    } else {
      std::printf("%-40s accuracy %.2f\n", r.key.to_string().c_str(), r.metrics->accuracy);
    }
    std::fflush(stdout);
  };
  const auto result = run_ablation(frames, sensors, c.sweep, c.train, opts);

  const fs::path dir = prepare_out(o);
  write_text_file(dir / "results.csv", results_table(result.cells));
  write_text_file(dir / "loss_curves.csv", loss_curves(result.cells));
  auto m = start_manifest("ablate", o, c);
  m.add_input("detections", logs / "detections.jsonl");
  m.add_input("sensors", logs / "sensors.jsonl");
  m.add_output("loss_curves", dir / "loss_curves.csv");
  m.add_volatile("results", dir / "results.csv");
  m.write(dir / "manifest.json");

  std::size_t failed = 0;
  for (const auto& r : result.cells) failed += r.error ? 1 : 0;
  if (failed) warn(std::to_string(failed) + " of " + std::to_string(result.cells.size()) + " cells failed");
  return kExitOk;
}

// ---------------------------------------------------------------- gradcheck

std::vector<Clip> random_clips(const ModelConfig& mc, int count, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> coord(0.0, 1.0);
  std::bernoulli_distribution present(0.7);
  std::uniform_int_distribution<int> label(0, kNumActions - 1);
  const int n = mc.quota.total();
  std::vector<Clip> clips(count);
  for (auto& clip : clips) {
    clip.mask.resize(mc.history, n);
    for (int t = 0; t < mc.history; ++t) {
      Mat x = Mat::Zero(n, 4);
      for (int i = 0; i < n; ++i) {
        clip.mask(t, i) = present(rng);
        if (clip.mask(t, i)) {
          for (int k = 0; k < 4; ++k) x(i, k) = coord(rng);
        }
      }
      clip.features.push_back(std::move(x));
    }
    clip.label = action_from_index(label(rng));
  }
  return clips;
}

int cmd_gradcheck(const Options& o) {
  RunConfig c = resolve(o);
  ModelConfig mc = c.model;
  mc.history = o.history.value_or(3);
  mc.cheb_order = o.order.value_or(2);
  mc.quota = o.quota ? parse_quota(*o.quota) : CategoryQuota{2, 2, 2};
  mc.graph_widths = {4, 8};
  mc.lstm_hidden = 8;
  mc.validate();
  auto params = init_params(mc, c.model.seed);
  // Zero biases leave dead ReLU units exactly on the kink; shift them off it.
  std::mt19937_64 rng(derive_seed(c.seed, "gradcheck-biases"));
  std::uniform_real_distribution<double> offset(-0.2, 0.2);
  for (auto& t : tensors(params)) {
    if (t.name.ends_with(".b")) {
      for (Eigen::Index i = 0; i < t.size(); ++i) t.data[i] += offset(rng);
    }
  }
  const auto clips = random_clips(mc, o.batch, derive_seed(c.seed, "gradcheck-clips"));
  const auto report = gradient_check(params, clips, o.step, o.tolerance);

  std::printf("%-32s %8s %12s %12s %8s\n", "tensor", "coords", "max_abs", "max_rel", "fails");
  for (const auto& t : report.tensors) {
    std::printf("%-32s %8zu %12.3e %12.3e %8zu\n", t.name.c_str(), t.coordinates,
                t.max_abs_error, t.max_rel_error, t.failures);
  }
  std::printf("max relative error %.3e (tolerance %.1e): %s\n", report.max_rel_error, o.tolerance,
              report.passed() ? "PASS" : "FAIL");
  return report.passed() ? kExitOk : kExitGradcheck;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"EgoSpeed-Net speed-control action forecaster"};
  app.set_version_flag("--version", EGOSPEED_VERSION);
  app.require_subcommand(1);
  Options o;

  auto* synth = app.add_subcommand("synth", "Generate synthetic detection and sensor logs");
  add_common(synth, o);
  synth->add_flag("--confounded", o.confounded, "Enable the inverting traffic cue");

  auto* prepare = app.add_subcommand("prepare", "Build a clip archive from logs");
  add_common(prepare, o);
  add_model_flags(prepare, o);
  prepare->add_option("--logs", o.logs, "Directory with detections.jsonl and sensors.jsonl")
      ->required();
  prepare->add_flag("--group-by-session", o.group_by_session, "Keep each session in one split");

  auto* trn = app.add_subcommand("train", "Train one variant on a clip archive");
  add_common(trn, o);
  add_model_flags(trn, o);
  trn->add_option("--data", o.data, "Clip archive")->required();

  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint");
  add_common(eval, o, false);
  eval->add_option("--variant", o.variant, "Variant the checkpoint was trained as");
  eval->add_option("--data", o.data, "Clip archive")->required();
  eval->add_option("--checkpoint", o.checkpoint, "Checkpoint file")->required();
  eval->add_option("--split", o.split, "train, val or test");

  auto* ablate = app.add_subcommand("ablate", "Run a variant/setting sweep");
  add_common(ablate, o);
  add_model_flags(ablate, o);
  ablate->add_option("--logs", o.logs, "Directory with detections.jsonl and sensors.jsonl")
      ->required();
  ablate->add_option("--preset", o.preset, "table1 or table2");

  auto* grad = app.add_subcommand("gradcheck", "Finite-difference gradient check");
  add_common(grad, o, false);
  add_model_flags(grad, o);
  grad->add_option("--tol", o.tolerance, "Relative error tolerance");
  grad->add_option("--step", o.step, "Finite-difference step");
  grad->add_option("--batch", o.batch, "Clips in the check batch")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*synth) return cmd_synth(o);
    if (*prepare) return cmd_prepare(o);
    if (*trn) return cmd_train(o);
    if (*eval) return cmd_eval(o);
    if (*ablate) return cmd_ablate(o);
    if (*grad) return cmd_gradcheck(o);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code(e.kind());
  }
  return kExitOk;
}
