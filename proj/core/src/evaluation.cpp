#include "egospeed/evaluation.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <iomanip>
#include <map>
#include <nlohmann/json.hpp>
#include <sstream>
#include <thread>

#include "egospeed/seed.hpp"

namespace egospeed {

MetricsReport metrics_from_predictions(std::span<const int> predicted,
                                       std::span<const Action> labels) {
  if (predicted.size() != labels.size()) {
    fail(ErrorKind::kShape, "metrics: prediction and label counts differ");
  }
  if (labels.empty()) fail(ErrorKind::kInvalidInput, "metrics: empty test set");
  MetricsReport r;
  r.total = labels.size();
  std::size_t correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int y = index_of(labels[i]);
    const int p = predicted[i];
    if (p < 0 || p >= kNumActions) fail(ErrorKind::kInvalidInput, "prediction out of range");
    ++r.confusion[y][p];
    ++r.class_counts[y];
    correct += y == p ? 1 : 0;
  }
  for (int j = 0; j < kNumActions; ++j) {
    if (r.class_counts[j] > 0) {
      r.recall[j] = 100.0 * static_cast<double>(r.confusion[j][j]) /
                    static_cast<double>(r.class_counts[j]);
    }
  }
  r.accuracy = 100.0 * static_cast<double>(correct) / static_cast<double>(r.total);
  return r;
}

std::vector<int> predict(const ModelParams& params, std::span<const Clip> clips) {
  constexpr std::size_t kChunk = 256;
  const auto ptrs = pointers(clips);
  std::vector<int> out;
  out.reserve(clips.size());
  for (std::size_t i = 0; i < ptrs.size(); i += kChunk) {
    const std::size_t n = std::min(kChunk, ptrs.size() - i);
    const Mat logits = batch_logits(ClipBatch(ptrs.data() + i, n), params);
    for (Eigen::Index b = 0; b < logits.rows(); ++b) {
      Eigen::Index best = 0;
      logits.row(b).maxCoeff(&best);
      out.push_back(static_cast<int>(best));
    }
  }
  return out;
}

namespace {

void check_variant(const ModelParams& params, Variant variant) {
  if (params.config.variant != variant) {
    fail(ErrorKind::kShape, "parameters were built for variant " +
                                std::string(to_string(params.config.variant)) + ", not " +
                                std::string(to_string(variant)));
  }
}

}  // namespace

MetricsReport evaluate(const ModelParams& params, std::span<const Clip> test, Variant variant) {
  check_variant(params, variant);
  if (test.empty()) fail(ErrorKind::kInvalidInput, "evaluate: empty test set");
  const auto predicted = predict(params, test);
  std::vector<Action> labels;
  labels.reserve(test.size());
  for (const auto& c : test) labels.push_back(c.label);
  return metrics_from_predictions(predicted, labels);
}

InferenceTiming measure_inference(const ModelParams& params, std::span<const Clip> clips,
                                  Variant variant, int repeats) {
  check_variant(params, variant);
  if (clips.empty()) return {};
  (void)predict(params, clips.first(std::min<std::size_t>(clips.size(), 16)));
  std::vector<double> seconds;
  for (int r = 0; r < std::max(1, repeats); ++r) {
    const auto start = std::chrono::steady_clock::now();
    const auto predicted = predict(params, clips);
    seconds.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
    if (predicted.size() != clips.size()) fail(ErrorKind::kShape, "prediction count mismatch");
  }
  std::sort(seconds.begin(), seconds.end());
  InferenceTiming t;
  t.total_seconds = seconds[seconds.size() / 2];
  t.per_clip_us = 1e6 * t.total_seconds / static_cast<double>(clips.size());
  return t;
}

void SweepSpec::validate() const {
  if (settings.empty() && (histories.empty() || futures.empty() || orders.empty())) {
    fail(ErrorKind::kInvalidConfig, "sweep: T, FT and K sets must be non-empty");
  }
  if (variants.empty() || quotas.empty() || seeds.empty()) {
    fail(ErrorKind::kInvalidConfig, "sweep: variant, quota and seed sets must be non-empty");
  }
}

SweepSpec table1_sweep() {
  SweepSpec s;
  s.settings = {{10, 1, 1}};
  return s;
}

SweepSpec table2_sweep() {
  SweepSpec s;
  s.settings = {{2, 1, 5}, {15, 1, 5}, {15, 1, 1}, {15, 10, 5}};
  s.variants = {Variant::kBase, Variant::kBaseMulti, Variant::kBaseT, Variant::kFull};
  return s;
}

std::string CellKey::to_string() const {
  std::ostringstream ss;
  ss << egospeed::to_string(variant) << "/T" << setting.history << "/FT" << setting.future << "/K"
     << setting.order << "/Q" << quota.n_car << "-" << quota.n_pedestrian << "-"
     << quota.n_traffic << "/s" << seed;
  return ss.str();
}

std::vector<CellKey> expand(const SweepSpec& spec) {
  spec.validate();
  std::vector<Setting> settings = spec.settings;
  if (settings.empty()) {
    for (int t : spec.histories) {
      for (int ft : spec.futures) {
        for (int k : spec.orders) settings.push_back({t, ft, k});
      }
    }
  }
  std::vector<CellKey> keys;
  for (const auto& s : settings) {
    for (const auto& q : spec.quotas) {
      for (Variant v : spec.variants) {
        for (auto seed : spec.seeds) keys.push_back({v, s, q, seed});
      }
    }
  }
  return keys;
}

CellResult run_cell(const ClipDataset& dataset, const CellKey& key, const TrainConfig& train_config,
                    const ModelConfig& model) {
  CellResult result;
  result.key = key;
  try {
    ModelConfig cfg = model;
    cfg.variant = key.variant;
    cfg.history = key.setting.history;
    cfg.future = key.setting.future;
    cfg.cheb_order = key.setting.order;
    cfg.quota = key.quota;
    if (dataset.history != cfg.history || dataset.future != cfg.future ||
        !(dataset.quota == cfg.quota)) {
      fail(ErrorKind::kInvalidConfig, "cell setting does not match its dataset");
    }
    if (dataset.splits.test.empty()) fail(ErrorKind::kInvalidInput, "cell has an empty test split");
    const std::string tag = key.to_string();
    TrainConfig tc = train_config;
    tc.seed = derive_seed(key.seed, "train/" + tag);
    auto trained = train(dataset.splits, init_params(cfg, derive_seed(key.seed, "init/" + tag)), tc);
    result.train = trained.report;
    if (trained.report.failure) result.error = trained.report.failure;
    result.metrics = evaluate(trained.best, dataset.splits.test, key.variant);
    result.timing = measure_inference(trained.best, dataset.splits.test, key.variant);
  } catch (const Error& e) {
    result.error = e.what();
  }
  return result;
}

AblationResult run_ablation(std::span<const FrameDetections> frames,
                            std::span<const SensorSample> sensors, const SweepSpec& spec,
                            const TrainConfig& train_config, const AblationOptions& options) {
  const auto keys = expand(spec);

  // One dataset per (T, FT, quota), shared by every cell using it.
  const auto dataset_key = [](const CellKey& k) {
    std::ostringstream ss;
    ss << k.setting.history << "/" << k.setting.future << "/" << k.quota.n_car << "-"
       << k.quota.n_pedestrian << "-" << k.quota.n_traffic;
    return ss.str();
  };
  std::map<std::string, ClipDataset> datasets;
  std::map<std::string, std::string> dataset_errors;
  for (const auto& k : keys) {
    const auto dk = dataset_key(k);
    if (datasets.count(dk) || dataset_errors.count(dk)) continue;
    PrepareConfig pc = options.prepare;
    pc.assemble.history = k.setting.history;
    pc.assemble.future = k.setting.future;
    pc.assemble.quota = k.quota;
    try {
      datasets.emplace(dk, prepare_dataset(frames, sensors, pc));
    } catch (const Error& e) {
      dataset_errors.emplace(dk, e.what());
    }
  }

  AblationResult out;
  out.cells.resize(keys.size());
  std::atomic<std::size_t> next{0};
  std::mutex callback_mutex;
  const auto worker = [&] {
    for (std::size_t i = next++; i < keys.size(); i = next++) {
      const auto dk = dataset_key(keys[i]);
      CellResult r;
      if (auto err = dataset_errors.find(dk); err != dataset_errors.end()) {
        r.key = keys[i];
        r.error = err->second;
      } else {
        r = run_cell(datasets.at(dk), keys[i], train_config, options.model);
      }
      out.cells[i] = std::move(r);
      if (options.on_cell) {
        std::lock_guard lock(callback_mutex);
        options.on_cell(out.cells[i]);
      }
    }
  };
  const int threads = std::max(1, std::min<int>(options.threads, static_cast<int>(keys.size())));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
  }
  return out;
}

namespace {

std::string fmt_percent(const std::optional<double>& v) {
  if (!v) return "NA";
  std::ostringstream ss;
  ss << std::fixed << std::setprecision(4) << *v;
  return ss.str();
}

std::string fmt_real(double v) {
  std::ostringstream ss;
  ss << std::setprecision(17) << v;
  return ss.str();
}

std::string key_columns(const CellKey& k, const std::string& seed) {
  std::ostringstream ss;
  ss << to_string(k.variant) << ',' << k.setting.history << ',' << k.setting.future << ','
     << k.setting.order << ',' << k.quota.n_car << ',' << k.quota.n_pedestrian << ','
     << k.quota.n_traffic << ',' << seed;
  return ss.str();
}

}  // namespace

std::string results_table(std::span<const CellResult> cells) {
  std::ostringstream out;
  out << kResultsHeader << '\n';
  struct Acc {
    CellKey key;
    std::array<double, kNumActions> recall_sum{};
    std::array<int, kNumActions> recall_n{};
    double acc_sum = 0, time_sum = 0;
    int n = 0, seeds = 0;
  };
  std::vector<Acc> groups;
  for (const auto& c : cells) {
    out << key_columns(c.key, std::to_string(c.key.seed));
    CellKey group_key = c.key;
    group_key.seed = 0;
    auto it = std::find_if(groups.begin(), groups.end(),
                           [&](const Acc& a) { return a.key.to_string() == group_key.to_string(); });
    if (it == groups.end()) {
      groups.push_back({group_key});
      it = groups.end() - 1;
    }
    ++it->seeds;
    if (c.metrics) {
      for (int j = 0; j < kNumActions; ++j) {
        out << ',' << fmt_percent(c.metrics->recall[j]);
        if (c.metrics->recall[j]) {
          it->recall_sum[j] += *c.metrics->recall[j];
          ++it->recall_n[j];
        }
      }
      out << ',' << fmt_percent(c.metrics->accuracy) << ',' << fmt_percent(c.timing.per_clip_us);
      it->acc_sum += c.metrics->accuracy;
      it->time_sum += c.timing.per_clip_us;
      ++it->n;
    } else {
      out << ",NA,NA,NA,NA,NA,NA";
    }
    out << '\n';
  }
  for (const auto& g : groups) {
    if (g.seeds < 2) continue;
    out << key_columns(g.key, "mean");
    for (int j = 0; j < kNumActions; ++j) {
      out << ','
          << fmt_percent(g.recall_n[j] ? std::optional<double>(g.recall_sum[j] / g.recall_n[j])
                                       : std::nullopt);
    }
    const auto mean = [&](double s) {
      return g.n ? std::optional<double>(s / g.n) : std::nullopt;
    };
    out << ',' << fmt_percent(mean(g.acc_sum)) << ',' << fmt_percent(mean(g.time_sum)) << '\n';
  }
  return out.str();
}

std::string loss_curves(std::span<const CellResult> cells) {
  std::ostringstream out;
  out << "variant,T,FT,K,n_car,n_ped,n_traffic,seed,epoch,train_loss,val_loss\n";
  for (const auto& c : cells) {
    if (!c.train) continue;
    for (const auto& e : c.train->epochs) {
      out << key_columns(c.key, std::to_string(c.key.seed)) << ',' << e.epoch << ','
          << fmt_real(e.train_loss) << ',' << fmt_real(e.val_loss) << '\n';
    }
  }
  return out.str();
}

std::string metrics_to_json(const MetricsReport& r) {
  nlohmann::json j;
  j["schema"] = "egospeed.metrics";
  j["version"] = 1;
  j["total"] = r.total;
  j["accuracy"] = r.accuracy;
  nlohmann::json classes = nlohmann::json::array();
  for (int a = 0; a < kNumActions; ++a) {
    nlohmann::json c;
    c["action"] = to_string(action_from_index(a));
    c["count"] = r.class_counts[a];
    c["recall"] = r.recall[a] ? nlohmann::json(*r.recall[a]) : nlohmann::json(nullptr);
    c["confusion_row"] = r.confusion[a];
    classes.push_back(c);
  }
  j["classes"] = classes;
  return j.dump(2);
}

std::string train_report_to_json(const TrainReport& r) {
  nlohmann::json j;
  j["schema"] = "egospeed.train_report";
  j["version"] = 1;
  j["stop_epoch"] = r.stop_epoch;
  j["best_epoch"] = r.best_epoch;
  j["best_val_loss"] = r.best_val_loss;
  j["stopped_early"] = r.stopped_early;
  j["failure"] = r.failure ? nlohmann::json(*r.failure) : nlohmann::json(nullptr);
  nlohmann::json epochs = nlohmann::json::array();
  for (const auto& e : r.epochs) {
    epochs.push_back({{"epoch", e.epoch},
                      {"train_loss", e.train_loss},
                      {"val_loss", e.val_loss},
                      {"seconds", e.seconds}});
  }
  j["epochs"] = epochs;
  return j.dump(2);
}

std::string train_report_table(const TrainReport& r) {
  std::ostringstream out;
  out << "epoch,train_loss,val_loss\n";
  for (const auto& e : r.epochs) {
    out << e.epoch << ',' << fmt_real(e.train_loss) << ',' << fmt_real(e.val_loss) << '\n';
  }
  return out.str();
}

}  // namespace egospeed
