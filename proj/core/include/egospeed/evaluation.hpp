#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "egospeed/training.hpp"

namespace egospeed {

struct MetricsReport {
  // confusion[true][predicted]
  std::array<std::array<std::size_t, kNumActions>, kNumActions> confusion{};
  std::array<std::size_t, kNumActions> class_counts{};
  // Percent; nullopt when the class does not occur in the test set.
  std::array<std::optional<double>, kNumActions> recall{};
  double accuracy = 0;  // percent
  std::size_t total = 0;
};

MetricsReport metrics_from_predictions(std::span<const int> predicted,
                                       std::span<const Action> labels);

// Argmax class per clip.
std::vector<int> predict(const ModelParams& params, std::span<const Clip> clips);

MetricsReport evaluate(const ModelParams& params, std::span<const Clip> test, Variant variant);

struct InferenceTiming {
  double total_seconds = 0;
  double per_clip_us = 0;
};

// One untimed warm-up pass, then `repeats` timed passes; the median is kept.
InferenceTiming measure_inference(const ModelParams& params, std::span<const Clip> clips,
                                  Variant variant, int repeats = 3);

struct Setting {
  int history = 10;
  int future = 1;
  int order = 1;
};

struct SweepSpec {
  std::vector<int> histories = {2, 5, 10, 15};
  std::vector<int> futures = {1, 5, 10};
  std::vector<int> orders = {1, 3, 5};
  // When non-empty, replaces the T x FT x K product with this list.
  std::vector<Setting> settings;
  std::vector<Variant> variants = {kAllVariants.begin(), kAllVariants.end()};
  std::vector<CategoryQuota> quotas = {CategoryQuota{}};
  std::vector<std::uint64_t> seeds = {0};

  void validate() const;
};

// Five variants at T=10, FT=1, K=1.
SweepSpec table1_sweep();
// Four settings (T,K,FT) = (2,5,1), (15,5,1), (15,1,1), (15,5,10) with the
// Base, BaseMulti, BaseT and Full variants.
SweepSpec table2_sweep();

struct CellKey {
  Variant variant = Variant::kFull;
  Setting setting;
  CategoryQuota quota;
  std::uint64_t seed = 0;

  std::string to_string() const;
};

std::vector<CellKey> expand(const SweepSpec& spec);

struct CellResult {
  CellKey key;
  std::optional<MetricsReport> metrics;
  std::optional<TrainReport> train;
  InferenceTiming timing;
  std::optional<std::string> error;
};

struct AblationOptions {
  ModelConfig model;  // widths and activations; T, FT, K, quota and variant come from each cell
  PrepareConfig prepare;  // history/future/quota overridden per cell
  int threads = 1;
  std::function<void(const CellResult&)> on_cell;
};

struct AblationResult {
  std::vector<CellResult> cells;  // in expand() order
};

// Prepares one dataset per (T, FT, quota) and trains every cell from a fresh
// seeded init. A failing cell is recorded and the sweep continues.
AblationResult run_ablation(std::span<const FrameDetections> frames,
                            std::span<const SensorSample> sensors, const SweepSpec& spec,
                            const TrainConfig& train_config, const AblationOptions& options);

// Trains and evaluates one cell on an already prepared dataset.
CellResult run_cell(const ClipDataset& dataset, const CellKey& key, const TrainConfig& train_config,
                    const ModelConfig& model);

inline constexpr const char* kResultsHeader =
    "variant,T,FT,K,n_car,n_ped,n_traffic,seed,recall_fb,recall_sb,recall_sa,recall_fa,accuracy,"
    "infer_us_per_clip";

// One row per cell, then one "mean" row per key whenever a key has several
// seeds. Undefined values are written as NA.
std::string results_table(std::span<const CellResult> cells);

// Long-form loss curves: variant,T,FT,K,n_car,n_ped,n_traffic,seed,epoch,train_loss,val_loss.
std::string loss_curves(std::span<const CellResult> cells);

std::string metrics_to_json(const MetricsReport& report);
std::string train_report_to_json(const TrainReport& report);
// epoch,train_loss,val_loss. Wall-clock seconds only go to the JSON report,
// so this table is reproducible byte for byte.
std::string train_report_table(const TrainReport& report);

}  // namespace egospeed
