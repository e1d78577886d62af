#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "egospeed/engine.hpp"

namespace egospeed {

struct AdamHyper {
  double step_size = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct TrainConfig {
  int batch_size = 512;
  AdamHyper adam;
  int patience = 50;
  double min_delta = 1e-6;
  int max_epochs = 200;
  bool oversample = true;
  std::uint64_t seed = 0;

  void validate() const;
};

struct EpochRecord {
  int epoch = 0;  // 1-based
  double train_loss = 0;
  double val_loss = 0;
  double seconds = 0;
};

struct TrainReport {
  std::vector<EpochRecord> epochs;
  int stop_epoch = 0;
  int best_epoch = 0;
  double best_val_loss = 0;
  bool stopped_early = false;
  std::optional<std::string> failure;  // set when training aborted
};

// Mean over rows of -log p[label]. Rows must be probability vectors.
double cross_entropy(const Mat& probabilities, std::span<const Action> labels);

struct LossGradient {
  double loss = 0;
  GradientSet grads;
};

LossGradient backward(std::span<const Clip> batch, const ModelParams& params);

struct AdamState {
  Vec first;
  Vec second;
  long step = 0;

  static AdamState for_params(const ModelParams& params);
};

// One bias-corrected update with the state's step counter advanced first.
void adam_step(ModelParams& params, const GradientSet& grads, AdamState& state,
               const AdamHyper& hyper);

// Patience rule: a value counts as an improvement only when it beats the
// best so far by more than min_delta. Training stops once `patience`
// consecutive epochs pass without one.
class EarlyStopping {
 public:
  EarlyStopping(int patience, double min_delta);

  struct Decision {
    bool improved = false;
    bool stop = false;
  };
  Decision update(int epoch, double val_loss);

  int best_epoch() const { return best_epoch_; }
  double best_value() const { return best_; }
  int epochs_without_improvement() const { return wait_; }

 private:
  int patience_;
  double min_delta_;
  double best_;
  int best_epoch_ = 0;
  int wait_ = 0;
};

struct TrainResult {
  ModelParams best;
  TrainReport report;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

// Mean validation loss over `clips`, evaluated in chunks.
double dataset_loss(std::span<const Clip> clips, const ModelParams& params,
                    std::size_t chunk = 256);

// Adam on the (optionally oversampled) training split with early stopping on
// validation loss; returns the best-epoch snapshot.
TrainResult train(const DatasetSplits& splits, ModelParams init, const TrainConfig& config,
                  const EpochCallback& on_epoch = {});

struct GradCheckTensor {
  std::string name;
  std::size_t coordinates = 0;
  std::size_t failures = 0;
  double max_abs_error = 0;
  double max_rel_error = 0;  // over coordinates whose absolute error exceeds the floor
};

struct GradCheckReport {
  std::vector<GradCheckTensor> tensors;
  double max_rel_error = 0;
  std::size_t failures = 0;
  bool passed() const { return failures == 0; }
};

// Central finite differences of the batch loss against the analytic
// gradient, coordinate by coordinate. A coordinate passes when its absolute
// error is within abs_floor or its relative error within rel_tol.
GradCheckReport gradient_check(const ModelParams& params, std::span<const Clip> batch,
                               double step = 1e-5, double rel_tol = 1e-4,
                               double abs_floor = 1e-8);

// Uniform(-s, s) weights with s = sqrt(6 / (fan_in + fan_out)), zero biases
// and +1 on every LSTM forget-gate bias.
ModelParams init_params(const ModelConfig& config, std::uint64_t seed);

}  // namespace egospeed
