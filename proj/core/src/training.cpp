#include "egospeed/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "egospeed/seed.hpp"

namespace egospeed {

void TrainConfig::validate() const {
  if (batch_size < 1) fail(ErrorKind::kInvalidConfig, "batch_size must be >= 1");
  if (!(adam.step_size > 0)) fail(ErrorKind::kInvalidConfig, "step size must be positive");
  if (!(adam.beta1 >= 0 && adam.beta1 < 1) || !(adam.beta2 >= 0 && adam.beta2 < 1)) {
    fail(ErrorKind::kInvalidConfig, "moment decay rates must lie in [0, 1)");
  }
  if (!(adam.epsilon > 0)) fail(ErrorKind::kInvalidConfig, "epsilon must be positive");
  if (patience < 1) fail(ErrorKind::kInvalidConfig, "patience must be >= 1");
  if (!(min_delta >= 0)) fail(ErrorKind::kInvalidConfig, "min_delta must be >= 0");
  if (max_epochs < 1) fail(ErrorKind::kInvalidConfig, "max_epochs must be >= 1");
}

double cross_entropy(const Mat& probabilities, std::span<const Action> labels) {
  if (probabilities.rows() != static_cast<Eigen::Index>(labels.size())) {
    fail(ErrorKind::kShape, "cross_entropy: one label per row required");
  }
  if (labels.empty()) fail(ErrorKind::kInvalidInput, "cross_entropy: empty batch");
  double total = 0;
  for (Eigen::Index i = 0; i < probabilities.rows(); ++i) {
    const int y = index_of(labels[i]);
    if (y < 0 || y >= probabilities.cols()) fail(ErrorKind::kInvalidInput, "label out of range");
    total -= std::log(probabilities(i, y));
  }
  return total / static_cast<double>(labels.size());
}

LossGradient backward(std::span<const Clip> batch, const ModelParams& params) {
  if (batch.empty()) fail(ErrorKind::kInvalidInput, "backward: empty batch");
  const auto ptrs = pointers(batch);
  LossGradient out;
  out.loss = batch_loss_and_gradient(ptrs, params, out.grads);
  return out;
}

AdamState AdamState::for_params(const ModelParams& params) {
  const auto n = static_cast<Eigen::Index>(parameter_count(params));
  return {Vec::Zero(n), Vec::Zero(n), 0};
}

void adam_step(ModelParams& params, const GradientSet& grads, AdamState& state,
               const AdamHyper& hyper) {
  Vec theta = flatten(params);
  const Vec g = flatten(grads);
  if (state.first.size() != theta.size()) state = AdamState::for_params(params);
  if (g.size() != theta.size()) fail(ErrorKind::kShape, "adam_step: gradient shape mismatch");
  ++state.step;
  state.first = hyper.beta1 * state.first + (1.0 - hyper.beta1) * g;
  state.second = hyper.beta2 * state.second + (1.0 - hyper.beta2) * g.cwiseProduct(g);
  const double c1 = 1.0 - std::pow(hyper.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(hyper.beta2, static_cast<double>(state.step));
  theta.array() -= hyper.step_size * (state.first.array() / c1) /
                   ((state.second.array() / c2).sqrt() + hyper.epsilon);
  unflatten(theta, params);
}

EarlyStopping::EarlyStopping(int patience, double min_delta)
    : patience_(patience), min_delta_(min_delta), best_(std::numeric_limits<double>::infinity()) {
  if (patience < 1) fail(ErrorKind::kInvalidConfig, "patience must be >= 1");
}

EarlyStopping::Decision EarlyStopping::update(int epoch, double val_loss) {
  Decision d;
  if (val_loss < best_ - min_delta_) {
    best_ = val_loss;
    best_epoch_ = epoch;
    wait_ = 0;
    d.improved = true;
  } else {
    ++wait_;
  }
  d.stop = wait_ >= patience_;
  return d;
}

double dataset_loss(std::span<const Clip> clips, const ModelParams& params, std::size_t chunk) {
  if (clips.empty()) fail(ErrorKind::kInvalidInput, "dataset_loss: no clips");
  const auto ptrs = pointers(clips);
  double total = 0;
  for (std::size_t i = 0; i < ptrs.size(); i += chunk) {
    const std::size_t n = std::min(chunk, ptrs.size() - i);
    total += batch_loss(ClipBatch(ptrs.data() + i, n), params) * static_cast<double>(n);
  }
  return total / static_cast<double>(ptrs.size());
}

TrainResult train(const DatasetSplits& splits, ModelParams init, const TrainConfig& config,
                  const EpochCallback& on_epoch) {
  config.validate();
  if (splits.train.empty() || splits.val.empty()) {
    fail(ErrorKind::kInvalidInput, "train: train and validation splits must be non-empty");
  }
  const std::vector<Clip> train_set =
      config.oversample ? oversample(splits.train, derive_seed(config.seed, "oversample"))
                        : splits.train;
  const auto all = pointers(train_set);
  std::vector<std::size_t> order(all.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(derive_seed(config.seed, "epoch-shuffle"));

  TrainResult result{init, {}};
  ModelParams params = std::move(init);
  AdamState state = AdamState::for_params(params);
  EarlyStopping stopper(config.patience, config.min_delta);
  GradientSet grads;
  std::vector<const Clip*> batch;

  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0;
    EpochRecord rec;
    rec.epoch = epoch;
    try {
      for (std::size_t i = 0; i < order.size(); i += config.batch_size) {
        const std::size_t n = std::min<std::size_t>(config.batch_size, order.size() - i);
        batch.clear();
        for (std::size_t k = 0; k < n; ++k) batch.push_back(all[order[i + k]]);
        const double loss = batch_loss_and_gradient(batch, params, grads);
        adam_step(params, grads, state, config.adam);
        loss_sum += loss * static_cast<double>(n);
      }
      rec.train_loss = loss_sum / static_cast<double>(order.size());
      rec.val_loss = dataset_loss(splits.val, params);
      if (!std::isfinite(rec.train_loss) || !std::isfinite(rec.val_loss)) {
        fail(ErrorKind::kNumericFault, "non-finite loss in epoch " + std::to_string(epoch));
      }
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::kNumericFault) throw;
      result.report.failure = std::string(e.what()) + " (epoch " + std::to_string(epoch) + ")";
      break;
    }
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

    const auto decision = stopper.update(epoch, rec.val_loss);
    if (decision.improved) result.best = params;
    result.report.epochs.push_back(rec);
    result.report.stop_epoch = epoch;
    if (on_epoch) on_epoch(rec);
    if (decision.stop) {
      result.report.stopped_early = true;
      break;
    }
  }
  result.report.best_epoch = stopper.best_epoch();
  result.report.best_val_loss =
      stopper.best_epoch() > 0 ? stopper.best_value() : std::numeric_limits<double>::quiet_NaN();
  return result;
}

GradCheckReport gradient_check(const ModelParams& params, std::span<const Clip> batch,
                               double step, double rel_tol, double abs_floor) {
  if (batch.empty()) fail(ErrorKind::kInvalidInput, "gradient_check: empty batch");
  const auto ptrs = pointers(batch);
  GradientSet grads;
  batch_loss_and_gradient(ptrs, params, grads);

  ModelParams probe = params;
  auto probe_tensors = tensors(probe);
  const auto grad_tensors = tensors(grads);
  GradCheckReport report;
  for (std::size_t t = 0; t < probe_tensors.size(); ++t) {
    GradCheckTensor entry;
    entry.name = probe_tensors[t].name;
    for (Eigen::Index i = 0; i < probe_tensors[t].size(); ++i) {
      double& x = probe_tensors[t].data[i];
      const double saved = x;
      x = saved + step;
      const double up = batch_loss(ptrs, probe);
      x = saved - step;
      const double down = batch_loss(ptrs, probe);
      x = saved;
      const double numeric = (up - down) / (2 * step);
      const double analytic = grad_tensors[t].data[i];
      const double abs_err = std::abs(numeric - analytic);
      const double scale = std::max(std::abs(numeric), std::abs(analytic));
      const double rel_err = abs_err > abs_floor ? abs_err / scale : 0.0;
      ++entry.coordinates;
      entry.max_abs_error = std::max(entry.max_abs_error, abs_err);
      entry.max_rel_error = std::max(entry.max_rel_error, rel_err);
      if (abs_err > abs_floor && rel_err > rel_tol) ++entry.failures;
    }
    report.max_rel_error = std::max(report.max_rel_error, entry.max_rel_error);
    report.failures += entry.failures;
    report.tensors.push_back(std::move(entry));
  }
  return report;
}

ModelParams init_params(const ModelConfig& config, std::uint64_t seed) {
  ModelParams params = allocate_params(config);
  std::mt19937_64 rng(seed);
  const auto fill = [&](Mat& w, double fan_in, double fan_out) {
    const double s = std::sqrt(6.0 / (fan_in + fan_out));
    std::uniform_real_distribution<double> dist(-s, s);
    for (Eigen::Index j = 0; j < w.cols(); ++j) {
      for (Eigen::Index i = 0; i < w.rows(); ++i) w(i, j) = dist(rng);
    }
  };
  for (auto& vp : params.views) {
    for (auto& layer : vp.graph.layers) {
      for (auto& w : layer.weights) {
        fill(w, static_cast<double>(w.rows()), static_cast<double>(w.cols()));
      }
    }
    if (vp.lstm) {
      for (auto& layer : vp.lstm->layers) {
        const Eigen::Index h = layer.hidden();
        fill(layer.weight, static_cast<double>(layer.weight.rows()), static_cast<double>(h));
        layer.bias.segment(h, h).setOnes();
      }
    }
  }
  for (auto& layer : params.classifier.hidden) {
    fill(layer.weight, static_cast<double>(layer.weight.rows()),
         static_cast<double>(layer.weight.cols()));
  }
  auto& out = params.classifier.output;
  fill(out.weight, static_cast<double>(out.weight.rows()), static_cast<double>(out.weight.cols()));
  params.config.seed = seed;
  return params;
}

}  // namespace egospeed
