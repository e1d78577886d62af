#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "egospeed/graph_conv.hpp"

namespace egospeed {

// Model variants of the ablation study.
//   kBase       car graph only, pooled sequence flattened into the classifier
//   kBaseSingle one graph over every object of every category, flattened
//   kBaseMulti  three category graphs, flattened and concatenated
//   kBaseT      car graph followed by the LSTM stack
//   kFull       three category graphs, three LSTM stacks, concatenation
enum class Variant { kBase, kBaseSingle, kBaseMulti, kBaseT, kFull };
inline constexpr std::array<Variant, 5> kAllVariants = {
    Variant::kBase, Variant::kBaseSingle, Variant::kBaseMulti, Variant::kBaseT, Variant::kFull};

std::string_view to_string(Variant v);
Variant parse_variant(std::string_view s);
bool has_temporal_module(Variant v);

// Node groups a variant builds graphs over. kAll spans the whole frame.
enum class GraphView { kCar, kPedestrian, kTraffic, kAll };
std::string_view to_string(GraphView v);
std::vector<GraphView> views_of(Variant v);

struct ModelConfig {
  Variant variant = Variant::kFull;
  int history = 10;  // T
  int future = 1;    // FT, echoed for bookkeeping
  int cheb_order = 1;  // K
  CategoryQuota quota;
  std::vector<int> graph_widths = {16, 32};
  int lstm_hidden = 64;
  int lstm_layers = 2;
  std::vector<int> mlp_hidden = {64, 32};
  Activation graph_activation = Activation::kRelu;
  Activation mlp_activation = Activation::kRelu;
  std::uint64_t seed = 0;

  int pooled_width() const { return graph_widths.empty() ? 4 : graph_widths.back(); }
  int classifier_input_width() const;
  void validate() const;
};

// Gate blocks are stacked column-wise in the order input, forget, cell, output:
// weight is (in + hidden) x 4*hidden, the first `in` rows act on x.
struct LstmLayer {
  Mat weight;
  Vec bias;

  Eigen::Index hidden() const { return bias.size() / 4; }
  Eigen::Index in_dim() const { return weight.rows() - hidden(); }
};

struct LstmParams {
  std::vector<LstmLayer> layers;
};

struct DenseLayer {
  Mat weight;  // in x out
  Vec bias;
};

struct ClassifierParams {
  std::vector<DenseLayer> hidden;
  DenseLayer output;  // last hidden width x 4
};

struct ViewParams {
  GraphView view = GraphView::kCar;
  GraphStack graph;
  std::optional<LstmParams> lstm;
};

struct ModelParams {
  ModelConfig config;
  std::vector<ViewParams> views;
  ClassifierParams classifier;

  const ViewParams& view(GraphView v) const;
};

// Shape-parallel gradient container.
using GradientSet = ModelParams;
ModelParams zeros_like(const ModelParams& params);

// Non-owning view of one parameter tensor (column-major storage).
struct TensorRef {
  std::string name;
  Eigen::Index rows = 0;
  Eigen::Index cols = 0;
  double* data = nullptr;

  Eigen::Index size() const { return rows * cols; }
};

// Every parameter tensor in a fixed order with a dotted path name.
std::vector<TensorRef> tensors(ModelParams& params);
std::size_t parameter_count(const ModelParams& params);
Vec flatten(const ModelParams& params);
void unflatten(const Vec& flat, ModelParams& params);

struct LstmState {
  Vec h;
  Vec c;
};

LstmState lstm_cell_step(const Vec& x, const LstmState& state, const LstmLayer& layer);

// Runs the stacked layers from a zero state; returns the top layer's last
// hidden state.
Vec lstm_encode(const Mat& sequence, const LstmParams& params);

struct Prediction {
  Vec logits;         // 4
  Vec probabilities;  // softmax(logits)
};

Vec softmax(const Vec& logits);

// The full model on one clip. Requires params built for Variant::kFull.
Prediction forward(const Clip& clip, const ModelParams& params);

// Single-clip forward of any variant; params must have been built for it.
Prediction forward_variant(const Clip& clip, const ModelParams& params, Variant variant);

// Versioned binary checkpoint: magic "EGSCKPT1", JSON config, then each
// tensor as name, rows, cols and a row-major float64 payload.
inline constexpr std::uint32_t kCheckpointVersion = 1;
void save_checkpoint(const std::filesystem::path& path, const ModelParams& params);
ModelParams load_checkpoint(const std::filesystem::path& path);

// Allocates correctly shaped, zero-filled parameters for a config.
ModelParams allocate_params(const ModelConfig& config);

}  // namespace egospeed
