#include "egospeed/sequence_model.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include "egospeed/binary_stream.hpp"
#include "egospeed/config.hpp"

namespace egospeed {

std::string_view to_string(Variant v) {
  switch (v) {
    case Variant::kBase: return "Base";
    case Variant::kBaseSingle: return "BaseSingle";
    case Variant::kBaseMulti: return "BaseMulti";
    case Variant::kBaseT: return "BaseT";
    case Variant::kFull: return "Full";
  }
  return "?";
}

Variant parse_variant(std::string_view s) {
  for (Variant v : kAllVariants) {
    if (to_string(v) == s) return v;
  }
  fail(ErrorKind::kInvalidConfig, "unknown variant '" + std::string(s) +
                                      "' (expected Base, BaseSingle, BaseMulti, BaseT, Full)");
}

bool has_temporal_module(Variant v) { return v == Variant::kBaseT || v == Variant::kFull; }

std::string_view to_string(GraphView v) {
  switch (v) {
    case GraphView::kCar: return "car";
    case GraphView::kPedestrian: return "pedestrian";
    case GraphView::kTraffic: return "traffic";
    case GraphView::kAll: return "all";
  }
  return "?";
}

std::vector<GraphView> views_of(Variant v) {
  switch (v) {
    case Variant::kBase:
    case Variant::kBaseT: return {GraphView::kCar};
    case Variant::kBaseSingle: return {GraphView::kAll};
    case Variant::kBaseMulti:
    case Variant::kFull: return {GraphView::kCar, GraphView::kPedestrian, GraphView::kTraffic};
  }
  return {};
}

int ModelConfig::classifier_input_width() const {
  const int n_views = static_cast<int>(views_of(variant).size());
  return has_temporal_module(variant) ? n_views * lstm_hidden
                                      : n_views * history * pooled_width();
}

void ModelConfig::validate() const {
  if (history < 1) fail(ErrorKind::kInvalidConfig, "T must be >= 1");
  if (future < 1) fail(ErrorKind::kInvalidConfig, "FT must be >= 1");
  if (cheb_order < 0) fail(ErrorKind::kInvalidConfig, "K must be >= 0");
  quota.validate();
  if (graph_widths.empty()) fail(ErrorKind::kInvalidConfig, "graph_widths must not be empty");
  for (int w : graph_widths) {
    if (w <= 0) fail(ErrorKind::kInvalidConfig, "graph widths must be positive");
  }
  for (int w : mlp_hidden) {
    if (w <= 0) fail(ErrorKind::kInvalidConfig, "mlp widths must be positive");
  }
  if (has_temporal_module(variant) && (lstm_hidden <= 0 || lstm_layers <= 0)) {
    fail(ErrorKind::kInvalidConfig, "LSTM hidden width and layer count must be positive");
  }
}

const ViewParams& ModelParams::view(GraphView v) const {
  for (const auto& p : views) {
    if (p.view == v) return p;
  }
  fail(ErrorKind::kShape, "model has no '" + std::string(to_string(v)) + "' view");
}

ModelParams allocate_params(const ModelConfig& config) {
  config.validate();
  ModelParams p;
  p.config = config;
  for (GraphView v : views_of(config.variant)) {
    ViewParams vp;
    vp.view = v;
    Eigen::Index in = 4;
    for (int width : config.graph_widths) {
      ChebLayerParams layer;
      layer.weights.assign(config.cheb_order + 1, Mat::Zero(in, width));
      layer.bias = Vec::Zero(width);
      vp.graph.layers.push_back(std::move(layer));
      in = width;
    }
    if (has_temporal_module(config.variant)) {
      LstmParams lstm;
      Eigen::Index lstm_in = config.pooled_width();
      const Eigen::Index h = config.lstm_hidden;
      for (int l = 0; l < config.lstm_layers; ++l) {
        lstm.layers.push_back({Mat::Zero(lstm_in + h, 4 * h), Vec::Zero(4 * h)});
        lstm_in = h;
      }
      vp.lstm = std::move(lstm);
    }
    p.views.push_back(std::move(vp));
  }
  Eigen::Index in = config.classifier_input_width();
  for (int width : config.mlp_hidden) {
    p.classifier.hidden.push_back({Mat::Zero(in, width), Vec::Zero(width)});
    in = width;
  }
  p.classifier.output = {Mat::Zero(in, kNumActions), Vec::Zero(kNumActions)};
  return p;
}

ModelParams zeros_like(const ModelParams& params) {
  ModelParams z = params;
  for (auto& t : tensors(z)) std::fill(t.data, t.data + t.size(), 0.0);
  return z;
}

namespace {

void add_tensor(std::vector<TensorRef>& out, std::string name, Mat& m) {
  out.push_back({std::move(name), m.rows(), m.cols(), m.data()});
}

void add_tensor(std::vector<TensorRef>& out, std::string name, Vec& v) {
  out.push_back({std::move(name), v.size(), 1, v.data()});
}

}  // namespace

std::vector<TensorRef> tensors(ModelParams& p) {
  std::vector<TensorRef> out;
  for (auto& vp : p.views) {
    const std::string base = "view." + std::string(to_string(vp.view));
    for (std::size_t l = 0; l < vp.graph.layers.size(); ++l) {
      auto& layer = vp.graph.layers[l];
      const std::string prefix = base + ".graph." + std::to_string(l);
      for (std::size_t k = 0; k < layer.weights.size(); ++k) {
        add_tensor(out, prefix + ".W" + std::to_string(k), layer.weights[k]);
      }
      add_tensor(out, prefix + ".b", layer.bias);
    }
    if (vp.lstm) {
      for (std::size_t l = 0; l < vp.lstm->layers.size(); ++l) {
        const std::string prefix = base + ".lstm." + std::to_string(l);
        add_tensor(out, prefix + ".W", vp.lstm->layers[l].weight);
        add_tensor(out, prefix + ".b", vp.lstm->layers[l].bias);
      }
    }
  }
  for (std::size_t l = 0; l < p.classifier.hidden.size(); ++l) {
    const std::string prefix = "classifier.hidden." + std::to_string(l);
    add_tensor(out, prefix + ".W", p.classifier.hidden[l].weight);
    add_tensor(out, prefix + ".b", p.classifier.hidden[l].bias);
  }
  add_tensor(out, "classifier.output.W", p.classifier.output.weight);
  add_tensor(out, "classifier.output.b", p.classifier.output.bias);
  return out;
}

std::size_t parameter_count(const ModelParams& params) {
  std::size_t n = 0;
  for (const auto& t : tensors(const_cast<ModelParams&>(params))) n += t.size();
  return n;
}

Vec flatten(const ModelParams& params) {
  Vec flat(static_cast<Eigen::Index>(parameter_count(params)));
  Eigen::Index pos = 0;
  for (const auto& t : tensors(const_cast<ModelParams&>(params))) {
    std::memcpy(flat.data() + pos, t.data, sizeof(double) * t.size());
    pos += t.size();
  }
  return flat;
}

void unflatten(const Vec& flat, ModelParams& params) {
  if (static_cast<std::size_t>(flat.size()) != parameter_count(params)) {
    fail(ErrorKind::kShape, "unflatten: parameter vector length mismatch");
  }
  Eigen::Index pos = 0;
  for (auto& t : tensors(params)) {
    std::memcpy(t.data, flat.data() + pos, sizeof(double) * t.size());
    pos += t.size();
  }
}

namespace {

double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

LstmState lstm_cell_step(const Vec& x, const LstmState& state, const LstmLayer& layer) {
  const Eigen::Index h = layer.hidden();
  if (layer.bias.size() != 4 * h || layer.weight.cols() != 4 * h) {
    fail(ErrorKind::kShape, "lstm_cell_step: gate blocks are not 4 x hidden wide");
  }
  if (x.size() != layer.in_dim()) fail(ErrorKind::kShape, "lstm_cell_step: input width mismatch");
  if (state.h.size() != h || state.c.size() != h) {
    fail(ErrorKind::kShape, "lstm_cell_step: state width mismatch");
  }
  const Vec z = layer.weight.topRows(x.size()).transpose() * x +
                layer.weight.bottomRows(h).transpose() * state.h + layer.bias;
  LstmState next{Vec(h), Vec(h)};
  for (Eigen::Index j = 0; j < h; ++j) {
    const double i = logistic(z(j));
    const double f = logistic(z(h + j));
    const double g = std::tanh(z(2 * h + j));
    const double o = logistic(z(3 * h + j));
    next.c(j) = f * state.c(j) + i * g;
    next.h(j) = o * std::tanh(next.c(j));
  }
  return next;
}

Vec lstm_encode(const Mat& sequence, const LstmParams& params) {
  if (sequence.rows() == 0) fail(ErrorKind::kInvalidInput, "lstm_encode: empty sequence");
  if (params.layers.empty()) fail(ErrorKind::kShape, "lstm_encode: no layers");
  std::vector<LstmState> state;
  for (const auto& layer : params.layers) {
    state.push_back({Vec::Zero(layer.hidden()), Vec::Zero(layer.hidden())});
  }
  for (Eigen::Index t = 0; t < sequence.rows(); ++t) {
    Vec input = sequence.row(t).transpose();
    for (std::size_t l = 0; l < params.layers.size(); ++l) {
      state[l] = lstm_cell_step(input, state[l], params.layers[l]);
      input = state[l].h;
    }
  }
  return state.back().h;
}

Vec softmax(const Vec& logits) {
  const double m = logits.maxCoeff();
  Vec e = (logits.array() - m).exp().matrix();
  return e / e.sum();
}

Prediction forward_variant(const Clip& clip, const ModelParams& params, Variant variant) {
  const ModelConfig& cfg = params.config;
  if (cfg.variant != variant) {
    fail(ErrorKind::kShape, "parameters were built for variant " +
                                std::string(to_string(cfg.variant)) + ", not " +
                                std::string(to_string(variant)));
  }
  if (clip.frames() != cfg.history || clip.nodes() != cfg.quota.total()) {
    fail(ErrorKind::kShape, "clip is " + std::to_string(clip.frames()) + " x " +
                                std::to_string(clip.nodes()) + " but model expects " +
                                std::to_string(cfg.history) + " x " +
                                std::to_string(cfg.quota.total()));
  }
  validate(clip, cfg.quota);

  Vec features(cfg.classifier_input_width());
  Eigen::Index pos = 0;
  for (const auto& vp : params.views) {
    int offset = 0;
    int count = cfg.quota.total();
    if (vp.view != GraphView::kAll) {
      const auto c = static_cast<SuperCategory>(static_cast<int>(vp.view));
      offset = cfg.quota.offset(c);
      count = cfg.quota.count(c);
    }
    const Mat pooled = encode_view(clip, offset, count, vp.graph, cfg.graph_activation);
    if (vp.lstm) {
      const Vec e = lstm_encode(pooled, *vp.lstm);
      features.segment(pos, e.size()) = e;
      pos += e.size();
    } else {
      for (Eigen::Index t = 0; t < pooled.rows(); ++t) {
        features.segment(pos, pooled.cols()) = pooled.row(t).transpose();
        pos += pooled.cols();
      }
    }
  }

  Vec a = features;
  for (const auto& layer : params.classifier.hidden) {
    a = layer.weight.transpose() * a + layer.bias;
    if (cfg.mlp_activation == Activation::kRelu) a = a.cwiseMax(0.0);
  }
  Prediction out;
  out.logits = params.classifier.output.weight.transpose() * a + params.classifier.output.bias;
  out.probabilities = softmax(out.logits);
  return out;
}

Prediction forward(const Clip& clip, const ModelParams& params) {
  return forward_variant(clip, params, Variant::kFull);
}

namespace {

constexpr char kCheckpointMagic[8] = {'E', 'G', 'S', 'C', 'K', 'P', 'T', '1'};

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const ModelParams& params) {
  BinaryWriter w;
  w.bytes(kCheckpointMagic, sizeof kCheckpointMagic);
  w.u32(kCheckpointVersion);
  w.string(model_config_to_json(params.config));
  auto list = tensors(const_cast<ModelParams&>(params));
  w.u64(list.size());
  for (const auto& t : list) {
    w.string(t.name);
    w.u64(static_cast<std::uint64_t>(t.rows));
    w.u64(static_cast<std::uint64_t>(t.cols));
    const Eigen::Map<const Mat> m(t.data, t.rows, t.cols);
    for (Eigen::Index i = 0; i < t.rows; ++i) {
      for (Eigen::Index j = 0; j < t.cols; ++j) w.f64(m(i, j));
    }
  }
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  out.write(w.data().data(), static_cast<std::streamsize>(w.data().size()));
  if (!out) fail(ErrorKind::kIo, "cannot write checkpoint '" + path.string() + "'");
}

ModelParams load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::kIo, "cannot open checkpoint '" + path.string() + "'");
  const std::string blob((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  BinaryReader r(blob, path.string());
  char magic[8];
  r.bytes(magic, sizeof magic);
  if (std::memcmp(magic, kCheckpointMagic, sizeof magic) != 0) {
    fail(ErrorKind::kInvalidRecord, path.string() + ": not a checkpoint");
  }
  if (r.u32() != kCheckpointVersion) {
    fail(ErrorKind::kInvalidRecord, path.string() + ": unsupported checkpoint version");
  }
  ModelParams params = allocate_params(model_config_from_json(r.string()));
  auto list = tensors(params);
  if (r.u64() != list.size()) fail(ErrorKind::kInvalidRecord, "checkpoint: tensor count mismatch");
  for (auto& t : list) {
    const std::string name = r.string();
    const auto rows = static_cast<Eigen::Index>(r.u64());
    const auto cols = static_cast<Eigen::Index>(r.u64());
    if (name != t.name || rows != t.rows || cols != t.cols) {
      fail(ErrorKind::kInvalidRecord, "checkpoint: unexpected tensor '" + name + "'");
    }
    Eigen::Map<Mat> m(t.data, rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i) {
      for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = r.f64();
    }
  }
  if (!r.at_end()) fail(ErrorKind::kInvalidRecord, path.string() + ": trailing bytes");
  return params;
}

}  // namespace egospeed
