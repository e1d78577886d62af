#include <benchmark/benchmark.h>

#include <random>

#include "egospeed/engine.hpp"
#include "egospeed/training.hpp"

using namespace egospeed;

namespace {

std::vector<Clip> make_clips(const ModelConfig& cfg, int count) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0, 1);
  std::bernoulli_distribution present(0.5);
  const int n = cfg.quota.total();
  std::vector<Clip> clips(count);
  for (auto& c : clips) {
    c.mask.resize(cfg.history, n);
    for (int t = 0; t < cfg.history; ++t) {
      Mat x = Mat::Zero(n, 4);
      for (int i = 0; i < n; ++i) {
        c.mask(t, i) = present(rng);
        if (c.mask(t, i)) x.row(i) = Eigen::RowVector4d(u(rng), u(rng), u(rng), u(rng));
      }
      c.features.push_back(x);
    }
    c.label = action_from_index(static_cast<int>(rng() % 4));
  }
  return clips;
}

ModelConfig config_for(Variant v, int order = 1) {
  ModelConfig cfg;
  cfg.variant = v;
  cfg.cheb_order = order;
  return cfg;
}

void BM_ChebConv(benchmark::State& state) {
  const int k = static_cast<int>(state.range(0));
  std::mt19937_64 rng(2);
  std::normal_distribution<double> g;
  ChebLayerParams p;
  for (int i = 0; i <= k; ++i) p.weights.push_back(Mat::NullaryExpr(16, 32, [&] { return g(rng); }));
  p.bias = Vec::Zero(32);
  const Mat x = Mat::NullaryExpr(20, 16, [&] { return g(rng); });
  const auto op = make_graph_operator(12, 20);
  for (auto _ : state) benchmark::DoNotOptimize(cheb_conv(x, op, p, Activation::kRelu));
}
BENCHMARK(BM_ChebConv)->Arg(1)->Arg(3)->Arg(5);

void BM_LstmEncode(benchmark::State& state) {
  const auto params = init_params(config_for(Variant::kBaseT), 1);
  const auto& lstm = *params.views.front().lstm;
  const Mat seq = Mat::Random(10, lstm.layers[0].in_dim());
  for (auto _ : state) benchmark::DoNotOptimize(lstm_encode(seq, lstm));
}
BENCHMARK(BM_LstmEncode);

void BM_Forward(benchmark::State& state) {
  const auto v = kAllVariants[state.range(0)];
  const auto cfg = config_for(v);
  const auto params = init_params(cfg, 1);
  const auto clips = make_clips(cfg, 256);
  const auto ptrs = pointers(clips);
  for (auto _ : state) benchmark::DoNotOptimize(batch_logits(ptrs, params));
  state.SetItemsProcessed(state.iterations() * static_cast<long>(clips.size()));
  state.SetLabel(std::string(to_string(v)));
}
BENCHMARK(BM_Forward)->DenseRange(0, 4)->Unit(benchmark::kMillisecond);

void BM_TrainStep(benchmark::State& state) {
  const auto cfg = config_for(Variant::kFull);
  auto params = init_params(cfg, 1);
  const auto clips = make_clips(cfg, static_cast<int>(state.range(0)));
  const auto ptrs = pointers(clips);
  AdamState adam = AdamState::for_params(params);
  GradientSet grads;
  for (auto _ : state) {
    benchmark::DoNotOptimize(batch_loss_and_gradient(ptrs, params, grads));
    adam_step(params, grads, adam, AdamHyper{});
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_TrainStep)->Arg(64)->Arg(512)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
