#include <gtest/gtest.h>

#include <set>
#include <sstream>

#include "egospeed/evaluation.hpp"
#include "egospeed/scene_synth.hpp"
#include "fixtures.hpp"

using namespace egospeed;
using egospeed::testing::random_clips;
using egospeed::testing::tiny_config;

namespace {

std::vector<std::string> lines(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

}  // namespace

TEST(Metrics, ConfusionMatrixByHand) {
  const std::vector<int> pred{0, 0, 1, 2, 3, 3, 0, 2};
  const std::vector<Action> truth{Action::kFullBraking,        Action::kSlightBraking,
                                  Action::kSlightBraking,      Action::kSlightAcceleration,
                                  Action::kFullAcceleration,   Action::kSlightAcceleration,
                                  Action::kFullBraking,        Action::kSlightAcceleration};
  const auto m = metrics_from_predictions(pred, truth);
  EXPECT_EQ(m.total, 8u);
  EXPECT_EQ(m.confusion[1][0], 1u);
  EXPECT_EQ(m.confusion[2][3], 1u);
  EXPECT_EQ(m.confusion[2][2], 2u);
  EXPECT_DOUBLE_EQ(*m.recall[0], 100.0);
  EXPECT_DOUBLE_EQ(*m.recall[1], 50.0);
  EXPECT_DOUBLE_EQ(*m.recall[2], 200.0 / 3);
  EXPECT_DOUBLE_EQ(*m.recall[3], 100.0);
  EXPECT_DOUBLE_EQ(m.accuracy, 75.0);
}

TEST(Metrics, AbsentClassHasNoRecall) {
  const std::vector<int> pred{0, 3};
  const std::vector<Action> truth{Action::kFullBraking, Action::kFullBraking};
  const auto m = metrics_from_predictions(pred, truth);
  EXPECT_FALSE(m.recall[1].has_value());
  EXPECT_FALSE(m.recall[3].has_value());
  EXPECT_DOUBLE_EQ(*m.recall[0], 50.0);
  EXPECT_NE(metrics_to_json(m).find("null"), std::string::npos);
}

TEST(Evaluate, PredictMatchesForwardArgmax) {
  const auto cfg = tiny_config(Variant::kFull);
  const auto p = init_params(cfg, 4);
  const auto clips = random_clips(cfg, 300, 6);
  const auto pred = predict(p, clips);
  for (std::size_t i = 0; i < clips.size(); ++i) {
    Eigen::Index best;
    forward(clips[i], p).logits.maxCoeff(&best);
    EXPECT_EQ(pred[i], best);
  }
  EXPECT_THROW(evaluate(p, clips, Variant::kBase), Error);
  EXPECT_THROW(evaluate(p, {}, Variant::kFull), Error);
}

TEST(Inference, EmptyClipSetTakesNoTime) {
  const auto p = init_params(tiny_config(Variant::kBase), 1);
  const auto t = measure_inference(p, {}, Variant::kBase);
  EXPECT_EQ(t.total_seconds, 0.0);
  EXPECT_EQ(t.per_clip_us, 0.0);
}

TEST(Inference, FullModelIsSlowerThanBase) {
  ModelConfig cfg;
  cfg.variant = Variant::kBase;
  const auto clips = random_clips(cfg, 200, 3);
  const auto base = measure_inference(init_params(cfg, 1), clips, Variant::kBase, 5);
  cfg.variant = Variant::kFull;
  const auto full = measure_inference(init_params(cfg, 1), clips, Variant::kFull, 5);
  EXPECT_GT(base.per_clip_us, 0.0);
  EXPECT_GE(full.per_clip_us, base.per_clip_us);
}

TEST(Sweep, PresetsExpandToTheirCellCounts) {
  const auto t1 = expand(table1_sweep());
  ASSERT_EQ(t1.size(), 5u);
  std::set<Variant> v1;
  for (const auto& k : t1) {
    v1.insert(k.variant);
    EXPECT_EQ(k.setting.history, 10);
    EXPECT_EQ(k.setting.future, 1);
    EXPECT_EQ(k.setting.order, 1);
  }
  EXPECT_EQ(v1.size(), 5u);
  const auto t2 = expand(table2_sweep());
  EXPECT_EQ(t2.size(), 16u);
  std::set<std::string> names;
  for (const auto& k : t2) names.insert(k.to_string());
  EXPECT_EQ(names.size(), 16u);
  EXPECT_TRUE(names.count("Full/T15/FT10/K5/Q20-10-10/s0"));
  EXPECT_TRUE(names.count("BaseT/T2/FT1/K5/Q20-10-10/s0"));
  EXPECT_FALSE(names.count("BaseSingle/T15/FT1/K1/Q20-10-10/s0"));
}

TEST(Sweep, CartesianProduct) {
  SweepSpec s;
  s.histories = {2, 5};
  s.futures = {1};
  s.orders = {1, 3, 5};
  s.variants = {Variant::kBase, Variant::kFull};
  s.seeds = {0, 1};
  EXPECT_EQ(expand(s).size(), 24u);
  s.variants.clear();
  EXPECT_THROW(expand(s), Error);
}

TEST(ResultsTable, RowsAndMeanRow) {
  CellResult a, b, c;
  a.key.seed = 0;
  b.key.seed = 1;
  MetricsReport m;
  m.recall = {50.0, std::nullopt, 25.0, 100.0};
  m.accuracy = 62.5;
  a.metrics = m;
  a.timing.per_clip_us = 10;
  m.recall[1] = 40.0;
  m.accuracy = 70;
  b.metrics = m;
  b.timing.per_clip_us = 20;
  c.key.variant = Variant::kBase;
  c.error = "boom";
  const std::vector<CellResult> cells{a, b, c};
  const auto rows = lines(results_table(cells));
  ASSERT_EQ(rows.size(), 5u);
  EXPECT_EQ(rows[0], kResultsHeader);
  EXPECT_EQ(rows[1], "Full,10,1,1,20,10,10,0,50.0000,NA,25.0000,100.0000,62.5000,10.0000");
  EXPECT_EQ(rows[3], "Base,10,1,1,20,10,10,0,NA,NA,NA,NA,NA,NA");
  EXPECT_EQ(rows[4], "Full,10,1,1,20,10,10,mean,50.0000,40.0000,25.0000,100.0000,66.2500,15.0000");
}

TEST(TrainReportTable, OmitsWallClock) {
  TrainReport r;
  r.epochs = {{1, 0.5, 0.25, 3.0}, {2, 0.125, 0.0625, 4.0}};
  EXPECT_EQ(train_report_table(r), "epoch,train_loss,val_loss\n1,0.5,0.25\n2,0.125,0.0625\n");
}

TEST(Ablation, SmallSweepRecordsEveryCell) {
  auto sc = default_synth_config();
  sc.sessions = 2;
  sc.frames_per_session = 600;
  const auto logs = generate(sc);
  SweepSpec spec;
  spec.settings = {{3, 1, 1}};
  spec.variants = {Variant::kBase, Variant::kBaseT};
  AblationOptions opt;
  opt.model.graph_widths = {4};
  opt.model.lstm_hidden = 4;
  opt.model.lstm_layers = 1;
  opt.model.mlp_hidden = {8};
  opt.threads = 2;
  int seen = 0;
  opt.on_cell = [&](const CellResult&) { ++seen; };
  TrainConfig tc;
  tc.max_epochs = 2;
  tc.batch_size = 32;
  const auto r = run_ablation(logs.frames, logs.sensors, spec, tc, opt);
  ASSERT_EQ(r.cells.size(), 2u);
  EXPECT_EQ(seen, 2);
  EXPECT_EQ(r.cells[0].key.variant, Variant::kBase);
  for (const auto& c : r.cells) {
    EXPECT_FALSE(c.error.has_value()) << *c.error;
    EXPECT_TRUE(c.metrics.has_value());
  }
  EXPECT_EQ(lines(loss_curves(r.cells)).size(), 5u);
}
