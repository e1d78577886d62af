#include <gtest/gtest.h>

#include "egospeed/config.hpp"

using namespace egospeed;

namespace {

std::string error_of(const std::string& text) {
  try {
    parse_run_config(text);
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kInvalidConfig);
    return e.what();
  }
  ADD_FAILURE() << "accepted: " << text;
  return {};
}

}  // namespace

TEST(Config, EmptyObjectGivesDefaults) {
  const auto c = parse_run_config("{}");
  EXPECT_EQ(c.seed, 0u);
  EXPECT_EQ(c.synth.sessions, default_synth_config().sessions);
  EXPECT_EQ(c.train.patience, 50);
  EXPECT_EQ(c.model.variant, Variant::kFull);
}

TEST(Config, ParsesSections) {
  const auto c = parse_run_config(R"({
    "schema": "egospeed.config", "version": 1, "seed": 7,
    "synth": {"sessions": 2, "cue_rate": 0.5, "rule": {"brake_gap_m": 8}},
    "prepare": {"history": 5, "quota": [4, 2, 1], "ratios": {"val": 0.15}},
    "model": {"variant": "BaseT", "graph_widths": [8], "mlp_activation": "identity"},
    "train": {"batch_size": 64, "patience": 20, "oversample": false},
    "sweep": {"preset": "table2", "seeds": [0, 1]}
  })");
  EXPECT_EQ(c.seed, 7u);
  EXPECT_EQ(c.synth.sessions, 2);
  EXPECT_DOUBLE_EQ(c.synth.cue_rate, 0.5);
  EXPECT_DOUBLE_EQ(c.synth.rule.brake_gap_m, 8.0);
  EXPECT_EQ(c.prepare.assemble.history, 5);
  EXPECT_EQ(c.prepare.assemble.quota, (CategoryQuota{4, 2, 1}));
  EXPECT_DOUBLE_EQ(c.prepare.ratios.val, 0.15);
  EXPECT_EQ(c.model.variant, Variant::kBaseT);
  EXPECT_EQ(c.model.graph_widths, std::vector<int>{8});
  EXPECT_EQ(c.model.mlp_activation, Activation::kIdentity);
  EXPECT_EQ(c.train.batch_size, 64);
  EXPECT_FALSE(c.train.oversample);
  EXPECT_EQ(expand(c.sweep).size(), 32u);
}

TEST(Config, UnknownKeyIsNamed) {
  EXPECT_NE(error_of(R"({"train": {"patiance": 3}})").find("train.patiance"), std::string::npos);
  EXPECT_NE(error_of(R"({"bogus": 1})").find("bogus"), std::string::npos);
}

TEST(Config, WrongTypeIsNamed) {
  EXPECT_NE(error_of(R"({"train": {"batch_size": 6.5}})").find("train.batch_size"),
            std::string::npos);
  EXPECT_NE(error_of(R"({"model": {"quota": [1, 2]}})").find("model.quota"), std::string::npos);
  EXPECT_NE(error_of(R"({"sweep": {"preset": "table9"}})").find("sweep.preset"),
            std::string::npos);
}

TEST(Config, InvalidValueIsNamed) {
  EXPECT_NE(error_of(R"({"synth": {"fps": 0}})").find("synth.fps"), std::string::npos);
  EXPECT_NE(error_of(R"({"train": {"patience": 0}})").find("train"), std::string::npos);
  EXPECT_FALSE(error_of(R"({"version": 2})").empty());
  EXPECT_FALSE(error_of("[1, 2").empty());
}

TEST(Config, RoundTripThroughJson) {
  auto c = parse_run_config(R"({"seed": 3, "synth": {"fps": 25}, "model": {"cheb_order": 4}})");
  const auto again = parse_run_config(run_config_to_json(c));
  EXPECT_EQ(run_config_to_json(again), run_config_to_json(c));
  EXPECT_EQ(again.model.cheb_order, 4);
  EXPECT_DOUBLE_EQ(again.synth.fps, 25.0);
}

TEST(Config, ModelConfigRoundTrip) {
  ModelConfig m;
  m.variant = Variant::kBaseSingle;
  m.history = 15;
  m.cheb_order = 5;
  m.quota = {3, 4, 5};
  m.mlp_hidden = {7};
  m.graph_activation = Activation::kIdentity;
  const auto back = model_config_from_json(model_config_to_json(m));
  EXPECT_EQ(back.variant, m.variant);
  EXPECT_EQ(back.history, 15);
  EXPECT_EQ(back.cheb_order, 5);
  EXPECT_EQ(back.quota, m.quota);
  EXPECT_EQ(back.mlp_hidden, m.mlp_hidden);
  EXPECT_EQ(back.graph_activation, Activation::kIdentity);
}
