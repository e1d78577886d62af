#include <gtest/gtest.h>

#include <algorithm>

#include "egospeed/scene_synth.hpp"

using namespace egospeed;

namespace {

SynthConfig small_config(std::uint64_t seed = 0) {
  auto c = default_synth_config();
  c.sessions = 3;
  c.frames_per_session = 900;
  c.seed = seed;
  return c;
}

}  // namespace

TEST(OracleLabel, Cases) {
  LabelRule r;
  EXPECT_FALSE(oracle_label({false, 8, 5, false}, r).has_value());
  EXPECT_EQ(oracle_label({true, 15, 12, false}, r), Action::kFullBraking);
  EXPECT_EQ(oracle_label({true, 8, 4, false}, r), Action::kFullBraking);
  EXPECT_EQ(oracle_label({true, 12, 4, false}, r), Action::kSlightBraking);
  EXPECT_EQ(oracle_label({true, 12, -4, false}, r), Action::kFullAcceleration);
  EXPECT_EQ(oracle_label({true, 10, -4, false}, r), Action::kSlightAcceleration);
  EXPECT_EQ(oracle_label({true, 10, -4, true}, r), Action::kSlightBraking);
  EXPECT_EQ(oracle_label({true, 12, 4, true}, r), Action::kFullAcceleration);
}

TEST(Synth, DeterministicPerSeed) {
  const auto a = generate(small_config(4));
  const auto b = generate(small_config(4));
  const auto c = generate(small_config(5));
  ASSERT_EQ(a.frames.size(), 2700u);
  bool differs = false;
  for (std::size_t i = 0; i < a.frames.size(); ++i) {
    ASSERT_EQ(a.frames[i].objects.size(), b.frames[i].objects.size());
    for (std::size_t k = 0; k < a.frames[i].objects.size(); ++k) {
      EXPECT_EQ(a.frames[i].objects[k].x1, b.frames[i].objects[k].x1);
    }
    EXPECT_EQ(a.sensors[i].brake_pressure, b.sensors[i].brake_pressure);
    differs = differs || a.latents[i].gap_m != c.latents[i].gap_m;
  }
  EXPECT_TRUE(differs);
}

TEST(Synth, SessionMatchesWholeRun) {
  const auto c = small_config(2);
  const auto all = generate(c);
  const auto one = generate_session(c, 1);
  ASSERT_EQ(one.frames.size(), 900u);
  EXPECT_EQ(one.frames[0].session, "s001");
  EXPECT_EQ(one.latents[500].gap_m, all.latents[1400].gap_m);
}

TEST(Synth, SensorLabelsFollowTheHiddenRule) {
  for (const auto& c : {default_synth_config(), confounded_synth_config()}) {
    const auto logs = generate(c);
    ASSERT_EQ(logs.sensors.size(), logs.latents.size());
    for (std::size_t i = 0; i < logs.sensors.size(); ++i) {
      ASSERT_EQ(derive_label(logs.sensors[i], c.thresholds), oracle_label(logs.latents[i], c.rule))
          << i;
    }
  }
}

TEST(Synth, GapStaysInBand) {
  const auto c = small_config();
  const auto logs = generate(c);
  for (const auto& s : logs.latents) {
    EXPECT_GE(s.gap_m, c.gap_min_m - 1e-9);
    EXPECT_LE(s.gap_m, c.gap_max_m + 1e-9);
  }
}

TEST(Synth, LeadBoxHeightFollowsPinholeProjection) {
  auto c = small_config(7);
  c.bbox_jitter_px = 0;
  const auto logs = generate(c);
  const int delay = 10;
  std::size_t checked = 0;
  for (std::size_t i = 0; i + delay < logs.frames.size(); ++i) {
    if (logs.frames[i].session != logs.frames[i + delay].session) continue;
    const auto& lead = logs.frames[i].objects.at(0);
    const double gap = logs.latents[i + delay].gap_m;
    EXPECT_EQ(lead.category, Category::kCar);
    EXPECT_NEAR(lead.y2 - lead.y1, c.focal_px * c.car_height_m / gap, 1e-9);
    EXPECT_NEAR(lead.x2 - lead.x1, c.focal_px * c.car_width_m / gap, 1e-9);
    ++checked;
  }
  EXPECT_GT(checked, 2000u);
}

TEST(Synth, UrbanOnlyClutter) {
  auto c = default_synth_config();
  c.highway_fraction = 1.0;
  const auto logs = generate(c);
  for (const auto& f : logs.frames) {
    for (const auto& o : f.objects) {
      EXPECT_NE(o.category, Category::kPedestrian);
      EXPECT_NE(o.category, Category::kStopSign);
    }
  }
}

TEST(Synth, ConfoundedCueShowsTrafficLight) {
  const auto c = confounded_synth_config();
  const auto logs = generate(c);
  const int delay = 10;
  for (std::size_t i = 0; i + delay < logs.frames.size(); ++i) {
    if (logs.frames[i].session != logs.frames[i + delay].session) continue;
    const bool light = std::any_of(logs.frames[i].objects.begin(), logs.frames[i].objects.end(),
                                   [](const Detection& d) {
                                     return d.category == Category::kTrafficLight;
                                   });
    EXPECT_EQ(light, logs.latents[i + delay].cue) << i;
  }
}

TEST(Synth, DefaultDatasetIsBalancedEnough) {
  const auto logs = generate(default_synth_config());
  const auto ds = prepare_dataset(logs.frames, logs.sensors, PrepareConfig{});
  const auto total = ds.splits.train.size() + ds.splits.val.size() + ds.splits.test.size();
  EXPECT_GE(total, 2000u);
  const auto h = class_histogram(ds.splits.test);
  for (auto n : h) EXPECT_GT(n, 0u);
  const auto majority = *std::max_element(h.begin(), h.end());
  EXPECT_LE(static_cast<double>(majority) / static_cast<double>(ds.splits.test.size()), 0.30);
}

TEST(SynthConfig, ValidationNamesTheField) {
  auto c = default_synth_config();
  c.fps = 0;
  try {
    c.validate();
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kInvalidConfig);
    EXPECT_NE(std::string(e.what()).find("fps"), std::string::npos);
  }
}
