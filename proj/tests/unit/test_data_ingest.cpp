#include <gtest/gtest.h>

#include <map>
#include <set>

#include "egospeed/data_ingest.hpp"

using namespace egospeed;

namespace {

FrameDetections frame(const std::string& session, std::int64_t index,
                      std::vector<Detection> objects = {}) {
  return {session, index, index / 3.0, 1280, 720, std::move(objects)};
}

SensorSample sensor(const std::string& session, std::int64_t index, double brake, double accel,
                    double steering = 0, Scenario scenario = Scenario::kHighway) {
  SensorSample s;
  s.session = session;
  s.frame_index = index;
  s.brake_pressure = brake;
  s.accel_pedal = accel;
  s.steering_angle = steering;
  s.scenario = scenario;
  return s;
}

Detection box(Category c, double conf, double x = 100) {
  return {c, x, 100, x + 50, 150, conf};
}

Clip labelled(Action a) {
  Clip c;
  c.label = a;
  return c;
}

}  // namespace

TEST(Downsample, EmptyInputGivesEmptyOutput) {
  std::vector<int> none;
  EXPECT_TRUE(downsample<int>(none, 30, 3).empty());
}

TEST(Downsample, KeepsEveryTenthRecordAt30To3) {
  std::vector<int> v(35);
  for (int i = 0; i < 35; ++i) v[i] = i;
  EXPECT_EQ(downsample<int>(v, 30, 3), (std::vector<int>{0, 10, 20, 30}));
}

TEST(Downsample, RejectsNonPositiveTargetRate) {
  std::vector<int> v(5);
  try {
    downsample<int>(v, 30, 0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kInvalidConfig);
  }
  EXPECT_THROW(downsample<int>(v, 30, -3), Error);
}

TEST(DeriveLabel, PaperWorkedExample) {
  EXPECT_EQ(derive_label(sensor("s", 0, 1000, 0, 0, Scenario::kHighway)), Action::kFullBraking);
  EXPECT_EQ(derive_label(sensor("s", 0, 1000, 0, 0, Scenario::kUrban)), Action::kSlightBraking);
}

TEST(DeriveLabel, NoPedalIsCoast) {
  EXPECT_FALSE(derive_label(sensor("s", 0, 0, 0)).has_value());
}

TEST(DeriveLabel, AcceleratorThresholds) {
  EXPECT_EQ(derive_label(sensor("s", 0, 0, 21.9, 0, Scenario::kHighway)),
            Action::kSlightAcceleration);
  EXPECT_EQ(derive_label(sensor("s", 0, 0, 22.0, 0, Scenario::kHighway)),
            Action::kFullAcceleration);
  EXPECT_EQ(derive_label(sensor("s", 0, 0, 20.0, 0, Scenario::kUrban)), Action::kFullAcceleration);
}

TEST(IsMoving, ExplicitFlagWins) {
  auto s = sensor("s", 0, 0, 0);
  EXPECT_FALSE(is_moving(s));
  s.is_moving = true;
  EXPECT_TRUE(is_moving(s));
  auto p = sensor("s", 0, 100, 0);
  EXPECT_TRUE(is_moving(p));
  p.is_moving = false;
  EXPECT_FALSE(is_moving(p));
}

TEST(CandidateWindows, ElevenFramesGiveOneClipAnchoredAtNine) {
  const auto w = candidate_windows(11, 10, 1);
  ASSERT_EQ(w.size(), 1u);
  EXPECT_EQ(w[0].first, 0u);
  EXPECT_EQ(w[0].anchor, 9u);
  EXPECT_EQ(w[0].target, 10u);
}

TEST(CandidateWindows, InsufficientHistory) { EXPECT_TRUE(candidate_windows(1, 2, 1).empty()); }

TEST(CandidateWindows, MatchesEnumeration) {
  for (int len : {0, 1, 5, 25, 30, 40}) {
    for (int t : {1, 2, 10, 15}) {
      for (int ft : {1, 5, 10}) {
        std::vector<std::size_t> anchors;
        for (int a = 0; a < len; ++a) {
          if (a - t + 1 >= 0 && a + ft < len) anchors.push_back(a);
        }
        const auto w = candidate_windows(len, t, ft);
        ASSERT_EQ(w.size(), anchors.size()) << len << " " << t << " " << ft;
        for (std::size_t i = 0; i < w.size(); ++i) EXPECT_EQ(w[i].anchor, anchors[i]);
      }
    }
  }
  EXPECT_EQ(candidate_windows(30, 15, 10).size(), 6u);
}

TEST(CandidateWindows, RejectsBadLengths) {
  EXPECT_THROW(candidate_windows(10, 0, 1), Error);
  EXPECT_THROW(candidate_windows(10, 1, 0), Error);
}

TEST(AlignSensors, MissingSensorNamesTheFrame) {
  std::vector<FrameDetections> frames{frame("a", 0), frame("a", 10)};
  std::vector<SensorSample> sensors{sensor("a", 0, 0, 10)};
  try {
    align_sensors(frames, sensors);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kDataAlignment);
    EXPECT_NE(std::string(e.what()).find("10"), std::string::npos);
  }
}

TEST(Eligibility, SteeringAndStationaryStart) {
  std::vector<FrameDetections> frames;
  std::vector<SensorSample> sensors;
  for (int i = 0; i < 4; ++i) {
    frames.push_back(frame("a", i));
    sensors.push_back(sensor("a", i, 0, 10, i == 3 ? 31.0 : 30.0));
  }
  // T=2, FT=1 windows: anchors 1 and 2; the second covers frame 3 at 31 deg.
  auto ok = eligibility_filter(frames, sensors, 2, 1);
  EXPECT_EQ(ok, (std::vector<bool>{true, false}));

  sensors[0].accel_pedal = 0;
  ok = eligibility_filter(frames, sensors, 2, 1);
  EXPECT_FALSE(ok[0]);
}

TEST(SelectTopN, KeepsMostConfidentPerCategoryAndZerosPadding) {
  CategoryQuota q{2, 1, 1};
  auto f = frame("a", 0,
                 {box(Category::kCar, 0.5, 10), box(Category::kTruck, 0.9, 200),
                  box(Category::kBus, 0.7, 400), box(Category::kPedestrian, 0.8, 600)});
  const auto top = select_top_n(f, q);
  ASSERT_EQ(top.features.rows(), 4);
  EXPECT_TRUE(top.mask(0) && top.mask(1) && top.mask(2));
  EXPECT_FALSE(top.mask(3));
  EXPECT_DOUBLE_EQ(top.features(0, 0), 200.0 / 1280);
  EXPECT_DOUBLE_EQ(top.features(1, 0), 400.0 / 1280);
  EXPECT_DOUBLE_EQ(top.features(2, 0), 600.0 / 1280);
  EXPECT_TRUE(top.features.row(3).isZero(0));
}

TEST(AssembleClips, MaskedRowsAreZeroAndCountsWithinQuota) {
  CategoryQuota q{2, 1, 1};
  std::vector<FrameDetections> frames;
  std::vector<SensorSample> sensors;
  for (int i = 0; i < 12; ++i) {
    std::vector<Detection> objs{box(Category::kCar, 0.9)};
    for (int k = 0; k < i % 4; ++k) objs.push_back(box(Category::kPedestrian, 0.5 + 0.1 * k));
    frames.push_back(frame("a", i, objs));
    sensors.push_back(sensor("a", i, i % 2 ? 500 : 0, i % 2 ? 0 : 30));
  }
  AssembleConfig cfg;
  cfg.history = 3;
  cfg.future = 2;
  cfg.quota = q;
  const auto clips = assemble_clips(frames, sensors, cfg);
  ASSERT_EQ(clips.size(), 8u);
  for (const auto& c : clips) {
    validate(c, q);
    for (int t = 0; t < c.frames(); ++t) {
      for (int n = 0; n < c.nodes(); ++n) {
        if (!c.mask(t, n)) EXPECT_TRUE(c.features[t].row(n).isZero(0));
      }
      EXPECT_LE(c.mask.row(t).segment(2, 1).count(), 1);
    }
    const auto target = c.meta.anchor_frame + 2;
    EXPECT_EQ(c.label, target % 2 ? Action::kSlightBraking : Action::kFullAcceleration);
  }
}

TEST(SplitCounts, ExactRatios) {
  const auto c = split_counts(100);
  EXPECT_EQ(c.train, 70u);
  EXPECT_EQ(c.val, 10u);
  EXPECT_EQ(c.test, 20u);
}

TEST(SplitCounts, PaperDatasetSize) {
  const auto c = split_counts(58721);
  EXPECT_EQ(c.train, 41105u);
  EXPECT_EQ(c.val, 5872u);
  EXPECT_EQ(c.test, 11744u);
}

TEST(SplitDataset, DeterministicAndExhaustive) {
  std::vector<Clip> clips;
  for (int i = 0; i < 50; ++i) {
    Clip c = labelled(action_from_index(i % 4));
    c.meta.anchor_frame = i;
    c.meta.session = "s" + std::to_string(i % 5);
    clips.push_back(c);
  }
  const auto a = split_dataset(clips, {}, 7);
  const auto b = split_dataset(clips, {}, 7);
  std::set<std::int64_t> seen;
  for (const auto* s : {&a.train, &a.val, &a.test}) {
    for (const auto& c : *s) seen.insert(c.meta.anchor_frame);
  }
  EXPECT_EQ(seen.size(), 50u);
  ASSERT_EQ(a.test.size(), b.test.size());
  for (std::size_t i = 0; i < a.test.size(); ++i) {
    EXPECT_EQ(a.test[i].meta.anchor_frame, b.test[i].meta.anchor_frame);
  }
}

TEST(SplitDataset, GroupBySessionKeepsSessionsTogether) {
  std::vector<Clip> clips;
  for (int i = 0; i < 100; ++i) {
    Clip c = labelled(Action::kFullBraking);
    c.meta.session = "s" + std::to_string(i / 10);
    clips.push_back(c);
  }
  const auto s = split_dataset(clips, {}, 3, true);
  std::map<std::string, int> owner;
  int split_id = 0;
  for (const auto* part : {&s.train, &s.val, &s.test}) {
    for (const auto& c : *part) {
      auto [it, inserted] = owner.emplace(c.meta.session, split_id);
      EXPECT_EQ(it->second, split_id) << c.meta.session;
    }
    ++split_id;
  }
  EXPECT_EQ(s.train.size() + s.val.size() + s.test.size(), 100u);
}

TEST(Oversample, UniformHistogram) {
  std::vector<Clip> train;
  const int counts[] = {40, 25, 7, 3};
  for (int a = 0; a < 4; ++a) {
    for (int i = 0; i < counts[a]; ++i) train.push_back(labelled(action_from_index(a)));
  }
  const auto out = oversample(train, 11);
  const auto h = class_histogram(out);
  for (int a = 0; a < 4; ++a) EXPECT_EQ(h[a], 40u);
}

TEST(Oversample, EmptyClassStaysEmpty) {
  std::vector<Clip> train{labelled(Action::kFullBraking), labelled(Action::kFullBraking),
                          labelled(Action::kSlightBraking)};
  const auto h = class_histogram(oversample(train, 1));
  EXPECT_EQ(h[0], 2u);
  EXPECT_EQ(h[1], 2u);
  EXPECT_EQ(h[2], 0u);
  EXPECT_EQ(h[3], 0u);
}

TEST(Validate, RejectsInvertedBox) {
  auto f = frame("a", 0, {{Category::kCar, 50, 10, 40, 20, 0.5}});
  EXPECT_THROW(validate(f), Error);
}
