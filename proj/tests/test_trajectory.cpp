#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <vector>

#include "oracles.hpp"
#include "sam2mot/trajectory.hpp"

using namespace sam2mot;

namespace {

const TrackerConfig kCfg{};
const ImageGrid kGrid{20, 20};

Trajectory fresh(std::uint64_t id = 1) {
  return make_trajectory(id, Detection{{2, 2, 5, 5}, 0.9, 0}, 1, kCfg);
}

}  // namespace

TEST(TrackerConfig, DefaultsAreThePublishedValues) {
  EXPECT_EQ(kCfg.tau_r, 8.0);
  EXPECT_EQ(kCfg.tau_p, 6.0);
  EXPECT_EQ(kCfg.tau_s, 2.0);
  EXPECT_EQ(kCfg.tolerance_frames, 25);
  EXPECT_EQ(kCfg.r_threshold, 0.5);
  EXPECT_EQ(kCfg.variance_window, 10);
  EXPECT_EQ(kCfg.miou_occlusion_threshold, 0.8);
  EXPECT_NO_THROW(kCfg.validate());
}

TEST(TrackerConfig, ValidationRejectsBadOrderings) {
  TrackerConfig c;
  c.tau_p = 9.0;
  EXPECT_THROW(c.validate(), InputError);
  c = {};
  c.tolerance_frames = 0;
  EXPECT_THROW(c.validate(), InputError);
  c = {};
  c.variance_window = 1;
  EXPECT_THROW(c.validate(), InputError);
  c = {};
  c.r_threshold = 1.5;
  EXPECT_THROW(c.validate(), InputError);
}

TEST(ClassifyState, PaperThresholds) {
  EXPECT_EQ(classify_state(8.5, kCfg), TrajectoryState::reliable);
  EXPECT_EQ(classify_state(8.0, kCfg), TrajectoryState::pending);
  EXPECT_EQ(classify_state(6.0, kCfg), TrajectoryState::suspicious);
  EXPECT_EQ(classify_state(2.0, kCfg), TrajectoryState::lost);
  EXPECT_THROW(classify_state(std::numeric_limits<double>::quiet_NaN(), kCfg), InputError);
}

TEST(ClassifyState, BoundaryNeighbourhoods) {
  constexpr double eps = 1e-9;
  EXPECT_EQ(classify_state(8.0 + eps, kCfg), TrajectoryState::reliable);
  EXPECT_EQ(classify_state(8.0 - eps, kCfg), TrajectoryState::pending);
  EXPECT_EQ(classify_state(6.0 + eps, kCfg), TrajectoryState::pending);
  EXPECT_EQ(classify_state(6.0 - eps, kCfg), TrajectoryState::suspicious);
  EXPECT_EQ(classify_state(2.0 + eps, kCfg), TrajectoryState::suspicious);
  EXPECT_EQ(classify_state(2.0 - eps, kCfg), TrajectoryState::lost);
  EXPECT_EQ(classify_state(-1e300, kCfg), TrajectoryState::lost);
  EXPECT_EQ(classify_state(std::numeric_limits<double>::infinity(), kCfg),
            TrajectoryState::reliable);
}

TEST(ClassifyState, MonotoneInLogits) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-5.0, 15.0);
  for (int i = 0; i < 2000; ++i) {
    const double a = u(rng), b = u(rng);
    if (a <= b) {
      ASSERT_LE(classify_state(a, kCfg), classify_state(b, kCfg));
    } else {
      ASSERT_GE(classify_state(a, kCfg), classify_state(b, kCfg));
    }
  }
}

TEST(LogitsVariance, WorkedValues) {
  EXPECT_EQ(logits_variance(std::vector<double>(10, 5.0), 10), 0.0);
  std::vector<double> ramp;
  for (int i = 1; i <= 10; ++i) ramp.push_back(i);
  EXPECT_DOUBLE_EQ(logits_variance(ramp, 10), 8.25);
  EXPECT_DOUBLE_EQ(logits_variance(std::vector<double>{2.0, 4.0}, 10), 1.0);
  EXPECT_THROW(logits_variance(std::vector<double>{}, 10), InputError);
}

TEST(LogitsVariance, UsesOnlyTheRecentWindow) {
  std::vector<double> h{100.0, -50.0};
  for (int i = 0; i < 10; ++i) h.push_back(3.0);
  EXPECT_EQ(logits_variance(h, 10), 0.0);
}

TEST(LogitsVariance, MatchesDirectSummation) {
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> u(0.0, 9.0);
  std::uniform_int_distribution<int> len(1, 25);
  for (int i = 0; i < 2000; ++i) {
    std::vector<double> h(static_cast<std::size_t>(len(rng)));
    for (auto& x : h) x = u(rng);
    const double got = logits_variance(h, 10);
    ASSERT_NEAR(got, static_cast<double>(oracle::variance(h, 10)), 1e-12);
  }
}

TEST(LogitsHistory, EvictsOldestAtCapacity) {
  LogitsHistory h(3);
  for (double v : {1.0, 2.0, 3.0, 4.0}) h.push(v);
  ASSERT_EQ(h.size(), 3U);
  EXPECT_EQ(h.values()[0], 2.0);
  EXPECT_EQ(h.latest(), 4.0);
}

TEST(UpdateTrajectory, LostCounterRules) {
  const Mask m = Mask::from_box(kGrid, {3, 3, 4, 4});
  Trajectory t = update_trajectory(fresh(), m, 1.0, 2, kCfg);
  EXPECT_EQ(t.state, TrajectoryState::lost);
  EXPECT_EQ(t.frames_lost, 1);
  EXPECT_EQ(t.last_box, (Box{3, 3, 4, 4}));

  t.frames_lost = 3;
  t = update_trajectory(t, m, 9.0, 3, kCfg);
  EXPECT_EQ(t.state, TrajectoryState::reliable);
  EXPECT_EQ(t.frames_lost, 0);

  Trajectory gone = fresh();
  for (int f = 0; f < 30; ++f) gone = update_trajectory(gone, Mask::empty(kGrid), 1.0, 2 + f, kCfg);
  EXPECT_EQ(gone.frames_lost, 30);
  EXPECT_FALSE(gone.last_box.has_value());
  EXPECT_EQ(gone.logits_history.size(), 10U);
}

TEST(UpdateTrajectory, RandomizedInvariants) {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(0.0, 10.0);
  for (int run = 0; run < 200; ++run) {
    Trajectory t = fresh();
    bool removable = false;
    for (int f = 0; f < 60; ++f) {
      const double logits = (rng() % 3 == 0) ? u(rng) : 1.0;
      t = update_trajectory(t, Mask::empty(kGrid), logits, 2 + f, kCfg);
      ASSERT_EQ(t.state, classify_state(logits, kCfg));
      ASSERT_FALSE(t.state == TrajectoryState::lost && t.frames_lost == 0);
      ASSERT_TRUE(t.state == TrajectoryState::lost || t.frames_lost == 0);
      ASSERT_LE(t.logits_history.size(), t.logits_history.capacity());
      // Once removable, further lost updates keep it removable.
      if (removable && t.state == TrajectoryState::lost) {
        ASSERT_TRUE(should_remove(t, kCfg));
      }
      removable = should_remove(t, kCfg);
    }
  }
}

TEST(ShouldRemove, StrictlyBeyondTolerance) {
  Trajectory t = fresh();
  t.state = TrajectoryState::lost;
  t.frames_lost = 25;
  EXPECT_FALSE(should_remove(t, kCfg));
  t.frames_lost = 26;
  EXPECT_TRUE(should_remove(t, kCfg));
  t.state = TrajectoryState::pending;
  t.frames_lost = 100;
  EXPECT_FALSE(should_remove(t, kCfg));
}

TEST(AdditionFilter, ThreeStages) {
  const ImageGrid g{40, 20};
  // Tracked pixels fill columns 0..19; the rest of the grid is untracked.
  const std::vector<Mask> tracked{Mask::from_box(g, {0, 0, 20, 20})};
  const Mask untracked = untracked_region(g, tracked);

  const std::vector<Detection> dets{
      {{25, 5, 10, 10}, 0.3, 0},  // low confidence: stage 1
      {{25, 5, 10, 10}, 0.9, 0},  // unmatched, fully untracked: accepted
      {{14, 5, 10, 10}, 0.9, 0},  // 40% of its box untracked: rejected
      {{2, 2, 10, 10}, 0.9, 0},   // matched to the existing track
  };
  const auto high = high_confidence_indices(dets, kCfg);
  ASSERT_EQ(high, (std::vector<std::size_t>{1, 2, 3}));
  std::vector<Box> high_boxes;
  for (auto i : high) high_boxes.push_back(dets[i].box);
  const std::vector<Box> track_boxes{{0, 0, 12, 12}};
  const MatchResult match = gated_match(track_boxes, high_boxes, kCfg.match_iou_gate);
  ASSERT_EQ(match.matches, (Assignment{{0, 2}}));

  EXPECT_DOUBLE_EQ(box_region_overlap(dets[2].box, untracked), 0.4);
  const auto accepted = addition_filter(dets, match, untracked, kCfg);
  ASSERT_EQ(accepted.size(), 1U);
  EXPECT_EQ(accepted[0], dets[1]);
}

TEST(AdditionFilter, AcceptedDetectionsSatisfyEveryStage) {
  std::mt19937_64 rng(12);
  std::uniform_int_distribution<int> pos(0, 50), size(3, 14);
  std::uniform_real_distribution<double> conf(0.0, 1.0);
  const ImageGrid g{64, 64};
  for (int run = 0; run < 300; ++run) {
    std::vector<Mask> tracked;
    std::vector<Box> track_boxes;
    for (int k = 0; k < run % 4; ++k) {
      const Box b{pos(rng), pos(rng), size(rng), size(rng)};
      tracked.push_back(Mask::from_box(g, b));
      track_boxes.push_back(b);
    }
    std::vector<Detection> dets(static_cast<std::size_t>(run % 6));
    for (auto& d : dets) d = {{pos(rng), pos(rng), size(rng), size(rng)}, conf(rng), 0};
    const auto high = high_confidence_indices(dets, kCfg);
    std::vector<Box> high_boxes;
    for (auto i : high) high_boxes.push_back(dets[i].box);
    const auto match = gated_match(track_boxes, high_boxes, kCfg.match_iou_gate);
    const Mask untracked = untracked_region(g, tracked);
    for (const auto& d : addition_filter(dets, match, untracked, kCfg)) {
      ASSERT_GT(d.confidence, kCfg.det_conf_threshold);
      ASSERT_GT(box_region_overlap(d.box, untracked), kCfg.r_threshold);
      bool matched = false;
      for (const auto& [t, hd] : match.matches) matched = matched || high_boxes[hd] == d.box;
      ASSERT_FALSE(matched);
      ASSERT_NE(std::find(dets.begin(), dets.end(), d), dets.end());
    }
  }
}

TEST(ShouldReconstruct, RequiresPendingAndConfidentMatch) {
  Trajectory t = fresh();
  const Detection good{{0, 0, 4, 4}, 0.9, 0};
  t.state = TrajectoryState::pending;
  EXPECT_TRUE(should_reconstruct(t, good, kCfg));
  EXPECT_FALSE(should_reconstruct(t, std::nullopt, kCfg));
  EXPECT_FALSE(should_reconstruct(t, Detection{{0, 0, 4, 4}, 0.4, 0}, kCfg));
  t.state = TrajectoryState::reliable;
  EXPECT_FALSE(should_reconstruct(t, good, kCfg));
  t.state = TrajectoryState::suspicious;
  EXPECT_FALSE(should_reconstruct(t, good, kCfg));
}
