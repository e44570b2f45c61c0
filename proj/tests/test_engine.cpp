#include <gtest/gtest.h>

#include <algorithm>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "sam2mot/engine.hpp"
#include "sam2mot/scenarios.hpp"
#include "sam2mot/simulation.hpp"

using namespace sam2mot;

namespace {

// Backend that replays a fixed score per handle and records every call.
class ScriptedBackend : public SegmentationBackend {
 public:
  explicit ScriptedBackend(ImageGrid grid) : grid_(grid) {}

  Handle init_object(const Box& prompt, long frame) override {
    calls.push_back("init@" + std::to_string(frame));
    const Handle h = next_++;
    boxes_[h] = prompt;
    return h;
  }
  std::map<Handle, Propagation> propagate(long frame) override {
    calls.push_back("propagate@" + std::to_string(frame));
    if (fail_at == frame) throw std::runtime_error("device lost");
    std::map<Handle, Propagation> out;
    for (const auto& [h, b] : boxes_) {
      if (skip_handle == h) continue;
      out.emplace(h, Propagation{Mask::from_box(grid_, b), score});
    }
    return out;
  }
  void purge_memory(Handle h, long frame) override {
    calls.push_back("purge" + std::to_string(h) + "@" + std::to_string(frame));
  }
  void recondition(Handle h, const Box& prompt, long frame) override {
    calls.push_back("recondition" + std::to_string(h) + "@" + std::to_string(frame));
    boxes_[h] = prompt;
  }
  void drop_object(Handle h) override {
    calls.push_back("drop" + std::to_string(h));
    boxes_.erase(h);
  }

  double score = 9.0;
  long fail_at = -1;
  Handle skip_handle = 0;
  std::vector<std::string> calls;

 private:
  ImageGrid grid_;
  std::map<Handle, Box> boxes_;
  Handle next_ = 1;
};

const ImageGrid kGrid{64, 48};

SimParams seeded(std::uint64_t seed) {
  SimParams p;
  p.seed = seed;
  return p;
}

std::set<std::uint64_t> ids_in(const FrameResult& r) {
  std::set<std::uint64_t> out;
  for (const auto& rec : r.records) out.insert(rec.id);
  return out;
}

}  // namespace

TEST(Engine, BootstrapsFromFirstFrameDetections) {
  ScriptedBackend be(kGrid);
  Engine engine(be, kGrid, TrackerConfig{});
  const std::vector<Detection> dets{{{2, 2, 10, 10}, 0.9, 0}, {{30, 20, 8, 8}, 0.8, 1},
                                    {{50, 2, 6, 6}, 0.2, 0}};
  const auto r = engine.step(1, dets);
  EXPECT_EQ(r.additions, (std::vector<std::uint64_t>{1, 2}));
  ASSERT_EQ(r.records.size(), 2U);
  EXPECT_EQ(r.records[0].box, (Box{2, 2, 10, 10}));
  EXPECT_FALSE(r.records[0].logits.has_value());
  EXPECT_EQ(r.records[1].class_id, 1);
  EXPECT_EQ(engine.handles().size(), 2U);

  // The same boxes on the next frame are matched, not re-added.
  const auto r2 = engine.step(2, dets);
  EXPECT_TRUE(r2.additions.empty());
  EXPECT_EQ(r2.records[0].logits, 9.0);
}

TEST(Engine, RejectsFramesOutOfOrder) {
  ScriptedBackend be(kGrid);
  Engine engine(be, kGrid, TrackerConfig{});
  engine.step(3, {});
  EXPECT_THROW(engine.step(3, {}), InputError);
  EXPECT_THROW(engine.step(2, {}), InputError);
  EXPECT_NO_THROW(engine.step(7, {}));
}

TEST(Engine, BackendFailureCarriesFrame) {
  ScriptedBackend be(kGrid);
  be.fail_at = 4;
  Engine engine(be, kGrid, TrackerConfig{});
  engine.step(1, std::vector<Detection>{{{2, 2, 10, 10}, 0.9, 0}});
  engine.step(2, {});
  engine.step(3, {});
  try {
    engine.step(4, {});
    FAIL() << "expected BackendError";
  } catch (const BackendError& e) {
    EXPECT_EQ(e.frame(), 4);
    EXPECT_NE(std::string(e.what()).find("device lost"), std::string::npos);
  }
}

TEST(Engine, MissingHandleInReplyIsBackendError) {
  ScriptedBackend be(kGrid);
  Engine engine(be, kGrid, TrackerConfig{});
  engine.step(1, std::vector<Detection>{{{2, 2, 10, 10}, 0.9, 0}});
  be.skip_handle = 1;
  EXPECT_THROW(engine.step(2, {}), BackendError);
}

TEST(Engine, RemovalAfterToleranceExpires) {
  ScriptedBackend be(kGrid);
  Engine engine(be, kGrid, TrackerConfig{});
  engine.step(1, std::vector<Detection>{{{2, 2, 10, 10}, 0.9, 0}});
  be.score = 1.0;
  for (long f = 2; f <= 26; ++f) {
    const auto r = engine.step(f, {});
    ASSERT_TRUE(r.removals.empty()) << "frame " << f;
    ASSERT_TRUE(r.records.empty());  // lost objects are not emitted
  }
  ASSERT_EQ(engine.trajectories().at(1).frames_lost, 25);
  const auto r = engine.step(27, {});
  EXPECT_EQ(r.removals, (std::vector<std::uint64_t>{1}));
  EXPECT_TRUE(engine.trajectories().empty());
  EXPECT_EQ(be.calls.back(), "drop1");
}

TEST(Engine, QualityReconstructionOnlyForPendingMatches) {
  ScriptedBackend be(kGrid);
  Engine engine(be, kGrid, TrackerConfig{});
  const std::vector<Detection> dets{{{2, 2, 10, 10}, 0.9, 0}};
  engine.step(1, dets);
  be.score = 7.0;  // pending
  auto r = engine.step(2, dets);
  EXPECT_EQ(r.reconditions, (std::vector<std::uint64_t>{1}));
  EXPECT_TRUE(engine.trajectories().at(1).logits_history.empty());
  EXPECT_EQ(engine.trajectories().at(1).last_conditioning_frame, 2);

  be.score = 9.0;  // reliable
  r = engine.step(3, dets);
  EXPECT_TRUE(r.reconditions.empty());
  be.score = 7.0;
  r = engine.step(4, std::vector<Detection>{{{2, 2, 10, 10}, 0.4, 0}});
  EXPECT_TRUE(r.reconditions.empty());
}

TEST(Engine, TogglesSuppressTheirModules) {
  // Both copies of one box are added on the first frame, so their masks
  // coincide on every later frame.
  const std::vector<Detection> dets{{{2, 2, 10, 10}, 0.9, 0}, {{2, 2, 10, 10}, 0.9, 0}};
  for (const bool on : {true, false}) {
    ScriptedBackend be(kGrid);
    Engine engine(be, kGrid, TrackerConfig{}, PipelineToggles{true, on, on});
    ASSERT_EQ(engine.step(1, dets).additions.size(), 2U);
    be.score = 7.0;
    std::size_t directives = 0, reconditions = 0;
    for (long f = 2; f <= 10; ++f) {
      const auto r = engine.step(f, dets);
      directives += r.directives.size();
      reconditions += r.reconditions.size();
    }
    const auto called = [&](const std::string& what) {
      return std::any_of(be.calls.begin(), be.calls.end(),
                         [&](const std::string& c) { return c.find(what) != std::string::npos; });
    };
    EXPECT_EQ(directives > 0, on);
    EXPECT_EQ(reconditions > 0, on);
    EXPECT_EQ(called("purge"), on);
    EXPECT_EQ(called("recondition"), on);
  }
}

TEST(Engine, AdditionOffStillInitializesFirstFrame) {
  ScriptedBackend be(kGrid);
  Engine engine(be, kGrid, TrackerConfig{}, PipelineToggles{false, true, true});
  const std::vector<Detection> first{{{2, 2, 10, 10}, 0.9, 0}};
  EXPECT_EQ(engine.step(1, first).additions.size(), 1U);
  const std::vector<Detection> later{{{2, 2, 10, 10}, 0.9, 0}, {{40, 20, 8, 8}, 0.9, 0}};
  EXPECT_TRUE(engine.step(2, later).additions.empty());
  EXPECT_EQ(engine.trajectories().size(), 1U);
}

TEST(Engine, SingleStaticObjectHasNoIdentitySwitch) {
  const auto out = run_simulation(builtin_scenario("S0"), seeded(7), TrackerConfig{});
  EXPECT_EQ(out.report.idsw, 0);
  EXPECT_EQ(out.report.mota, 1.0);
  for (const auto& f : out.tracking.frames) ASSERT_EQ(ids_in(f), (std::set<std::uint64_t>{1}));
}

TEST(Engine, CrossingWithInteractionPurgesAndKeepsIds) {
  const auto out = run_simulation(builtin_scenario("S1"), seeded(7), TrackerConfig{});
  EXPECT_EQ(out.report.idsw, 0);
  EXPECT_EQ(ids_in(out.tracking.frames.back()), (std::set<std::uint64_t>{1, 2}));
  const auto purge = std::find_if(out.tracking.trace.begin(), out.tracking.trace.end(),
                                  [](const TraceEvent& e) { return e.kind == TraceKind::purge; });
  ASSERT_NE(purge, out.tracking.trace.end());
  // The purge lands while the two rectangles overlap.
  const auto scene = render_scene(builtin_scenario("S1"), purge->frame);
  EXPECT_GT(box_iou(scene.objects[0].box, scene.objects[1].box), 0.5);
}

TEST(Engine, CrossingWithoutInteractionSwitchesIdentity) {
  const auto out = run_simulation(builtin_scenario("S1"), seeded(7), TrackerConfig{},
                                  PipelineToggles{true, false, true});
  EXPECT_GE(out.report.idsw, 1);
  for (const auto& e : out.tracking.trace) EXPECT_NE(e.kind, TraceKind::purge);
}

TEST(Engine, HandlesAndIdsStayOneToOne) {
  for (const auto& name : builtin_scenario_names()) {
    const auto script = builtin_scenario(name);
    SyntheticBackend be(script, seeded(3));
    Engine engine(be, script.grid, TrackerConfig{});
    std::set<std::uint64_t> ever;
    for (long f = 1; f <= script.frame_count(); ++f) {
      const auto r = engine.step(f, generate_detections(script, f, seeded(3)));
      for (auto id : r.additions) ASSERT_TRUE(ever.insert(id).second) << "id reused";
      std::set<Handle> handles;
      for (const auto& [id, h] : engine.handles()) ASSERT_TRUE(handles.insert(h).second);
      ASSERT_EQ(engine.handles().size(), engine.trajectories().size());
      ASSERT_EQ(be.live_objects(), engine.trajectories().size());
    }
  }
}

TEST(Engine, DeterministicAcrossRuns) {
  for (const auto& name : builtin_scenario_names()) {
    const auto a = run_simulation(builtin_scenario(name), seeded(11), TrackerConfig{});
    const auto b = run_simulation(builtin_scenario(name), seeded(11), TrackerConfig{});
    ASSERT_EQ(a.tracking.frames, b.tracking.frames) << name;
    ASSERT_EQ(a.tracking.trace, b.tracking.trace) << name;
    ASSERT_EQ(a.report, b.report) << name;
  }
}

TEST(Engine, LateObjectIgnoredWithoutAddition) {
  const auto out = run_simulation(builtin_scenario("S2"), seeded(7), TrackerConfig{},
                                  PipelineToggles{false, true, true});
  for (const auto& f : out.tracking.frames) ASSERT_TRUE(f.additions.empty() || f.frame == 1);
  EXPECT_LT(out.report.tp, out.report.total_gt);
}
