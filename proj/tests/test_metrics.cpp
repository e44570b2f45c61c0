#include <gtest/gtest.h>

#include <map>
#include <random>
#include <vector>

#include "oracles.hpp"
#include "sam2mot/metrics.hpp"

using namespace sam2mot;

namespace {

GtEntry gt(long frame, std::int64_t id, Box b) { return {frame, id, b, 0, false}; }
PredEntry pr(long frame, std::int64_t id, Box b) { return {frame, id, b, 0}; }

void expect_mota_identity(const EvalReport& r) {
  EXPECT_EQ(r.mota, mota_from_counts(r.fn, r.fp, r.idsw, r.total_gt));
  EXPECT_EQ(r.tp + r.fn, r.total_gt);
}

struct ToySequence {
  std::vector<GtEntry> gt;
  std::vector<PredEntry> pred;
  std::vector<oracle::Track> gt_tracks, pred_tracks;
};

// Random objects on a 40x40 canvas; predictions are jittered copies with
// shuffled, occasionally split or swapped ids, plus some clutter.
ToySequence random_sequence(std::mt19937_64& rng, int max_ids) {
  std::uniform_int_distribution<int> n_ids(1, max_ids), n_frames(1, 6), pos(0, 30), size(4, 12),
      jitter(-3, 3), coin(0, 9);
  ToySequence s;
  const int gt_ids = n_ids(rng);
  const int frames = n_frames(rng);
  for (int id = 1; id <= gt_ids; ++id) {
    Box b{pos(rng), pos(rng), size(rng), size(rng)};
    for (long f = 1; f <= frames; ++f) {
      if (coin(rng) == 0) continue;
      b.x += jitter(rng) / 2;
      s.gt.push_back(gt(f, id, b));
      if (coin(rng) < 2) continue;
      const Box p{b.x + jitter(rng), b.y + jitter(rng), b.w, b.h};
      const std::int64_t pid = 100 + (coin(rng) == 0 ? (id % gt_ids) + 1 : id) +
                               (f > frames / 2 && coin(rng) < 3 ? 10 : 0);
      s.pred.push_back(pr(f, pid, p));
    }
  }
  for (long f = 1; f <= frames; ++f) {
    if (coin(rng) < 3) s.pred.push_back(pr(f, 900 + f, {pos(rng), pos(rng), size(rng), size(rng)}));
  }
  // Drop any duplicate (frame, id) the id shuffling created.
  std::map<std::pair<long, std::int64_t>, bool> seen;
  std::vector<PredEntry> unique;
  for (const auto& p : s.pred) {
    if (!seen[{p.frame, p.id}]) unique.push_back(p);
    seen[{p.frame, p.id}] = true;
  }
  s.pred = unique;
  for (const auto& g : s.gt) s.gt_tracks.push_back({g.frame, g.id, {g.box.x, g.box.y, g.box.w, g.box.h}});
  for (const auto& p : s.pred) {
    s.pred_tracks.push_back({p.frame, p.id, {p.box.x, p.box.y, p.box.w, p.box.h}});
  }
  return s;
}

}  // namespace

TEST(Mota, WorkedValue) {
  EXPECT_DOUBLE_EQ(mota_from_counts(2, 1, 1, 10), 0.6);
  EXPECT_EQ(mota_from_counts(0, 5, 0, 0), 0.0);
  EXPECT_LT(mota_from_counts(5, 10, 0, 5), 0.0);
}

TEST(Clear, PerfectTracking) {
  std::vector<GtEntry> g{gt(1, 1, {0, 0, 10, 10}), gt(2, 1, {1, 0, 10, 10}), gt(2, 2, {30, 30, 5, 5})};
  std::vector<PredEntry> p{pr(1, 7, {0, 0, 10, 10}), pr(2, 7, {1, 0, 10, 10}), pr(2, 8, {30, 30, 5, 5})};
  const auto r = evaluate(g, p, 0.5);
  EXPECT_EQ(r.mota, 1.0);
  EXPECT_EQ(r.idf1, 1.0);
  EXPECT_EQ(r.tp, 3);
  EXPECT_EQ(r.mt, 2);
  expect_mota_identity(r);
}

TEST(Clear, ThresholdPairAtIouPointFourFive) {
  // Overlap 45 px over a union of 100 px.
  std::vector<GtEntry> g{gt(1, 1, {0, 0, 10, 10})};
  std::vector<PredEntry> p{pr(1, 1, {0, 0, 9, 5})};
  ASSERT_DOUBLE_EQ(box_iou(g[0].box, p[0].box), 0.45);
  const auto strict = evaluate(g, p, 0.5);
  EXPECT_EQ(strict.tp, 0);
  EXPECT_EQ(strict.fn, 1);
  EXPECT_EQ(strict.fp, 1);
  const auto loose = evaluate(g, p, 0.4);
  EXPECT_EQ(loose.tp, 1);
  EXPECT_EQ(loose.mota, 1.0);
}

TEST(Clear, IdentityFlipCountsOneSwitch) {
  std::vector<GtEntry> g{gt(1, 1, {0, 0, 10, 10}), gt(2, 1, {0, 0, 10, 10})};
  std::vector<PredEntry> p{pr(1, 5, {0, 0, 10, 10}), pr(2, 6, {0, 0, 10, 10})};
  const auto r = evaluate(g, p, 0.5);
  EXPECT_EQ(r.idsw, 1);
  EXPECT_EQ(r.tp, 2);
  EXPECT_DOUBLE_EQ(r.mota, 0.5);
  expect_mota_identity(r);
}

TEST(Clear, SwitchAcrossGapIsStillCounted) {
  std::vector<GtEntry> g{gt(1, 1, {0, 0, 10, 10}), gt(2, 1, {0, 0, 10, 10}), gt(3, 1, {0, 0, 10, 10})};
  std::vector<PredEntry> p{pr(1, 5, {0, 0, 10, 10}), pr(3, 6, {0, 0, 10, 10})};
  const auto r = evaluate(g, p, 0.5);
  EXPECT_EQ(r.idsw, 1);
  EXPECT_EQ(r.fn, 1);
}

TEST(Clear, PreviousPairPreferredOverBetterOverlap) {
  // Frame 2: pred 6 fits better, but pred 5 still clears the threshold.
  std::vector<GtEntry> g{gt(1, 1, {0, 0, 10, 10}), gt(2, 1, {0, 0, 10, 10})};
  std::vector<PredEntry> p{pr(1, 5, {0, 0, 10, 10}), pr(2, 5, {1, 0, 10, 10}),
                           pr(2, 6, {0, 0, 10, 10})};
  const auto r = evaluate(g, p, 0.5);
  EXPECT_EQ(r.idsw, 0);
  EXPECT_EQ(r.fp, 1);
}

TEST(Clear, MostlyTrackedAndLost) {
  std::vector<GtEntry> g;
  std::vector<PredEntry> p;
  for (long f = 1; f <= 10; ++f) {
    g.push_back(gt(f, 1, {0, 0, 10, 10}));
    g.push_back(gt(f, 2, {20, 20, 10, 10}));
    g.push_back(gt(f, 3, {0, 20, 10, 10}));
    if (f <= 8) p.push_back(pr(f, 1, {0, 0, 10, 10}));   // 80%: mostly tracked
    if (f <= 2) p.push_back(pr(f, 2, {20, 20, 10, 10}));  // 20%: mostly lost
    if (f <= 5) p.push_back(pr(f, 3, {0, 20, 10, 10}));   // neither
  }
  const auto r = evaluate(g, p, 0.5);
  EXPECT_EQ(r.gt_tracks, 3);
  EXPECT_EQ(r.mt, 1);
  EXPECT_EQ(r.ml, 1);
}

TEST(Clear, DuplicateKeysAreInputError) {
  std::vector<GtEntry> g{gt(1, 1, {0, 0, 10, 10}), gt(1, 1, {5, 5, 10, 10})};
  EXPECT_THROW(evaluate(g, std::vector<PredEntry>{}, 0.5), InputError);
  std::vector<PredEntry> p{pr(1, 2, {0, 0, 10, 10}), pr(1, 2, {0, 0, 10, 10})};
  EXPECT_THROW(evaluate(std::vector<GtEntry>{}, p, 0.5), InputError);
}

TEST(Clear, EmptyInputs) {
  const auto r = evaluate(std::vector<GtEntry>{}, std::vector<PredEntry>{}, 0.5);
  EXPECT_EQ(r.mota, 0.0);
  EXPECT_EQ(r.idf1, 0.0);
  const auto only_pred = evaluate(std::vector<GtEntry>{}, std::vector<PredEntry>{pr(1, 1, {0, 0, 2, 2})}, 0.5);
  EXPECT_EQ(only_pred.fp, 1);
  EXPECT_EQ(only_pred.mota, 0.0);
}

TEST(Clear, IgnoreRegionsSuppressFalsePositives) {
  std::vector<GtEntry> g{gt(1, 1, {0, 0, 10, 10}), {1, 2, {40, 0, 20, 20}, 0, true}};
  std::vector<PredEntry> p{pr(1, 1, {0, 0, 10, 10}),
                           pr(1, 2, {45, 5, 10, 10}),   // inside the ignore box
                           pr(1, 3, {55, 5, 10, 10})};  // half inside
  const auto r = evaluate(g, p, 0.5);
  EXPECT_EQ(r.total_gt, 1);
  EXPECT_EQ(r.tp, 1);
  EXPECT_EQ(r.fp, 0);
  EXPECT_EQ(r.fn, 0);
  EXPECT_EQ(r.mota, 1.0);
  // A prediction mostly outside counts.
  p.push_back(pr(1, 4, {57, 5, 10, 10}));
  EXPECT_EQ(evaluate(g, p, 0.5).fp, 1);
}

TEST(Idf1, SplitTrackIsOneHalf) {
  std::vector<GtEntry> g;
  std::vector<PredEntry> p;
  for (long f = 1; f <= 4; ++f) {
    g.push_back(gt(f, 1, {0, 0, 10, 10}));
    p.push_back(pr(f, f <= 2 ? 10 : 11, {0, 0, 10, 10}));
  }
  EXPECT_EQ(evaluate(g, p, 0.5).idf1, 0.5);
}

TEST(Idf1, MatchesBijectionEnumeration) {
  std::mt19937_64 rng(606);
  for (int i = 0; i < 200; ++i) {
    const auto s = random_sequence(rng, 6);
    for (double thr : {0.5, 0.4}) {
      const double got = compute_idf1(s.gt, s.pred, thr);
      ASSERT_NEAR(got, oracle::idf1(s.gt_tracks, s.pred_tracks, thr), 1e-12) << "case " << i;
    }
  }
}

TEST(Metrics, TruePositivesMonotoneInThreshold) {
  std::mt19937_64 rng(707);
  for (int i = 0; i < 500; ++i) {
    const auto s = random_sequence(rng, 8);
    const auto strict = evaluate(s.gt, s.pred, 0.5);
    const auto loose = evaluate(s.gt, s.pred, 0.4);
    ASSERT_LE(strict.tp, loose.tp) << "case " << i;
    ASSERT_LE(strict.idf1, loose.idf1 + 1e-12);
    expect_mota_identity(strict);
    expect_mota_identity(loose);
  }
}

TEST(Metrics, InvariantUnderPredictionRelabelling) {
  std::mt19937_64 rng(808);
  for (int i = 0; i < 200; ++i) {
    auto s = random_sequence(rng, 5);
    const auto base = evaluate(s.gt, s.pred, 0.5);
    std::map<std::int64_t, std::int64_t> relabel;
    std::int64_t next = 5000;
    for (auto& p : s.pred) {
      if (!relabel.count(p.id)) relabel[p.id] = next--;
      p.id = relabel[p.id];
    }
    ASSERT_EQ(evaluate(s.gt, s.pred, 0.5), base) << "case " << i;
  }
}
