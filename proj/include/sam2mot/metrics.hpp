#pragma once

// Box-level CLEAR-MOT (MOTA, FP, FN, IDSW, MT, ML) and IDF1.
//
// A prediction and a ground-truth box match when their IoU is at least the
// threshold. Ground truth flagged `ignore` is never matched and never counted;
// a prediction that sits mostly inside an ignored box and matches no regular
// ground truth is dropped before scoring, so ignore regions can only remove
// false positives.

#include <algorithm>
#include <cstdint>
#include <map>
#include <set>
#include <span>
#include <utility>
#include <vector>

#include "sam2mot/assignment.hpp"
#include "sam2mot/error.hpp"
#include "sam2mot/mask.hpp"

namespace sam2mot {

struct GtEntry {
  long frame = 0;
  std::int64_t id = 0;
  Box box;
  int class_id = 0;
  bool ignore = false;

  friend bool operator==(const GtEntry&, const GtEntry&) = default;
};

struct PredEntry {
  long frame = 0;
  std::int64_t id = 0;
  Box box;
  int class_id = 0;

  friend bool operator==(const PredEntry&, const PredEntry&) = default;
};

struct EvalReport {
  double iou_threshold = 0.5;
  double mota = 0.0;
  double idf1 = 0.0;
  std::int64_t tp = 0;
  std::int64_t fp = 0;
  std::int64_t fn = 0;
  std::int64_t idsw = 0;
  std::int64_t mt = 0;
  std::int64_t ml = 0;
  std::int64_t total_gt = 0;
  std::int64_t total_pred = 0;
  std::int64_t gt_tracks = 0;

  friend bool operator==(const EvalReport&, const EvalReport&) = default;
};

/// 1 - (FN + FP + IDSW) / total_gt; defined as 0 when there is no ground truth.
inline double mota_from_counts(std::int64_t fn, std::int64_t fp, std::int64_t idsw,
                               std::int64_t total_gt) {
  if (total_gt == 0) return 0.0;
  return 1.0 - static_cast<double>(fn + fp + idsw) / static_cast<double>(total_gt);
}

struct FrameMatch {
  std::vector<std::pair<std::size_t, std::size_t>> matches;  // (gt index, pred index)
  std::vector<std::size_t> unmatched_gt;    // regular ground truth only
  std::vector<std::size_t> unmatched_pred;  // false positives
};

namespace detail {

inline bool mostly_inside(const Box& inner, const Box& outer) {
  return 2 * box_intersection_area(inner, outer) >= inner.area();
}

// Predictions of one frame that fall in an ignore region and match no
// regular ground truth.
inline std::vector<bool> suppressed_predictions(std::span<const GtEntry> gt,
                                                std::span<const PredEntry> pred,
                                                double iou_threshold) {
  std::vector<bool> out(pred.size(), false);
  for (std::size_t p = 0; p < pred.size(); ++p) {
    bool in_ignore = false;
    bool near_regular = false;
    for (const auto& g : gt) {
      if (g.ignore) {
        in_ignore = in_ignore || mostly_inside(pred[p].box, g.box);
      } else if (box_iou(g.box, pred[p].box) >= iou_threshold) {
        near_regular = true;
      }
    }
    out[p] = in_ignore && !near_regular;
  }
  return out;
}

template <typename Entry>
void require_unique_keys(std::span<const Entry> entries, const char* what) {
  std::set<std::pair<long, std::int64_t>> seen;
  for (const auto& e : entries) {
    if (!seen.insert({e.frame, e.id}).second) {
      throw InputError(std::string("duplicate (frame, id) = (") + std::to_string(e.frame) + ", " +
                       std::to_string(e.id) + ") in " + what + " stream");
    }
  }
}

template <typename Entry>
std::map<long, std::vector<Entry>> by_frame(std::span<const Entry> entries) {
  std::map<long, std::vector<Entry>> out;
  for (const auto& e : entries) out[e.frame].push_back(e);
  return out;
}

}  // namespace detail

/// CLEAR matching for one frame. The frame's matching has maximum
/// cardinality among pairs at or above the threshold; within that, pairs
/// carried over from `prev_matches` (gt id -> pred id of the previous frame)
/// are kept wherever possible, then total 1 - IoU is minimised. Keeping a
/// previous pair therefore never costs a match.
inline FrameMatch match_frame(std::span<const GtEntry> gt, std::span<const PredEntry> pred,
                              const std::map<std::int64_t, std::int64_t>& prev_matches,
                              double iou_threshold) {
  FrameMatch out;
  const auto suppressed = detail::suppressed_predictions(gt, pred, iou_threshold);
  std::vector<std::size_t> gts, preds;
  for (std::size_t g = 0; g < gt.size(); ++g) {
    if (!gt[g].ignore) gts.push_back(g);
  }
  for (std::size_t p = 0; p < pred.size(); ++p) {
    if (!suppressed[p]) preds.push_back(p);
  }
  std::vector<bool> gt_done(gt.size(), false), pred_done(pred.size(), false);
  if (!gts.empty() && !preds.empty()) {
    // Feasible costs lie in [-keep_bonus, 1]; `infeasible` exceeds any total
    // a feasible matching can reach, so cardinality dominates.
    const double keep_bonus = static_cast<double>(gts.size() + preds.size() + 1);
    const double infeasible = (keep_bonus + 1.0) * (keep_bonus + 1.0);
    CostMatrix cost(gts.size(), preds.size());
    for (std::size_t i = 0; i < gts.size(); ++i) {
      const auto prev = prev_matches.find(gt[gts[i]].id);
      for (std::size_t j = 0; j < preds.size(); ++j) {
        const double iou = box_iou(gt[gts[i]].box, pred[preds[j]].box);
        if (iou < iou_threshold) {
          cost(i, j) = infeasible;
          continue;
        }
        const bool kept = prev != prev_matches.end() && prev->second == pred[preds[j]].id;
        cost(i, j) = (1.0 - iou) - (kept ? keep_bonus : 0.0);
      }
    }
    for (const auto& [i, j] : solve_assignment(cost)) {
      if (cost(i, j) >= infeasible) continue;
      out.matches.emplace_back(gts[i], preds[j]);
      gt_done[gts[i]] = pred_done[preds[j]] = true;
    }
  }
  std::sort(out.matches.begin(), out.matches.end());
  for (std::size_t g : gts) {
    if (!gt_done[g]) out.unmatched_gt.push_back(g);
  }
  for (std::size_t p : preds) {
    if (!pred_done[p]) out.unmatched_pred.push_back(p);
  }
  return out;
}

/// CLEAR-MOT counts plus MT/ML. MT: matched in >= 80% of the frames where
/// the ground-truth track is present; ML: matched in <= 20%.
inline EvalReport compute_clear(std::span<const GtEntry> gt, std::span<const PredEntry> pred,
                                double iou_threshold) {
  detail::require_unique_keys(gt, "ground-truth");
  detail::require_unique_keys(pred, "prediction");
  const auto gt_frames = detail::by_frame(gt);
  const auto pred_frames = detail::by_frame(pred);
  std::set<long> frames;
  for (const auto& [f, _] : gt_frames) frames.insert(f);
  for (const auto& [f, _] : pred_frames) frames.insert(f);

  EvalReport r;
  r.iou_threshold = iou_threshold;
  std::map<std::int64_t, std::int64_t> prev, last_match;
  std::map<std::int64_t, std::pair<std::int64_t, std::int64_t>> coverage;  // id -> (matched, present)
  const std::vector<GtEntry> no_gt;
  const std::vector<PredEntry> no_pred;
  for (long f : frames) {
    const auto git = gt_frames.find(f);
    const auto pit = pred_frames.find(f);
    const auto& fg = git == gt_frames.end() ? no_gt : git->second;
    const auto& fp = pit == pred_frames.end() ? no_pred : pit->second;
    const FrameMatch m = match_frame(fg, fp, prev, iou_threshold);

    std::map<std::int64_t, std::int64_t> current;
    for (const auto& [g, p] : m.matches) {
      const auto gid = fg[g].id;
      const auto pid = fp[p].id;
      if (const auto it = last_match.find(gid); it != last_match.end() && it->second != pid) {
        ++r.idsw;
      }
      last_match[gid] = pid;
      current[gid] = pid;
      ++coverage[gid].first;
    }
    for (const auto& e : fg) {
      if (!e.ignore) ++coverage[e.id].second;
    }
    const auto suppressed = detail::suppressed_predictions(fg, fp, iou_threshold);
    r.tp += static_cast<std::int64_t>(m.matches.size());
    r.fn += static_cast<std::int64_t>(m.unmatched_gt.size());
    r.fp += static_cast<std::int64_t>(m.unmatched_pred.size());
    r.total_gt += static_cast<std::int64_t>(
        std::count_if(fg.begin(), fg.end(), [](const GtEntry& e) { return !e.ignore; }));
    r.total_pred += static_cast<std::int64_t>(std::count(suppressed.begin(), suppressed.end(), false));
    prev = std::move(current);
  }
  for (const auto& [id, c] : coverage) {
    if (c.second == 0) continue;
    ++r.gt_tracks;
    const double ratio = static_cast<double>(c.first) / static_cast<double>(c.second);
    if (ratio >= 0.8) ++r.mt;
    if (ratio <= 0.2) ++r.ml;
  }
  r.mota = mota_from_counts(r.fn, r.fp, r.idsw, r.total_gt);
  return r;
}

/// Identity-level F1: ground-truth ids and prediction ids are paired one to
/// one so as to maximise the number of co-occurring frames with IoU at or
/// above the threshold (IDTP); IDF1 = 2 IDTP / (total_gt + total_pred).
inline double compute_idf1(std::span<const GtEntry> gt, std::span<const PredEntry> pred,
                           double iou_threshold) {
  const auto gt_frames = detail::by_frame(gt);
  const auto pred_frames = detail::by_frame(pred);
  std::map<std::int64_t, std::size_t> gt_index, pred_index;
  std::map<std::pair<std::size_t, std::size_t>, std::int64_t> overlap;
  std::int64_t total_gt = 0;
  std::int64_t total_pred = 0;
  const std::vector<GtEntry> no_gt;
  for (const auto& [f, fp] : pred_frames) {
    const auto git = gt_frames.find(f);
    const auto& fg = git == gt_frames.end() ? no_gt : git->second;
    const auto suppressed = detail::suppressed_predictions(fg, fp, iou_threshold);
    for (std::size_t p = 0; p < fp.size(); ++p) {
      if (suppressed[p]) continue;
      ++total_pred;
      const auto pi = pred_index.try_emplace(fp[p].id, pred_index.size()).first->second;
      for (const auto& g : fg) {
        if (g.ignore || box_iou(g.box, fp[p].box) < iou_threshold) continue;
        const auto gi = gt_index.try_emplace(g.id, gt_index.size()).first->second;
        ++overlap[{gi, pi}];
      }
    }
  }
  for (const auto& e : gt) total_gt += e.ignore ? 0 : 1;
  if (total_gt + total_pred == 0) return 0.0;

  std::int64_t idtp = 0;
  if (!gt_index.empty() && !pred_index.empty()) {
    CostMatrix cost(gt_index.size(), pred_index.size());
    for (const auto& [key, n] : overlap) cost(key.first, key.second) = -static_cast<double>(n);
    for (const auto& [g, p] : solve_assignment(cost)) {
      if (const auto it = overlap.find({g, p}); it != overlap.end()) idtp += it->second;
    }
  }
  return 2.0 * static_cast<double>(idtp) / static_cast<double>(total_gt + total_pred);
}

inline EvalReport evaluate(std::span<const GtEntry> gt, std::span<const PredEntry> pred,
                           double iou_threshold) {
  EvalReport r = compute_clear(gt, pred, iou_threshold);
  r.idf1 = compute_idf1(gt, pred, iou_threshold);
  return r;
}

}  // namespace sam2mot
