#pragma once

// Cross-object interaction: when two tracked masks overlap heavily, decide
// which trajectory is the occluded one and purge its memory entry for the
// current frame before it can poison later propagation.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <set>
#include <vector>

#include "sam2mot/error.hpp"
#include "sam2mot/mask.hpp"
#include "sam2mot/trajectory.hpp"

namespace sam2mot {

struct OcclusionPair {
  std::uint64_t id_a = 0;  // id_a < id_b
  std::uint64_t id_b = 0;
  double miou = 0.0;

  friend bool operator==(const OcclusionPair&, const OcclusionPair&) = default;
};

struct PurgeDirective {
  std::uint64_t id = 0;
  long frame = 0;

  friend bool operator==(const PurgeDirective&, const PurgeDirective&) = default;
};

/// Every unordered pair whose mask IoU exceeds the occlusion threshold,
/// sorted by descending IoU, then by (id_a, id_b).
inline std::vector<OcclusionPair> detect_occlusion_pairs(
    const std::map<std::uint64_t, Mask>& masks, const TrackerConfig& cfg) {
  std::vector<OcclusionPair> pairs;
  for (auto a = masks.begin(); a != masks.end(); ++a) {
    if (a->second.is_empty()) continue;
    for (auto b = std::next(a); b != masks.end(); ++b) {
      const double miou = mask_iou(a->second, b->second);
      if (miou > cfg.miou_occlusion_threshold) pairs.push_back({a->first, b->first, miou});
    }
  }
  std::sort(pairs.begin(), pairs.end(), [](const OcclusionPair& x, const OcclusionPair& y) {
    if (x.miou != y.miou) return x.miou > y.miou;
    if (x.id_a != y.id_a) return x.id_a < y.id_a;
    return x.id_b < y.id_b;
  });
  return pairs;
}

/// Which of two overlapping trajectories is occluded.
///
/// A clear gap in the latest logits (more than `logits_sig_delta`) names the
/// lower-scoring one. Otherwise the windowed logits variance decides: an
/// occlusion drops the score abruptly, leaving the window flatter than a slow
/// drift does, so the smaller variance is the occluded one. Variance needs at
/// least two samples on both sides; with fewer, the lower latest score is
/// used. Exact ties go to the higher id.
inline std::uint64_t identify_occluded(const Trajectory& a, const Trajectory& b,
                                       const TrackerConfig& cfg) {
  if (a.logits_history.empty() || b.logits_history.empty()) {
    throw InputError("occlusion arbitration needs at least one logits sample per trajectory");
  }
  const std::uint64_t higher_id = std::max(a.id, b.id);
  const double la = a.logits_history.latest();
  const double lb = b.logits_history.latest();
  if (std::abs(la - lb) > cfg.logits_sig_delta) return la < lb ? a.id : b.id;

  const auto window = static_cast<std::size_t>(cfg.variance_window);
  if (a.logits_history.size() >= 2 && b.logits_history.size() >= 2) {
    const double va = logits_variance(a.logits_history, window);
    const double vb = logits_variance(b.logits_history, window);
    if (va != vb) return va < vb ? a.id : b.id;
    return higher_id;
  }
  if (la != lb) return la < lb ? a.id : b.id;
  return higher_id;
}

/// One purge directive per occluded trajectory this frame. Pairs are handled
/// in descending-IoU order; a trajectory that was the visible member of an
/// earlier pair is never purged afterwards.
inline std::vector<PurgeDirective> resolve_interactions(
    const std::map<std::uint64_t, Trajectory>& trajectories,
    const std::map<std::uint64_t, Mask>& masks, long frame, const TrackerConfig& cfg) {
  std::vector<PurgeDirective> directives;
  std::set<std::uint64_t> purged;
  std::set<std::uint64_t> kept;
  for (const auto& pair : detect_occlusion_pairs(masks, cfg)) {
    const auto ta = trajectories.find(pair.id_a);
    const auto tb = trajectories.find(pair.id_b);
    if (ta == trajectories.end() || tb == trajectories.end()) {
      throw InputError("mask supplied for an unknown trajectory");
    }
    const std::uint64_t occluded = identify_occluded(ta->second, tb->second, cfg);
    const std::uint64_t visible = occluded == pair.id_a ? pair.id_b : pair.id_a;
    if (kept.contains(occluded)) continue;
    if (purged.insert(occluded).second) directives.push_back({occluded, frame});
    kept.insert(visible);
  }
  return directives;
}

}  // namespace sam2mot
