#pragma once

// Trajectory lifecycle: four-level state classification from the latest
// logits score, logits statistics, three-stage object addition, removal after
// a tolerance window, and the quality-reconstruction trigger.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sam2mot/assignment.hpp"
#include "sam2mot/error.hpp"
#include "sam2mot/mask.hpp"

namespace sam2mot {

/// Ordered so that `lost < suspicious < pending < reliable`.
enum class TrajectoryState : std::uint8_t { lost = 0, suspicious = 1, pending = 2, reliable = 3 };

inline std::string_view to_string(TrajectoryState s) {
  switch (s) {
    case TrajectoryState::reliable: return "reliable";
    case TrajectoryState::pending: return "pending";
    case TrajectoryState::suspicious: return "suspicious";
    case TrajectoryState::lost: return "lost";
  }
  return "lost";
}

inline TrajectoryState parse_state(std::string_view s) {
  if (s == "reliable") return TrajectoryState::reliable;
  if (s == "pending") return TrajectoryState::pending;
  if (s == "suspicious") return TrajectoryState::suspicious;
  if (s == "lost") return TrajectoryState::lost;
  throw InputError("unknown trajectory state '" + std::string(s) + "'");
}

struct TrackerConfig {
  double tau_r = 8.0;
  double tau_p = 6.0;
  double tau_s = 2.0;
  int tolerance_frames = 25;
  double r_threshold = 0.5;
  int variance_window = 10;
  double det_conf_threshold = 0.5;
  double miou_occlusion_threshold = 0.8;
  double logits_sig_delta = 1.0;
  double match_iou_gate = 0.3;
  TrajectoryState emit_min_state = TrajectoryState::pending;

  /// Throws InputError describing the first violated constraint.
  void validate() const {
    const auto in_unit = [](double v) { return v >= 0.0 && v <= 1.0; };
    if (!(std::isfinite(tau_r) && std::isfinite(tau_p) && std::isfinite(tau_s))) {
      throw InputError("state thresholds must be finite");
    }
    if (!(tau_r > tau_p && tau_p > tau_s)) throw InputError("require tau_r > tau_p > tau_s");
    if (tolerance_frames < 1) throw InputError("tolerance_frames must be >= 1");
    if (variance_window < 2) throw InputError("variance_window must be >= 2");
    if (!in_unit(r_threshold)) throw InputError("r_threshold must lie in [0, 1]");
    if (!in_unit(det_conf_threshold)) throw InputError("det_conf_threshold must lie in [0, 1]");
    if (!in_unit(miou_occlusion_threshold)) {
      throw InputError("miou_occlusion_threshold must lie in [0, 1]");
    }
    if (!in_unit(match_iou_gate)) throw InputError("match_iou_gate must lie in [0, 1]");
    if (!(std::isfinite(logits_sig_delta) && logits_sig_delta >= 0.0)) {
      throw InputError("logits_sig_delta must be finite and >= 0");
    }
  }

  friend bool operator==(const TrackerConfig&, const TrackerConfig&) = default;
};

struct Detection {
  Box box;
  double confidence = 1.0;
  int class_id = 0;

  friend bool operator==(const Detection&, const Detection&) = default;
};

/// Bounded FIFO of logits scores; the oldest value is evicted first.
class LogitsHistory {
 public:
  explicit LogitsHistory(std::size_t capacity = 10) : capacity_(capacity == 0 ? 1 : capacity) {}

  void push(double value) {
    if (values_.size() == capacity_) values_.erase(values_.begin());
    values_.push_back(value);
  }

  void clear() { values_.clear(); }
  bool empty() const { return values_.empty(); }
  std::size_t size() const { return values_.size(); }
  std::size_t capacity() const { return capacity_; }
  double latest() const { return values_.back(); }
  std::span<const double> values() const { return values_; }

 private:
  std::size_t capacity_;
  std::vector<double> values_;
};

struct Trajectory {
  std::uint64_t id = 0;
  TrajectoryState state = TrajectoryState::reliable;
  LogitsHistory logits_history;
  int frames_lost = 0;
  std::optional<Mask> last_mask;
  std::optional<Box> last_box;
  long created_frame = 0;
  long last_conditioning_frame = 0;
  int class_id = 0;
};

/// A fresh trajectory conditioned on a prompt at `frame`. It starts reliable
/// with an empty history until its first propagation.
inline Trajectory make_trajectory(std::uint64_t id, const Detection& prompt, long frame,
                                  const TrackerConfig& cfg) {
  Trajectory t;
  t.id = id;
  t.state = TrajectoryState::reliable;
  t.logits_history = LogitsHistory(static_cast<std::size_t>(cfg.variance_window));
  t.last_box = prompt.box;
  t.created_frame = frame;
  t.last_conditioning_frame = frame;
  t.class_id = prompt.class_id;
  return t;
}

inline TrajectoryState classify_state(double logits, const TrackerConfig& cfg) {
  if (std::isnan(logits)) throw InputError("logits score is NaN");
  if (logits > cfg.tau_r) return TrajectoryState::reliable;
  if (logits > cfg.tau_p) return TrajectoryState::pending;
  if (logits > cfg.tau_s) return TrajectoryState::suspicious;
  return TrajectoryState::lost;
}

/// Population variance over the most recent min(window, size) samples.
inline double logits_variance(std::span<const double> history, std::size_t window) {
  if (history.empty()) throw InputError("logits history is empty");
  if (window == 0) throw InputError("variance window must be positive");
  const auto recent = history.last(std::min(window, history.size()));
  double mean = 0.0;
  for (double v : recent) mean += v;
  mean /= static_cast<double>(recent.size());
  double ss = 0.0;
  for (double v : recent) ss += (v - mean) * (v - mean);
  return ss / static_cast<double>(recent.size());
}

inline double logits_variance(const LogitsHistory& history, std::size_t window) {
  return logits_variance(history.values(), window);
}

inline Trajectory update_trajectory(Trajectory traj, const Mask& mask, double logits, long frame,
                                    const TrackerConfig& cfg) {
  (void)frame;
  traj.state = classify_state(logits, cfg);
  traj.logits_history.push(logits);
  traj.frames_lost = traj.state == TrajectoryState::lost ? traj.frames_lost + 1 : 0;
  traj.last_box = box_from_mask(mask);
  traj.last_mask = mask;
  return traj;
}

/// Lost for strictly more than the tolerance window.
inline bool should_remove(const Trajectory& traj, const TrackerConfig& cfg) {
  return traj.state == TrajectoryState::lost && traj.frames_lost > cfg.tolerance_frames;
}

/// Indices of detections that pass the confidence stage.
inline std::vector<std::size_t> high_confidence_indices(std::span<const Detection> dets,
                                                        const TrackerConfig& cfg) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < dets.size(); ++i) {
    if (dets[i].confidence > cfg.det_conf_threshold) out.push_back(i);
  }
  return out;
}

/// Three-stage filter for new objects. `match` must have been computed over
/// the high-confidence subset of `dets`, in order; its detection indices
/// refer to positions within that subset.
inline std::vector<Detection> addition_filter(std::span<const Detection> dets,
                                              const MatchResult& match, const Mask& untracked,
                                              const TrackerConfig& cfg) {
  const auto high = high_confidence_indices(dets, cfg);
  std::vector<Detection> accepted;
  for (std::size_t sub : match.unmatched_detections) {
    if (sub >= high.size()) throw InputError("match refers to a detection outside the subset");
    const Detection& det = dets[high[sub]];
    if (box_region_overlap(det.box, untracked) > cfg.r_threshold) accepted.push_back(det);
  }
  return accepted;
}

inline bool should_reconstruct(const Trajectory& traj, const std::optional<Detection>& matched,
                               const TrackerConfig& cfg) {
  return traj.state == TrajectoryState::pending && matched.has_value() &&
         matched->confidence > cfg.det_conf_threshold;
}

}  // namespace sam2mot
