#pragma once

// Per-frame orchestration over a SegmentationBackend:
//   propagate -> update -> interact (purge) -> associate -> reconstruct
//   -> add -> remove -> emit

#include <cmath>
#include <cstdint>
#include <exception>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

#include "sam2mot/assignment.hpp"
#include "sam2mot/backend.hpp"
#include "sam2mot/error.hpp"
#include "sam2mot/interaction.hpp"
#include "sam2mot/mask.hpp"
#include "sam2mot/trajectory.hpp"

namespace sam2mot {

/// Ablation switches for the three trajectory-management modules. With
/// `add` off, objects are only initialized on the first processed frame.
struct PipelineToggles {
  bool add = true;
  bool coi = true;
  bool qr = true;

  friend bool operator==(const PipelineToggles&, const PipelineToggles&) = default;
};

struct FrameRecord {
  std::uint64_t id = 0;
  Box box;
  TrajectoryState state = TrajectoryState::reliable;
  std::optional<double> logits;  // absent on the frame an object is initialized
  int class_id = 0;

  friend bool operator==(const FrameRecord&, const FrameRecord&) = default;
};

enum class TraceKind { add, remove, purge, recondition };

inline std::string_view to_string(TraceKind k) {
  switch (k) {
    case TraceKind::add: return "add";
    case TraceKind::remove: return "remove";
    case TraceKind::purge: return "purge";
    case TraceKind::recondition: return "recondition";
  }
  return "add";
}

struct TraceEvent {
  long frame = 0;
  TraceKind kind = TraceKind::add;
  std::uint64_t id = 0;

  friend bool operator==(const TraceEvent&, const TraceEvent&) = default;
};

struct FrameResult {
  long frame = 0;
  std::vector<FrameRecord> records;  // ascending id
  std::vector<PurgeDirective> directives;
  std::vector<std::uint64_t> reconditions;
  std::vector<std::uint64_t> additions;
  std::vector<std::uint64_t> removals;
  std::map<std::uint64_t, double> scores;  // propagated logits of every tracked id

  friend bool operator==(const FrameResult&, const FrameResult&) = default;
};

class Engine {
 public:
  Engine(SegmentationBackend& backend, ImageGrid grid, TrackerConfig cfg,
         PipelineToggles toggles = {})
      : backend_(backend), grid_(grid), cfg_(cfg), toggles_(toggles) {
    require_valid(grid_);
    cfg_.validate();
  }

  FrameResult step(long frame, std::span<const Detection> detections) {
    if (last_frame_ && frame <= *last_frame_) {
      throw InputError("frame " + std::to_string(frame) + " does not follow frame " +
                       std::to_string(*last_frame_));
    }
    const bool first_frame = !last_frame_.has_value();
    last_frame_ = frame;

    FrameResult result;
    result.frame = frame;

    // (1)-(2) propagate and refresh every trajectory.
    auto propagated = call_backend(frame, [&] { return backend_.propagate(frame); });
    if (propagated.size() != handles_.size()) {
      throw BackendError("propagate reported " + std::to_string(propagated.size()) +
                             " objects, expected " + std::to_string(handles_.size()),
                         frame);
    }
    std::map<std::uint64_t, Mask> masks;
    std::map<std::uint64_t, double> logits;
    for (auto& [id, traj] : trajectories_) {
      const auto it = propagated.find(handles_.at(id));
      if (it == propagated.end()) {
        throw BackendError("propagate omitted handle " + std::to_string(handles_.at(id)), frame);
      }
      if (it->second.mask.grid() != grid_) {
        throw BackendError("propagated mask is not on the sequence grid", frame);
      }
      if (std::isnan(it->second.logits)) throw BackendError("propagated logits is NaN", frame);
      traj = update_trajectory(std::move(traj), it->second.mask, it->second.logits, frame, cfg_);
      masks.emplace(id, it->second.mask);
      logits.emplace(id, it->second.logits);
    }
    result.scores = logits;

    // (3) cross-object interaction.
    if (toggles_.coi) {
      result.directives = resolve_interactions(trajectories_, masks, frame, cfg_);
      for (const auto& d : result.directives) {
        call_backend(frame, [&] { backend_.purge_memory(handles_.at(d.id), frame); });
        trace_.push_back({frame, TraceKind::purge, d.id});
      }
    }

    // (4)-(6) association, reconstruction and addition.
    if (!detections.empty()) {
      const auto high = high_confidence_indices(detections, cfg_);
      std::vector<Box> det_boxes;
      det_boxes.reserve(high.size());
      for (auto i : high) det_boxes.push_back(detections[i].box);

      std::vector<std::uint64_t> track_ids;
      std::vector<Box> track_boxes;
      for (const auto& [id, traj] : trajectories_) {
        if (!traj.last_box) continue;
        track_ids.push_back(id);
        track_boxes.push_back(*traj.last_box);
      }
      const MatchResult match = gated_match(track_boxes, det_boxes, cfg_.match_iou_gate);

      if (toggles_.qr) {
        for (const auto& [t, d] : match.matches) {
          Trajectory& traj = trajectories_.at(track_ids[t]);
          const Detection& det = detections[high[d]];
          if (!should_reconstruct(traj, det, cfg_)) continue;
          call_backend(frame,
                       [&] { backend_.recondition(handles_.at(traj.id), det.box, frame); });
          traj.last_conditioning_frame = frame;
          traj.logits_history.clear();
          result.reconditions.push_back(traj.id);
          trace_.push_back({frame, TraceKind::recondition, traj.id});
        }
      }

      if (toggles_.add || first_frame) {
        std::vector<Mask> tracked;
        tracked.reserve(masks.size());
        for (const auto& [id, m] : masks) tracked.push_back(m);
        const Mask untracked = untracked_region(grid_, tracked);
        for (const auto& det : addition_filter(detections, match, untracked, cfg_)) {
          const Handle handle = call_backend(frame, [&] { return backend_.init_object(det.box, frame); });
          for (const auto& [id, h] : handles_) {
            if (h == handle) throw BackendError("backend reused handle " + std::to_string(h), frame);
          }
          const std::uint64_t id = next_id_++;
          Trajectory traj = make_trajectory(id, det, frame, cfg_);
          traj.last_box = clamp_box(det.box, grid_);
          trajectories_.emplace(id, std::move(traj));
          handles_.emplace(id, handle);
          result.additions.push_back(id);
          trace_.push_back({frame, TraceKind::add, id});
        }
      }
    }

    // (7) removal.
    for (auto it = trajectories_.begin(); it != trajectories_.end();) {
      if (!should_remove(it->second, cfg_)) {
        ++it;
        continue;
      }
      const std::uint64_t id = it->first;
      call_backend(frame, [&] { backend_.drop_object(handles_.at(id)); });
      handles_.erase(id);
      it = trajectories_.erase(it);
      result.removals.push_back(id);
      trace_.push_back({frame, TraceKind::remove, id});
    }

    // (8) emit.
    for (const auto& [id, traj] : trajectories_) {
      if (traj.state < cfg_.emit_min_state || !traj.last_box) continue;
      FrameRecord rec;
      rec.id = id;
      rec.box = *traj.last_box;
      rec.state = traj.state;
      if (const auto it = logits.find(id); it != logits.end()) rec.logits = it->second;
      rec.class_id = traj.class_id;
      result.records.push_back(rec);
    }
    return result;
  }

  const std::map<std::uint64_t, Trajectory>& trajectories() const { return trajectories_; }
  const std::map<std::uint64_t, Handle>& handles() const { return handles_; }
  const std::vector<TraceEvent>& trace() const { return trace_; }
  const TrackerConfig& config() const { return cfg_; }
  const PipelineToggles& toggles() const { return toggles_; }

 private:
  template <typename Fn>
  static auto call_backend(long frame, Fn&& fn) -> decltype(fn()) {
    try {
      return fn();
    } catch (const BackendError&) {
      throw;
    } catch (const std::exception& e) {
      throw BackendError(e.what(), frame);
    }
  }

  SegmentationBackend& backend_;
  ImageGrid grid_;
  TrackerConfig cfg_;
  PipelineToggles toggles_;
  std::map<std::uint64_t, Trajectory> trajectories_;
  std::map<std::uint64_t, Handle> handles_;
  std::vector<TraceEvent> trace_;
  std::uint64_t next_id_ = 1;
  std::optional<long> last_frame_;
};

struct SequenceOutput {
  std::vector<FrameResult> frames;
  std::vector<TraceEvent> trace;
};

/// Feeds frames 1..frame_count through a fresh engine. `detections_for`
/// returns the (possibly empty) detections of one frame.
inline SequenceOutput run_sequence(
    long frame_count, const std::function<std::vector<Detection>(long)>& detections_for,
    SegmentationBackend& backend, ImageGrid grid, const TrackerConfig& cfg,
    PipelineToggles toggles = {}) {
  Engine engine(backend, grid, cfg, toggles);
  SequenceOutput out;
  out.frames.reserve(static_cast<std::size_t>(frame_count > 0 ? frame_count : 0));
  for (long frame = 1; frame <= frame_count; ++frame) {
    const auto dets = detections_for(frame);
    out.frames.push_back(engine.step(frame, dets));
  }
  out.trace = engine.trace();
  return out;
}

}  // namespace sam2mot
