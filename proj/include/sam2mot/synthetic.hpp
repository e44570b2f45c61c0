#pragma once

// Deterministic stand-in for a promptable video segmenter.
//
// A SceneScript moves axis-aligned rectangles over the grid with a depth
// order. The backend reproduces the behaviours the tracker reacts to:
//   * logits fall linearly with frames since the last prompt (drift), with
//     the occluded fraction of the object, and with every corrupted entry
//     still held in memory;
//   * the memory bank keeps one conditional entry and the six most recent
//     non-conditional entries;
//   * when the locked object is occluded beyond `corruption_occlusion`, the
//     frame's mask latches onto the dominant occluder. Unless that frame's
//     entry is purged before the next propagation, the object's lock moves
//     to the occluder for good (identity theft).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "sam2mot/backend.hpp"
#include "sam2mot/error.hpp"
#include "sam2mot/mask.hpp"
#include "sam2mot/trajectory.hpp"

namespace sam2mot {

struct Waypoint {
  long frame = 1;
  Box box;

  friend bool operator==(const Waypoint&, const Waypoint&) = default;
};

struct SceneObject {
  std::string key;
  long birth = 1;
  long death = 1;  // last frame the object exists, inclusive
  std::vector<Waypoint> waypoints;
  int z = 0;  // larger is closer to the camera
  int class_id = 0;

  friend bool operator==(const SceneObject&, const SceneObject&) = default;
};

struct SceneScript {
  ImageGrid grid;
  std::vector<SceneObject> objects;

  /// Frames run 1..frame_count().
  long frame_count() const {
    long last = 0;
    for (const auto& o : objects) last = std::max(last, o.death);
    return last;
  }

  void validate() const {
    require_valid(grid);
    std::vector<int> depths;
    std::vector<std::string> keys;
    for (const auto& o : objects) {
      const std::string where = "object '" + o.key + "': ";
      if (o.key.empty()) throw InputError("scene object without a key");
      if (o.waypoints.empty()) throw InputError(where + "needs at least one waypoint");
      if (o.birth < 1 || o.death < o.birth) throw InputError(where + "needs 1 <= birth <= death");
      if (o.birth > o.waypoints.front().frame) {
        throw InputError(where + "birth must not come after the first waypoint");
      }
      for (std::size_t i = 0; i < o.waypoints.size(); ++i) {
        const Box& b = o.waypoints[i].box;
        if (!b.valid() || b.x < 0 || b.y < 0 || b.right() > grid.width ||
            b.bottom() > grid.height) {
          throw InputError(where + "waypoint box outside the grid");
        }
        if (i > 0 && o.waypoints[i].frame <= o.waypoints[i - 1].frame) {
          throw InputError(where + "waypoint frames must be strictly increasing");
        }
      }
      depths.push_back(o.z);
      keys.push_back(o.key);
    }
    std::sort(depths.begin(), depths.end());
    if (std::adjacent_find(depths.begin(), depths.end()) != depths.end()) {
      throw InputError("scene depth values must be unique");
    }
    std::sort(keys.begin(), keys.end());
    if (std::adjacent_find(keys.begin(), keys.end()) != keys.end()) {
      throw InputError("scene object keys must be unique");
    }
  }

  friend bool operator==(const SceneScript&, const SceneScript&) = default;
};

struct SimParams {
  double l_max = 9.0;
  double drift_per_frame = 0.02;
  double occlusion_penalty = 6.0;
  double corruption_penalty = 4.0;
  int det_noise = 1;  // max jitter per box coordinate, pixels
  double det_dropout = 0.0;
  std::uint64_t seed = 0;
  double corruption_occlusion = 0.8;
  double absent_logits = 0.0;  // score reported when the locked object is gone
  int memory_recent = 6;

  void validate(double tau_r = 8.0) const {
    if (!(std::isfinite(l_max) && l_max > tau_r)) {
      throw InputError("l_max must exceed the reliable threshold");
    }
    if (!(drift_per_frame >= 0.0 && occlusion_penalty >= 0.0 && corruption_penalty >= 0.0)) {
      throw InputError("logits penalties must be >= 0");
    }
    if (det_noise < 0) throw InputError("det_noise must be >= 0");
    if (!(det_dropout >= 0.0 && det_dropout <= 1.0)) throw InputError("det_dropout must lie in [0, 1]");
    if (!(corruption_occlusion >= 0.0 && corruption_occlusion <= 1.0)) {
      throw InputError("corruption_occlusion must lie in [0, 1]");
    }
    if (!(absent_logits >= 0.0 && absent_logits <= l_max)) {
      throw InputError("absent_logits must lie in [0, l_max]");
    }
    if (memory_recent < 1) throw InputError("memory_recent must be >= 1");
  }

  friend bool operator==(const SimParams&, const SimParams&) = default;
};

/// Linearly interpolated rectangle of `obj` at `frame`, clamped to the grid.
/// Absent when the object is not alive or lies entirely off the grid.
inline std::optional<Box> object_box_at(const SceneObject& obj, long frame, ImageGrid grid) {
  if (frame < obj.birth || frame > obj.death) return std::nullopt;
  const auto& wps = obj.waypoints;
  Box box = wps.front().box;
  if (frame >= wps.back().frame) {
    box = wps.back().box;
  } else if (frame > wps.front().frame) {
    const auto next = std::upper_bound(wps.begin(), wps.end(), frame,
                                       [](long f, const Waypoint& w) { return f < w.frame; });
    const Waypoint& b = *next;
    const Waypoint& a = *(next - 1);
    const double t = static_cast<double>(frame - a.frame) / static_cast<double>(b.frame - a.frame);
    const auto lerp = [t](int p, int q) {
      return static_cast<int>(std::lround(p + (q - p) * t));
    };
    box = Box{lerp(a.box.x, b.box.x), lerp(a.box.y, b.box.y), lerp(a.box.w, b.box.w),
              lerp(a.box.h, b.box.h)};
  }
  return clamp_box(box, grid);
}

/// Per-frame rendering of the whole scene.
struct SceneFrame {
  struct Object {
    std::size_t index = 0;  // position in SceneScript::objects
    Box box;
    Mask visible;
    double occluded_fraction = 0.0;
    std::optional<std::size_t> dominant_occluder;
  };
  std::vector<Object> objects;  // alive and on-grid objects, script order

  const Object* find(std::size_t index) const {
    for (const auto& o : objects) {
      if (o.index == index) return &o;
    }
    return nullptr;
  }
};

inline SceneFrame render_scene(const SceneScript& script, long frame) {
  if (frame < 1 || frame > script.frame_count()) {
    throw InputError("frame " + std::to_string(frame) + " outside the scene span 1.." +
                     std::to_string(script.frame_count()));
  }
  const ImageGrid grid = script.grid;
  std::vector<std::pair<std::size_t, Box>> present;
  for (std::size_t i = 0; i < script.objects.size(); ++i) {
    if (auto box = object_box_at(script.objects[i], frame, grid)) present.emplace_back(i, *box);
  }
  // Painter's order: deeper objects first, nearer ones overwrite.
  std::vector<std::pair<std::size_t, Box>> by_depth = present;
  std::sort(by_depth.begin(), by_depth.end(), [&](const auto& a, const auto& b) {
    return script.objects[a.first].z < script.objects[b.first].z;
  });
  constexpr int kNone = -1;
  std::vector<int> owner(static_cast<std::size_t>(grid.area()), kNone);
  for (const auto& [idx, box] : by_depth) {
    for (int y = box.y; y < box.bottom(); ++y) {
      std::fill_n(owner.begin() + static_cast<std::ptrdiff_t>(y) * grid.width + box.x, box.w,
                  static_cast<int>(idx));
    }
  }

  SceneFrame scene;
  for (const auto& [idx, box] : present) {
    std::vector<bool> bits(owner.size(), false);
    std::map<int, std::int64_t> covered_by;
    for (int y = box.y; y < box.bottom(); ++y) {
      for (int x = box.x; x < box.right(); ++x) {
        const auto p = static_cast<std::size_t>(y) * grid.width + x;
        if (owner[p] == static_cast<int>(idx)) {
          bits[p] = true;
        } else {
          ++covered_by[owner[p]];
        }
      }
    }
    SceneFrame::Object obj{idx, box, encode_mask(bits, grid), 0.0, std::nullopt};
    std::int64_t covered = 0;
    std::int64_t best = 0;
    for (const auto& [occluder, count] : covered_by) {
      covered += count;
      const auto o = static_cast<std::size_t>(occluder);
      if (count > best || (count == best && obj.dominant_occluder &&
                           script.objects[o].z > script.objects[*obj.dominant_occluder].z)) {
        best = count;
        obj.dominant_occluder = o;
      }
    }
    obj.occluded_fraction = static_cast<double>(covered) / static_cast<double>(box.area());
    scene.objects.push_back(std::move(obj));
  }
  return scene;
}

struct GroundTruthObject {
  Mask visible;
  Box box;
  double occluded_fraction = 0.0;
};

/// Visible-part masks and full rectangles of every object on screen.
inline std::map<std::string, GroundTruthObject> render_ground_truth(const SceneScript& script,
                                                                   long frame) {
  std::map<std::string, GroundTruthObject> out;
  for (auto& o : render_scene(script, frame).objects) {
    out.emplace(script.objects[o.index].key,
                GroundTruthObject{std::move(o.visible), o.box, o.occluded_fraction});
  }
  return out;
}

namespace detail {

// Maps raw engine output to values without relying on the implementation-
// defined standard distributions, so streams match across toolchains.
inline double unit_draw(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline int jitter_draw(std::mt19937_64& rng, int noise) {
  const std::uint64_t span = 2 * static_cast<std::uint64_t>(noise) + 1;
  return static_cast<int>(rng() % span) - noise;
}

}  // namespace detail

/// Noisy detector output for one frame, deterministic in (seed, frame).
inline std::vector<Detection> generate_detections(const SceneScript& script, long frame,
                                                  const SimParams& params) {
  const auto scene = render_scene(script, frame);
  std::seed_seq seq{static_cast<std::uint32_t>(params.seed),
                    static_cast<std::uint32_t>(params.seed >> 32),
                    static_cast<std::uint32_t>(frame)};
  std::mt19937_64 rng(seq);
  std::vector<Detection> dets;
  for (const auto& o : scene.objects) {
    const double keep = detail::unit_draw(rng);
    Box box = o.box;
    const int dx = detail::jitter_draw(rng, params.det_noise);
    const int dy = detail::jitter_draw(rng, params.det_noise);
    const int dw = detail::jitter_draw(rng, params.det_noise);
    const int dh = detail::jitter_draw(rng, params.det_noise);
    if (keep < params.det_dropout) continue;
    box.x += dx;
    box.y += dy;
    box.w = std::max(1, box.w + dw);
    box.h = std::max(1, box.h + dh);
    const auto clamped = clamp_box(box, script.grid);
    if (!clamped) continue;
    dets.push_back({*clamped, 0.95 - 0.5 * o.occluded_fraction,
                    script.objects[o.index].class_id});
  }
  return dets;
}

class SyntheticBackend : public SegmentationBackend {
 public:
  struct MemoryEntry {
    long frame = 0;
    bool conditional = false;
    std::optional<std::size_t> latched_onto;  // set when the frame's mask was the occluder's

    friend bool operator==(const MemoryEntry&, const MemoryEntry&) = default;
  };

  SyntheticBackend(SceneScript script, SimParams params)
      : script_(std::move(script)), params_(params) {
    script_.validate();
    params_.validate();
  }

  Handle init_object(const Box& prompt, long frame) override {
    const Handle h = next_handle_++;
    Session s;
    s.lock = best_match(prompt, frame);
    s.last_conditioning = frame;
    s.memory.push_back({frame, true, std::nullopt});
    sessions_.emplace(h, std::move(s));
    return h;
  }

  std::map<Handle, Propagation> propagate(long frame) override {
    const SceneFrame scene = render_scene(script_, frame);
    std::map<Handle, Propagation> out;
    for (auto& [handle, s] : sessions_) {
      // An unpurged latched entry from the previous propagation steals the lock.
      if (last_propagated_) {
        for (const auto& e : s.memory) {
          if (!e.conditional && e.frame == *last_propagated_ && e.latched_onto) {
            s.lock = e.latched_onto;
          }
        }
      }
      const auto corrupted = std::count_if(s.memory.begin(), s.memory.end(),
                                           [](const MemoryEntry& e) { return e.latched_onto.has_value(); });
      MemoryEntry entry{frame, false, std::nullopt};
      const SceneFrame::Object* target = s.lock ? scene.find(*s.lock) : nullptr;
      if (target == nullptr) {
        out.emplace(handle, Propagation{Mask::empty(script_.grid), params_.absent_logits});
      } else {
        Mask mask = target->visible;
        if (target->occluded_fraction > params_.corruption_occlusion && target->dominant_occluder) {
          if (const auto* occ = scene.find(*target->dominant_occluder)) {
            mask = occ->visible;
            entry.latched_onto = occ->index;
          }
        }
        const double drift = params_.drift_per_frame * static_cast<double>(frame - s.last_conditioning);
        double logits = params_.l_max - drift - params_.occlusion_penalty * target->occluded_fraction -
                        params_.corruption_penalty * static_cast<double>(corrupted);
        logits = std::clamp(logits, 0.0, params_.l_max);
        out.emplace(handle, Propagation{std::move(mask), logits});
      }
      s.memory.push_back(entry);
      evict(s);
    }
    last_propagated_ = frame;
    return out;
  }

  void purge_memory(Handle handle, long frame) override {
    auto& s = session(handle);
    std::erase_if(s.memory, [frame](const MemoryEntry& e) { return !e.conditional && e.frame == frame; });
  }

  void recondition(Handle handle, const Box& prompt, long frame) override {
    auto& s = session(handle);
    s.lock = best_match(prompt, frame);
    s.last_conditioning = frame;
    s.memory.clear();
    s.memory.push_back({frame, true, std::nullopt});
  }

  void drop_object(Handle handle) override {
    session(handle);
    sessions_.erase(handle);
  }

  /// Key of the object `handle` currently follows, if any.
  std::optional<std::string> locked_key(Handle handle) const {
    const auto& s = session(handle);
    if (!s.lock) return std::nullopt;
    return script_.objects[*s.lock].key;
  }

  const std::deque<MemoryEntry>& memory(Handle handle) const { return session(handle).memory; }
  std::size_t live_objects() const { return sessions_.size(); }
  const SceneScript& script() const { return script_; }
  const SimParams& params() const { return params_; }

 private:
  struct Session {
    std::optional<std::size_t> lock;
    long last_conditioning = 0;
    std::deque<MemoryEntry> memory;
  };

  Session& session(Handle h) {
    const auto it = sessions_.find(h);
    if (it == sessions_.end()) throw InputError("unknown handle " + std::to_string(h));
    return it->second;
  }
  const Session& session(Handle h) const {
    const auto it = sessions_.find(h);
    if (it == sessions_.end()) throw InputError("unknown handle " + std::to_string(h));
    return it->second;
  }

  void evict(Session& s) const {
    auto recent = std::count_if(s.memory.begin(), s.memory.end(),
                                [](const MemoryEntry& e) { return !e.conditional; });
    while (recent > params_.memory_recent) {
      const auto oldest = std::find_if(s.memory.begin(), s.memory.end(),
                                       [](const MemoryEntry& e) { return !e.conditional; });
      s.memory.erase(oldest);
      --recent;
    }
  }

  // Object whose full rectangle has the highest IoU with the prompt; ties go
  // to the nearer object. Absent when the prompt touches nothing.
  std::optional<std::size_t> best_match(const Box& prompt, long frame) const {
    std::optional<std::size_t> best;
    double best_iou = 0.0;
    for (std::size_t i = 0; i < script_.objects.size(); ++i) {
      const auto box = object_box_at(script_.objects[i], frame, script_.grid);
      if (!box) continue;
      const double iou = box_iou(prompt, *box);
      if (iou <= 0.0) continue;
      if (!best || iou > best_iou ||
          (iou == best_iou && script_.objects[i].z > script_.objects[*best].z)) {
        best = i;
        best_iou = iou;
      }
    }
    return best;
  }

  SceneScript script_;
  SimParams params_;
  std::map<Handle, Session> sessions_;
  Handle next_handle_ = 1;
  std::optional<long> last_propagated_;
};

}  // namespace sam2mot
