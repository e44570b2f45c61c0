#pragma once

// File formats.
//
//   MOT CSV     frame,id,x,y,w,h,conf,class,vis   (frame 1-based, id -1 in
//               detection files, conf 0 marks an ignored ground-truth row)
//   JSON        TrackerConfig, SimParams and SceneScript as flat/nested
//               objects; unknown keys are rejected
//   trace       one {"frame":..,"event":..,"id":..} object per line

#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include <json.hpp>

#include "sam2mot/engine.hpp"
#include "sam2mot/error.hpp"
#include "sam2mot/mask.hpp"
#include "sam2mot/metrics.hpp"
#include "sam2mot/synthetic.hpp"
#include "sam2mot/trajectory.hpp"

namespace sam2mot {

using Json = nlohmann::ordered_json;

struct MotRow {
  long frame = 1;
  std::int64_t id = -1;
  Box box;
  double conf = 1.0;
  int class_id = 0;
  double vis = -1.0;

  friend bool operator==(const MotRow&, const MotRow&) = default;
};

/// Shortest decimal text that reads back as the same double.
inline std::string format_real(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

namespace detail {

template <typename T>
T parse_number(std::string_view field, const char* name, std::size_t line) {
  while (!field.empty() && field.front() == ' ') field.remove_prefix(1);
  while (!field.empty() && (field.back() == ' ' || field.back() == '\r')) field.remove_suffix(1);
  T value{};
  const auto res = std::from_chars(field.data(), field.data() + field.size(), value);
  if (res.ec != std::errc{} || res.ptr != field.data() + field.size() || field.empty()) {
    throw ParseError(std::string("invalid ") + name + " '" + std::string(field) + "'", line);
  }
  if constexpr (std::is_floating_point_v<T>) {
    if (!std::isfinite(value)) throw ParseError(std::string(name) + " is not finite", line);
  }
  return value;
}

}  // namespace detail

/// Parses MOT CSV rows. Blank lines are skipped; frames must not decrease.
inline std::vector<MotRow> parse_mot_csv(std::istream& in) {
  std::vector<MotRow> rows;
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::vector<std::string_view> fields;
    std::string_view rest(text);
    while (true) {
      const auto comma = rest.find(',');
      fields.push_back(rest.substr(0, comma));
      if (comma == std::string_view::npos) break;
      rest.remove_prefix(comma + 1);
    }
    if (fields.size() != 9) {
      throw ParseError("expected 9 comma-separated fields, found " + std::to_string(fields.size()),
                       line);
    }
    MotRow r;
    r.frame = detail::parse_number<long>(fields[0], "frame", line);
    r.id = detail::parse_number<std::int64_t>(fields[1], "id", line);
    r.box.x = detail::parse_number<int>(fields[2], "x", line);
    r.box.y = detail::parse_number<int>(fields[3], "y", line);
    r.box.w = detail::parse_number<int>(fields[4], "w", line);
    r.box.h = detail::parse_number<int>(fields[5], "h", line);
    r.conf = detail::parse_number<double>(fields[6], "conf", line);
    r.class_id = detail::parse_number<int>(fields[7], "class", line);
    r.vis = detail::parse_number<double>(fields[8], "vis", line);
    if (r.frame < 1) throw ParseError("frame numbers start at 1", line);
    if (!r.box.valid()) throw ParseError("box width and height must be positive", line);
    if (!rows.empty() && r.frame < rows.back().frame) {
      throw ParseError("frame " + std::to_string(r.frame) + " follows frame " +
                           std::to_string(rows.back().frame),
                       line);
    }
    rows.push_back(r);
  }
  return rows;
}

inline std::string render_mot_csv(const std::vector<MotRow>& rows) {
  std::string out;
  for (const auto& r : rows) {
    out += std::to_string(r.frame) + ',' + std::to_string(r.id) + ',' + std::to_string(r.box.x) +
           ',' + std::to_string(r.box.y) + ',' + std::to_string(r.box.w) + ',' +
           std::to_string(r.box.h) + ',' + format_real(r.conf) + ',' +
           std::to_string(r.class_id) + ',' + format_real(r.vis) + '\n';
  }
  return out;
}

inline std::ifstream open_input(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open '" + path + "'");
  return in;
}

inline std::vector<MotRow> read_mot_csv(const std::string& path) {
  auto in = open_input(path);
  return parse_mot_csv(in);
}

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write '" + path + "'");
  out << text;
}

using DetectionStream = std::map<long, std::vector<Detection>>;

inline DetectionStream detections_from_rows(const std::vector<MotRow>& rows) {
  DetectionStream out;
  for (const auto& r : rows) out[r.frame].push_back({r.box, r.conf, r.class_id});
  return out;
}

/// Detection file grouped by frame, file order kept within a frame.
inline DetectionStream parse_detections(const std::string& path) {
  return detections_from_rows(read_mot_csv(path));
}

inline std::vector<MotRow> detection_rows(long frame, const std::vector<Detection>& dets) {
  std::vector<MotRow> rows;
  for (const auto& d : dets) rows.push_back({frame, -1, d.box, d.confidence, d.class_id, -1.0});
  return rows;
}

inline std::vector<GtEntry> gt_from_rows(const std::vector<MotRow>& rows) {
  std::vector<GtEntry> out;
  for (const auto& r : rows) out.push_back({r.frame, r.id, r.box, r.class_id, r.conf == 0.0});
  return out;
}

inline std::vector<PredEntry> pred_from_rows(const std::vector<MotRow>& rows) {
  std::vector<PredEntry> out;
  for (const auto& r : rows) out.push_back({r.frame, r.id, r.box, r.class_id});
  return out;
}

/// Result rows; conf carries the logits score, -1 on an object's first frame.
inline std::vector<MotRow> result_rows(const std::vector<FrameResult>& frames) {
  std::vector<MotRow> rows;
  for (const auto& f : frames) {
    for (const auto& rec : f.records) {
      rows.push_back({f.frame, static_cast<std::int64_t>(rec.id), rec.box,
                      rec.logits.value_or(-1.0), rec.class_id, -1.0});
    }
  }
  return rows;
}

// ---------------------------------------------------------------------------
// JSON

namespace detail {

inline void reject_unknown_keys(const Json& j, std::initializer_list<std::string_view> known,
                                const char* what) {
  if (!j.is_object()) throw InputError(std::string(what) + " must be a JSON object");
  for (const auto& [key, _] : j.items()) {
    bool ok = false;
    for (auto k : known) ok = ok || key == k;
    if (!ok) throw InputError(std::string("unknown key '") + key + "' in " + what);
  }
}

template <typename T>
void read_field(const Json& j, const char* key, T& out, const char* what) {
  const auto it = j.find(key);
  if (it == j.end()) return;
  try {
    out = it->template get<T>();
  } catch (const nlohmann::json::exception&) {
    throw InputError(std::string("bad value for '") + key + "' in " + what);
  }
}

inline Json box_json(const Box& b) { return Json::array({b.x, b.y, b.w, b.h}); }

inline Box box_from_json(const Json& j) {
  if (!j.is_array() || j.size() != 4) throw InputError("box must be [x, y, w, h]");
  try {
    return Box{j[0].get<int>(), j[1].get<int>(), j[2].get<int>(), j[3].get<int>()};
  } catch (const nlohmann::json::exception&) {
    throw InputError("box entries must be integers");
  }
}

}  // namespace detail

inline Json to_json(const TrackerConfig& c) {
  return Json{{"tau_r", c.tau_r},
              {"tau_p", c.tau_p},
              {"tau_s", c.tau_s},
              {"tolerance_frames", c.tolerance_frames},
              {"r_threshold", c.r_threshold},
              {"variance_window", c.variance_window},
              {"det_conf_threshold", c.det_conf_threshold},
              {"miou_occlusion_threshold", c.miou_occlusion_threshold},
              {"logits_sig_delta", c.logits_sig_delta},
              {"match_iou_gate", c.match_iou_gate},
              {"emit_min_state", std::string(to_string(c.emit_min_state))}};
}

/// Missing keys keep the values already in `base`.
inline TrackerConfig tracker_config_from_json(const Json& j, TrackerConfig base = {}) {
  constexpr const char* what = "tracker config";
  detail::reject_unknown_keys(j,
                              {"tau_r", "tau_p", "tau_s", "tolerance_frames", "r_threshold",
                               "variance_window", "det_conf_threshold",
                               "miou_occlusion_threshold", "logits_sig_delta", "match_iou_gate",
                               "emit_min_state"},
                              what);
  detail::read_field(j, "tau_r", base.tau_r, what);
  detail::read_field(j, "tau_p", base.tau_p, what);
  detail::read_field(j, "tau_s", base.tau_s, what);
  detail::read_field(j, "tolerance_frames", base.tolerance_frames, what);
  detail::read_field(j, "r_threshold", base.r_threshold, what);
  detail::read_field(j, "variance_window", base.variance_window, what);
  detail::read_field(j, "det_conf_threshold", base.det_conf_threshold, what);
  detail::read_field(j, "miou_occlusion_threshold", base.miou_occlusion_threshold, what);
  detail::read_field(j, "logits_sig_delta", base.logits_sig_delta, what);
  detail::read_field(j, "match_iou_gate", base.match_iou_gate, what);
  if (const auto it = j.find("emit_min_state"); it != j.end()) {
    if (!it->is_string()) throw InputError("emit_min_state must be a state name");
    base.emit_min_state = parse_state(it->get<std::string>());
  }
  base.validate();
  return base;
}

inline Json to_json(const SimParams& p) {
  return Json{{"l_max", p.l_max},
              {"drift_per_frame", p.drift_per_frame},
              {"occlusion_penalty", p.occlusion_penalty},
              {"corruption_penalty", p.corruption_penalty},
              {"det_noise", p.det_noise},
              {"det_dropout", p.det_dropout},
              {"seed", p.seed},
              {"corruption_occlusion", p.corruption_occlusion},
              {"absent_logits", p.absent_logits},
              {"memory_recent", p.memory_recent}};
}

inline SimParams sim_params_from_json(const Json& j, SimParams base = {}) {
  constexpr const char* what = "simulation params";
  detail::reject_unknown_keys(j,
                              {"l_max", "drift_per_frame", "occlusion_penalty",
                               "corruption_penalty", "det_noise", "det_dropout", "seed",
                               "corruption_occlusion", "absent_logits", "memory_recent"},
                              what);
  detail::read_field(j, "l_max", base.l_max, what);
  detail::read_field(j, "drift_per_frame", base.drift_per_frame, what);
  detail::read_field(j, "occlusion_penalty", base.occlusion_penalty, what);
  detail::read_field(j, "corruption_penalty", base.corruption_penalty, what);
  detail::read_field(j, "det_noise", base.det_noise, what);
  detail::read_field(j, "det_dropout", base.det_dropout, what);
  detail::read_field(j, "seed", base.seed, what);
  detail::read_field(j, "corruption_occlusion", base.corruption_occlusion, what);
  detail::read_field(j, "absent_logits", base.absent_logits, what);
  detail::read_field(j, "memory_recent", base.memory_recent, what);
  base.validate();
  return base;
}

inline Json to_json(const SceneScript& s) {
  Json objects = Json::array();
  for (const auto& o : s.objects) {
    Json wps = Json::array();
    for (const auto& w : o.waypoints) wps.push_back({{"frame", w.frame}, {"box", detail::box_json(w.box)}});
    objects.push_back({{"key", o.key},
                       {"birth", o.birth},
                       {"death", o.death},
                       {"z", o.z},
                       {"class_id", o.class_id},
                       {"waypoints", std::move(wps)}});
  }
  return Json{{"grid", {{"width", s.grid.width}, {"height", s.grid.height}}},
              {"objects", std::move(objects)}};
}

inline SceneScript scene_script_from_json(const Json& j) {
  detail::reject_unknown_keys(j, {"grid", "objects"}, "scene script");
  SceneScript s;
  try {
    const Json& g = j.at("grid");
    detail::reject_unknown_keys(g, {"width", "height"}, "scene grid");
    s.grid = {g.at("width").get<int>(), g.at("height").get<int>()};
    for (const Json& o : j.at("objects")) {
      detail::reject_unknown_keys(o, {"key", "birth", "death", "z", "class_id", "waypoints"},
                                  "scene object");
      SceneObject obj;
      obj.key = o.at("key").get<std::string>();
      obj.birth = o.at("birth").get<long>();
      obj.death = o.at("death").get<long>();
      obj.z = o.at("z").get<int>();
      obj.class_id = o.value("class_id", 0);
      for (const Json& w : o.at("waypoints")) {
        detail::reject_unknown_keys(w, {"frame", "box"}, "waypoint");
        obj.waypoints.push_back({w.at("frame").get<long>(), detail::box_from_json(w.at("box"))});
      }
      s.objects.push_back(std::move(obj));
    }
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("malformed scene script: ") + e.what());
  }
  s.validate();
  return s;
}

inline Json read_json_file(const std::string& path) {
  auto in = open_input(path);
  try {
    return Json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError("'" + path + "' is not valid JSON: " + e.what(), 0);
  }
}

inline Json to_json(const PipelineToggles& t) {
  return Json{{"add", t.add}, {"coi", t.coi}, {"qr", t.qr}};
}

inline Json to_json(const TraceEvent& e) {
  return Json{{"frame", e.frame}, {"event", std::string(to_string(e.kind))}, {"id", e.id}};
}

inline std::string render_trace(const std::vector<TraceEvent>& events) {
  std::string out;
  for (const auto& e : events) out += to_json(e).dump() + '\n';
  return out;
}

inline Json to_json(const EvalReport& r) {
  return Json{{"iou_threshold", r.iou_threshold},
              {"MOTA", r.mota},
              {"IDF1", r.idf1},
              {"TP", r.tp},
              {"FP", r.fp},
              {"FN", r.fn},
              {"IDSW", r.idsw},
              {"MT", r.mt},
              {"ML", r.ml},
              {"total_gt", r.total_gt},
              {"total_pred", r.total_pred},
              {"gt_tracks", r.gt_tracks}};
}

inline std::string report_table(const std::vector<std::pair<std::string, EvalReport>>& rows) {
  std::size_t label_width = 5;
  for (const auto& [label, _] : rows) label_width = std::max(label_width, label.size());
  const auto pad = [](std::string s, std::size_t w) {
    if (s.size() < w) s.insert(0, w - s.size(), ' ');
    return s;
  };
  const auto fixed = [](double v, int digits) {
    std::ostringstream os;
    os.setf(std::ios::fixed);
    os.precision(digits);
    os << v;
    return os.str();
  };
  std::string label_head = "run";
  label_head.resize(label_width, ' ');
  std::string out = label_head + "  " + pad("IoU", 4) + "  " + pad("MOTA", 7) + "  " +
                    pad("IDF1", 7) + "  " + pad("TP", 6) + "  " + pad("FP", 6) + "  " +
                    pad("FN", 6) + "  " + pad("IDSW", 5) + "  " + pad("MT", 4) + "  " +
                    pad("ML", 4) + "\n";
  for (const auto& [label, r] : rows) {
    std::string l = label;
    l.resize(label_width, ' ');
    out += l + "  " + pad(fixed(r.iou_threshold, 2), 4) + "  " + pad(fixed(r.mota, 4), 7) + "  " +
           pad(fixed(r.idf1, 4), 7) + "  " + pad(std::to_string(r.tp), 6) + "  " +
           pad(std::to_string(r.fp), 6) + "  " + pad(std::to_string(r.fn), 6) + "  " +
           pad(std::to_string(r.idsw), 5) + "  " + pad(std::to_string(r.mt), 4) + "  " +
           pad(std::to_string(r.ml), 4) + "\n";
  }
  return out;
}

}  // namespace sam2mot
