#pragma once

// One synthetic run end to end: render ground truth, sample detections, track
// them against the synthetic backend and score the result.

#include <cstdint>
#include <sstream>
#include <string>
#include <vector>

#include "sam2mot/engine.hpp"
#include "sam2mot/io.hpp"
#include "sam2mot/metrics.hpp"
#include "sam2mot/scenarios.hpp"
#include "sam2mot/synthetic.hpp"

namespace sam2mot {

/// A built-in scenario name, or the path of a scene script JSON file.
inline SceneScript resolve_scenario(const std::string& name_or_path) {
  for (const auto& name : builtin_scenario_names()) {
    if (name == name_or_path) return builtin_scenario(name);
  }
  if (name_or_path.ends_with(".json")) return scene_script_from_json(read_json_file(name_or_path));
  throw InputError("unknown scenario '" + name_or_path + "' (expected S0..S4 or a .json file)");
}

struct SimulationOutput {
  std::vector<MotRow> gt;
  std::vector<MotRow> detections;
  SequenceOutput tracking;
  EvalReport report;
};

/// Ground-truth rows: id is the object's position in the script plus one, the
/// box is the full rectangle and `vis` the unoccluded fraction.
inline std::vector<MotRow> ground_truth_rows(const SceneScript& script) {
  std::vector<MotRow> rows;
  for (long f = 1; f <= script.frame_count(); ++f) {
    for (const auto& o : render_scene(script, f).objects) {
      rows.push_back({f, static_cast<std::int64_t>(o.index) + 1, o.box, 1.0,
                      script.objects[o.index].class_id, 1.0 - o.occluded_fraction});
    }
  }
  return rows;
}

inline SimulationOutput run_simulation(const SceneScript& script, const SimParams& params,
                                       const TrackerConfig& cfg, PipelineToggles toggles = {},
                                       double iou_threshold = 0.5) {
  script.validate();
  params.validate(cfg.tau_r);
  SimulationOutput out;
  out.gt = ground_truth_rows(script);

  std::vector<std::vector<Detection>> per_frame;
  for (long f = 1; f <= script.frame_count(); ++f) {
    per_frame.push_back(generate_detections(script, f, params));
    for (const auto& row : detection_rows(f, per_frame.back())) out.detections.push_back(row);
  }

  SyntheticBackend backend(script, params);
  out.tracking = run_sequence(
      script.frame_count(), [&](long f) { return per_frame[static_cast<std::size_t>(f - 1)]; },
      backend, script.grid, cfg, toggles);

  const auto gt = gt_from_rows(out.gt);
  const auto pred = pred_from_rows(result_rows(out.tracking.frames));
  out.report = evaluate(gt, pred, iou_threshold);
  return out;
}

/// Scores result rows against ground-truth rows.
inline EvalReport evaluate_rows(const std::vector<MotRow>& gt, const std::vector<MotRow>& results,
                                double iou_threshold) {
  const auto g = gt_from_rows(gt);
  const auto p = pred_from_rows(results);
  return evaluate(g, p, iou_threshold);
}

struct AblationRow {
  PipelineToggles toggles;
  EvalReport report;
};

/// The cumulative ladder (nothing, +Add, +CoI, +Q-R) followed by the two
/// leave-one-out variants of the full pipeline.
inline std::vector<PipelineToggles> ablation_ladder() {
  return {{false, false, false}, {true, false, false}, {true, true, false},
          {true, true, true},    {true, false, true},  {false, true, true}};
}

inline std::string ablation_table(const std::vector<AblationRow>& rows) {
  const auto mark = [](bool on) { return on ? std::string("  x") : std::string("  -"); };
  const auto pad = [](std::string s, std::size_t w) {
    if (s.size() < w) s.insert(0, w - s.size(), ' ');
    return s;
  };
  const auto fixed = [](double v) {
    std::ostringstream os;
    os.setf(std::ios::fixed);
    os.precision(4);
    os << v;
    return os.str();
  };
  std::string out = "Add  CoI  Q-R     MOTA     IDF1  IDSW      TP      FP      FN\n";
  for (const auto& r : rows) {
    out += mark(r.toggles.add) + "  " + mark(r.toggles.coi) + "  " + mark(r.toggles.qr) + "  " +
           pad(fixed(r.report.mota), 7) + "  " + pad(fixed(r.report.idf1), 7) + "  " +
           pad(std::to_string(r.report.idsw), 4) + "  " + pad(std::to_string(r.report.tp), 6) +
           "  " + pad(std::to_string(r.report.fp), 6) + "  " + pad(std::to_string(r.report.fn), 6) +
           "\n";
  }
  return out;
}

}  // namespace sam2mot
