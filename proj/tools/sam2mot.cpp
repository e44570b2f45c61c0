// Command-line front end: track, simulate, evaluate, ablate.

#include <algorithm>
#include <atomic>
#include <exception>
#include <filesystem>
#include <functional>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "sam2mot/bridge.hpp"
#include "sam2mot/sam2mot.hpp"
#include "sam2mot/simulation.hpp"

namespace fs = std::filesystem;
using namespace sam2mot;

namespace {

// Options shared by the subcommands that run the tracker.
struct TrackerOptions {
  std::string config_path;
  std::string sim_config_path;
  std::optional<int> tolerance_frames;
  std::optional<double> det_conf_threshold;
  std::optional<double> miou_threshold;
  std::optional<std::uint64_t> seed;
  std::optional<int> det_noise;
  std::optional<double> det_dropout;
  bool no_add = false;
  bool no_coi = false;
  bool no_qr = false;

  void attach(CLI::App& app, bool with_sim) {
    app.add_option("--config", config_path, "Tracker config JSON")->check(CLI::ExistingFile);
    app.add_option("--tolerance-frames", tolerance_frames, "Frames a lost object is kept");
    app.add_option("--det-conf-threshold", det_conf_threshold, "Detection confidence threshold");
    app.add_option("--miou-threshold", miou_threshold, "Mask IoU that triggers interaction");
    if (with_sim) {
      app.add_option("--sim-config", sim_config_path, "Simulation params JSON")
          ->check(CLI::ExistingFile);
      app.add_option("--seed", seed, "Seed for every random draw");
      app.add_option("--det-noise", det_noise, "Max detection jitter in pixels");
      app.add_option("--det-dropout", det_dropout, "Probability a detection is missed");
    }
  }

  void attach_toggles(CLI::App& app) {
    app.add_flag("--no-add", no_add, "Disable trajectory addition after the first frame");
    app.add_flag("--no-coi", no_coi, "Disable cross-object interaction");
    app.add_flag("--no-qr", no_qr, "Disable quality reconstruction");
  }

  // Flags win over the config file, which wins over defaults.
  TrackerConfig tracker() const {
    TrackerConfig c;
    if (!config_path.empty()) c = tracker_config_from_json(read_json_file(config_path));
    if (tolerance_frames) c.tolerance_frames = *tolerance_frames;
    if (det_conf_threshold) c.det_conf_threshold = *det_conf_threshold;
    if (miou_threshold) c.miou_occlusion_threshold = *miou_threshold;
    c.validate();
    return c;
  }

  SimParams sim(const TrackerConfig& cfg) const {
    SimParams p;
    if (!sim_config_path.empty()) p = sim_params_from_json(read_json_file(sim_config_path));
    if (seed) p.seed = *seed;
    if (det_noise) p.det_noise = *det_noise;
    if (det_dropout) p.det_dropout = *det_dropout;
    p.validate(cfg.tau_r);
    return p;
  }

  PipelineToggles toggles() const { return {!no_add, !no_coi, !no_qr}; }
  bool any_toggle() const { return no_add || no_coi || no_qr; }
};

std::string scenario_label(const std::string& name_or_path) {
  if (name_or_path.ends_with(".json")) return fs::path(name_or_path).stem().string();
  return name_or_path;
}

// Runs task(i) for i in [0, n) on up to `jobs` threads; the first failure is
// rethrown after all threads finish.
void run_parallel(std::size_t n, int jobs, const std::function<void(std::size_t)>& task) {
  const auto workers = static_cast<std::size_t>(std::clamp<long>(jobs, 1, static_cast<long>(n)));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) task(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(n);
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          task(i);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

void ensure_directory(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error("cannot create directory '" + dir.string() + "': " + ec.message());
}

std::string dump(const Json& j) { return j.dump(2) + "\n"; }

Json reports_json(const std::vector<EvalReport>& reports) {
  Json arr = Json::array();
  for (const auto& r : reports) arr.push_back(to_json(r));
  return arr;
}

// ---------------------------------------------------------------------------

struct TrackCommand {
  TrackerOptions opts;
  std::string detections;
  std::string backend = "synthetic";
  std::string scenario;
  std::string bridge_cmd;
  int width = 0;
  int height = 0;
  std::string out;

  void attach(CLI::App& app) {
    app.add_option("--detections", detections, "Detection CSV")->required()->check(CLI::ExistingFile);
    app.add_option("--backend", backend, "Segmentation backend")
        ->check(CLI::IsMember({"synthetic", "bridge"}));
    app.add_option("--scenario", scenario, "Scene for the synthetic backend (S0..S4 or .json)");
    app.add_option("--bridge-cmd", bridge_cmd, "Command that serves the bridge protocol");
    app.add_option("--width", width, "Frame width for the bridge backend");
    app.add_option("--height", height, "Frame height for the bridge backend");
    app.add_option("--out", out, "Output directory (results.csv, trace.jsonl, config.json)");
    opts.attach(app, true);
    opts.attach_toggles(app);
  }

  int run() const {
    const TrackerConfig cfg = opts.tracker();
    const DetectionStream stream = parse_detections(detections);
    const long frame_count = stream.empty() ? 0 : stream.rbegin()->first;

    std::unique_ptr<SegmentationBackend> be;
    ImageGrid grid;
    Json echo{{"tracker", to_json(cfg)}, {"toggles", to_json(opts.toggles())}, {"backend", backend}};
    if (backend == "synthetic") {
      if (scenario.empty()) throw InputError("--backend synthetic needs --scenario");
      const SceneScript script = resolve_scenario(scenario);
      const SimParams params = opts.sim(cfg);
      grid = script.grid;
      be = std::make_unique<SyntheticBackend>(script, params);
      echo["scenario"] = scenario;
      echo["sim"] = to_json(params);
    } else {
      if (bridge_cmd.empty()) throw InputError("--backend bridge needs --bridge-cmd");
      grid = ImageGrid{width, height};
      if (!grid.valid()) throw InputError("--backend bridge needs --width and --height");
      be = std::make_unique<bridge::BridgeBackend>(std::make_unique<bridge::SubprocessTransport>(bridge_cmd));
      echo["bridge_cmd"] = bridge_cmd;
    }
    echo["grid"] = {{"width", grid.width}, {"height", grid.height}};

    const std::vector<Detection> none;
    const auto seq = run_sequence(
        frame_count,
        [&](long f) {
          const auto it = stream.find(f);
          return it == stream.end() ? none : it->second;
        },
        *be, grid, cfg, opts.toggles());
    const std::string results = render_mot_csv(result_rows(seq.frames));
    if (out.empty()) {
      std::cout << results;
      return 0;
    }
    ensure_directory(out);
    write_text((fs::path(out) / "results.csv").string(), results);
    write_text((fs::path(out) / "trace.jsonl").string(), render_trace(seq.trace));
    write_text((fs::path(out) / "config.json").string(), dump(echo));
    return 0;
  }
};

struct SimulateCommand {
  TrackerOptions opts;
  std::vector<std::string> scenarios;
  std::string out = "out";
  int jobs = 1;

  void attach(CLI::App& app) {
    app.add_option("--scenario", scenarios, "Scenario names (S0..S4) or scene .json files")
        ->required()
        ->delimiter(',');
    app.add_option("--out", out, "Output directory; one subdirectory per scenario");
    app.add_option("--jobs", jobs, "Scenarios simulated concurrently")->check(CLI::PositiveNumber);
    opts.attach(app, true);
    opts.attach_toggles(app);
  }

  int run() const {
    const TrackerConfig cfg = opts.tracker();
    const SimParams params = opts.sim(cfg);
    std::vector<SceneScript> scripts;
    for (const auto& s : scenarios) scripts.push_back(resolve_scenario(s));
    std::vector<std::string> summaries(scripts.size());
    run_parallel(scripts.size(), jobs, [&](std::size_t i) {
      const auto sim = run_simulation(scripts[i], params, cfg, opts.toggles(), 0.5);
      const auto loose = evaluate_rows(sim.gt, result_rows(sim.tracking.frames), 0.4);
      const fs::path dir = fs::path(out) / scenario_label(scenarios[i]);
      ensure_directory(dir);
      write_text((dir / "gt.csv").string(), render_mot_csv(sim.gt));
      write_text((dir / "det.csv").string(), render_mot_csv(sim.detections));
      write_text((dir / "results.csv").string(), render_mot_csv(result_rows(sim.tracking.frames)));
      write_text((dir / "trace.jsonl").string(), render_trace(sim.tracking.trace));
      write_text((dir / "report.json").string(),
                 dump(Json{{"scenario", scenario_label(scenarios[i])},
                           {"reports", reports_json({sim.report, loose})}}));
      const std::string table = report_table({{"IoU 0.5", sim.report}, {"IoU 0.4", loose}});
      write_text((dir / "report.txt").string(), table);
      write_text((dir / "config.json").string(),
                 dump(Json{{"scenario", scenarios[i]},
                           {"tracker", to_json(cfg)},
                           {"sim", to_json(params)},
                           {"toggles", to_json(opts.toggles())}}));
      summaries[i] = scenario_label(scenarios[i]) + "\n" + table;
    });
    for (const auto& s : summaries) std::cout << s;
    return 0;
  }
};

struct EvaluateCommand {
  std::string gt;
  std::string results;
  std::vector<double> ious{0.5};
  bool json = false;

  void attach(CLI::App& app) {
    app.add_option("--gt", gt, "Ground-truth CSV")->required()->check(CLI::ExistingFile);
    app.add_option("--results", results, "Tracker result CSV")->required()->check(CLI::ExistingFile);
    app.add_option("--iou", ious, "IoU threshold(s), e.g. 0.5 or 0.4")
        ->delimiter(',')
        ->check(CLI::Range(0.0, 1.0));
    app.add_flag("--json", json, "Print the report as JSON");
  }

  int run() const {
    const auto g = read_mot_csv(gt);
    const auto r = read_mot_csv(results);
    std::vector<EvalReport> reports;
    std::vector<std::pair<std::string, EvalReport>> rows;
    for (double iou : ious) {
      if (!(iou > 0.0)) throw InputError("--iou must be positive");
      reports.push_back(evaluate_rows(g, r, iou));
      rows.emplace_back(fs::path(results).filename().string(), reports.back());
    }
    if (json) {
      std::cout << dump(reports_json(reports));
    } else {
      std::cout << report_table(rows);
    }
    return 0;
  }
};

struct AblateCommand {
  TrackerOptions opts;
  std::string scenario = "S1";
  int jobs = 1;
  std::string out;

  void attach(CLI::App& app) {
    app.add_option("--scenario", scenario, "Scenario name (S0..S4) or scene .json file");
    app.add_option("--jobs", jobs, "Runs evaluated concurrently")->check(CLI::PositiveNumber);
    app.add_option("--out", out, "Also write the table and a JSON summary here");
    opts.attach(app, true);
    opts.attach_toggles(app);
  }

  int run() const {
    const TrackerConfig cfg = opts.tracker();
    const SimParams params = opts.sim(cfg);
    const SceneScript script = resolve_scenario(scenario);
    // Explicit toggles compare one variant against the full pipeline.
    const std::vector<PipelineToggles> variants =
        opts.any_toggle() ? std::vector<PipelineToggles>{{true, true, true}, opts.toggles()}
                          : ablation_ladder();
    std::vector<AblationRow> rows(variants.size());
    run_parallel(variants.size(), jobs, [&](std::size_t i) {
      rows[i] = {variants[i], run_simulation(script, params, cfg, variants[i], 0.5).report};
    });
    const std::string table = ablation_table(rows);
    std::cout << scenario_label(scenario) << " (seed " << params.seed << ")\n" << table;
    if (!out.empty()) {
      ensure_directory(out);
      Json arr = Json::array();
      for (const auto& r : rows) {
        arr.push_back({{"toggles", to_json(r.toggles)}, {"report", to_json(r.report)}});
      }
      write_text((fs::path(out) / "ablation.txt").string(), table);
      write_text((fs::path(out) / "ablation.json").string(),
                 dump(Json{{"scenario", scenario},
                           {"tracker", to_json(cfg)},
                           {"sim", to_json(params)},
                           {"rows", std::move(arr)}}));
    }
    return 0;
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"SAM2MOT tracking control plane"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "sam2mot 1.0.0");

  TrackCommand track;
  SimulateCommand simulate;
  EvaluateCommand evaluate;
  AblateCommand ablate;
  track.attach(*app.add_subcommand("track", "Track a detection file with a segmentation backend"));
  simulate.attach(*app.add_subcommand("simulate", "Generate, track and score synthetic scenes"));
  evaluate.attach(*app.add_subcommand("evaluate", "Score tracker results against ground truth"));
  ablate.attach(*app.add_subcommand("ablate", "Compare module on/off variants on one scene"));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (app.got_subcommand("track")) return track.run();
    if (app.got_subcommand("simulate")) return simulate.run();
    if (app.got_subcommand("evaluate")) return evaluate.run();
    return ablate.run();
  } catch (const std::exception& e) {
    std::cerr << "sam2mot: error: " << e.what() << '\n';
    return 1;
  }
}
