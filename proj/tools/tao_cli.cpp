// tao: command-line front end for the anomalous-object pipeline.
//
// Exit codes: 0 ok, 1 internal error, 2 validation, 3 I/O, 4 backend or
// protocol, 5 undefined metric.
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "tao/experiment.hpp"
#include "tao/io.hpp"
#include "tao/metrics.hpp"

namespace fs = std::filesystem;
using namespace tao;

namespace {

void setup_logging() {
  auto logger = spdlog::stderr_color_mt("tao");
  logger->set_pattern("[%l] %v");
  spdlog::set_default_logger(logger);
  spdlog::set_level(spdlog::level::warn);
  if (const char* lvl = std::getenv("TAO_LOG")) {
    const auto level = spdlog::level::from_str(lvl);
    // from_str maps unknown names to off; only accept "off" when asked for.
    if (level != spdlog::level::off || std::string(lvl) == "off") spdlog::set_level(level);
    else spdlog::warn("ignoring unknown TAO_LOG level '{}'", lvl);
  }
}

/// Options shared by commands that run the box stage.
struct ParamOptions {
  std::string profile = "ped2";
  std::string overrides;

  void add(CLI::App* app) {
    app->add_option("--profile", profile, "Hyperparameter profile (ped2|shtech)")->capture_default_str();
    app->add_option("--params", overrides, "Overrides, e.g. k=5,m=3,h=0.2,l=5,tau=1.5");
  }

  PipelineParams resolve() const {
    auto p = profile_params(profile);
    for (const auto& [k, v] : detail::parse_kv_list(overrides, "--params")) {
      if (k == "tau") p.tau = detail::parse_number<double>(v, "--params tau");
      else if (k == "k") p.k = detail::parse_number<int>(v, "--params k");
      else if (k == "m") p.m = detail::parse_number<int>(v, "--params m");
      else if (k == "h") p.h = detail::parse_number<double>(v, "--params h");
      else if (k == "l") p.l = detail::parse_number<int>(v, "--params l");
      else throw ValidationError("--params: unknown key '" + k + "' (tau|k|m|h|l)");
    }
    p.validate();
    return p;
  }
};

struct EvalFlags {
  std::string mode = "point";
  double alpha = 0.1, coverage = 0.1, fpr_limit = 0.3;

  void add(CLI::App* app) {
    app->add_option("--mode", mode, "Object metric mode (curve|point)")->capture_default_str();
    app->add_option("--alpha", alpha, "Region IoU threshold for RBDC/TBDC")->capture_default_str();
    app->add_option("--coverage", coverage, "Fraction of a track's regions needed for TBDC")->capture_default_str();
    app->add_option("--fpr-limit", fpr_limit, "FPR integration limit for Pixel-AUPRO")->capture_default_str();
  }

  EvalOptions resolve() const {
    EvalOptions o;
    o.mode = parse_eval_mode(mode);
    o.alpha = alpha;
    o.coverage = coverage;
    o.fpr_limit = fpr_limit;
    if (!(alpha > 0 && alpha < 1)) throw ValidationError("--alpha must be in (0,1)");
    if (!(coverage > 0 && coverage <= 1)) throw ValidationError("--coverage must be in (0,1]");
    if (!(fpr_limit > 0 && fpr_limit <= 1)) throw ValidationError("--fpr-limit must be in (0,1]");
    return o;
  }
};

/// Writes manifest before running `body`, then again with the outcome.
template <class Body>
int with_manifest(const fs::path& primary_output, RunManifest m, Body&& body) {
  m.started_at = utc_timestamp();
  write_manifest(primary_output, m);
  try {
    const int code = body(m);
    m.status = code == 0 ? "ok" : "failed";
    m.finished_at = utc_timestamp();
    write_manifest(primary_output, m);
    return code;
  } catch (const std::exception& e) {
    m.status = "failed";
    m.extra["error"] = e.what();
    m.finished_at = utc_timestamp();
    try {
      write_manifest(primary_output, m);
    } catch (const std::exception&) {
    }
    throw;
  }
}

void write_report_files(const MetricsReport& rep, const fs::path& text, const fs::path& json_path) {
  if (!text.empty()) save_file(text, [&](std::ostream& o) { o << format_report(rep); });
  if (!json_path.empty()) save_file(json_path, [&](std::ostream& o) { o << report_json(rep).dump(2) << "\n"; });
}

void write_curves(const MetricsReport& rep, const fs::path& dir) {
  if (dir.empty()) return;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create '" + dir.string() + "': " + ec.message());
  save_file(dir / "aupro_curve.csv", [&](std::ostream& o) { o << curve_csv(rep.aupro_curve); });
  save_file(dir / "rbdc_curve.csv", [&](std::ostream& o) { o << curve_csv(rep.rbdc_curve); });
  save_file(dir / "tbdc_curve.csv", [&](std::ostream& o) { o << curve_csv(rep.tbdc_curve); });
}

int report_exit(const MetricsReport& rep) {
  for (const auto& msg : rep.undefined) spdlog::warn("undefined metric: {}", msg);
  return rep.any_undefined() ? static_cast<int>(ExitCode::undefined_metric) : 0;
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create '" + dir.string() + "': " + ec.message());
}

}  // namespace

int main(int argc, char** argv) {
  setup_logging();
  CLI::App app{"Track-any-anomalous-object pipeline tools"};
  app.require_subcommand(1);
  int result = 0;

  // synth ------------------------------------------------------------------
  auto* synth = app.add_subcommand("synth", "Generate a synthetic scenario (detections + ground truth)");
  std::string synth_preset = "default", synth_config;
  std::uint64_t synth_seed = 0;
  fs::path synth_out;
  bool synth_pgm = false;
  synth->add_option("--preset", synth_preset, "default|fig3|overlap|noiseless")->capture_default_str();
  synth->add_option("--config", synth_config, "Scenario document (overrides --preset)");
  synth->add_option("--seed", synth_seed, "Scenario seed (ignored with --config)")->capture_default_str();
  synth->add_option("--out-dir", synth_out, "Output directory")->required();
  synth->add_flag("--pgm", synth_pgm, "Also write ground truth as a PGM mask directory");
  synth->callback([&] {
    ensure_dir(synth_out);
    RunManifest m;
    m.command = "synth";
    m.outputs = {(synth_out / "detections.jsonl").string(), (synth_out / "gt.jsonl").string(),
                 (synth_out / "scenario.json").string()};
    if (!synth_config.empty()) m.inputs = {synth_config};
    result = with_manifest(synth_out / "scenario.json", m, [&](RunManifest& mf) {
      const auto cfg = synth_config.empty() ? preset_by_name(synth_preset, synth_seed)
                                            : scenario_from_json(load_json(synth_config));
      mf.seeds = {cfg.seed};
      const auto sc = generate(cfg);
      save_file(synth_out / "detections.jsonl", [&](std::ostream& o) { write_detections(o, sc.detections); });
      save_file(synth_out / "gt.jsonl", [&](std::ostream& o) { write_ground_truth(o, sc.gt); });
      save_file(synth_out / "scenario.json", [&](std::ostream& o) { o << scenario_to_json(cfg).dump(2) << "\n"; });
      if (synth_pgm) write_mask_dir(synth_out / "gt_masks", sc.gt.masks);
      spdlog::info("synth: {} frames, {}x{}", cfg.frames, cfg.width, cfg.height);
      return 0;
    });
  });

  // filter -----------------------------------------------------------------
  auto* filter = app.add_subcommand("filter", "Threshold and filter detections into tracked boxes");
  ParamOptions filter_params;
  filter_params.add(filter);
  fs::path filter_in, filter_out, filter_trace, filter_prompts;
  bool filter_off = false;
  filter->add_option("--detections", filter_in, "Detections file (tao-det/1)")->required();
  filter->add_option("--out", filter_out, "Tracked boxes file (tao-trk/1)")->required();
  filter->add_option("--trace", filter_trace, "Write the per-box filter trace as JSON");
  filter->add_option("--prompts", filter_prompts, "Also write aggregated prompts (tao-prm/1)");
  filter->add_flag("--no-filter", filter_off, "Skip robust filtering (raw interval boxes)");
  filter->callback([&] {
    RunManifest m;
    m.command = "filter";
    m.inputs = {filter_in.string()};
    m.outputs = {filter_out.string()};
    m.params = filter_params.resolve();
    m.toggles = Toggles{true, !filter_off};
    result = with_manifest(filter_out, m, [&](RunManifest&) {
      const auto dets = load_detections(filter_in);
      const auto stage = run_box_stage(dets, *m.params, !filter_off);
      save_file(filter_out, [&](std::ostream& o) { write_tracks(o, stage.tracked, dets.size()); });
      if (!filter_trace.empty()) {
        const auto t = stage.trace ? trace_json(*stage.trace) : nlohmann::json{{"frames", nlohmann::json::array()}};
        save_file(filter_trace, [&](std::ostream& o) { o << t.dump() << "\n"; });
      }
      if (!filter_prompts.empty()) {
        save_file(filter_prompts, [&](std::ostream& o) {
          write_prompts(o, aggregate_prompts(stage.tracked, m.params->l), dets.size());
        });
      }
      spdlog::info("filter: {} tuples from {} frames", stage.tracked.size(), dets.size());
      return 0;
    });
  });

  // segment ----------------------------------------------------------------
  auto* seg = app.add_subcommand("segment", "Prompt a segmenter with tracked boxes");
  ParamOptions seg_params;
  seg_params.add(seg);
  fs::path seg_tracks, seg_out, seg_gt;
  std::string seg_backend = "oracle", seg_frames_dir;
  int seg_w = 0, seg_h = 0;
  std::uint64_t seg_seed = 0;
  bool seg_no_track = false;
  seg->add_option("--tracks", seg_tracks, "Tracked boxes file (tao-trk/1)")->required();
  seg->add_option("--out", seg_out, "Masks file (tao-rle/1)")->required();
  seg->add_option("--backend", seg_backend, "oracle | drift[:p=..,step=..,capacity=..,shrink=..] | external:<cmd>")
      ->capture_default_str();
  seg->add_option("--gt", seg_gt, "Ground truth masks (required by oracle and drift)");
  seg->add_option("--width", seg_w, "Frame width when no ground truth is given");
  seg->add_option("--height", seg_h, "Frame height when no ground truth is given");
  seg->add_option("--frames-dir", seg_frames_dir, "Frame image directory passed to external backends");
  seg->add_option("--seed", seg_seed, "Backend seed")->capture_default_str();
  seg->add_flag("--no-track", seg_no_track, "Segment each prompted frame in isolation");
  seg->callback([&] {
    RunManifest m;
    m.command = "segment";
    m.inputs = {seg_tracks.string()};
    if (!seg_gt.empty()) m.inputs.push_back(seg_gt.string());
    m.outputs = {seg_out.string()};
    m.params = seg_params.resolve();
    m.toggles = Toggles{!seg_no_track, true};
    m.seeds = {seg_seed};
    auto spec = parse_backend_spec(seg_backend);
    spec.frames_dir = seg_frames_dir;
    m.backend = spec.describe();
    result = with_manifest(seg_out, m, [&](RunManifest&) {
      const auto tf = load_tracks(seg_tracks);
      std::optional<GroundTruth> gt;
      if (!seg_gt.empty()) gt = load_ground_truth(seg_gt);
      ClipInfo clip{tf.frame_count, seg_w, seg_h};
      if (gt) {
        if ((seg_w && seg_w != gt->width) || (seg_h && seg_h != gt->height)) {
          throw ValidationError("--width/--height disagree with ground truth");
        }
        clip.width = gt->width;
        clip.height = gt->height;
      }
      if (clip.width <= 0 || clip.height <= 0) throw ValidationError("frame size unknown: pass --gt or --width/--height");
      auto backend = make_backend(spec, gt ? &*gt : nullptr, seg_seed);
      const auto segm = run_segmentation(clip, aggregate_prompts(tf.tracks, m.params->l), !seg_no_track, *backend);
      save_file(seg_out, [&](std::ostream& o) { write_masks(o, segm, label_scores(tf.tracks)); });
      return 0;
    });
  });

  // eval -------------------------------------------------------------------
  auto* ev = app.add_subcommand("eval", "Score masks against ground truth");
  EvalFlags ev_flags;
  ev_flags.add(ev);
  fs::path ev_masks, ev_gt, ev_json, ev_curves, ev_out;
  ev->add_option("--masks", ev_masks, "Masks file (tao-rle/1)")->required();
  ev->add_option("--gt", ev_gt, "Ground truth masks (tao-rle/1)")->required();
  ev->add_option("--out", ev_out, "Also write the text report here");
  ev->add_option("--json", ev_json, "Write the report as JSON");
  ev->add_option("--curves-dir", ev_curves, "Write AUPRO/RBDC/TBDC curves as CSV");
  ev->callback([&] {
    const auto opt = ev_flags.resolve();
    const auto mf = load_masks(ev_masks);
    const auto gt = load_ground_truth(ev_gt);
    const auto rep = evaluate(mf.masks, mf.scores, gt, opt);
    std::cout << format_report(rep);
    write_report_files(rep, ev_out, ev_json);
    write_curves(rep, ev_curves);
    result = report_exit(rep);
  });

  // pipeline ---------------------------------------------------------------
  auto* pipe = app.add_subcommand("pipeline", "Run synth|ingest -> filter -> segment -> eval from a config");
  fs::path pipe_config, pipe_out;
  pipe->add_option("--config", pipe_config, "Pipeline document (tao-cfg/1, kind pipeline)")->required();
  pipe->add_option("--out-dir", pipe_out, "Output directory")->required();
  pipe->callback([&] {
    ensure_dir(pipe_out);
    const auto cfg = pipeline_config_from_json(load_json(pipe_config), pipe_config.parent_path());
    RunManifest m;
    m.command = "pipeline";
    m.inputs = {pipe_config.string()};
    m.params = cfg.params;
    m.toggles = cfg.toggles;
    m.backend = parse_backend_spec(cfg.backend).describe();
    m.seeds = {cfg.seed};
    for (const char* name : {"detections.jsonl", "gt.jsonl", "tracks.jsonl", "prompts.jsonl", "masks.jsonl",
                             "report.txt", "report.json"}) {
      m.outputs.push_back((pipe_out / name).string());
    }
    result = with_manifest(pipe_out / "report.txt", m, [&](RunManifest&) {
      std::vector<FrameDetections> dets;
      GroundTruth gt;
      switch (cfg.source) {
        case SourceKind::preset:
        case SourceKind::scenario: {
          auto sc = generate(cfg.source == SourceKind::preset ? preset_by_name(cfg.preset, cfg.seed) : cfg.scenario);
          dets = std::move(sc.detections);
          gt = std::move(sc.gt);
          break;
        }
        case SourceKind::files:
          dets = load_detections(cfg.detections);
          gt = cfg.ground_truth.empty() ? ingest_dataset_masks(cfg.mask_dir) : load_ground_truth(cfg.ground_truth);
          break;
      }
      gt.validate();
      if (dets.size() != gt.frame_count()) {
        throw ValidationError("detections cover " + std::to_string(dets.size()) + " frames, ground truth " +
                              std::to_string(gt.frame_count()));
      }
      const ClipInfo clip{gt.frame_count(), gt.width, gt.height};
      auto backend = make_backend(parse_backend_spec(cfg.backend), &gt, cfg.seed);
      const auto run = run_pipeline(dets, clip, cfg.params, cfg.toggles, *backend);
      const auto rep = evaluate(run.segmentation, run.scores, gt, cfg.eval);

      save_file(pipe_out / "detections.jsonl", [&](std::ostream& o) { write_detections(o, dets); });
      save_file(pipe_out / "gt.jsonl", [&](std::ostream& o) { write_ground_truth(o, gt); });
      save_file(pipe_out / "tracks.jsonl", [&](std::ostream& o) { write_tracks(o, run.boxes.tracked, clip.frame_count); });
      save_file(pipe_out / "prompts.jsonl", [&](std::ostream& o) { write_prompts(o, run.prompts, clip.frame_count); });
      save_file(pipe_out / "masks.jsonl", [&](std::ostream& o) { write_masks(o, run.segmentation, run.scores); });
      write_report_files(rep, pipe_out / "report.txt", pipe_out / "report.json");
      std::cout << format_report(rep);
      return report_exit(rep);
    });
  });

  // ablate -----------------------------------------------------------------
  auto* abl = app.add_subcommand("ablate", "Run the tracking x filtering ablation grid");
  ParamOptions abl_params;
  abl_params.add(abl);
  EvalFlags abl_eval;
  abl_eval.add(abl);
  std::string abl_preset = "fig3", abl_backend = "drift";
  std::size_t abl_seeds = 100;
  std::uint64_t abl_base = 0;
  unsigned abl_threads = 0;
  fs::path abl_out, abl_json;
  abl->add_option("--preset", abl_preset, "Scenario preset")->capture_default_str();
  abl->add_option("--backend", abl_backend, "Segmenter backend")->capture_default_str();
  abl->add_option("--seeds", abl_seeds, "Number of seeds")->capture_default_str()->check(CLI::PositiveNumber);
  abl->add_option("--seed", abl_base, "First seed")->capture_default_str();
  abl->add_option("--threads", abl_threads, "Worker threads (0 = all cores)")->capture_default_str();
  abl->add_option("--out", abl_out, "Write the table here");
  abl->add_option("--json", abl_json, "Write seed-averaged results as JSON");
  abl->callback([&] {
    AblationConfig cfg;
    cfg.preset = abl_preset;
    preset_by_name(cfg.preset, 0);
    cfg.base_seed = abl_base;
    cfg.seeds = abl_seeds;
    cfg.params = abl_params.resolve();
    cfg.backend = parse_backend_spec(abl_backend);
    cfg.eval = abl_eval.resolve();
    cfg.threads = abl_threads;
    const auto body = [&](RunManifest&) {
      const auto res = run_ablation(cfg);
      const auto table = format_ablation_table(res);
      std::cout << table;
      if (!abl_out.empty()) save_file(abl_out, [&](std::ostream& o) { o << table; });
      if (!abl_json.empty()) save_file(abl_json, [&](std::ostream& o) { o << ablation_json(res).dump(2) << "\n"; });
      return 0;
    };
    RunManifest m;
    m.command = "ablate";
    m.params = cfg.params;
    m.backend = cfg.backend.describe();
    for (std::size_t s = 0; s < cfg.seeds; ++s) m.seeds.push_back(cfg.base_seed + s);
    m.extra = {{"preset", cfg.preset}};
    if (!abl_out.empty()) m.outputs.push_back(abl_out.string());
    if (!abl_json.empty()) m.outputs.push_back(abl_json.string());
    RunManifest unused;
    result = abl_out.empty() ? body(unused) : with_manifest(abl_out, m, body);
  });

  // ingest -----------------------------------------------------------------
  auto* ing = app.add_subcommand("ingest", "Convert a PGM mask directory into a ground-truth file");
  fs::path ing_dir, ing_out;
  double ing_iou = 0.3;
  ing->add_option("--mask-dir", ing_dir, "Directory of per-frame PGM masks")->required();
  ing->add_option("--out", ing_out, "Ground truth file (tao-rle/1)")->required();
  ing->add_option("--link-iou", ing_iou, "Minimum box IoU to link regions across frames")->capture_default_str();
  ing->callback([&] {
    RunManifest m;
    m.command = "ingest";
    m.inputs = {ing_dir.string()};
    m.outputs = {ing_out.string()};
    result = with_manifest(ing_out, m, [&](RunManifest&) {
      const auto gt = ingest_dataset_masks(ing_dir, ing_iou);
      save_file(ing_out, [&](std::ostream& o) { write_ground_truth(o, gt); });
      spdlog::info("ingest: {} frames, {}x{}", gt.frame_count(), gt.width, gt.height);
      return 0;
    });
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : static_cast<int>(ExitCode::validation);
  } catch (const Error& e) {
    spdlog::error("{}", e.what());
    return static_cast<int>(e.code());
  } catch (const std::exception& e) {
    spdlog::error("internal error: {}", e.what());
    return 1;
  }
  return result;
}
