// End-to-end runs: thresholding, filtering, prompting, segmentation and
// evaluation wired together, plus the component ablation grid and the
// tracking-degradation experiment.
#pragma once

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <exception>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "tao/core.hpp"
#include "tao/io.hpp"
#include "tao/metrics.hpp"
#include "tao/pipeline.hpp"
#include "tao/segmenter.hpp"
#include "tao/synth.hpp"

namespace tao {

struct Toggles {
  bool video_track = true;
  bool robust_filter = true;

  bool operator==(const Toggles&) const = default;
};

// ---------------------------------------------------------------------------
// Backend selection

enum class BackendKind { oracle, drift, external };

struct BackendSpec {
  BackendKind kind = BackendKind::oracle;
  DriftParams drift;     // used by drift; seed is overridden per run
  std::string command;   // used by external
  std::string frames_dir;
  double match_iou = 0.5;

  std::string describe() const {
    switch (kind) {
      case BackendKind::oracle: return "oracle";
      case BackendKind::drift: {
        char buf[160];
        std::snprintf(buf, sizeof buf, "drift:p=%g,step=%g,capacity=%zu,shrink=%g", drift.p_drift,
                      drift.drift_step, drift.capacity, drift.shrink);
        return buf;
      }
      case BackendKind::external: return "external:" + command;
    }
    return "?";
  }
};

/// Drift settings used by the degradation and ablation experiments.
inline DriftParams experiment_drift() {
  DriftParams d;
  d.p_drift = 0.2;
  d.drift_step = 1.0;
  d.capacity = 24;
  d.shrink = 0.95;
  return d;
}

namespace detail {

/// Parses "a=1,b=2" into pairs; rejects empty keys and duplicates.
inline std::vector<std::pair<std::string, std::string>> parse_kv_list(const std::string& s,
                                                                      const std::string& what) {
  std::vector<std::pair<std::string, std::string>> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    const auto eq = item.find('=');
    if (eq == std::string::npos || eq == 0) throw ValidationError(what + ": expected key=value, got '" + item + "'");
    auto key = item.substr(0, eq);
    for (const auto& [k, v] : out) {
      if (k == key) throw ValidationError(what + ": duplicate key '" + key + "'");
    }
    out.emplace_back(std::move(key), item.substr(eq + 1));
  }
  return out;
}

template <class T>
T parse_number(const std::string& s, const std::string& what) {
  T v{};
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) throw ValidationError(what + ": bad number '" + s + "'");
  return v;
}

}  // namespace detail

/// oracle | drift[:p=..,step=..,capacity=..,shrink=..] | external:<command>
inline BackendSpec parse_backend_spec(const std::string& s) {
  BackendSpec spec;
  if (s == "oracle") return spec;
  if (s == "drift" || s.rfind("drift:", 0) == 0) {
    spec.kind = BackendKind::drift;
    spec.drift = experiment_drift();
    if (s.size() > 5) {
      for (const auto& [k, v] : detail::parse_kv_list(s.substr(6), "backend")) {
        if (k == "p") spec.drift.p_drift = detail::parse_number<double>(v, "backend p");
        else if (k == "step") spec.drift.drift_step = detail::parse_number<double>(v, "backend step");
        else if (k == "capacity") spec.drift.capacity = detail::parse_number<std::size_t>(v, "backend capacity");
        else if (k == "shrink") spec.drift.shrink = detail::parse_number<double>(v, "backend shrink");
        else throw ValidationError("backend: unknown drift option '" + k + "'");
      }
    }
    spec.drift.validate();
    return spec;
  }
  if (s.rfind("external:", 0) == 0) {
    spec.kind = BackendKind::external;
    spec.command = s.substr(9);
    if (spec.command.empty()) throw ValidationError("backend: external needs a command");
    return spec;
  }
  throw ValidationError("unknown backend '" + s + "' (oracle|drift|external:<cmd>)");
}

/// The oracle and drift backends read ground truth; `gt` must outlive the
/// returned backend.
inline std::unique_ptr<SegmenterBackend> make_backend(const BackendSpec& spec, const GroundTruth* gt,
                                                      std::uint64_t seed) {
  if (spec.kind != BackendKind::external && !gt) {
    throw ValidationError("backend '" + spec.describe() + "' needs ground truth");
  }
  switch (spec.kind) {
    case BackendKind::oracle: return std::make_unique<OracleBackend>(*gt, spec.match_iou);
    case BackendKind::drift: {
      auto d = spec.drift;
      d.seed = seed;
      return std::make_unique<DriftBackend>(*gt, d, spec.match_iou);
    }
    case BackendKind::external: return std::make_unique<ExternalBackend>(spec.command, spec.frames_dir);
  }
  throw ValidationError("bad backend kind");
}

// ---------------------------------------------------------------------------
// Pipeline

/// Box stage only: thresholding then either the robustness filter or the
/// unfiltered interval boxes.
struct BoxStage {
  std::vector<FrameDetections> thresholded;
  std::vector<TrackedBox> tracked;
  std::optional<FilterTrace> trace;  // robust filter only
};

inline BoxStage run_box_stage(std::span<const FrameDetections> detections, const PipelineParams& params,
                              bool robust_filter) {
  params.validate();
  BoxStage out;
  out.thresholded = threshold_filter(detections, params.tau);
  if (robust_filter) {
    auto r = robustness_filter(out.thresholded, params);
    out.tracked = std::move(r.tracked);
    out.trace = std::move(r.trace);
  } else {
    out.tracked = interval_boxes_unfiltered(out.thresholded, params);
  }
  return out;
}

inline SegmentationResult run_segmentation(const ClipInfo& clip, std::vector<Prompt> prompts, bool video_track,
                                           SegmenterBackend& backend) {
  SegmentationRequest req{clip, std::move(prompts)};
  return video_track ? segment(req, backend) : segment_frame_isolated(req, backend);
}

struct PipelineRun {
  BoxStage boxes;
  std::vector<Prompt> prompts;
  SegmentationResult segmentation;
  std::map<TrackLabel, double> scores;
};

inline PipelineRun run_pipeline(std::span<const FrameDetections> detections, const ClipInfo& clip,
                                const PipelineParams& params, Toggles toggles, SegmenterBackend& backend) {
  if (detections.size() != clip.frame_count) throw ValidationError("detections do not cover the clip");
  PipelineRun run;
  run.boxes = run_box_stage(detections, params, toggles.robust_filter);
  run.prompts = aggregate_prompts(run.boxes.tracked, params.l);
  run.segmentation = run_segmentation(clip, run.prompts, toggles.video_track, backend);
  run.scores = label_scores(run.boxes.tracked);
  return run;
}

inline ClipInfo clip_of(const Scenario& s) { return {s.config.frames, s.config.width, s.config.height}; }

// ---------------------------------------------------------------------------
// Per-frame quality

/// Pixel-F1 of each frame; empty when the frame has neither predicted nor GT
/// pixels.
inline std::vector<std::optional<double>> per_frame_f1(std::span<const MaskPlane> pred,
                                                       std::span<const MaskPlane> gt) {
  if (pred.size() != gt.size()) throw ValidationError("per_frame_f1: frame counts differ");
  std::vector<std::optional<double>> out(pred.size());
  for (std::size_t f = 0; f < pred.size(); ++f) {
    const auto c = pixel_counts(pred.subspan(f, 1), gt.subspan(f, 1));
    const auto denom = 2 * c.tp + c.fp + c.fn;
    if (denom > 0) out[f] = 2.0 * static_cast<double>(c.tp) / static_cast<double>(denom);
  }
  return out;
}

/// Mean of the defined values in [begin, end); NaN when none are defined.
inline double mean_defined(std::span<const std::optional<double>> v, std::size_t begin, std::size_t end) {
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t i = begin; i < std::min(end, v.size()); ++i) {
    if (v[i]) {
      sum += *v[i];
      ++n;
    }
  }
  return n ? sum / static_cast<double>(n) : std::nan("");
}

// ---------------------------------------------------------------------------
// Parallel helpers

inline unsigned worker_count(unsigned requested, std::size_t jobs) {
  unsigned n = requested ? requested : std::max(1u, std::thread::hardware_concurrency());
  return static_cast<unsigned>(std::min<std::size_t>(n, std::max<std::size_t>(jobs, 1)));
}

/// Calls fn(i) for i in [0, n) on up to `threads` workers. Results must be
/// written to per-index slots; the first exception is rethrown.
inline void parallel_for(std::size_t n, unsigned threads, const std::function<void(std::size_t)>& fn) {
  const unsigned workers = worker_count(threads, n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  for (unsigned w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i; (i = next.fetch_add(1)) < n;) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
          next = n;
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

// ---------------------------------------------------------------------------
// Tracking degradation: redundant prompts overload a forgetting segmenter

struct DegradationResult {
  std::uint64_t seed = 0;
  double unfiltered_first_quartile = 0.0;
  double unfiltered_last_quartile = 0.0;
  double unfiltered_f1 = 0.0;
  double filtered_f1 = 0.0;
  std::vector<std::optional<double>> unfiltered_per_frame, filtered_per_frame;
};

inline double pooled_f1_or_zero(const SegmentationResult& seg, const GroundTruth& gt) {
  const auto pred = seg.union_masks();
  try {
    return pixel_f1(pred, gt.masks);
  } catch (const UndefinedMetricError&) {
    return 0.0;
  }
}

inline DegradationResult run_degradation(std::uint64_t seed, const PipelineParams& params = PipelineParams::ped2(),
                                         const DriftParams& drift = experiment_drift(),
                                         const std::string& preset = "fig3") {
  const auto sc = generate(preset_by_name(preset, seed));
  auto d = drift;
  d.seed = seed;
  const auto clip = clip_of(sc);
  DegradationResult r;
  r.seed = seed;
  {
    DriftBackend backend(sc.gt, d);
    const auto run = run_pipeline(sc.detections, clip, params, {true, false}, backend);
    const auto pred = run.segmentation.union_masks();
    r.unfiltered_per_frame = per_frame_f1(pred, sc.gt.masks);
    const std::size_t q = clip.frame_count / 4;
    r.unfiltered_first_quartile = mean_defined(r.unfiltered_per_frame, 0, q);
    r.unfiltered_last_quartile = mean_defined(r.unfiltered_per_frame, clip.frame_count - q, clip.frame_count);
    r.unfiltered_f1 = pooled_f1_or_zero(run.segmentation, sc.gt);
  }
  {
    DriftBackend backend(sc.gt, d);
    const auto run = run_pipeline(sc.detections, clip, params, {true, true}, backend);
    r.filtered_per_frame = per_frame_f1(run.segmentation.union_masks(), sc.gt.masks);
    r.filtered_f1 = pooled_f1_or_zero(run.segmentation, sc.gt);
  }
  return r;
}

// ---------------------------------------------------------------------------
// Component ablation grid

struct AblationConfig {
  std::string preset = "fig3";
  std::uint64_t base_seed = 0;
  std::size_t seeds = 100;
  PipelineParams params = PipelineParams::ped2();
  BackendSpec backend = parse_backend_spec("drift");
  EvalOptions eval;
  unsigned threads = 0;  // 0 = hardware concurrency
};

/// Grid rows in table order: (track off, filter off), (off, on), (on, off),
/// (on, on).
inline constexpr std::array<Toggles, 4> kAblationGrid{
    {{false, false}, {false, true}, {true, false}, {true, true}}};

inline constexpr std::array<const char*, 6> kMetricNames{"pixel_auroc", "pixel_ap", "pixel_aupro",
                                                         "pixel_f1",    "rbdc",     "tbdc"};

inline std::array<std::optional<double>, 6> metric_values(const MetricsReport& r) {
  return {r.pixel_auroc, r.pixel_ap, r.pixel_aupro, r.pixel_f1, r.rbdc, r.tbdc};
}

struct AblationRow {
  Toggles toggles;
  std::array<double, 6> mean{};         // over seeds where the metric is defined; NaN if never
  std::array<std::size_t, 6> defined{};
  std::vector<std::array<std::optional<double>, 6>> per_seed;
};

struct AblationResult {
  AblationConfig config;
  std::array<AblationRow, 4> rows;
};

/// Every row sees the same scenarios and backend seeds, so rows differ only in
/// their toggles.
inline AblationResult run_ablation(const AblationConfig& cfg) {
  cfg.params.validate();
  AblationResult res;
  res.config = cfg;
  for (std::size_t r = 0; r < 4; ++r) {
    res.rows[r].toggles = kAblationGrid[r];
    res.rows[r].per_seed.resize(cfg.seeds);
  }
  parallel_for(cfg.seeds * 4, cfg.threads, [&](std::size_t job) {
    const std::size_t s = job / 4, r = job % 4;
    const std::uint64_t seed = cfg.base_seed + s;
    const auto sc = generate(preset_by_name(cfg.preset, seed));
    auto backend = make_backend(cfg.backend, &sc.gt, seed);
    const auto run = run_pipeline(sc.detections, clip_of(sc), cfg.params, kAblationGrid[r], *backend);
    res.rows[r].per_seed[s] = metric_values(evaluate(run.segmentation, run.scores, sc.gt, cfg.eval));
  });
  for (auto& row : res.rows) {
    std::array<double, 6> sum{};
    for (const auto& vals : row.per_seed) {
      for (std::size_t k = 0; k < 6; ++k) {
        if (vals[k]) {
          sum[k] += *vals[k];
          ++row.defined[k];
        }
      }
    }
    for (std::size_t k = 0; k < 6; ++k) {
      row.mean[k] = row.defined[k] ? sum[k] / static_cast<double>(row.defined[k]) : std::nan("");
    }
  }
  return res;
}

inline std::string format_ablation_table(const AblationResult& res) {
  std::string out = "track  filter  pixel_auroc  pixel_ap  pixel_aupro  pixel_f1    rbdc    tbdc\n";
  char buf[160];
  for (const auto& row : res.rows) {
    std::snprintf(buf, sizeof buf, "%-5s  %-6s", row.toggles.video_track ? "on" : "off",
                  row.toggles.robust_filter ? "on" : "off");
    out += buf;
    static constexpr int widths[6] = {13, 10, 13, 10, 8, 8};
    for (std::size_t k = 0; k < 6; ++k) {
      const auto cell = std::isnan(row.mean[k]) ? std::string("undefined") : format_percent(row.mean[k]);
      std::snprintf(buf, sizeof buf, "%*s", widths[k], cell.c_str());
      out += buf;
    }
    out += "\n";
  }
  return out;
}

inline nlohmann::json ablation_json(const AblationResult& res) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& row : res.rows) {
    nlohmann::json means = nlohmann::json::object();
    for (std::size_t k = 0; k < 6; ++k) {
      means[kMetricNames[k]] = std::isnan(row.mean[k]) ? nlohmann::json(nullptr) : nlohmann::json(row.mean[k]);
      means[std::string(kMetricNames[k]) + "_seeds"] = row.defined[k];
    }
    rows.push_back({{"video_track", row.toggles.video_track},
                    {"robust_filter", row.toggles.robust_filter},
                    {"mean", means}});
  }
  const auto& c = res.config;
  return {{"preset", c.preset},
          {"base_seed", c.base_seed},
          {"seeds", c.seeds},
          {"params", params_to_json(c.params)},
          {"backend", c.backend.describe()},
          {"mode", to_string(c.eval.mode)},
          {"rows", rows}};
}

// ---------------------------------------------------------------------------
// Filter trace dump

inline nlohmann::json trace_json(const FilterTrace& t) {
  nlohmann::json frames = nlohmann::json::array();
  for (const auto& fr : t.frames) {
    nlohmann::json boxes = nlohmann::json::array();
    for (const auto& b : fr.boxes) {
      boxes.push_back({{"index", b.box_index},
                       {"box", detail::box_to_json(b.bbox)},
                       {"fate", to_string(b.fate)},
                       {"label", b.label ? nlohmann::json(*b.label) : nlohmann::json(nullptr)},
                       {"support", b.support}});
    }
    nlohmann::json saved = nlohmann::json::array();
    for (const auto& s : fr.saved) saved.push_back(s.track_label);
    frames.push_back({{"frame", fr.frame_idx}, {"boxes", boxes}, {"saved", saved}});
  }
  return {{"frames", frames}};
}

// ---------------------------------------------------------------------------
// Pipeline config document (tao-cfg/1, kind "pipeline")
//
// {"format":"tao-cfg/1","kind":"pipeline",
//  "source": {"preset":"fig3","seed":7}
//          | {"scenario":{...scenario document...}}
//          | {"detections":"det.jsonl","ground_truth":"gt.jsonl"}
//          | {"detections":"det.jsonl","mask_dir":"masks/"},
//  "profile":"ped2",                       optional; else "params" is required
//  "params":{"tau":..,"k":..,"m":..,"h":..,"l":..},
//  "toggles":{"video_track":true,"robust_filter":true},
//  "backend":"oracle",
//  "eval":{"mode":"point","alpha":0.1,"coverage":0.1,"fpr_limit":0.3}}   optional
//
// Relative paths resolve against the config file's directory.

enum class SourceKind { preset, scenario, files };

struct PipelineConfig {
  SourceKind source = SourceKind::preset;
  std::string preset = "default";
  std::uint64_t seed = 0;
  ScenarioConfig scenario;
  std::filesystem::path detections, ground_truth, mask_dir;
  PipelineParams params = PipelineParams::ped2();
  Toggles toggles;
  std::string backend = "oracle";
  EvalOptions eval;
};

inline PipelineParams profile_params(const std::string& name) {
  if (name == "ped2") return PipelineParams::ped2();
  if (name == "shtech") return PipelineParams::shtech();
  throw ValidationError("unknown profile '" + name + "' (ped2|shtech)");
}

inline EvalMode parse_eval_mode(const std::string& s) {
  if (s == "point") return EvalMode::point;
  if (s == "curve") return EvalMode::curve;
  throw ValidationError("mode must be 'curve' or 'point', got '" + s + "'");
}

inline PipelineConfig pipeline_config_from_json(const nlohmann::json& j, const std::filesystem::path& base = {}) {
  detail::Fields f(j, "config");
  if (f.get<std::string>("format") != kCfgFormat) f.fail("format must be '" + std::string(kCfgFormat) + "'");
  if (f.get<std::string>("kind") != "pipeline") f.fail("kind must be 'pipeline'");
  PipelineConfig c;
  const auto resolve = [&](const std::string& p) {
    const std::filesystem::path path(p);
    return path.is_absolute() || base.empty() ? path : base / path;
  };
  {
    detail::Fields sf(f.require("source"), "source");
    if (sf.optional("preset")) {
      c.source = SourceKind::preset;
      c.preset = sf.get<std::string>("preset");
      c.seed = sf.get<std::uint64_t>("seed");
      preset_by_name(c.preset, c.seed);
    } else if (const auto* sc = sf.optional("scenario")) {
      c.source = SourceKind::scenario;
      c.scenario = scenario_from_json(*sc, "source.scenario");
      c.seed = c.scenario.seed;
    } else if (sf.optional("detections")) {
      c.source = SourceKind::files;
      c.detections = resolve(sf.get<std::string>("detections"));
      if (sf.optional("ground_truth")) c.ground_truth = resolve(sf.get<std::string>("ground_truth"));
      else if (sf.optional("mask_dir")) c.mask_dir = resolve(sf.get<std::string>("mask_dir"));
      else sf.fail("missing key 'source.ground_truth' (or 'source.mask_dir')");
    } else {
      sf.fail("missing key 'source.preset', 'source.scenario' or 'source.detections'");
    }
    sf.no_unknown();
  }
  if (const auto* prof = f.optional("profile")) {
    if (!prof->is_string()) f.fail("field 'profile' must be a string");
    c.params = profile_params(prof->get<std::string>());
    if (f.optional("params")) f.fail("give either 'profile' or 'params', not both");
  } else {
    c.params = params_from_json(f.require("params"), "params");
  }
  {
    detail::Fields tf(f.require("toggles"), "toggles");
    c.toggles.video_track = tf.get<bool>("video_track");
    c.toggles.robust_filter = tf.get<bool>("robust_filter");
    tf.no_unknown();
  }
  c.backend = f.get<std::string>("backend");
  parse_backend_spec(c.backend);
  if (const auto* e = f.optional("eval")) {
    detail::Fields ef(*e, "eval");
    c.eval.mode = parse_eval_mode(ef.get<std::string>("mode"));
    c.eval.alpha = ef.get<double>("alpha");
    c.eval.coverage = ef.get<double>("coverage");
    c.eval.fpr_limit = ef.get<double>("fpr_limit");
    ef.no_unknown();
  }
  f.no_unknown();
  return c;
}

// ---------------------------------------------------------------------------
// Run manifests

inline std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

/// Written next to a command's primary output as "<output>.manifest.json",
/// first before the command runs and again with its outcome.
struct RunManifest {
  std::string command;
  std::optional<PipelineParams> params;
  std::vector<std::uint64_t> seeds;
  std::vector<std::string> inputs, outputs;
  std::optional<Toggles> toggles;
  std::string backend;
  std::string started_at, finished_at;
  std::string status = "running";
  nlohmann::json extra = nlohmann::json::object();

  nlohmann::json to_json() const {
    nlohmann::json j{{"command", command},
                     {"seeds", seeds},
                     {"inputs", inputs},
                     {"outputs", outputs},
                     {"backend", backend},
                     {"started_at", started_at},
                     {"finished_at", finished_at.empty() ? nlohmann::json(nullptr) : nlohmann::json(finished_at)},
                     {"status", status},
                     {"extra", extra}};
    j["params"] = params ? params_to_json(*params) : nlohmann::json(nullptr);
    j["toggles"] = toggles ? nlohmann::json{{"video_track", toggles->video_track},
                                            {"robust_filter", toggles->robust_filter}}
                           : nlohmann::json(nullptr);
    return j;
  }
};

inline std::filesystem::path manifest_path(const std::filesystem::path& output) {
  return output.string() + ".manifest.json";
}

inline void write_manifest(const std::filesystem::path& output, const RunManifest& m) {
  save_file(manifest_path(output), [&](std::ostream& out) { out << m.to_json().dump(2) << "\n"; });
}

}  // namespace tao
