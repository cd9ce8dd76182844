// Wire and file formats.
//
// Record files are UTF-8 JSON lines with '\n' endings: a header line
// {"format": <version>, "frame_count": N, ...} followed by one record per
// object. An empty file is an empty list. Keys are emitted sorted and reals in
// shortest round-trip form, so serialisation is canonical.
//
//   tao-det/1  {"box":[x1,y1,x2,y2],"class":s,"frame":f,"score":v}
//   tao-trk/1  {"box":[..],"frame":f,"label":L,"score":v}
//   tao-prm/1  {"box":[..],"center":[cx,cy],"frame":f,"label":L,"score":v}
//   tao-rle/1  header adds "width","height" and optional "scores":{"L":v};
//              records {"frame":f,"label":L,"runs":[...]}
//   tao-cfg/1  single JSON document (scenario or pipeline config)
#pragma once

#include <algorithm>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "tao/core.hpp"
#include "tao/geometry.hpp"
#include "tao/pipeline.hpp"
#include "tao/rle.hpp"
#include "tao/segmenter.hpp"
#include "tao/synth.hpp"

namespace tao {

inline constexpr const char* kDetFormat = "tao-det/1";
inline constexpr const char* kTrkFormat = "tao-trk/1";
inline constexpr const char* kPrmFormat = "tao-prm/1";
inline constexpr const char* kCfgFormat = "tao-cfg/1";

using json = nlohmann::json;

namespace detail {

/// Strict view over a JSON object: tracks consumed keys so unknown ones can be
/// reported, and prefixes every error with its location.
class Fields {
 public:
  Fields(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) fail("expected an object");
  }

  const json& require(const std::string& key) {
    used_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) fail("missing key '" + key + "'");
    return *it;
  }

  const json* optional(const std::string& key) {
    used_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() || it->is_null() ? nullptr : &*it;
  }

  template <class T>
  T get(const std::string& key) {
    const auto& v = require(key);
    return convert<T>(v, key);
  }

  template <class T>
  T get_or(const std::string& key, T fallback) {
    const auto* v = optional(key);
    return v ? convert<T>(*v, key) : fallback;
  }

  void no_unknown() const {
    for (const auto& [key, v] : j_.items()) {
      if (!used_.count(key)) fail("unknown field '" + key + "'");
    }
  }

  [[noreturn]] void fail(const std::string& msg) const { throw ValidationError(where_ + ": " + msg); }

  const std::string& where() const { return where_; }

  template <class T>
  T convert(const json& v, const std::string& key) const {
    try {
      if constexpr (std::is_same_v<T, double>) {
        if (!v.is_number()) fail("field '" + key + "' must be a number");
      } else if constexpr (std::is_integral_v<T> && !std::is_same_v<T, bool>) {
        if (!v.is_number_integer()) fail("field '" + key + "' must be an integer");
        if constexpr (std::is_unsigned_v<T>) {
          if (v.is_number_integer() && !v.is_number_unsigned() && v.get<std::int64_t>() < 0) {
            fail("field '" + key + "' must be non-negative");
          }
        }
      }
      return v.get<T>();
    } catch (const json::exception&) {
      fail("field '" + key + "' has the wrong type");
    }
  }

 private:
  const json& j_;
  std::string where_;
  std::set<std::string> used_;
};

inline json box_to_json(const BBox& b) { return json::array({b.x1(), b.y1(), b.x2(), b.y2()}); }

inline BBox box_from_json(const json& v, const Fields& f, const std::string& key) {
  if (!v.is_array() || v.size() != 4) f.fail("field '" + key + "' must be [x1,y1,x2,y2]");
  double c[4];
  for (int i = 0; i < 4; ++i) {
    if (!v[static_cast<std::size_t>(i)].is_number()) f.fail("field '" + key + "' must hold numbers");
    c[i] = v[static_cast<std::size_t>(i)].get<double>();
  }
  auto b = BBox::try_make(c[0], c[1], c[2], c[3]);
  if (!b) f.fail("field '" + key + "' is not a valid box");
  return *b;
}

inline std::string line_where(std::size_t line) { return "line " + std::to_string(line); }

struct RecordStream {
  std::size_t frame_count = 0;
  json header;
  std::vector<std::pair<std::size_t, json>> records;  // (line number, record)
};

inline RecordStream read_records(std::istream& in, const std::string& format) {
  RecordStream rs;
  std::string line;
  std::size_t lineno = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ValidationError(line_where(lineno) + ": malformed JSON (" + e.what() + ")");
    }
    if (!have_header) {
      Fields f(j, line_where(lineno));
      const auto fmt = f.get<std::string>("format");
      if (fmt != format) f.fail("expected format '" + format + "', got '" + fmt + "'");
      rs.frame_count = f.get<std::size_t>("frame_count");
      rs.header = j;
      have_header = true;
      continue;
    }
    rs.records.emplace_back(lineno, std::move(j));
  }
  return rs;
}

inline void check_frame(std::size_t frame, std::size_t frame_count, const Fields& f) {
  if (frame >= frame_count) {
    f.fail("frame " + std::to_string(frame) + " out of range (frame_count " +
           std::to_string(frame_count) + ")");
  }
}

inline std::ifstream open_in(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw IoError("cannot open '" + p.string() + "' for reading");
  return in;
}

inline std::ofstream open_out(const std::filesystem::path& p) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + p.string() + "' for writing");
  return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Detections

inline void write_detections(std::ostream& out, const std::vector<FrameDetections>& frames) {
  if (frames.empty()) return;
  out << json{{"format", kDetFormat}, {"frame_count", frames.size()}}.dump() << "\n";
  for (const auto& f : frames) {
    for (const auto& d : f.detections) {
      out << json{{"frame", d.frame_idx},
                  {"box", detail::box_to_json(d.bbox)},
                  {"class", d.class_label},
                  {"score", d.anomaly_score}}
                 .dump()
          << "\n";
    }
  }
}

/// One FrameDetections per frame of the clip, empty frames included.
inline std::vector<FrameDetections> read_detections(std::istream& in) {
  const auto rs = detail::read_records(in, kDetFormat);
  std::vector<FrameDetections> frames(rs.frame_count);
  for (std::size_t i = 0; i < frames.size(); ++i) frames[i].frame_idx = i;
  std::size_t prev = 0;
  for (const auto& [lineno, j] : rs.records) {
    detail::Fields f(j, detail::line_where(lineno));
    Detection d;
    d.frame_idx = f.get<std::size_t>("frame");
    detail::check_frame(d.frame_idx, rs.frame_count, f);
    if (d.frame_idx < prev) f.fail("records not sorted by frame");
    prev = d.frame_idx;
    d.bbox = detail::box_from_json(f.require("box"), f, "box");
    d.class_label = f.get<std::string>("class");
    d.anomaly_score = f.get<double>("score");
    f.no_unknown();
    frames[d.frame_idx].detections.push_back(std::move(d));
  }
  return frames;
}

// ---------------------------------------------------------------------------
// Tracked boxes and prompts

namespace detail {

template <class T>
void check_sorted(const std::vector<T>& v, const Fields& f) {
  if (v.size() < 2) return;
  const auto& a = v[v.size() - 2];
  const auto& b = v.back();
  if (std::tie(b.frame_idx, b.track_label) < std::tie(a.frame_idx, a.track_label)) {
    f.fail("records not sorted by (frame, label)");
  }
}

}  // namespace detail

inline void write_tracks(std::ostream& out, const std::vector<TrackedBox>& tracks, std::size_t frame_count) {
  if (frame_count == 0 && tracks.empty()) return;
  out << json{{"format", kTrkFormat}, {"frame_count", frame_count}}.dump() << "\n";
  for (const auto& t : tracks) {
    out << json{{"frame", t.frame_idx},
                {"box", detail::box_to_json(t.bbox)},
                {"label", t.track_label},
                {"score", t.score}}
               .dump()
        << "\n";
  }
}

struct TracksFile {
  std::size_t frame_count = 0;
  std::vector<TrackedBox> tracks;
};

inline TracksFile read_tracks(std::istream& in) {
  const auto rs = detail::read_records(in, kTrkFormat);
  TracksFile tf{rs.frame_count, {}};
  for (const auto& [lineno, j] : rs.records) {
    detail::Fields f(j, detail::line_where(lineno));
    TrackedBox t;
    t.frame_idx = f.get<std::size_t>("frame");
    detail::check_frame(t.frame_idx, rs.frame_count, f);
    t.bbox = detail::box_from_json(f.require("box"), f, "box");
    t.track_label = f.get<TrackLabel>("label");
    t.score = f.get<double>("score");
    f.no_unknown();
    tf.tracks.push_back(t);
    detail::check_sorted(tf.tracks, f);
  }
  return tf;
}

inline void write_prompts(std::ostream& out, const std::vector<Prompt>& prompts, std::size_t frame_count) {
  if (frame_count == 0 && prompts.empty()) return;
  out << json{{"format", kPrmFormat}, {"frame_count", frame_count}}.dump() << "\n";
  for (const auto& p : prompts) {
    out << json{{"frame", p.frame_idx},
                {"box", detail::box_to_json(p.bbox)},
                {"center", json::array({p.center.x, p.center.y})},
                {"label", p.track_label},
                {"score", p.score}}
               .dump()
        << "\n";
  }
}

struct PromptsFile {
  std::size_t frame_count = 0;
  std::vector<Prompt> prompts;
};

inline PromptsFile read_prompts(std::istream& in) {
  const auto rs = detail::read_records(in, kPrmFormat);
  PromptsFile pf{rs.frame_count, {}};
  for (const auto& [lineno, j] : rs.records) {
    detail::Fields f(j, detail::line_where(lineno));
    Prompt p;
    p.frame_idx = f.get<std::size_t>("frame");
    detail::check_frame(p.frame_idx, rs.frame_count, f);
    p.bbox = detail::box_from_json(f.require("box"), f, "box");
    const auto& c = f.require("center");
    if (!c.is_array() || c.size() != 2 || !c[0].is_number() || !c[1].is_number()) {
      f.fail("field 'center' must be [cx,cy]");
    }
    p.center = {c[0].get<double>(), c[1].get<double>()};
    if (!(p.center.x > p.bbox.x1() && p.center.x < p.bbox.x2() && p.center.y > p.bbox.y1() &&
          p.center.y < p.bbox.y2())) {
      f.fail("field 'center' lies outside the box");
    }
    p.track_label = f.get<TrackLabel>("label");
    p.score = f.get<double>("score");
    f.no_unknown();
    pf.prompts.push_back(p);
    detail::check_sorted(pf.prompts, f);
  }
  return pf;
}

// ---------------------------------------------------------------------------
// Mask files (segmentation output and ground truth)

struct MaskFile {
  SegmentationResult masks;
  std::map<TrackLabel, double> scores;
};

inline void write_masks(std::ostream& out, const SegmentationResult& seg,
                        const std::map<TrackLabel, double>& scores = {}) {
  json header{{"format", kRleFormat},
              {"frame_count", seg.clip.frame_count},
              {"width", seg.clip.width},
              {"height", seg.clip.height}};
  if (!scores.empty()) {
    json s = json::object();
    for (auto [label, v] : scores) s[std::to_string(label)] = v;
    header["scores"] = s;
  }
  out << header.dump() << "\n";
  for (std::size_t f = 0; f < seg.frames.size(); ++f) {
    for (const auto& [label, m] : seg.frames[f]) {
      out << json{{"frame", f}, {"label", label}, {"runs", rle_encode(m).runs}}.dump() << "\n";
    }
  }
}

inline MaskFile read_masks(std::istream& in) {
  const auto rs = detail::read_records(in, kRleFormat);
  if (rs.header.is_null()) throw ValidationError("mask file is empty");
  detail::Fields hf(rs.header, "line 1");
  hf.require("format");
  hf.require("frame_count");
  ClipInfo clip{rs.frame_count, hf.get<int>("width"), hf.get<int>("height")};
  if (clip.width <= 0 || clip.height <= 0) hf.fail("width/height must be positive");
  MaskFile mf{SegmentationResult(clip), {}};
  if (const auto* s = hf.optional("scores")) {
    if (!s->is_object()) hf.fail("field 'scores' must be an object");
    for (const auto& [key, v] : s->items()) {
      TrackLabel label = 0;
      const auto [ptr, ec] = std::from_chars(key.data(), key.data() + key.size(), label);
      if (ec != std::errc{} || ptr != key.data() + key.size()) hf.fail("bad label key '" + key + "' in scores");
      if (!v.is_number()) hf.fail("score for label " + key + " must be a number");
      mf.scores[label] = v.get<double>();
    }
  }
  hf.no_unknown();
  for (const auto& [lineno, j] : rs.records) {
    detail::Fields f(j, detail::line_where(lineno));
    const auto frame = f.get<std::size_t>("frame");
    detail::check_frame(frame, rs.frame_count, f);
    const auto label = f.get<TrackLabel>("label");
    RleMask r{clip.width, clip.height, f.get<std::vector<std::uint32_t>>("runs")};
    f.no_unknown();
    MaskPlane m;
    try {
      m = rle_decode(r);
    } catch (const ValidationError& e) {
      f.fail(e.what());
    }
    if (mf.masks.frames[frame].count(label)) f.fail("duplicate (frame, label) record");
    mf.masks.put(frame, label, std::move(m));
  }
  return mf;
}

/// Ground truth is stored as a mask file whose labels are GT track ids.
inline void write_ground_truth(std::ostream& out, const GroundTruth& gt) {
  SegmentationResult seg({gt.frame_count(), gt.width, gt.height});
  for (std::size_t f = 0; f < gt.frame_count(); ++f) {
    for (const auto& r : gt.regions[f]) seg.put(f, r.gt_track_id, gt.track_mask(f, r.gt_track_id));
  }
  write_masks(out, seg);
}

inline GroundTruth ground_truth_from_tracks(const SegmentationResult& seg) {
  GroundTruth gt;
  gt.width = seg.clip.width;
  gt.height = seg.clip.height;
  gt.masks.assign(seg.clip.frame_count, MaskPlane(gt.width, gt.height));
  gt.regions.assign(seg.clip.frame_count, {});
  for (std::size_t f = 0; f < seg.frames.size(); ++f) {
    for (const auto& [id, m] : seg.frames[f]) {
      GtRegion r;
      r.gt_track_id = id;
      for (std::size_t i = 0; i < m.size(); ++i) {
        if (m.test(i)) r.pixels.push_back(static_cast<std::uint32_t>(i));
      }
      r.bbox = *pixels_to_bbox(r.pixels, gt.width);
      gt.masks[f] |= m;
      gt.regions[f].push_back(std::move(r));
    }
  }
  return gt;
}

inline GroundTruth read_ground_truth(std::istream& in) {
  return ground_truth_from_tracks(read_masks(in).masks);
}

// ---------------------------------------------------------------------------
// Portable graymap masks and dataset ingestion

namespace detail {

inline std::string pgm_token(std::istream& in) {
  std::string tok;
  char c;
  while (in.get(c)) {
    if (c == '#') {
      std::string rest;
      std::getline(in, rest);
      continue;
    }
    if (std::isspace(static_cast<unsigned char>(c))) {
      if (!tok.empty()) return tok;
      continue;
    }
    tok.push_back(c);
  }
  return tok;
}

inline int pgm_int(std::istream& in, const std::string& what) {
  const auto tok = pgm_token(in);
  int v = 0;
  const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc{} || ptr != tok.data() + tok.size() || v < 0) {
    throw IoError(what + ": bad PGM header");
  }
  return v;
}

}  // namespace detail

/// Reads an 8-bit PGM (P5 or P2); nonzero pixels are anomalous.
inline MaskPlane read_pgm_mask(const std::filesystem::path& path) {
  auto in = detail::open_in(path);
  const auto what = path.string();
  const auto magic = detail::pgm_token(in);
  if (magic != "P5" && magic != "P2") throw IoError(what + ": not a PGM file");
  const int w = detail::pgm_int(in, what), h = detail::pgm_int(in, what);
  const int maxval = detail::pgm_int(in, what);
  if (maxval < 1 || maxval > 255) throw IoError(what + ": only 8-bit PGM is supported");
  std::vector<std::uint8_t> bits(static_cast<std::size_t>(w) * static_cast<std::size_t>(h));
  if (magic == "P5") {
    in.read(reinterpret_cast<char*>(bits.data()), static_cast<std::streamsize>(bits.size()));
    if (in.gcount() != static_cast<std::streamsize>(bits.size())) throw IoError(what + ": truncated PGM data");
  } else {
    for (auto& b : bits) b = static_cast<std::uint8_t>(detail::pgm_int(in, what));
  }
  return MaskPlane(w, h, std::move(bits));
}

inline void write_pgm_mask(const std::filesystem::path& path, const MaskPlane& m) {
  auto out = detail::open_out(path);
  out << "P5\n" << m.width() << " " << m.height() << "\n255\n";
  for (auto b : m.bits()) out.put(static_cast<char>(b ? 255 : 0));
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

/// Writes one zero-padded PGM per frame: 000000.pgm, 000001.pgm, ...
inline void write_mask_dir(const std::filesystem::path& dir, const std::vector<MaskPlane>& masks) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create '" + dir.string() + "': " + ec.message());
  for (std::size_t f = 0; f < masks.size(); ++f) {
    char name[32];
    std::snprintf(name, sizeof name, "%06zu.pgm", f);
    write_pgm_mask(dir / name, masks[f]);
  }
}

/// Links per-frame regions into tracks: each region takes the id of the
/// previous frame's region with the highest box IoU >= min_iou (one-to-one,
/// greedy), otherwise a fresh id.
inline void link_gt_tracks(std::vector<std::vector<GtRegion>>& regions, double min_iou = 0.3) {
  std::uint32_t next = 0;
  for (std::size_t f = 0; f < regions.size(); ++f) {
    auto& cur = regions[f];
    std::vector<bool> linked(cur.size(), false);
    if (f > 0) {
      const auto& prev = regions[f - 1];
      struct Pair {
        double v;
        std::size_t c, p;
      };
      std::vector<Pair> pairs;
      for (std::size_t c = 0; c < cur.size(); ++c) {
        for (std::size_t p = 0; p < prev.size(); ++p) {
          const double v = iou(cur[c].bbox, prev[p].bbox);
          if (v >= min_iou) pairs.push_back({v, c, p});
        }
      }
      std::stable_sort(pairs.begin(), pairs.end(), [](const Pair& a, const Pair& b) { return a.v > b.v; });
      std::vector<bool> used(prev.size(), false);
      for (const auto& pr : pairs) {
        if (linked[pr.c] || used[pr.p]) continue;
        cur[pr.c].gt_track_id = prev[pr.p].gt_track_id;
        linked[pr.c] = true;
        used[pr.p] = true;
      }
    }
    for (std::size_t c = 0; c < cur.size(); ++c) {
      if (!linked[c]) cur[c].gt_track_id = next++;
    }
  }
}

/// Loads a directory of per-frame PGM masks named by frame number (any zero
/// padding). Frame numbers must be contiguous from the smallest one.
inline GroundTruth ingest_dataset_masks(const std::filesystem::path& dir, double link_iou = 0.3) {
  std::error_code ec;
  if (!std::filesystem::is_directory(dir, ec)) throw IoError("'" + dir.string() + "' is not a directory");
  std::map<long long, std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    if (!e.is_regular_file() || e.path().extension() != ".pgm") continue;
    const auto stem = e.path().stem().string();
    long long idx = 0;
    const auto [ptr, err] = std::from_chars(stem.data(), stem.data() + stem.size(), idx);
    if (err != std::errc{} || ptr != stem.data() + stem.size()) {
      throw IoError("mask file '" + e.path().filename().string() + "' is not named by frame number");
    }
    if (!files.emplace(idx, e.path()).second) {
      throw IoError("frame " + std::to_string(idx) + " appears twice in '" + dir.string() + "'");
    }
  }
  if (files.empty()) throw IoError("no .pgm frames in '" + dir.string() + "'");

  GroundTruth gt;
  long long expected = files.begin()->first;
  for (const auto& [idx, path] : files) {
    if (idx != expected) {
      throw IoError("missing frame " + std::to_string(expected) + " in '" + dir.string() + "'");
    }
    ++expected;
    auto m = read_pgm_mask(path);
    if (gt.masks.empty()) {
      gt.width = m.width();
      gt.height = m.height();
    } else if (m.width() != gt.width || m.height() != gt.height) {
      throw IoError("frame " + std::to_string(idx) + " is " + std::to_string(m.width()) + "x" +
                    std::to_string(m.height()) + ", expected " + std::to_string(gt.width) + "x" +
                    std::to_string(gt.height));
    }
    std::vector<GtRegion> regions;
    for (auto& c : connected_components(m)) regions.push_back({0, c.bbox, std::move(c.pixels)});
    gt.masks.push_back(std::move(m));
    gt.regions.push_back(std::move(regions));
  }
  link_gt_tracks(gt.regions, link_iou);
  return gt;
}

// ---------------------------------------------------------------------------
// Config documents (tao-cfg/1)

inline json scenario_to_json(const ScenarioConfig& c) {
  json objects = json::array();
  for (const auto& o : c.objects) {
    objects.push_back({{"x", o.x},
                       {"y", o.y},
                       {"vx", o.vx},
                       {"vy", o.vy},
                       {"w", o.w},
                       {"h", o.h},
                       {"shape", o.shape == Shape::rectangle ? "rectangle" : "ellipse"},
                       {"anomalous", o.anomalous},
                       {"score_mean", o.score_mean},
                       {"score_sigma", o.score_sigma},
                       {"first_frame", o.first_frame},
                       {"last_frame", o.last_frame ? json(*o.last_frame) : json(nullptr)},
                       {"class", o.class_label}});
  }
  const auto& fp = c.false_positives;
  return {{"format", kCfgFormat},
          {"kind", "scenario"},
          {"frames", c.frames},
          {"width", c.width},
          {"height", c.height},
          {"seed", c.seed},
          {"overlap", c.overlap},
          {"objects", objects},
          {"false_positives",
           {{"rate", fp.rate},
            {"max_lifetime", fp.max_lifetime},
            {"score_mean", fp.score_mean},
            {"score_sigma", fp.score_sigma},
            {"min_size", fp.min_size},
            {"max_size", fp.max_size},
            {"separation", fp.separation}}},
          {"noise", {{"jitter_sigma", c.noise.jitter_sigma}, {"miss_prob", c.noise.miss_prob}}}};
}

/// Parses a scenario document; every key is required except objects'
/// first_frame/last_frame/class. `where` prefixes error locations.
inline ScenarioConfig scenario_from_json(const json& j, const std::string& where = "scenario") {
  detail::Fields f(j, where);
  if (const auto* fmt = f.optional("format"); fmt && *fmt != kCfgFormat) f.fail("unsupported format");
  if (const auto* kind = f.optional("kind"); kind && *kind != "scenario") f.fail("kind must be 'scenario'");
  ScenarioConfig c;
  c.frames = f.get<std::size_t>("frames");
  c.width = f.get<int>("width");
  c.height = f.get<int>("height");
  c.seed = f.get<std::uint64_t>("seed");
  c.overlap = f.get_or<bool>("overlap", false);
  const auto& objs = f.require("objects");
  if (!objs.is_array()) f.fail("field 'objects' must be an array");
  for (std::size_t i = 0; i < objs.size(); ++i) {
    detail::Fields of(objs[i], where + ".objects[" + std::to_string(i) + "]");
    ObjectSpec o;
    o.x = of.get<double>("x");
    o.y = of.get<double>("y");
    o.vx = of.get<double>("vx");
    o.vy = of.get<double>("vy");
    o.w = of.get<double>("w");
    o.h = of.get<double>("h");
    const auto shape = of.get<std::string>("shape");
    if (shape == "rectangle") o.shape = Shape::rectangle;
    else if (shape == "ellipse") o.shape = Shape::ellipse;
    else of.fail("shape must be 'rectangle' or 'ellipse'");
    o.anomalous = of.get<bool>("anomalous");
    o.score_mean = of.get<double>("score_mean");
    o.score_sigma = of.get<double>("score_sigma");
    o.first_frame = of.get_or<std::size_t>("first_frame", 0);
    if (const auto* lf = of.optional("last_frame")) o.last_frame = of.convert<std::size_t>(*lf, "last_frame");
    o.class_label = of.get_or<std::string>("class", "person");
    of.no_unknown();
    c.objects.push_back(o);
  }
  {
    detail::Fields ff(f.require("false_positives"), where + ".false_positives");
    auto& fp = c.false_positives;
    fp.rate = ff.get<double>("rate");
    fp.max_lifetime = ff.get<int>("max_lifetime");
    fp.score_mean = ff.get<double>("score_mean");
    fp.score_sigma = ff.get<double>("score_sigma");
    fp.min_size = ff.get<double>("min_size");
    fp.max_size = ff.get<double>("max_size");
    fp.separation = ff.get<int>("separation");
    ff.no_unknown();
  }
  {
    detail::Fields nf(f.require("noise"), where + ".noise");
    c.noise.jitter_sigma = nf.get<double>("jitter_sigma");
    c.noise.miss_prob = nf.get<double>("miss_prob");
    nf.no_unknown();
  }
  f.no_unknown();
  c.validate();
  return c;
}

inline json params_to_json(const PipelineParams& p) {
  return {{"tau", p.tau}, {"k", p.k}, {"m", p.m}, {"h", p.h}, {"l", p.l}};
}

inline PipelineParams params_from_json(const json& j, const std::string& where = "params") {
  detail::Fields f(j, where);
  PipelineParams p;
  p.tau = f.get<double>("tau");
  p.k = f.get<int>("k");
  p.m = f.get<int>("m");
  p.h = f.get<double>("h");
  p.l = f.get<int>("l");
  f.no_unknown();
  p.validate();
  return p;
}

// Convenience file wrappers.

inline std::vector<FrameDetections> load_detections(const std::filesystem::path& p) {
  auto in = detail::open_in(p);
  return read_detections(in);
}

inline TracksFile load_tracks(const std::filesystem::path& p) {
  auto in = detail::open_in(p);
  return read_tracks(in);
}

inline MaskFile load_masks(const std::filesystem::path& p) {
  auto in = detail::open_in(p);
  return read_masks(in);
}

inline GroundTruth load_ground_truth(const std::filesystem::path& p) {
  auto in = detail::open_in(p);
  return read_ground_truth(in);
}

inline json load_json(const std::filesystem::path& p) {
  auto in = detail::open_in(p);
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ValidationError(p.string() + ": malformed JSON (" + e.what() + ")");
  }
}

template <class Writer>
void save_file(const std::filesystem::path& p, Writer&& write) {
  auto out = detail::open_out(p);
  write(out);
  out.flush();
  if (!out) throw IoError("failed writing '" + p.string() + "'");
}

}  // namespace tao
