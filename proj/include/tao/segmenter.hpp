// Prompt-based video segmentation contract and its backends.
//
// A backend turns a prompt set into per-frame, per-label masks. Two reference
// backends are built in (oracle, drift); ExternalBackend drives a child
// process over the line-delimited "tao-seg/1" protocol.
#pragma once

#include <algorithm>
#include <array>
#include <cerrno>
#include <cmath>
#include <csignal>
#include <cstring>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <fcntl.h>
#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

#include <json.hpp>

#include "tao/core.hpp"
#include "tao/geometry.hpp"
#include "tao/random.hpp"
#include "tao/rle.hpp"

namespace tao {

inline constexpr const char* kSegProtocol = "tao-seg/1";

struct ClipInfo {
  std::size_t frame_count = 0;
  int width = 0;
  int height = 0;

  bool operator==(const ClipInfo&) const = default;
};

struct SegmentationRequest {
  ClipInfo clip;
  std::vector<Prompt> prompts;

  void validate() const {
    if (clip.width <= 0 || clip.height <= 0) throw ValidationError("clip dimensions must be positive");
    for (const auto& p : prompts) {
      if (p.frame_idx >= clip.frame_count) {
        throw ValidationError("prompt frame " + std::to_string(p.frame_idx) +
                              " outside clip of " + std::to_string(clip.frame_count) + " frames");
      }
    }
  }
};

/// Per-frame label masks. Only non-empty masks are stored.
struct SegmentationResult {
  ClipInfo clip;
  std::vector<std::map<TrackLabel, MaskPlane>> frames;

  explicit SegmentationResult(ClipInfo c = {}) : clip(c), frames(c.frame_count) {}

  void put(FrameIndex f, TrackLabel label, MaskPlane m) {
    if (m.width() != clip.width || m.height() != clip.height) {
      throw BackendError("mask dimension mismatch for frame " + std::to_string(f) + " label " +
                         std::to_string(label));
    }
    if (f >= frames.size()) throw BackendError("mask frame " + std::to_string(f) + " out of range");
    if (m.none()) return;
    auto [it, inserted] = frames[f].emplace(label, m);
    if (!inserted) it->second |= m;
  }

  MaskPlane union_mask(FrameIndex f) const {
    MaskPlane u(clip.width, clip.height);
    for (const auto& [label, m] : frames.at(f)) u |= m;
    return u;
  }

  std::vector<MaskPlane> union_masks() const {
    std::vector<MaskPlane> out;
    out.reserve(frames.size());
    for (std::size_t f = 0; f < frames.size(); ++f) out.push_back(union_mask(f));
    return out;
  }

  std::set<TrackLabel> labels() const {
    std::set<TrackLabel> out;
    for (const auto& fr : frames) {
      for (const auto& [label, m] : fr) out.insert(label);
    }
    return out;
  }

  bool operator==(const SegmentationResult&) const = default;
};

class SegmenterBackend {
 public:
  virtual ~SegmenterBackend() = default;
  virtual SegmentationResult run(const SegmentationRequest& req) = 0;
};

/// Validates the request, runs the backend and checks the result shape.
inline SegmentationResult segment(const SegmentationRequest& req, SegmenterBackend& backend) {
  req.validate();
  auto result = backend.run(req);
  if (result.clip != req.clip || result.frames.size() != req.clip.frame_count) {
    throw BackendError("backend returned a result that does not match the clip");
  }
  std::set<TrackLabel> prompted;
  for (const auto& p : req.prompts) prompted.insert(p.track_label);
  for (auto label : result.labels()) {
    if (!prompted.count(label)) {
      throw BackendError("backend emitted unprompted label " + std::to_string(label));
    }
  }
  return result;
}

/// Frame-isolated segmentation: each prompted frame is segmented on its own
/// with only that frame's prompts, and nothing propagates between frames.
inline SegmentationResult segment_frame_isolated(const SegmentationRequest& req,
                                                 SegmenterBackend& backend) {
  req.validate();
  SegmentationResult out(req.clip);
  std::map<FrameIndex, std::vector<Prompt>> by_frame;
  for (const auto& p : req.prompts) by_frame[p.frame_idx].push_back(p);
  for (auto& [f, prompts] : by_frame) {
    SegmentationRequest sub{{f + 1, req.clip.width, req.clip.height}, std::move(prompts)};
    auto r = segment(sub, backend);
    for (auto& [label, m] : r.frames[f]) out.put(f, label, std::move(m));
  }
  return out;
}

/// Pixels whose cell centre lies inside the box.
inline MaskPlane rasterize_box(const BBox& b, int width, int height) {
  MaskPlane m(width, height);
  const int x0 = std::max(0, static_cast<int>(std::ceil(b.x1() - 0.5)));
  const int y0 = std::max(0, static_cast<int>(std::ceil(b.y1() - 0.5)));
  const int x1 = std::min(width - 1, static_cast<int>(std::ceil(b.x2() - 0.5)) - 1);
  const int y1 = std::min(height - 1, static_cast<int>(std::ceil(b.y2() - 0.5)) - 1);
  for (int y = y0; y <= y1; ++y) {
    for (int x = x0; x <= x1; ++x) m.set(x, y);
  }
  return m;
}

struct PromptBinding {
  std::size_t prompt_index = 0;
  std::optional<std::uint32_t> gt_track_id;
  double iou = 0.0;
};

/// Binds each prompt to the GT track whose region box on the prompt frame has
/// the highest IoU with the prompt box, if that IoU is at least match_iou.
/// Ties go to the smaller track id.
inline std::vector<PromptBinding> bind_prompts(const GroundTruth& gt, std::span<const Prompt> prompts,
                                               double match_iou) {
  std::vector<PromptBinding> out;
  out.reserve(prompts.size());
  for (std::size_t i = 0; i < prompts.size(); ++i) {
    PromptBinding b{i, std::nullopt, 0.0};
    const auto f = prompts[i].frame_idx;
    if (f < gt.frame_count()) {
      for (const auto& r : gt.regions[f]) {
        const double v = iou(prompts[i].bbox, r.bbox);
        if (v >= match_iou &&
            (!b.gt_track_id || v > b.iou || (v == b.iou && r.gt_track_id < *b.gt_track_id))) {
          b.gt_track_id = r.gt_track_id;
          b.iou = v;
        }
      }
    }
    out.push_back(b);
  }
  return out;
}

namespace detail {

inline void check_gt_matches(const GroundTruth& gt, const ClipInfo& clip) {
  if (gt.width != clip.width || gt.height != clip.height || gt.frame_count() < clip.frame_count) {
    throw ValidationError("ground truth does not match clip dimensions");
  }
}

}  // namespace detail

/// Test oracle standing in for a real segmenter. A bound prompt emits its GT
/// track's mask on every frame from the prompt frame onward; an unbound prompt
/// emits its own box rectangle on those frames.
class OracleBackend : public SegmenterBackend {
 public:
  explicit OracleBackend(const GroundTruth& gt, double match_iou = 0.5)
      : gt_(gt), match_iou_(match_iou) {}

  SegmentationResult run(const SegmentationRequest& req) override {
    detail::check_gt_matches(gt_, req.clip);
    SegmentationResult out(req.clip);
    const auto bindings = bind_prompts(gt_, req.prompts, match_iou_);
    for (const auto& b : bindings) {
      const auto& p = req.prompts[b.prompt_index];
      const auto rect = b.gt_track_id ? MaskPlane{} : rasterize_box(p.bbox, req.clip.width, req.clip.height);
      for (auto f = p.frame_idx; f < req.clip.frame_count; ++f) {
        out.put(f, p.track_label, b.gt_track_id ? gt_.track_mask(f, *b.gt_track_id) : rect);
      }
    }
    return out;
  }

 private:
  const GroundTruth& gt_;
  double match_iou_;
};

struct DriftParams {
  double p_drift = 0.0;   // per-frame, per-track drift probability
  double drift_step = 1.0;  // pixels per drift event
  std::size_t capacity = 64;  // max simultaneously live labels
  std::uint64_t seed = 0;
  double shrink = 0.95;  // scale factor per drift event

  void validate() const {
    if (!(p_drift >= 0.0 && p_drift <= 1.0)) throw ValidationError("p_drift must be in [0,1]");
    if (capacity < 1) throw ValidationError("capacity must be >= 1");
    if (!std::isfinite(drift_step) || drift_step < 0.0) throw ValidationError("drift_step must be >= 0");
    if (!(shrink > 0.0 && shrink <= 1.0)) throw ValidationError("shrink must be in (0,1]");
  }

  bool operator==(const DriftParams&) const = default;
};

/// Translates a mask by `offset` and scales it by `scale` about the centre of
/// its bounding box (nearest-neighbour inverse mapping).
inline MaskPlane transform_mask(const MaskPlane& src, Point offset, double scale) {
  if (offset.x == 0.0 && offset.y == 0.0 && scale == 1.0) return src;
  MaskPlane out(src.width(), src.height());
  const auto box = mask_to_bbox(src);
  if (!box) return out;
  const Point c = box_center(*box);
  for (int y = 0; y < src.height(); ++y) {
    for (int x = 0; x < src.width(); ++x) {
      const double sx = c.x + (x + 0.5 - c.x - offset.x) / scale;
      const double sy = c.y + (y + 0.5 - c.y - offset.y) / scale;
      const int ix = static_cast<int>(std::floor(sx)), iy = static_cast<int>(std::floor(sy));
      if (ix >= 0 && iy >= 0 && ix < src.width() && iy < src.height() && src.at(ix, iy)) {
        out.set(x, y);
      }
    }
  }
  return out;
}

/// Oracle backend with accumulating tracking error and bounded memory.
///
/// Frames are processed forward. A prompt activates its label; a bound prompt
/// re-anchors the label's drift state. On every later frame a label with bound
/// GT tracks drifts with probability p_drift: its mask offset moves by
/// drift_step along a fixed per-track direction and its scale shrinks by
/// `shrink`. Drift events are keyed on (seed, gt track, frame), so a GT track
/// drifts identically whatever labels surround it. Whenever more than
/// `capacity` labels are live, the oldest live labels holding bound tracks are
/// evicted and emit nothing afterwards.
class DriftBackend : public SegmenterBackend {
 public:
  DriftBackend(const GroundTruth& gt, DriftParams params, double match_iou = 0.5)
      : gt_(gt), params_(params), match_iou_(match_iou) {
    params_.validate();
  }

  SegmentationResult run(const SegmentationRequest& req) override {
    detail::check_gt_matches(gt_, req.clip);
    SegmentationResult out(req.clip);
    const auto bindings = bind_prompts(gt_, req.prompts, match_iou_);

    struct LabelState {
      std::size_t activation = 0;
      bool evicted = false;
      std::set<std::uint32_t> bound;
      std::vector<MaskPlane> rects;
      Point offset;
      double scale = 1.0;
      FrameIndex anchored = 0;
    };
    std::map<TrackLabel, LabelState> state;
    std::size_t activations = 0;

    std::map<FrameIndex, std::vector<std::size_t>> prompts_at;
    for (std::size_t i = 0; i < req.prompts.size(); ++i) {
      prompts_at[req.prompts[i].frame_idx].push_back(i);
    }

    for (FrameIndex f = 0; f < req.clip.frame_count; ++f) {
      if (auto it = prompts_at.find(f); it != prompts_at.end()) {
        for (auto i : it->second) {
          const auto& p = req.prompts[i];
          auto [st, fresh] = state.try_emplace(p.track_label);
          if (fresh) st->second.activation = activations++;
          auto& s = st->second;
          if (s.evicted) continue;
          if (bindings[i].gt_track_id) {
            s.bound.insert(*bindings[i].gt_track_id);
            s.offset = {};
            s.scale = 1.0;
            s.anchored = f;
          } else {
            s.rects.push_back(rasterize_box(p.bbox, req.clip.width, req.clip.height));
          }
        }
      }

      evict_over_capacity(state);

      for (auto& [label, s] : state) {
        if (s.evicted || s.bound.empty() || s.anchored == f) continue;
        const auto track = *s.bound.begin();
        if (to_unit(hash_key(params_.seed, track, f, 1)) < params_.p_drift) {
          const auto dir = direction(track);
          s.offset.x += params_.drift_step * dir[0];
          s.offset.y += params_.drift_step * dir[1];
          s.scale *= params_.shrink;
        }
      }

      for (auto& [label, s] : state) {
        if (s.evicted) continue;
        MaskPlane m(req.clip.width, req.clip.height);
        if (!s.bound.empty()) {
          MaskPlane tracked(req.clip.width, req.clip.height);
          for (auto id : s.bound) tracked |= gt_.track_mask(f, id);
          m |= transform_mask(tracked, s.offset, s.scale);
        }
        for (const auto& r : s.rects) m |= r;
        out.put(f, label, std::move(m));
      }
    }
    return out;
  }

  const DriftParams& params() const noexcept { return params_; }

 private:
  template <class State>
  void evict_over_capacity(std::map<TrackLabel, State>& state) const {
    while (true) {
      std::size_t live = 0;
      State* oldest = nullptr;
      for (auto& [label, s] : state) {
        if (s.evicted) continue;
        ++live;
        if (!s.bound.empty() && (!oldest || s.activation < oldest->activation)) oldest = &s;
      }
      if (live <= params_.capacity || !oldest) return;
      oldest->evicted = true;
    }
  }

  std::array<int, 2> direction(std::uint32_t track) const {
    static constexpr std::array<std::array<int, 2>, 8> dirs{
        {{1, 0}, {1, 1}, {0, 1}, {-1, 1}, {-1, 0}, {-1, -1}, {0, -1}, {1, -1}}};
    return dirs[hash_key(params_.seed, track, 0, 2) % dirs.size()];
  }

  const GroundTruth& gt_;
  DriftParams params_;
  double match_iou_;
};

namespace detail {

inline nlohmann::json box_json(const BBox& b) { return {b.x1(), b.y1(), b.x2(), b.y2()}; }

inline nlohmann::json prompt_json(const Prompt& p) {
  return {{"frame", p.frame_idx},
          {"label", p.track_label},
          {"box", box_json(p.bbox)},
          {"center", {p.center.x, p.center.y}}};
}

/// Blocking line reader over a file descriptor.
class LineReader {
 public:
  explicit LineReader(int fd) : fd_(fd) {}

  std::optional<std::string> next() {
    while (true) {
      if (auto nl = buf_.find('\n'); nl != std::string::npos) {
        std::string line = buf_.substr(0, nl);
        buf_.erase(0, nl + 1);
        if (!line.empty() && line.back() == '\r') line.pop_back();
        return line;
      }
      char chunk[4096];
      const auto got = ::read(fd_, chunk, sizeof chunk);
      if (got < 0 && errno == EINTR) continue;
      if (got <= 0) {
        if (buf_.empty()) return std::nullopt;
        std::string line;
        line.swap(buf_);
        return line;
      }
      buf_.append(chunk, static_cast<std::size_t>(got));
    }
  }

 private:
  int fd_;
  std::string buf_;
};

}  // namespace detail

/// Runs an external segmenter as a child process (`/bin/sh -c command`) and
/// speaks tao-seg/1 over its stdin/stdout. One session per run().
class ExternalBackend : public SegmenterBackend {
 public:
  explicit ExternalBackend(std::string command, std::string frames_dir = "")
      : command_(std::move(command)), frames_dir_(std::move(frames_dir)) {}

  SegmentationResult run(const SegmentationRequest& req) override {
    Child child = spawn();
    detail::LineReader reader(child.out);
    SegmentationResult out(req.clip);
    try {
      send(child, {{"proto", kSegProtocol},
                   {"type", "INIT"},
                   {"width", req.clip.width},
                   {"height", req.clip.height},
                   {"frame_count", req.clip.frame_count},
                   {"frames_dir", frames_dir_}});
      expect_type(read_message(reader), "ACK");

      nlohmann::json prompts = nlohmann::json::array();
      for (const auto& p : req.prompts) prompts.push_back(detail::prompt_json(p));
      send(child, {{"proto", kSegProtocol}, {"type", "SEGMENT"}, {"prompts", prompts}});

      while (true) {
        auto msg = read_message(reader);
        const auto type = msg.at("type").get<std::string>();
        if (type == "END") break;
        if (type == "ERROR") {
          throw BackendError("external backend error: " + msg.value("message", std::string{}));
        }
        if (type != "RESULT") throw ProtocolError("unexpected message type '" + type + "'");
        RleMask rle;
        const auto& r = msg.at("rle");
        rle.width = r.at("width").get<int>();
        rle.height = r.at("height").get<int>();
        rle.runs = r.at("runs").get<std::vector<std::uint32_t>>();
        MaskPlane m;
        try {
          m = rle_decode(rle);
        } catch (const ValidationError& e) {
          throw ProtocolError(std::string("bad RESULT mask: ") + e.what());
        }
        const auto f = msg.at("frame").get<FrameIndex>();
        const auto label = msg.at("label").get<TrackLabel>();
        if (f >= req.clip.frame_count) throw ProtocolError("RESULT frame out of range");
        if (m.width() != req.clip.width || m.height() != req.clip.height) {
          throw ProtocolError("RESULT mask dimension mismatch");
        }
        out.put(f, label, std::move(m));
      }
    } catch (const nlohmann::json::exception& e) {
      finish(child, true);
      throw ProtocolError(std::string("malformed message: ") + e.what());
    } catch (...) {
      finish(child, true);
      throw;
    }
    finish(child, false);
    return out;
  }

 private:
  struct Child {
    pid_t pid = -1;
    int in = -1;   // our write end -> child's stdin
    int out = -1;  // our read end <- child's stdout
  };

  Child spawn() const {
    std::signal(SIGPIPE, SIG_IGN);
    int to_child[2], from_child[2];
    if (::pipe(to_child) != 0) throw BackendError("pipe failed: " + std::string(std::strerror(errno)));
    if (::pipe(from_child) != 0) {
      ::close(to_child[0]);
      ::close(to_child[1]);
      throw BackendError("pipe failed: " + std::string(std::strerror(errno)));
    }
    const pid_t pid = ::fork();
    if (pid < 0) throw BackendError("fork failed: " + std::string(std::strerror(errno)));
    if (pid == 0) {
      ::dup2(to_child[0], STDIN_FILENO);
      ::dup2(from_child[1], STDOUT_FILENO);
      ::close(to_child[0]);
      ::close(to_child[1]);
      ::close(from_child[0]);
      ::close(from_child[1]);
      ::execl("/bin/sh", "sh", "-c", command_.c_str(), static_cast<char*>(nullptr));
      ::_exit(127);
    }
    ::close(to_child[0]);
    ::close(from_child[1]);
    ::fcntl(to_child[1], F_SETFD, FD_CLOEXEC);
    ::fcntl(from_child[0], F_SETFD, FD_CLOEXEC);
    return {pid, to_child[1], from_child[0]};
  }

  static void send(Child& c, const nlohmann::json& msg) {
    const std::string line = msg.dump() + "\n";
    std::size_t done = 0;
    while (done < line.size()) {
      const auto n = ::write(c.in, line.data() + done, line.size() - done);
      if (n < 0 && errno == EINTR) continue;
      if (n <= 0) throw BackendError("external backend closed its input");
      done += static_cast<std::size_t>(n);
    }
  }

  static nlohmann::json read_message(detail::LineReader& reader) {
    auto line = reader.next();
    if (!line) throw ProtocolError("backend closed the session before END");
    nlohmann::json msg;
    try {
      msg = nlohmann::json::parse(*line);
    } catch (const nlohmann::json::parse_error&) {
      throw ProtocolError("unparseable line: " + line->substr(0, 80));
    }
    if (!msg.is_object() || msg.value("proto", std::string{}) != kSegProtocol ||
        !msg.contains("type") || !msg["type"].is_string()) {
      throw ProtocolError("line is not a tao-seg/1 message: " + line->substr(0, 80));
    }
    return msg;
  }

  static void expect_type(const nlohmann::json& msg, const std::string& type) {
    const auto got = msg.at("type").get<std::string>();
    if (got == "ERROR") throw BackendError("external backend error: " + msg.value("message", std::string{}));
    if (got != type) throw ProtocolError("expected " + type + ", got " + got);
  }

  static void finish(Child& c, bool kill) {
    if (c.in >= 0) ::close(c.in);
    if (kill && c.pid > 0) ::kill(c.pid, SIGTERM);
    if (c.out >= 0) ::close(c.out);
    int status = 0;
    if (c.pid > 0) ::waitpid(c.pid, &status, 0);
    c = {};
  }

  std::string command_;
  std::string frames_dir_;
};

}  // namespace tao
