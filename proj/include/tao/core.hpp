// Domain types shared across the tao engine: boxes, detections, tracked
// boxes, prompts, masks, score maps, ground truth and pipeline parameters.
#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace tao {

using FrameIndex = std::size_t;
using TrackLabel = std::uint32_t;

/// Process exit codes shared by the CLI and the error hierarchy.
enum class ExitCode : int {
  ok = 0,
  validation = 2,
  io = 3,
  backend = 4,
  undefined_metric = 5,
};

class Error : public std::runtime_error {
 public:
  Error(ExitCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
  ExitCode code() const noexcept { return code_; }

 private:
  ExitCode code_;
};

class ValidationError : public Error {
 public:
  explicit ValidationError(const std::string& what) : Error(ExitCode::validation, what) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error(ExitCode::io, what) {}
};

class BackendError : public Error {
 public:
  explicit BackendError(const std::string& what) : Error(ExitCode::backend, what) {}
};

class ProtocolError : public BackendError {
 public:
  explicit ProtocolError(const std::string& what) : BackendError("protocol error: " + what) {}
};

class UndefinedMetricError : public Error {
 public:
  explicit UndefinedMetricError(const std::string& what)
      : Error(ExitCode::undefined_metric, what) {}
};

struct Point {
  double x = 0.0;
  double y = 0.0;
  bool operator==(const Point&) const = default;
};

/// Axis-aligned box in continuous frame coordinates (origin top-left).
/// Construction rejects degenerate, negative or non-finite boxes.
class BBox {
 public:
  BBox(double x1, double y1, double x2, double y2) : x1_(x1), y1_(y1), x2_(x2), y2_(y2) {
    if (!valid(x1, y1, x2, y2)) {
      throw ValidationError("invalid box [" + std::to_string(x1) + "," + std::to_string(y1) +
                            "," + std::to_string(x2) + "," + std::to_string(y2) + "]");
    }
  }

  static bool valid(double x1, double y1, double x2, double y2) noexcept {
    return std::isfinite(x1) && std::isfinite(y1) && std::isfinite(x2) && std::isfinite(y2) &&
           x1 >= 0.0 && y1 >= 0.0 && x1 < x2 && y1 < y2;
  }

  static std::optional<BBox> try_make(double x1, double y1, double x2, double y2) noexcept {
    if (!valid(x1, y1, x2, y2)) return std::nullopt;
    return BBox(x1, y1, x2, y2, Unchecked{});
  }

  double x1() const noexcept { return x1_; }
  double y1() const noexcept { return y1_; }
  double x2() const noexcept { return x2_; }
  double y2() const noexcept { return y2_; }
  double width() const noexcept { return x2_ - x1_; }
  double height() const noexcept { return y2_ - y1_; }
  double area() const noexcept { return width() * height(); }

  bool operator==(const BBox&) const = default;

 private:
  struct Unchecked {};
  BBox(double x1, double y1, double x2, double y2, Unchecked) noexcept
      : x1_(x1), y1_(y1), x2_(x2), y2_(y2) {}

  double x1_, y1_, x2_, y2_;
};

/// A scored, class-labelled detector output on one frame.
struct Detection {
  FrameIndex frame_idx = 0;
  BBox bbox{0, 0, 1, 1};
  std::string class_label;
  double anomaly_score = 0.0;

  bool operator==(const Detection&) const = default;
};

/// One saved tuple of the robustness filter. `score` is the anomaly score of
/// the detection the box came from; it feeds region scores during evaluation.
struct TrackedBox {
  FrameIndex frame_idx = 0;
  BBox bbox{0, 0, 1, 1};
  TrackLabel track_label = 0;
  double score = 0.0;

  bool operator==(const TrackedBox&) const = default;
};

struct Prompt {
  FrameIndex frame_idx = 0;
  BBox bbox{0, 0, 1, 1};
  Point center;
  TrackLabel track_label = 0;
  double score = 0.0;

  bool operator==(const Prompt&) const = default;
};

inline Point box_center(const BBox& b) noexcept {
  return {(b.x1() + b.x2()) / 2.0, (b.y1() + b.y2()) / 2.0};
}

inline Prompt make_prompt(const TrackedBox& t) {
  return Prompt{t.frame_idx, t.bbox, box_center(t.bbox), t.track_label, t.score};
}

/// Binary per-pixel plane, row-major, one byte per pixel (0 or 1).
class MaskPlane {
 public:
  MaskPlane() = default;
  MaskPlane(int width, int height) : width_(width), height_(height) {
    if (width < 0 || height < 0) throw ValidationError("negative mask dimensions");
    bits_.assign(static_cast<std::size_t>(width) * static_cast<std::size_t>(height), 0);
  }
  MaskPlane(int width, int height, std::vector<std::uint8_t> bits)
      : width_(width), height_(height), bits_(std::move(bits)) {
    if (width < 0 || height < 0) throw ValidationError("negative mask dimensions");
    if (bits_.size() != static_cast<std::size_t>(width) * static_cast<std::size_t>(height)) {
      throw ValidationError("mask bit count does not match width*height");
    }
    for (auto& b : bits_) b = b ? 1 : 0;
  }

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  std::size_t size() const noexcept { return bits_.size(); }

  bool at(int x, int y) const { return bits_[index(x, y)] != 0; }
  void set(int x, int y, bool v = true) { bits_[index(x, y)] = v ? 1 : 0; }
  bool test(std::size_t i) const { return bits_[i] != 0; }
  void set_index(std::size_t i, bool v = true) { bits_[i] = v ? 1 : 0; }

  const std::vector<std::uint8_t>& bits() const noexcept { return bits_; }

  std::size_t count() const noexcept {
    std::size_t n = 0;
    for (auto b : bits_) n += b;
    return n;
  }
  bool none() const noexcept { return count() == 0; }

  bool same_shape(const MaskPlane& o) const noexcept {
    return width_ == o.width_ && height_ == o.height_;
  }

  MaskPlane& operator|=(const MaskPlane& o) {
    if (!same_shape(o)) throw ValidationError("mask dimension mismatch in union");
    for (std::size_t i = 0; i < bits_.size(); ++i) bits_[i] |= o.bits_[i];
    return *this;
  }

  bool operator==(const MaskPlane&) const = default;

 private:
  std::size_t index(int x, int y) const {
    return static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) +
           static_cast<std::size_t>(x);
  }

  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint8_t> bits_;
};

/// Real-valued per-pixel anomaly scores, row-major.
class ScoreMap {
 public:
  ScoreMap() = default;
  ScoreMap(int width, int height, std::vector<double> values)
      : width_(width), height_(height), values_(std::move(values)) {
    if (width < 0 || height < 0) throw ValidationError("negative score map dimensions");
    if (values_.size() != static_cast<std::size_t>(width) * static_cast<std::size_t>(height)) {
      throw ValidationError("score map value count does not match width*height");
    }
    for (double v : values_) {
      if (!std::isfinite(v)) throw ValidationError("non-finite score in score map");
    }
  }

  static ScoreMap from_mask(const MaskPlane& m) {
    std::vector<double> v(m.size());
    for (std::size_t i = 0; i < m.size(); ++i) v[i] = m.test(i) ? 1.0 : 0.0;
    return ScoreMap(m.width(), m.height(), std::move(v));
  }

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  std::size_t size() const noexcept { return values_.size(); }
  double operator[](std::size_t i) const { return values_[i]; }
  const std::vector<double>& values() const noexcept { return values_; }

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<double> values_;
};

/// A ground-truth anomalous region on one frame. Pixels are linear row-major
/// indices, sorted ascending.
struct GtRegion {
  std::uint32_t gt_track_id = 0;
  BBox bbox{0, 0, 1, 1};
  std::vector<std::uint32_t> pixels;

  std::size_t area() const noexcept { return pixels.size(); }
  bool operator==(const GtRegion&) const = default;
};

struct GroundTruth {
  int width = 0;
  int height = 0;
  std::vector<MaskPlane> masks;               // one per frame
  std::vector<std::vector<GtRegion>> regions;  // one list per frame

  std::size_t frame_count() const noexcept { return masks.size(); }

  /// Mask of a single GT track on one frame (empty if absent).
  MaskPlane track_mask(FrameIndex f, std::uint32_t id) const {
    MaskPlane m(width, height);
    for (const auto& r : regions.at(f)) {
      if (r.gt_track_id != id) continue;
      for (auto p : r.pixels) m.set_index(p);
    }
    return m;
  }

  /// Checks the structural invariants; throws ValidationError on violation.
  void validate() const {
    if (masks.size() != regions.size()) throw ValidationError("GT masks/regions frame count differ");
    for (std::size_t f = 0; f < masks.size(); ++f) {
      if (masks[f].width() != width || masks[f].height() != height) {
        throw ValidationError("GT mask dimension drift at frame " + std::to_string(f));
      }
      std::vector<std::uint32_t> ids;
      for (const auto& r : regions[f]) {
        for (auto p : r.pixels) {
          if (p >= masks[f].size() || !masks[f].test(p)) {
            throw ValidationError("GT region pixel outside frame mask at frame " +
                                  std::to_string(f));
          }
        }
        for (auto id : ids) {
          if (id == r.gt_track_id) {
            throw ValidationError("duplicate gt_track_id " + std::to_string(id) + " at frame " +
                                  std::to_string(f));
          }
        }
        ids.push_back(r.gt_track_id);
      }
    }
  }
};

/// Hyper-parameters of threshold filtering and the robustness filter.
struct PipelineParams {
  double tau = 1.5;  // anomaly threshold, strict s > tau
  int k = 5;         // tracking window (frames)
  int m = 3;         // frame match threshold
  double h = 0.2;    // IoU overlap threshold, strict IoU > h
  int l = 5;         // save interval (frames)

  void validate() const {
    if (!std::isfinite(tau)) throw ValidationError("tau must be finite");
    if (k < 1) throw ValidationError("k must be >= 1");
    if (m < 1 || m > k) throw ValidationError("m must satisfy 1 <= m <= k");
    if (!(h > 0.0 && h < 1.0)) throw ValidationError("h must satisfy 0 < h < 1");
    if (l < 1) throw ValidationError("l must be >= 1");
  }

  static PipelineParams ped2() { return {1.5, 5, 3, 0.2, 5}; }
  static PipelineParams shtech() { return {1.6, 5, 3, 0.2, 15}; }

  bool operator==(const PipelineParams&) const = default;
};

}  // namespace tao
