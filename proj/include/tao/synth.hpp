// Seeded synthetic scenarios: moving objects with GT masks and track ids,
// simulated detector/scorer output, and sporadic false-positive boxes.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "tao/core.hpp"
#include "tao/geometry.hpp"
#include "tao/pipeline.hpp"
#include "tao/random.hpp"

namespace tao {

enum class Shape { rectangle, ellipse };

struct ObjectSpec {
  double x = 0, y = 0;    // top-left at first_frame
  double vx = 0, vy = 0;  // pixels per frame
  double w = 8, h = 8;
  Shape shape = Shape::rectangle;
  bool anomalous = false;
  double score_mean = 0.5;
  double score_sigma = 0.0;
  std::size_t first_frame = 0;
  std::optional<std::size_t> last_frame;  // inclusive; open-ended when empty
  std::string class_label = "person";

  bool operator==(const ObjectSpec&) const = default;
};

/// Short-lived boxes with high anomaly scores and no GT pixels.
struct FalsePositiveSpec {
  double rate = 0.0;     // expected new boxes per frame
  int max_lifetime = 1;  // lifetime drawn uniformly from [1, max_lifetime]
  double score_mean = 2.0;
  double score_sigma = 0.0;
  double min_size = 3.0;
  double max_size = 6.0;
  // No two false positives may overlap within this many frames of each other,
  // so each one stays a transient under the robustness filter.
  int separation = 5;

  bool operator==(const FalsePositiveSpec&) const = default;
};

struct NoiseSpec {
  double jitter_sigma = 0.0;  // per-coordinate box jitter (pixels)
  double miss_prob = 0.0;     // per-frame detector miss probability

  bool operator==(const NoiseSpec&) const = default;
};

struct ScenarioConfig {
  std::size_t frames = 0;
  int width = 64;
  int height = 64;
  std::vector<ObjectSpec> objects;
  FalsePositiveSpec false_positives;
  NoiseSpec noise;
  std::uint64_t seed = 0;
  bool overlap = false;  // allow GT tracks to share pixels

  void validate() const {
    if (width <= 0 || height <= 0) throw ValidationError("scenario: dimensions must be positive");
    for (std::size_t i = 0; i < objects.size(); ++i) {
      const auto& o = objects[i];
      const auto tag = "scenario: object " + std::to_string(i);
      if (!(o.w > 0 && o.h > 0)) throw ValidationError(tag + " has non-positive size");
      if (o.w > width || o.h > height) throw ValidationError(tag + " is larger than the frame");
      if (o.score_sigma < 0) throw ValidationError(tag + " has negative score_sigma");
      if (o.last_frame && *o.last_frame < o.first_frame) {
        throw ValidationError(tag + " ends before it starts");
      }
    }
    for (const auto& a : objects) {
      for (const auto& n : objects) {
        if (a.anomalous && !n.anomalous && !(a.score_mean > n.score_mean)) {
          throw ValidationError("scenario: anomalous score means must exceed normal ones");
        }
      }
    }
    const auto& fp = false_positives;
    if (!(fp.rate >= 0)) throw ValidationError("scenario: false-positive rate must be >= 0");
    if (fp.max_lifetime < 1) throw ValidationError("scenario: false-positive max_lifetime must be >= 1");
    if (!(fp.min_size > 0 && fp.min_size <= fp.max_size)) {
      throw ValidationError("scenario: false-positive sizes must satisfy 0 < min <= max");
    }
    if (fp.max_size > width || fp.max_size > height) {
      throw ValidationError("scenario: false-positive size larger than the frame");
    }
    if (fp.score_sigma < 0 || fp.separation < 0) throw ValidationError("scenario: bad false-positive spec");
    if (!(noise.jitter_sigma >= 0)) throw ValidationError("scenario: jitter_sigma must be >= 0");
    if (!(noise.miss_prob >= 0 && noise.miss_prob <= 1)) {
      throw ValidationError("scenario: miss_prob must be in [0,1]");
    }
  }

  bool operator==(const ScenarioConfig&) const = default;
};

struct Scenario {
  ScenarioConfig config;
  GroundTruth gt;
  std::vector<FrameDetections> detections;  // one entry per frame
};

namespace detail {

inline bool object_alive(const ObjectSpec& o, std::size_t t) {
  return t >= o.first_frame && (!o.last_frame || t <= *o.last_frame);
}

/// Top-left of the object at frame t, clipped to the frame.
inline Point object_position(const ObjectSpec& o, std::size_t t, int width, int height) {
  const double dt = static_cast<double>(t - o.first_frame);
  return {std::clamp(o.x + o.vx * dt, 0.0, width - o.w), std::clamp(o.y + o.vy * dt, 0.0, height - o.h)};
}

inline std::vector<std::uint32_t> rasterize_object(const ObjectSpec& o, Point p, int width, int height) {
  std::vector<std::uint32_t> px;
  const double cx = p.x + o.w / 2, cy = p.y + o.h / 2;
  for (int y = std::max(0, static_cast<int>(p.y) - 1); y < std::min(height, static_cast<int>(p.y + o.h) + 2); ++y) {
    for (int x = std::max(0, static_cast<int>(p.x) - 1); x < std::min(width, static_cast<int>(p.x + o.w) + 2); ++x) {
      const double qx = x + 0.5, qy = y + 0.5;
      bool inside;
      if (o.shape == Shape::rectangle) {
        inside = qx >= p.x && qx < p.x + o.w && qy >= p.y && qy < p.y + o.h;
      } else {
        const double dx = (qx - cx) / (o.w / 2), dy = (qy - cy) / (o.h / 2);
        inside = dx * dx + dy * dy <= 1.0;
      }
      if (inside) px.push_back(static_cast<std::uint32_t>(y * width + x));
    }
  }
  return px;
}

inline double clamp_score(double s) { return std::clamp(s, 0.0, 3.0); }

inline std::uint64_t poisson(Rng& rng, double lambda) {
  if (lambda <= 0) return 0;
  const double limit = std::exp(-lambda);
  std::uint64_t k = 0;
  double p = rng.uniform();
  while (p > limit) {
    ++k;
    p *= rng.uniform();
  }
  return k;
}

inline bool boxes_touch(const BBox& a, const BBox& b) {
  return a.x1() < b.x2() && b.x1() < a.x2() && a.y1() < b.y2() && b.y1() < a.y2();
}

}  // namespace detail

/// Generates ground truth and per-frame detections. Deterministic in
/// config.seed; each object and the false-positive process draw from their
/// own seeded streams.
inline Scenario generate(const ScenarioConfig& config) {
  config.validate();
  const int W = config.width, H = config.height;
  const auto N = config.frames;
  Scenario sc;
  sc.config = config;
  sc.gt.width = W;
  sc.gt.height = H;
  sc.gt.masks.assign(N, MaskPlane(W, H));
  sc.gt.regions.assign(N, {});
  sc.detections.resize(N);
  for (std::size_t t = 0; t < N; ++t) sc.detections[t].frame_idx = t;

  // Object boxes per frame, used to keep false positives off the objects.
  std::vector<std::vector<BBox>> object_boxes(N);

  std::uint32_t next_track = 0;
  for (std::size_t oi = 0; oi < config.objects.size(); ++oi) {
    const auto& o = config.objects[oi];
    Rng rng(hash_key(config.seed, 1, oi));
    const std::uint32_t track_id = o.anomalous ? next_track++ : 0;
    for (std::size_t t = 0; t < N; ++t) {
      if (!detail::object_alive(o, t)) continue;
      const auto pos = detail::object_position(o, t, W, H);
      auto pixels = detail::rasterize_object(o, pos, W, H);
      const auto full_box = pixels_to_bbox(pixels, W);
      if (!full_box) continue;
      object_boxes[t].push_back(*full_box);

      if (o.anomalous) {
        auto& mask = sc.gt.masks[t];
        if (!config.overlap) {
          std::erase_if(pixels, [&](std::uint32_t p) { return mask.test(p); });
        }
        if (!pixels.empty()) {
          for (auto p : pixels) mask.set_index(p);
          sc.gt.regions[t].push_back({track_id, *pixels_to_bbox(pixels, W), pixels});
        }
      }

      // Draw every variate each frame so streams do not depend on outcomes.
      const bool missed = rng.bernoulli(config.noise.miss_prob);
      double c[4] = {full_box->x1(), full_box->y1(), full_box->x2(), full_box->y2()};
      for (auto& v : c) v += rng.normal(0.0, config.noise.jitter_sigma);
      const double score = detail::clamp_score(rng.normal(o.score_mean, o.score_sigma));
      if (missed) continue;
      c[0] = std::clamp(c[0], 0.0, static_cast<double>(W));
      c[2] = std::clamp(c[2], 0.0, static_cast<double>(W));
      c[1] = std::clamp(c[1], 0.0, static_cast<double>(H));
      c[3] = std::clamp(c[3], 0.0, static_cast<double>(H));
      const auto box = BBox::try_make(c[0], c[1], c[2], c[3]).value_or(*full_box);
      sc.detections[t].detections.push_back({t, box, o.class_label, score});
    }
  }

  const auto& fp = config.false_positives;
  if (fp.rate > 0 && N > 0) {
    Rng rng(hash_key(config.seed, 2));
    struct Placed {
      BBox box;
      std::size_t first, last;
    };
    std::vector<Placed> placed;
    const auto sep = static_cast<std::size_t>(fp.separation);
    for (std::size_t t = 0; t < N; ++t) {
      const auto births = detail::poisson(rng, fp.rate);
      for (std::uint64_t b = 0; b < births; ++b) {
        const auto life = static_cast<std::size_t>(rng.integer(1, fp.max_lifetime));
        const auto last = std::min(N - 1, t + life - 1);
        const double score = detail::clamp_score(rng.normal(fp.score_mean, fp.score_sigma));
        for (int attempt = 0; attempt < 20; ++attempt) {
          const double w = rng.uniform(fp.min_size, fp.max_size);
          const double h = rng.uniform(fp.min_size, fp.max_size);
          const double x = std::floor(rng.uniform(0.0, W - w));
          const double y = std::floor(rng.uniform(0.0, H - h));
          const BBox box(x, y, x + std::round(w), y + std::round(h));
          bool clash = false;
          for (auto f = t; f <= last && !clash; ++f) {
            for (const auto& ob : object_boxes[f]) clash = clash || detail::boxes_touch(box, ob);
          }
          for (const auto& p : placed) {
            if (clash) break;
            const bool near_in_time = p.first <= last + sep && t <= p.last + sep;
            clash = near_in_time && detail::boxes_touch(box, p.box);
          }
          if (clash) continue;
          placed.push_back({box, t, last});
          for (auto f = t; f <= last; ++f) {
            sc.detections[f].detections.push_back({f, box, "object", score});
          }
          break;
        }
      }
    }
  }
  return sc;
}

// ---------------------------------------------------------------------------
// Presets

namespace detail {

inline ObjectSpec moving_object(Rng& rng, int width, int height, double w, double h, bool anomalous,
                                double max_speed) {
  ObjectSpec o;
  o.w = w;
  o.h = h;
  o.x = std::floor(rng.uniform(0.0, width - w));
  o.y = std::floor(rng.uniform(0.0, height - h));
  o.vx = rng.uniform(-max_speed, max_speed);
  o.vy = rng.uniform(-max_speed, max_speed);
  o.anomalous = anomalous;
  o.score_mean = anomalous ? 2.2 : 0.6;
  o.score_sigma = anomalous ? 0.25 : 0.3;
  o.class_label = "person";
  return o;
}

}  // namespace detail

/// Two anomalous tracks, five normal objects, 0.5 false positives per frame,
/// 200 frames.
inline ScenarioConfig preset_default(std::uint64_t seed) {
  ScenarioConfig c;
  c.frames = 200;
  c.width = 128;
  c.height = 96;
  c.seed = seed;
  Rng rng(hash_key(seed, 3));
  auto a = detail::moving_object(rng, c.width, c.height, 12, 18, true, 0.15);
  a.x = std::floor(rng.uniform(0, 40));
  auto b = detail::moving_object(rng, c.width, c.height, 14, 14, true, 0.15);
  b.x = std::floor(rng.uniform(70, c.width - 14));
  b.shape = Shape::ellipse;
  c.objects = {a, b};
  for (int i = 0; i < 5; ++i) c.objects.push_back(detail::moving_object(rng, c.width, c.height, 8, 14, false, 0.4));
  c.false_positives = {0.5, 2, 2.1, 0.3, 3.0, 6.0, 5};
  c.noise = {0.5, 0.01};
  return c;
}

/// One true anomalous track plus a stream of short-lived false positives;
/// the standard input for the tracking-degradation experiment.
inline ScenarioConfig preset_fig3(std::uint64_t seed) {
  ScenarioConfig c;
  c.frames = 200;
  c.width = 80;
  c.height = 64;
  c.seed = seed;
  Rng rng(hash_key(seed, 3));
  auto a = detail::moving_object(rng, c.width, c.height, 12, 16, true, 0.12);
  a.x = std::floor(rng.uniform(20, 48));
  a.y = std::floor(rng.uniform(16, 32));
  c.objects = {a};
  for (int i = 0; i < 2; ++i) c.objects.push_back(detail::moving_object(rng, c.width, c.height, 6, 12, false, 0.3));
  c.false_positives = {0.5, 2, 2.1, 0.3, 3.0, 5.0, 5};
  c.noise = {0.5, 0.0};
  return c;
}

/// Two anomalous tracks that cross; GT tracks share pixels where they meet.
inline ScenarioConfig preset_overlap(std::uint64_t seed) {
  ScenarioConfig c;
  c.frames = 120;
  c.width = 96;
  c.height = 64;
  c.seed = seed;
  c.overlap = true;
  ObjectSpec a;
  a.x = 4;
  a.y = 24;
  a.vx = 0.6;
  a.w = 14;
  a.h = 16;
  a.anomalous = true;
  a.score_mean = 2.2;
  a.score_sigma = 0.2;
  ObjectSpec b = a;
  b.x = 78;
  b.y = 26;
  b.vx = -0.6;
  b.shape = Shape::ellipse;
  c.objects = {a, b};
  c.noise = {0.3, 0.0};
  return c;
}

/// Noise-free scenario: two separated anomalous tracks spanning the whole
/// clip, three normal objects, no false positives.
inline ScenarioConfig preset_noiseless(std::uint64_t seed) {
  ScenarioConfig c;
  c.frames = 60;
  c.width = 96;
  c.height = 64;
  c.seed = seed;
  ObjectSpec a;
  a.x = 6;
  a.y = 8;
  a.vx = 0.25;
  a.vy = 0.1;
  a.w = 12;
  a.h = 16;
  a.anomalous = true;
  a.score_mean = 2.2;
  ObjectSpec b = a;
  b.x = 60;
  b.y = 36;
  b.vx = -0.2;
  b.vy = 0.0;
  b.shape = Shape::ellipse;
  c.objects = {a, b};
  for (int i = 0; i < 3; ++i) {
    ObjectSpec n;
    n.x = 40 + 8.0 * i;
    n.y = 4;
    n.vy = 0.3;
    n.w = 5;
    n.h = 10;
    n.score_mean = 0.5;
    c.objects.push_back(n);
  }
  return c;
}

inline ScenarioConfig preset_by_name(const std::string& name, std::uint64_t seed) {
  if (name == "default") return preset_default(seed);
  if (name == "fig3") return preset_fig3(seed);
  if (name == "overlap") return preset_overlap(seed);
  if (name == "noiseless") return preset_noiseless(seed);
  throw ValidationError("unknown preset '" + name + "' (default|fig3|overlap|noiseless)");
}

}  // namespace tao
