// Synthetic post-threshold detection streams: persistent tracks plus sporadic
// false boxes that never reach the confirmation bar.
#pragma once

#include <algorithm>
#include <optional>
#include <vector>

#include "tao/core.hpp"
#include "tao/geometry.hpp"
#include "tao/pipeline.hpp"
#include "tao/random.hpp"

namespace streams {

struct Stream {
  std::vector<tao::FrameDetections> frames;
  // per persistent track: box per frame (nullopt outside its lifetime)
  std::vector<std::vector<std::optional<tao::BBox>>> tracks;
  // per sporadic object: frames where it appears, and its box
  std::vector<std::pair<std::vector<std::size_t>, tao::BBox>> sporadic;
};

/// Tracks live in separate horizontal lanes, last at least 2k frames and move
/// under half a pixel per frame. Each sporadic object appears in at most m-1
/// frames of any k-window and stays clear of tracks and other sporadic boxes
/// nearby in time.
inline Stream make(std::uint64_t seed, const tao::PipelineParams& p, std::size_t n_frames = 100) {
  tao::Rng rng(seed);
  Stream s;
  s.frames.resize(n_frames);
  for (std::size_t f = 0; f < n_frames; ++f) s.frames[f].frame_idx = f;

  const int lanes = static_cast<int>(rng.integer(1, 3));
  const double lane_h = 40.0, width = 200.0;
  for (int t = 0; t < lanes; ++t) {
    const auto min_len = static_cast<std::size_t>(2 * p.k);
    const auto start = static_cast<std::size_t>(rng.integer(0, static_cast<std::int64_t>(n_frames - min_len)));
    const auto end = static_cast<std::size_t>(
        rng.integer(static_cast<std::int64_t>(start + min_len), static_cast<std::int64_t>(n_frames)));
    const double w = rng.uniform(10, 20), h = rng.uniform(10, 20);
    double x = rng.uniform(0, width - w - 60);
    const double y = t * lane_h + rng.uniform(0, lane_h - h - 2) + 1;
    const double vx = rng.uniform(0, 0.5);
    std::vector<std::optional<tao::BBox>> boxes(n_frames);
    for (std::size_t f = start; f < end; ++f) {
      const double jx = rng.uniform(-0.5, 0.5), jy = rng.uniform(-0.5, 0.5);
      const tao::BBox b(std::max(0.0, x + jx), y + jy, x + jx + w, y + jy + h);
      boxes[f] = b;
      s.frames[f].detections.push_back({f, b, "person", rng.uniform(2.0, 3.0)});
      x += vx;
    }
    s.tracks.push_back(std::move(boxes));
  }

  const double area_h = lanes * lane_h;
  const auto near_track = [&](const tao::BBox& b, std::size_t lo, std::size_t hi) {
    for (const auto& tr : s.tracks) {
      for (std::size_t f = lo; f <= hi && f < n_frames; ++f) {
        if (tr[f] && tao::iou(*tr[f], b) > 0.0) return true;
        if (tr[f]) {
          const auto& t = *tr[f];
          if (b.x1() < t.x2() + 2 && t.x1() < b.x2() + 2 && b.y1() < t.y2() + 2 && t.y1() < b.y2() + 2) return true;
        }
      }
    }
    return false;
  };
  const auto near_sporadic = [&](const tao::BBox& b, std::size_t lo, std::size_t hi) {
    for (const auto& [fr, sb] : s.sporadic) {
      const bool in_time = std::any_of(fr.begin(), fr.end(), [&](std::size_t f) { return f + p.k >= lo && f <= hi + p.k; });
      if (in_time && tao::iou(sb, b) > 0.0) return true;
    }
    return false;
  };
  const int n_sporadic = static_cast<int>(rng.integer(5, 30));
  for (int i = 0; i < n_sporadic; ++i) {
    const int appearances = static_cast<int>(rng.integer(1, p.m - 1));
    const auto first = static_cast<std::size_t>(rng.integer(0, static_cast<std::int64_t>(n_frames - 1)));
    std::vector<std::size_t> at{first};
    // optional second appearance inside the same k-window
    if (appearances > 1 && first + 1 < n_frames) at.push_back(first + static_cast<std::size_t>(rng.integer(1, p.k - 1)));
    while (at.back() >= n_frames) at.pop_back();
    for (int attempt = 0; attempt < 50; ++attempt) {
      const double w = rng.uniform(4, 12), h = rng.uniform(4, 12);
      const double x = rng.uniform(0, width - w), y = rng.uniform(0, area_h - h);
      const tao::BBox box(x, y, x + w, y + h);
      const std::size_t lo = at.front() >= static_cast<std::size_t>(p.k) ? at.front() - p.k : 0;
      if (near_track(box, lo, at.back() + p.k) || near_sporadic(box, at.front(), at.back())) continue;
      for (auto f : at) s.frames[f].detections.push_back({f, box, "object", rng.uniform(2.0, 3.0)});
      s.sporadic.emplace_back(at, box);
      break;
    }
  }
  return s;
}

}  // namespace streams
