// Anomalous-box pipeline: score thresholding, the boxes robustness filter
// (inherit / assign / save) and interval prompt aggregation.
#pragma once

#include <algorithm>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "tao/core.hpp"
#include "tao/geometry.hpp"

namespace tao {

struct FrameDetections {
  FrameIndex frame_idx = 0;
  std::vector<Detection> detections;

  bool operator==(const FrameDetections&) const = default;
};

/// Keeps detections with anomaly_score > tau. Frame structure and order are
/// preserved.
inline std::vector<FrameDetections> threshold_filter(std::span<const FrameDetections> frames,
                                                     double tau) {
  if (!std::isfinite(tau)) throw ValidationError("tau must be finite");
  std::vector<FrameDetections> out;
  out.reserve(frames.size());
  for (const auto& f : frames) {
    FrameDetections kept{f.frame_idx, {}};
    for (const auto& d : f.detections) {
      if (d.anomaly_score > tau) kept.detections.push_back(d);
    }
    out.push_back(std::move(kept));
  }
  return out;
}

enum class BoxFate { inherited, assigned, discarded };

inline const char* to_string(BoxFate f) noexcept {
  switch (f) {
    case BoxFate::inherited: return "inherited";
    case BoxFate::assigned: return "assigned";
    case BoxFate::discarded: return "discarded";
  }
  return "?";
}

struct BoxRecord {
  std::size_t box_index = 0;  // position within the frame's detections
  BBox bbox{0, 0, 1, 1};
  BoxFate fate = BoxFate::discarded;
  std::optional<TrackLabel> label;
  int support = 0;  // matching frames that decided the fate
};

struct FrameTrace {
  FrameIndex frame_idx = 0;
  std::vector<BoxRecord> boxes;
  std::vector<TrackedBox> saved;

  std::size_t count(BoxFate f) const {
    return static_cast<std::size_t>(
        std::count_if(boxes.begin(), boxes.end(), [f](const BoxRecord& r) { return r.fate == f; }));
  }
};

struct FilterTrace {
  std::vector<FrameTrace> frames;
};

struct FilterResult {
  std::vector<TrackedBox> tracked;  // sorted by (frame, label)
  FilterTrace trace;
};

namespace detail {

inline void check_contiguous(std::span<const FrameDetections> frames) {
  for (std::size_t i = 0; i < frames.size(); ++i) {
    if (frames[i].frame_idx != frames[0].frame_idx + i) {
      throw ValidationError("non-contiguous frame index " + std::to_string(frames[i].frame_idx) +
                            " at position " + std::to_string(i));
    }
    for (const auto& d : frames[i].detections) {
      if (d.frame_idx != frames[i].frame_idx) {
        throw ValidationError("detection frame " + std::to_string(d.frame_idx) +
                              " filed under frame " + std::to_string(frames[i].frame_idx));
      }
    }
  }
}

struct LabeledBox {
  BBox bbox;
  TrackLabel label;
};

inline bool by_frame_label(const TrackedBox& a, const TrackedBox& b) {
  return std::tie(a.frame_idx, a.track_label) < std::tie(b.frame_idx, b.track_label);
}

}  // namespace detail

/// Boxes robustness filter over a thresholded, contiguous clip.
///
/// Step 1 (inherit): a box inherits label L when, over the k previous frames,
/// at least m frames hold a box of L with IoU > h. Window slots that precede
/// L's creation frame (including slots before the clip start) cannot be
/// observed; they count as support, but at least one real match is always
/// required. Among qualifying labels the one with most real supporting frames
/// wins, ties to the smaller label. A label is held by at most one box per
/// frame; a box that loses its label falls through to step 2.
///
/// Step 2 (assign): a box that inherits nothing gets a fresh label when at
/// least m of the next k frames contain a thresholded box with IoU > h. The
/// new tuple is saved at its creation frame.
///
/// Step 3 (save): on frames with frame_idx mod l == 0 every labelled box of
/// the frame is saved.
///
/// Labels come from a per-clip counter starting at 0.
inline FilterResult robustness_filter(std::span<const FrameDetections> frames,
                                      const PipelineParams& params) {
  params.validate();
  detail::check_contiguous(frames);

  const auto n = frames.size();
  const auto k = static_cast<std::ptrdiff_t>(params.k);
  std::vector<std::vector<detail::LabeledBox>> labeled(n);
  std::map<TrackLabel, std::ptrdiff_t> birth;  // label -> creation position
  TrackLabel next_label = 0;

  FilterResult result;
  result.trace.frames.reserve(n);

  for (std::size_t pos = 0; pos < n; ++pos) {
    const auto i = static_cast<std::ptrdiff_t>(pos);
    const auto& dets = frames[pos].detections;
    FrameTrace ft;
    ft.frame_idx = frames[pos].frame_idx;
    ft.boxes.resize(dets.size());

    // Step 1: candidate labels per box.
    struct Candidate {
      TrackLabel label;
      int support;
      double best_iou;
    };
    std::vector<std::vector<Candidate>> candidates(dets.size());
    for (std::size_t j = 0; j < dets.size(); ++j) {
      std::map<TrackLabel, std::pair<int, double>> support;  // frames, best iou
      for (auto w = std::max<std::ptrdiff_t>(0, i - k); w < i; ++w) {
        std::map<TrackLabel, double> hit;
        for (const auto& lb : labeled[static_cast<std::size_t>(w)]) {
          const double v = iou(dets[j].bbox, lb.bbox);
          if (v > params.h) hit[lb.label] = std::max(hit[lb.label], v);
        }
        for (auto [label, v] : hit) {
          auto& s = support[label];
          s.first += 1;
          s.second = std::max(s.second, v);
        }
      }
      for (auto [label, s] : support) {
        const auto unobserved = std::clamp<std::ptrdiff_t>(birth.at(label) - (i - k), 0, k);
        if (s.first >= 1 && s.first + unobserved >= params.m) {
          candidates[j].push_back({label, s.first, s.second});
        }
      }
      std::sort(candidates[j].begin(), candidates[j].end(),
                [](const Candidate& a, const Candidate& b) {
                  if (a.support != b.support) return a.support > b.support;
                  return a.label < b.label;
                });
    }

    // Resolve label conflicts: strongest claims first.
    std::vector<std::size_t> order(dets.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      const bool ea = candidates[a].empty(), eb = candidates[b].empty();
      if (ea != eb) return !ea;
      if (ea) return false;
      const auto& ca = candidates[a].front();
      const auto& cb = candidates[b].front();
      if (ca.support != cb.support) return ca.support > cb.support;
      return ca.best_iou > cb.best_iou;
    });
    std::vector<TrackLabel> taken;
    std::vector<std::optional<TrackLabel>> inherited(dets.size());
    std::vector<int> inherited_support(dets.size(), 0);
    for (auto j : order) {
      for (const auto& c : candidates[j]) {
        if (std::find(taken.begin(), taken.end(), c.label) != taken.end()) continue;
        taken.push_back(c.label);
        inherited[j] = c.label;
        inherited_support[j] = c.support;
        break;
      }
    }

    std::vector<TrackedBox> frame_labeled;
    for (std::size_t j = 0; j < dets.size(); ++j) {
      auto& rec = ft.boxes[j];
      rec.box_index = j;
      rec.bbox = dets[j].bbox;
      if (inherited[j]) {
        rec.fate = BoxFate::inherited;
        rec.label = inherited[j];
        rec.support = inherited_support[j];
        frame_labeled.push_back({ft.frame_idx, dets[j].bbox, *inherited[j], dets[j].anomaly_score});
        continue;
      }
      // Step 2: forward confirmation against raw thresholded boxes.
      int forward = 0;
      for (auto w = i + 1; w <= std::min<std::ptrdiff_t>(i + k, static_cast<std::ptrdiff_t>(n) - 1);
           ++w) {
        const auto& future = frames[static_cast<std::size_t>(w)].detections;
        if (std::any_of(future.begin(), future.end(), [&](const Detection& d) {
              return iou(dets[j].bbox, d.bbox) > params.h;
            })) {
          ++forward;
        }
      }
      rec.support = forward;
      if (forward >= params.m) {
        const TrackLabel label = next_label++;
        birth[label] = i;
        rec.fate = BoxFate::assigned;
        rec.label = label;
        TrackedBox t{ft.frame_idx, dets[j].bbox, label, dets[j].anomaly_score};
        frame_labeled.push_back(t);
        ft.saved.push_back(t);
      } else {
        rec.fate = BoxFate::discarded;
      }
    }

    // Step 3: periodic save of all labelled boxes of this frame.
    if (ft.frame_idx % static_cast<FrameIndex>(params.l) == 0) {
      for (const auto& t : frame_labeled) {
        const bool already = std::any_of(ft.saved.begin(), ft.saved.end(), [&](const TrackedBox& s) {
          return s.track_label == t.track_label && s.bbox == t.bbox;
        });
        if (!already) ft.saved.push_back(t);
      }
    }
    std::sort(ft.saved.begin(), ft.saved.end(), detail::by_frame_label);

    for (const auto& t : frame_labeled) labeled[pos].push_back({t.bbox, t.track_label});
    result.tracked.insert(result.tracked.end(), ft.saved.begin(), ft.saved.end());
    result.trace.frames.push_back(std::move(ft));
  }
  return result;
}

/// Interval prompting without the robustness filter: on frames with
/// frame_idx mod l == 0, every thresholded box becomes a tuple. Boxes are
/// linked to the most recent box of an existing label by greedy IoU > h,
/// otherwise they open a new label.
inline std::vector<TrackedBox> interval_boxes_unfiltered(std::span<const FrameDetections> frames,
                                                         const PipelineParams& params) {
  params.validate();
  detail::check_contiguous(frames);
  std::vector<TrackedBox> out;
  std::vector<detail::LabeledBox> last;  // most recent box per label, index == label
  for (const auto& f : frames) {
    if (f.frame_idx % static_cast<FrameIndex>(params.l) != 0) continue;
    struct Pair {
      double v;
      std::size_t det;
      TrackLabel label;
    };
    std::vector<Pair> pairs;
    for (std::size_t j = 0; j < f.detections.size(); ++j) {
      for (const auto& lb : last) {
        const double v = iou(f.detections[j].bbox, lb.bbox);
        if (v > params.h) pairs.push_back({v, j, lb.label});
      }
    }
    std::sort(pairs.begin(), pairs.end(), [](const Pair& a, const Pair& b) {
      return std::tie(b.v, a.det, a.label) < std::tie(a.v, b.det, b.label);
    });
    std::vector<std::optional<TrackLabel>> assigned(f.detections.size());
    std::vector<bool> label_used(last.size(), false);
    for (const auto& p : pairs) {
      if (assigned[p.det] || label_used[p.label]) continue;
      assigned[p.det] = p.label;
      label_used[p.label] = true;
    }
    for (std::size_t j = 0; j < f.detections.size(); ++j) {
      const auto& d = f.detections[j];
      TrackLabel label;
      if (assigned[j]) {
        label = *assigned[j];
        last[label].bbox = d.bbox;
      } else {
        label = static_cast<TrackLabel>(last.size());
        last.push_back({d.bbox, label});
      }
      out.push_back({f.frame_idx, d.bbox, label, d.anomaly_score});
    }
  }
  std::stable_sort(out.begin(), out.end(), detail::by_frame_label);
  return out;
}

/// One prompt per tracked box on frames with frame_idx mod l == 0, plus each
/// label's first tuple (its assignment frame). Ordered by (frame, label).
inline std::vector<Prompt> aggregate_prompts(std::span<const TrackedBox> tracked, int l) {
  if (l < 1) throw ValidationError("l must be >= 1");
  std::map<TrackLabel, FrameIndex> first;
  for (const auto& t : tracked) {
    auto [it, inserted] = first.emplace(t.track_label, t.frame_idx);
    if (!inserted) it->second = std::min(it->second, t.frame_idx);
  }
  std::vector<Prompt> out;
  for (const auto& t : tracked) {
    if (t.frame_idx % static_cast<FrameIndex>(l) == 0 || first.at(t.track_label) == t.frame_idx) {
      out.push_back(make_prompt(t));
    }
  }
  std::stable_sort(out.begin(), out.end(), [](const Prompt& a, const Prompt& b) {
    return std::tie(a.frame_idx, a.track_label) < std::tie(b.frame_idx, b.track_label);
  });
  return out;
}

/// Highest originating detection score per label.
inline std::map<TrackLabel, double> label_scores(std::span<const TrackedBox> tracked) {
  std::map<TrackLabel, double> out;
  for (const auto& t : tracked) {
    auto [it, inserted] = out.emplace(t.track_label, t.score);
    if (!inserted) it->second = std::max(it->second, t.score);
  }
  return out;
}

}  // namespace tao
