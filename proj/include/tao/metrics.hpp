// Dual-level anomaly benchmark: pixel metrics (AUROC, AP, AUPRO, F1) and
// object metrics (region- and track-based detection criteria).
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "tao/core.hpp"
#include "tao/geometry.hpp"
#include "tao/segmenter.hpp"

namespace tao {

struct PixelEvalInput {
  std::vector<ScoreMap> scores;
  std::vector<MaskPlane> gt;

  static PixelEvalInput from_masks(std::span<const MaskPlane> pred, std::span<const MaskPlane> gt) {
    PixelEvalInput in;
    for (const auto& m : pred) in.scores.push_back(ScoreMap::from_mask(m));
    in.gt.assign(gt.begin(), gt.end());
    return in;
  }

  void validate() const {
    if (scores.size() != gt.size()) throw ValidationError("score and GT frame counts differ");
    for (std::size_t f = 0; f < gt.size(); ++f) {
      if (scores[f].width() != gt[f].width() || scores[f].height() != gt[f].height()) {
        throw ValidationError("score/GT dimension mismatch at frame " + std::to_string(f));
      }
    }
  }
};

struct CurvePoint {
  double threshold = 0.0;
  double x = 0.0;
  double y = 0.0;
};

namespace detail {

struct ScoredPixel {
  double score;
  bool positive;
};

inline std::vector<ScoredPixel> pooled_pixels(const PixelEvalInput& in) {
  in.validate();
  std::vector<ScoredPixel> px;
  for (std::size_t f = 0; f < in.gt.size(); ++f) {
    for (std::size_t i = 0; i < in.gt[f].size(); ++i) {
      px.push_back({in.scores[f][i], in.gt[f].test(i)});
    }
  }
  std::sort(px.begin(), px.end(),
            [](const ScoredPixel& a, const ScoredPixel& b) { return a.score > b.score; });
  return px;
}

/// Area under a curve with non-decreasing x over [0, limit], normalised by
/// limit. Consecutive points are joined by trapezoids; a segment crossing the
/// limit, or the gap after the last point, contributes at its left y value
/// (operating points beyond the last reachable one are not interpolated).
inline double normalized_area(const std::vector<CurvePoint>& pts, double limit) {
  double area = 0.0;
  for (std::size_t i = 1; i < pts.size(); ++i) {
    const auto& a = pts[i - 1];
    const auto& b = pts[i];
    if (a.x >= limit) return area / limit;
    if (b.x <= limit) {
      area += (b.x - a.x) * (a.y + b.y) / 2.0;
    } else {
      area += (limit - a.x) * a.y;
      return area / limit;
    }
  }
  if (!pts.empty() && pts.back().x < limit) area += (limit - pts.back().x) * pts.back().y;
  return area / limit;
}

}  // namespace detail

/// Rank (Mann-Whitney) AUROC over all pixels pooled; ties count 1/2.
inline double pixel_auroc(const PixelEvalInput& in) {
  const auto px = detail::pooled_pixels(in);
  std::uint64_t pos = 0, neg = 0;
  for (const auto& p : px) (p.positive ? pos : neg) += 1;
  if (pos == 0 || neg == 0) throw UndefinedMetricError("pixel_auroc: GT is single-class");
  // twice the U statistic, exact in integers
  std::uint64_t twice_u = 0;
  std::uint64_t neg_below = neg;
  for (std::size_t i = 0; i < px.size();) {
    std::size_t j = i;
    std::uint64_t gp = 0, gn = 0;
    while (j < px.size() && px[j].score == px[i].score) {
      (px[j].positive ? gp : gn) += 1;
      ++j;
    }
    neg_below -= gn;
    twice_u += 2 * gp * neg_below + gp * gn;
    i = j;
  }
  return static_cast<double>(twice_u) / (2.0 * static_cast<double>(pos) * static_cast<double>(neg));
}

/// Average precision: sum over distinct thresholds of recall increment times
/// precision.
inline double pixel_ap(const PixelEvalInput& in) {
  const auto px = detail::pooled_pixels(in);
  std::uint64_t pos = 0;
  for (const auto& p : px) pos += p.positive;
  if (pos == 0) throw UndefinedMetricError("pixel_ap: GT has no anomalous pixels");
  double ap = 0.0, prev_recall = 0.0;
  std::uint64_t tp = 0, fp = 0;
  for (std::size_t i = 0; i < px.size();) {
    std::size_t j = i;
    while (j < px.size() && px[j].score == px[i].score) {
      (px[j].positive ? tp : fp) += 1;
      ++j;
    }
    const double recall = static_cast<double>(tp) / static_cast<double>(pos);
    const double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
    ap += (recall - prev_recall) * precision;
    prev_recall = recall;
    i = j;
  }
  return ap;
}

struct AuproResult {
  double value = 0.0;
  std::vector<CurvePoint> curve;  // x = pixel FPR, y = mean per-region overlap
};

/// Per-region overlap vs. FPR, integrated over [0, fpr_limit] and normalised.
/// GT regions are the 8-connected components of each frame's GT mask.
inline AuproResult pixel_aupro_curve(const PixelEvalInput& in, double fpr_limit = 0.3) {
  in.validate();
  if (!(fpr_limit > 0.0 && fpr_limit <= 1.0)) throw ValidationError("fpr_limit must be in (0,1]");
  struct Px {
    double score;
    std::int64_t region;  // -1 for normal pixels
  };
  std::vector<Px> px;
  std::vector<double> inv_size;
  std::vector<std::size_t> missing;  // undetected pixels left per region
  for (std::size_t f = 0; f < in.gt.size(); ++f) {
    std::vector<std::int64_t> region_of(in.gt[f].size(), -1);
    for (const auto& r : connected_components(in.gt[f])) {
      for (auto p : r.pixels) region_of[p] = static_cast<std::int64_t>(inv_size.size());
      inv_size.push_back(1.0 / static_cast<double>(r.area()));
      missing.push_back(r.area());
    }
    for (std::size_t i = 0; i < region_of.size(); ++i) px.push_back({in.scores[f][i], region_of[i]});
  }
  const auto regions = inv_size.size();
  if (regions == 0) throw UndefinedMetricError("pixel_aupro: GT has no anomalous regions");
  std::uint64_t neg = 0;
  for (const auto& p : px) neg += p.region < 0;
  if (neg == 0) throw UndefinedMetricError("pixel_aupro: GT has no normal pixels");

  std::sort(px.begin(), px.end(), [](const Px& a, const Px& b) { return a.score > b.score; });
  AuproResult out;
  out.curve.push_back({INFINITY, 0.0, 0.0});
  std::uint64_t fp = 0;
  double overlap_sum = 0.0;
  std::size_t complete = 0;
  for (std::size_t i = 0; i < px.size();) {
    std::size_t j = i;
    while (j < px.size() && px[j].score == px[i].score) {
      if (px[j].region < 0) {
        ++fp;
      } else {
        const auto r = static_cast<std::size_t>(px[j].region);
        overlap_sum += inv_size[r];
        complete += --missing[r] == 0;
      }
      ++j;
    }
    // summed reciprocals drift below 1; full coverage is exactly 1
    const double pro = complete == regions ? 1.0 : overlap_sum / static_cast<double>(regions);
    out.curve.push_back({px[i].score, static_cast<double>(fp) / static_cast<double>(neg), pro});
    i = j;
  }
  out.value = detail::normalized_area(out.curve, fpr_limit);
  return out;
}

inline double pixel_aupro(const PixelEvalInput& in, double fpr_limit = 0.3) {
  return pixel_aupro_curve(in, fpr_limit).value;
}

struct PixelCounts {
  std::uint64_t tp = 0, fp = 0, fn = 0, tn = 0;
};

inline PixelCounts pixel_counts(std::span<const MaskPlane> pred, std::span<const MaskPlane> gt) {
  if (pred.size() != gt.size()) throw ValidationError("prediction and GT frame counts differ");
  PixelCounts c;
  for (std::size_t f = 0; f < gt.size(); ++f) {
    if (!pred[f].same_shape(gt[f])) {
      throw ValidationError("prediction/GT dimension mismatch at frame " + std::to_string(f));
    }
    const auto& p = pred[f].bits();
    const auto& g = gt[f].bits();
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (p[i] && g[i]) ++c.tp;
      else if (p[i]) ++c.fp;
      else if (g[i]) ++c.fn;
      else ++c.tn;
    }
  }
  return c;
}

/// F1 = 2TP / (2TP + FP + FN) pooled over frames.
inline double pixel_f1(std::span<const MaskPlane> pred, std::span<const MaskPlane> gt) {
  const auto c = pixel_counts(pred, gt);
  const auto denom = 2 * c.tp + c.fp + c.fn;
  if (denom == 0) throw UndefinedMetricError("pixel_f1: prediction and GT are both empty");
  return static_cast<double>(2 * c.tp) / static_cast<double>(denom);
}

inline MaskPlane binarize(const ScoreMap& s, double threshold = 0.5) {
  MaskPlane m(s.width(), s.height());
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] > threshold) m.set_index(i);
  }
  return m;
}

// ---------------------------------------------------------------------------
// Object level

struct DetRegion {
  BBox bbox{0, 0, 1, 1};
  double score = 1.0;
};

struct ObjectEvalInput {
  std::vector<std::vector<DetRegion>> detected;  // per frame
  std::vector<std::vector<GtRegion>> gt;         // per frame
  double alpha = 0.1;

  void validate() const {
    if (!(alpha > 0.0 && alpha < 1.0)) throw ValidationError("alpha must satisfy 0 < alpha < 1");
    if (detected.size() != gt.size()) throw ValidationError("detected and GT frame counts differ");
  }
};

enum class EvalMode { curve, point };

inline const char* to_string(EvalMode m) noexcept { return m == EvalMode::curve ? "curve" : "point"; }

struct ObjectScore {
  double value = 0.0;
  double fp_per_frame = 0.0;        // at the loosest operating point
  std::vector<CurvePoint> curve;    // x = FP regions per frame, y = detected fraction
};

namespace detail {

struct Matching {
  std::vector<std::vector<bool>> gt_hit;  // per frame, per GT region
  std::uint64_t false_positives = 0;
};

/// Greedy one-to-one matching per frame over regions with score >= threshold:
/// pairs with IoU >= alpha by IoU descending, then GT id, then region index.
inline Matching match_regions(const ObjectEvalInput& in, double threshold) {
  Matching out;
  out.gt_hit.resize(in.gt.size());
  for (std::size_t f = 0; f < in.gt.size(); ++f) {
    const auto& gts = in.gt[f];
    const auto& dets = in.detected[f];
    out.gt_hit[f].assign(gts.size(), false);
    struct Pair {
      double v;
      std::uint32_t gt_id;
      std::size_t g, d;
    };
    std::vector<Pair> pairs;
    std::size_t active = 0;
    for (std::size_t d = 0; d < dets.size(); ++d) {
      if (dets[d].score < threshold) continue;
      ++active;
      for (std::size_t g = 0; g < gts.size(); ++g) {
        const double v = iou(dets[d].bbox, gts[g].bbox);
        if (v >= in.alpha) pairs.push_back({v, gts[g].gt_track_id, g, d});
      }
    }
    std::sort(pairs.begin(), pairs.end(), [](const Pair& a, const Pair& b) {
      if (a.v != b.v) return a.v > b.v;
      return std::tie(a.gt_id, a.g, a.d) < std::tie(b.gt_id, b.g, b.d);
    });
    std::vector<bool> det_used(dets.size(), false);
    std::size_t matched = 0;
    for (const auto& p : pairs) {
      if (out.gt_hit[f][p.g] || det_used[p.d]) continue;
      out.gt_hit[f][p.g] = true;
      det_used[p.d] = true;
      ++matched;
    }
    out.false_positives += active - matched;
  }
  return out;
}

template <class Fraction>
ObjectScore object_score(const ObjectEvalInput& in, EvalMode mode, Fraction fraction) {
  const double frames = std::max<double>(1.0, static_cast<double>(in.gt.size()));
  std::vector<double> thresholds;
  for (const auto& f : in.detected) {
    for (const auto& d : f) thresholds.push_back(d.score);
  }
  std::sort(thresholds.begin(), thresholds.end(), std::greater<>());
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());

  ObjectScore out;
  if (thresholds.empty()) {
    out.value = 0.0;
    out.curve.push_back({INFINITY, 0.0, 0.0});
    return out;
  }
  if (mode == EvalMode::point) {
    const auto m = match_regions(in, -INFINITY);
    out.value = fraction(m);
    out.fp_per_frame = static_cast<double>(m.false_positives) / frames;
    out.curve.push_back({thresholds.back(), out.fp_per_frame, out.value});
    return out;
  }
  out.curve.push_back({INFINITY, 0.0, 0.0});
  for (double t : thresholds) {
    const auto m = match_regions(in, t);
    out.curve.push_back({t, static_cast<double>(m.false_positives) / frames, fraction(m)});
  }
  out.fp_per_frame = out.curve.back().x;
  out.value = normalized_area(out.curve, 1.0);
  return out;
}

}  // namespace detail

/// Region-based detection criterion. A GT region is detected when a detected
/// region matches it with IoU >= alpha. Point mode reports the detected
/// fraction at the single operating point; curve mode sweeps region scores
/// and integrates detected fraction over 0..1 false-positive regions/frame.
inline ObjectScore rbdc_eval(const ObjectEvalInput& in, EvalMode mode) {
  in.validate();
  std::size_t total = 0;
  for (const auto& f : in.gt) total += f.size();
  if (total == 0) throw UndefinedMetricError("rbdc: no GT regions");
  return detail::object_score(in, mode, [&](const detail::Matching& m) {
    std::size_t hit = 0;
    for (const auto& f : m.gt_hit) hit += static_cast<std::size_t>(std::count(f.begin(), f.end(), true));
    return static_cast<double>(hit) / static_cast<double>(total);
  });
}

inline double rbdc(const ObjectEvalInput& in, EvalMode mode) { return rbdc_eval(in, mode).value; }

/// Track-based detection criterion. A GT track is detected when at least
/// `coverage` of its regions are detected under the region rule.
inline ObjectScore tbdc_eval(const ObjectEvalInput& in, double coverage, EvalMode mode) {
  in.validate();
  if (!(coverage > 0.0 && coverage <= 1.0)) throw ValidationError("coverage must be in (0,1]");
  std::map<std::uint32_t, std::size_t> track_regions;
  for (const auto& f : in.gt) {
    for (const auto& r : f) ++track_regions[r.gt_track_id];
  }
  if (track_regions.empty()) throw UndefinedMetricError("tbdc: no GT tracks");
  return detail::object_score(in, mode, [&](const detail::Matching& m) {
    std::map<std::uint32_t, std::size_t> hits;
    for (std::size_t f = 0; f < in.gt.size(); ++f) {
      for (std::size_t g = 0; g < in.gt[f].size(); ++g) {
        if (m.gt_hit[f][g]) ++hits[in.gt[f][g].gt_track_id];
      }
    }
    std::size_t detected = 0;
    for (auto [id, n] : track_regions) {
      if (static_cast<double>(hits[id]) >= coverage * static_cast<double>(n)) ++detected;
    }
    return static_cast<double>(detected) / static_cast<double>(track_regions.size());
  });
}

inline double tbdc(const ObjectEvalInput& in, double coverage, EvalMode mode) {
  return tbdc_eval(in, coverage, mode).value;
}

/// Detected regions from a segmentation: connected components of each label's
/// mask, boxed, then merged within the label when IoU > merge_h. A region's
/// score is its label's score (1 when unknown).
inline std::vector<std::vector<DetRegion>> regions_from_segmentation(
    const SegmentationResult& seg, const std::map<TrackLabel, double>& scores, double merge_h) {
  std::vector<std::vector<DetRegion>> out(seg.frames.size());
  for (std::size_t f = 0; f < seg.frames.size(); ++f) {
    for (const auto& [label, m] : seg.frames[f]) {
      std::vector<BBox> boxes;
      for (const auto& r : connected_components(m)) boxes.push_back(r.bbox);
      const auto it = scores.find(label);
      const double s = it == scores.end() ? 1.0 : it->second;
      for (const auto& b : merge_overlapping(std::move(boxes), merge_h)) out[f].push_back({b, s});
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Report

struct EvalOptions {
  EvalMode mode = EvalMode::point;
  double alpha = 0.1;
  double coverage = 0.1;
  double fpr_limit = 0.3;
  double merge_h = 0.2;
};

struct MetricsReport {
  std::optional<double> pixel_auroc, pixel_ap, pixel_aupro, pixel_f1, rbdc, tbdc;
  double rbdc_fp_per_frame = 0.0;
  double tbdc_fp_per_frame = 0.0;
  EvalOptions options;
  std::vector<CurvePoint> aupro_curve, rbdc_curve, tbdc_curve;
  std::vector<std::string> undefined;  // messages for metrics that could not be computed

  bool any_undefined() const { return !undefined.empty(); }
};

/// Runs all six metrics on a segmentation against ground truth. Metrics that
/// are undefined for the input are left empty and their reason recorded.
inline MetricsReport evaluate(const SegmentationResult& seg, const std::map<TrackLabel, double>& scores,
                              const GroundTruth& gt, const EvalOptions& opt) {
  if (seg.clip.width != gt.width || seg.clip.height != gt.height ||
      seg.frames.size() != gt.frame_count()) {
    throw ValidationError("segmentation and ground truth shapes differ");
  }
  MetricsReport rep;
  rep.options = opt;
  const auto pred = seg.union_masks();
  const auto pixel_in = PixelEvalInput::from_masks(pred, gt.masks);
  auto guard = [&](std::optional<double>& slot, auto&& fn) {
    try {
      slot = fn();
    } catch (const UndefinedMetricError& e) {
      rep.undefined.push_back(e.what());
    }
  };
  guard(rep.pixel_auroc, [&] { return pixel_auroc(pixel_in); });
  guard(rep.pixel_ap, [&] { return pixel_ap(pixel_in); });
  guard(rep.pixel_aupro, [&] {
    auto r = pixel_aupro_curve(pixel_in, opt.fpr_limit);
    rep.aupro_curve = r.curve;
    return r.value;
  });
  guard(rep.pixel_f1, [&] { return pixel_f1(pred, gt.masks); });

  ObjectEvalInput obj{regions_from_segmentation(seg, scores, opt.merge_h), gt.regions, opt.alpha};
  guard(rep.rbdc, [&] {
    auto r = rbdc_eval(obj, opt.mode);
    rep.rbdc_curve = r.curve;
    rep.rbdc_fp_per_frame = r.fp_per_frame;
    return r.value;
  });
  guard(rep.tbdc, [&] {
    auto r = tbdc_eval(obj, opt.coverage, opt.mode);
    rep.tbdc_curve = r.curve;
    rep.tbdc_fp_per_frame = r.fp_per_frame;
    return r.value;
  });
  return rep;
}

/// Metric as percentage with two decimals, or "undefined".
inline std::string format_percent(const std::optional<double>& v) {
  if (!v) return "undefined";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", *v * 100.0);
  return buf;
}

/// key=value lines, metrics x100 with 2 decimals.
inline std::string format_report(const MetricsReport& r) {
  std::ostringstream os;
  os << "pixel_auroc=" << format_percent(r.pixel_auroc) << "\n"
     << "pixel_ap=" << format_percent(r.pixel_ap) << "\n"
     << "pixel_aupro=" << format_percent(r.pixel_aupro) << "\n"
     << "pixel_f1=" << format_percent(r.pixel_f1) << "\n"
     << "rbdc=" << format_percent(r.rbdc) << "\n"
     << "tbdc=" << format_percent(r.tbdc) << "\n"
     << "mode=" << to_string(r.options.mode) << "\n";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4f", r.rbdc_fp_per_frame);
  os << "rbdc_fp_per_frame=" << buf << "\n";
  return os.str();
}

inline nlohmann::json report_json(const MetricsReport& r) {
  auto val = [](const std::optional<double>& v) -> nlohmann::json {
    return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
  };
  return {{"pixel_auroc", val(r.pixel_auroc)},
          {"pixel_ap", val(r.pixel_ap)},
          {"pixel_aupro", val(r.pixel_aupro)},
          {"pixel_f1", val(r.pixel_f1)},
          {"rbdc", val(r.rbdc)},
          {"tbdc", val(r.tbdc)},
          {"rbdc_fp_per_frame", r.rbdc_fp_per_frame},
          {"tbdc_fp_per_frame", r.tbdc_fp_per_frame},
          {"undefined", r.undefined},
          {"options",
           {{"mode", to_string(r.options.mode)},
            {"alpha", r.options.alpha},
            {"coverage", r.options.coverage},
            {"fpr_limit", r.options.fpr_limit},
            {"merge_h", r.options.merge_h}}}};
}

/// "threshold,x,y" rows with a header line.
inline std::string curve_csv(const std::vector<CurvePoint>& curve) {
  std::ostringstream os;
  auto num = [](double v) -> std::string {
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    return nlohmann::json(v).dump();
  };
  os << "threshold,x,y\n";
  for (const auto& p : curve) os << num(p.threshold) << "," << num(p.x) << "," << num(p.y) << "\n";
  return os.str();
}

}  // namespace tao
