// Brute-force reference implementations used by the unit and acceptance
// suites. Deliberately naive: they recompute everything from scratch.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <map>
#include <set>
#include <span>
#include <vector>

#include "tao/core.hpp"
#include "tao/random.hpp"

namespace oracle {

/// IoU by counting cells of a grid with `res` cells per pixel. Exact when all
/// coordinates are multiples of 1/res.
inline double raster_iou(const tao::BBox& a, const tao::BBox& b, int res = 64) {
  const auto cell = [res](double v) { return static_cast<long>(std::llround(v * res)); };
  const long x0 = std::min(cell(a.x1()), cell(b.x1())), x1 = std::max(cell(a.x2()), cell(b.x2()));
  const long y0 = std::min(cell(a.y1()), cell(b.y1())), y1 = std::max(cell(a.y2()), cell(b.y2()));
  std::uint64_t in_a = 0, in_b = 0, both = 0;
  for (long y = y0; y < y1; ++y) {
    const double cy = (static_cast<double>(y) + 0.5) / res;
    const bool ya = cy > a.y1() && cy < a.y2(), yb = cy > b.y1() && cy < b.y2();
    if (!ya && !yb) continue;
    for (long x = x0; x < x1; ++x) {
      const double cx = (static_cast<double>(x) + 0.5) / res;
      const bool pa = ya && cx > a.x1() && cx < a.x2();
      const bool pb = yb && cx > b.x1() && cx < b.x2();
      in_a += pa;
      in_b += pb;
      both += pa && pb;
    }
  }
  const auto uni = in_a + in_b - both;
  return uni ? static_cast<double>(both) / static_cast<double>(uni) : 0.0;
}

/// Random box whose coordinates lie on a 1/res lattice inside [0, extent].
inline tao::BBox lattice_box(tao::Rng& rng, double extent, int res) {
  const auto n = static_cast<std::int64_t>(extent * res);
  while (true) {
    auto xa = rng.integer(0, n), xb = rng.integer(0, n);
    auto ya = rng.integer(0, n), yb = rng.integer(0, n);
    if (xa == xb || ya == yb) continue;
    if (xa > xb) std::swap(xa, xb);
    if (ya > yb) std::swap(ya, yb);
    const double r = res;
    return {xa / r, ya / r, xb / r, yb / r};
  }
}

/// Components by repeated breadth-first flood fill, returned as a set of
/// sorted pixel lists (order-free comparison).
inline std::set<std::vector<std::uint32_t>> flood_fill(const tao::MaskPlane& m) {
  std::set<std::vector<std::uint32_t>> out;
  std::vector<bool> seen(m.size(), false);
  const int w = m.width(), h = m.height();
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (!m.at(x, y) || seen[static_cast<std::size_t>(y * w + x)]) continue;
      std::vector<std::uint32_t> comp;
      std::deque<std::pair<int, int>> q{{x, y}};
      seen[static_cast<std::size_t>(y * w + x)] = true;
      while (!q.empty()) {
        auto [cx, cy] = q.front();
        q.pop_front();
        comp.push_back(static_cast<std::uint32_t>(cy * w + cx));
        for (int dy = -1; dy <= 1; ++dy) {
          for (int dx = -1; dx <= 1; ++dx) {
            const int nx = cx + dx, ny = cy + dy;
            if (nx < 0 || ny < 0 || nx >= w || ny >= h || !m.at(nx, ny)) continue;
            const auto i = static_cast<std::size_t>(ny * w + nx);
            if (seen[i]) continue;
            seen[i] = true;
            q.emplace_back(nx, ny);
          }
        }
      }
      std::sort(comp.begin(), comp.end());
      out.insert(std::move(comp));
    }
  }
  return out;
}

struct Pixel {
  double score;
  bool positive;
  long region;  // -1 when normal
};

/// Flattens frames into pixels; regions numbered by flood fill per frame.
inline std::vector<Pixel> flatten(std::span<const tao::ScoreMap> scores, std::span<const tao::MaskPlane> gt,
                                  std::vector<std::size_t>* region_sizes = nullptr) {
  std::vector<Pixel> px;
  long next = 0;
  for (std::size_t f = 0; f < gt.size(); ++f) {
    std::vector<long> region(gt[f].size(), -1);
    for (const auto& comp : flood_fill(gt[f])) {
      for (auto p : comp) region[p] = next;
      if (region_sizes) region_sizes->push_back(comp.size());
      ++next;
    }
    for (std::size_t i = 0; i < gt[f].size(); ++i) px.push_back({scores[f][i], gt[f].test(i), region[i]});
  }
  return px;
}

/// Pairwise Mann-Whitney: each (positive, negative) pair scores 2 when the
/// positive ranks higher and 1 on a tie; result is the count over 2PN.
inline double auroc(std::span<const tao::ScoreMap> scores, std::span<const tao::MaskPlane> gt) {
  const auto px = flatten(scores, gt);
  std::uint64_t twice = 0, pos = 0, neg = 0;
  for (const auto& p : px) (p.positive ? pos : neg) += 1;
  for (const auto& p : px) {
    if (!p.positive) continue;
    for (const auto& n : px) {
      if (n.positive) continue;
      twice += p.score > n.score ? 2 : p.score == n.score ? 1 : 0;
    }
  }
  return static_cast<double>(twice) / (2.0 * static_cast<double>(pos) * static_cast<double>(neg));
}

inline std::vector<double> distinct_desc(const std::vector<Pixel>& px) {
  std::vector<double> t;
  for (const auto& p : px) t.push_back(p.score);
  std::sort(t.begin(), t.end(), std::greater<>());
  t.erase(std::unique(t.begin(), t.end()), t.end());
  return t;
}

/// Threshold sweep: at each distinct score t predict s >= t and recount.
inline double ap(std::span<const tao::ScoreMap> scores, std::span<const tao::MaskPlane> gt) {
  const auto px = flatten(scores, gt);
  double total_pos = 0;
  for (const auto& p : px) total_pos += p.positive;
  double result = 0.0, prev_recall = 0.0;
  for (double t : distinct_desc(px)) {
    double tp = 0, fp = 0;
    for (const auto& p : px) {
      if (p.score >= t) (p.positive ? tp : fp) += 1;
    }
    const double recall = tp / total_pos;
    result += (recall - prev_recall) * (tp / (tp + fp));
    prev_recall = recall;
  }
  return result;
}

/// Threshold sweep of (FPR, mean region overlap); the curve starts at the
/// origin, is integrated by trapezoids up to `limit`, and holds the last
/// reached value beyond the final point or across the segment that crosses
/// the limit. Normalised by limit.
inline double aupro(std::span<const tao::ScoreMap> scores, std::span<const tao::MaskPlane> gt, double limit) {
  std::vector<std::size_t> sizes;
  const auto px = flatten(scores, gt, &sizes);
  double neg = 0;
  for (const auto& p : px) neg += !p.positive;
  std::vector<std::pair<double, double>> curve{{0.0, 0.0}};
  for (double t : distinct_desc(px)) {
    std::vector<double> hit(sizes.size(), 0.0);
    double fp = 0;
    for (const auto& p : px) {
      if (p.score < t) continue;
      if (p.region >= 0) hit[static_cast<std::size_t>(p.region)] += 1;
      else fp += 1;
    }
    double pro = 0;
    for (std::size_t r = 0; r < sizes.size(); ++r) pro += hit[r] / static_cast<double>(sizes[r]);
    curve.emplace_back(fp / neg, pro / static_cast<double>(sizes.size()));
  }
  double area = 0.0;
  std::size_t i = 1;
  for (; i < curve.size() && curve[i].first <= limit; ++i) {
    area += (curve[i].first - curve[i - 1].first) * (curve[i].second + curve[i - 1].second) / 2;
  }
  const auto& last = curve[i - 1];
  area += (limit - last.first) * last.second;
  return area / limit;
}

struct Counts {
  std::uint64_t tp = 0, fp = 0, fn = 0;
};

inline Counts count(std::span<const tao::MaskPlane> pred, std::span<const tao::MaskPlane> gt) {
  Counts c;
  for (std::size_t f = 0; f < gt.size(); ++f) {
    for (int y = 0; y < gt[f].height(); ++y) {
      for (int x = 0; x < gt[f].width(); ++x) {
        const bool p = pred[f].at(x, y), g = gt[f].at(x, y);
        c.tp += p && g;
        c.fp += p && !g;
        c.fn += !p && g;
      }
    }
  }
  return c;
}

inline double f1(std::span<const tao::MaskPlane> pred, std::span<const tao::MaskPlane> gt) {
  const auto c = count(pred, gt);
  return static_cast<double>(2 * c.tp) / static_cast<double>(2 * c.tp + c.fp + c.fn);
}

/// Tight cell box by scanning every pixel.
inline std::optional<tao::BBox> scan_bbox(const tao::MaskPlane& m) {
  int x0 = m.width(), y0 = m.height(), x1 = -1, y1 = -1;
  for (int y = 0; y < m.height(); ++y) {
    for (int x = 0; x < m.width(); ++x) {
      if (!m.at(x, y)) continue;
      x0 = std::min(x0, x);
      y0 = std::min(y0, y);
      x1 = std::max(x1, x);
      y1 = std::max(y1, y);
    }
  }
  if (x1 < 0) return std::nullopt;
  return tao::BBox(x0, y0, x1 + 1, y1 + 1);
}

inline tao::MaskPlane random_mask(tao::Rng& rng, int w, int h, double density) {
  tao::MaskPlane m(w, h);
  for (std::size_t i = 0; i < m.size(); ++i) m.set_index(i, rng.bernoulli(density));
  return m;
}

/// Blobby random mask: a few random rectangles, so components have structure.
inline tao::MaskPlane random_blobs(tao::Rng& rng, int w, int h, int blobs) {
  tao::MaskPlane m(w, h);
  for (int b = 0; b < blobs; ++b) {
    const int bw = static_cast<int>(rng.integer(1, std::max(1, w / 3)));
    const int bh = static_cast<int>(rng.integer(1, std::max(1, h / 3)));
    const int x = static_cast<int>(rng.integer(0, w - bw)), y = static_cast<int>(rng.integer(0, h - bh));
    for (int yy = y; yy < y + bh; ++yy) {
      for (int xx = x; xx < x + bw; ++xx) m.set(xx, yy);
    }
  }
  return m;
}

/// Scores correlated with the mask and quantised to `levels` values, so ties
/// are common.
inline tao::ScoreMap random_scores(tao::Rng& rng, const tao::MaskPlane& gt, int levels) {
  std::vector<double> v(gt.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double base = gt.test(i) ? 0.3 : 0.0;
    v[i] = std::floor((base + rng.uniform() * 0.7) * levels) / levels;
  }
  return tao::ScoreMap(gt.width(), gt.height(), std::move(v));
}

}  // namespace oracle
