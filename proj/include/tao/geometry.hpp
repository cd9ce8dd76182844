// Box and mask geometry: IoU, centers, mask extremal boxes, 8-connected
// components and overlap merging.
#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <optional>
#include <vector>

#include "tao/core.hpp"

namespace tao {

inline double iou(const BBox& a, const BBox& b) noexcept {
  const double ix = std::min(a.x2(), b.x2()) - std::max(a.x1(), b.x1());
  const double iy = std::min(a.y2(), b.y2()) - std::max(a.y1(), b.y1());
  if (ix <= 0.0 || iy <= 0.0) return 0.0;
  const double inter = ix * iy;
  if (a == b) return 1.0;
  // Distinct boxes never report exactly 1 even if the ratio rounds up.
  return std::min(inter / (a.area() + b.area() - inter), std::nextafter(1.0, 0.0));
}

inline Point center(const BBox& b) noexcept { return box_center(b); }

/// Smallest box enclosing both arguments.
inline BBox enclosing(const BBox& a, const BBox& b) {
  return BBox(std::min(a.x1(), b.x1()), std::min(a.y1(), b.y1()), std::max(a.x2(), b.x2()),
              std::max(a.y2(), b.y2()));
}

/// Tight box over the set pixels using the pixel-cell convention: pixel (x, y)
/// covers [x, x+1) x [y, y+1). Returns nullopt for an all-zero mask.
inline std::optional<BBox> mask_to_bbox(const MaskPlane& m) {
  int xmin = m.width(), ymin = m.height(), xmax = -1, ymax = -1;
  for (int y = 0; y < m.height(); ++y) {
    for (int x = 0; x < m.width(); ++x) {
      if (!m.at(x, y)) continue;
      xmin = std::min(xmin, x);
      xmax = std::max(xmax, x);
      ymin = std::min(ymin, y);
      ymax = std::max(ymax, y);
    }
  }
  if (xmax < 0) return std::nullopt;
  return BBox(xmin, ymin, xmax + 1, ymax + 1);
}

/// Box over a list of linear pixel indices of a mask of the given width.
inline std::optional<BBox> pixels_to_bbox(const std::vector<std::uint32_t>& pixels, int width) {
  if (pixels.empty() || width <= 0) return std::nullopt;
  const auto w = static_cast<std::uint32_t>(width);
  std::uint32_t xmin = UINT32_MAX, ymin = UINT32_MAX, xmax = 0, ymax = 0;
  for (auto p : pixels) {
    const auto x = p % w, y = p / w;
    xmin = std::min(xmin, x);
    xmax = std::max(xmax, x);
    ymin = std::min(ymin, y);
    ymax = std::max(ymax, y);
  }
  return BBox(xmin, ymin, xmax + 1.0, ymax + 1.0);
}

/// An 8-connected component of a mask.
struct Region {
  std::vector<std::uint32_t> pixels;  // linear row-major indices, ascending
  BBox bbox{0, 0, 1, 1};

  std::size_t area() const noexcept { return pixels.size(); }
};

/// Components ordered by their first pixel in raster order, i.e. by
/// (min y, then min x on that row).
inline std::vector<Region> connected_components(const MaskPlane& m) {
  std::vector<Region> out;
  const int w = m.width(), h = m.height();
  std::vector<std::uint8_t> seen(m.size(), 0);
  std::vector<std::uint32_t> stack;
  for (int y0 = 0; y0 < h; ++y0) {
    for (int x0 = 0; x0 < w; ++x0) {
      const auto start = static_cast<std::uint32_t>(y0 * w + x0);
      if (!m.test(start) || seen[start]) continue;
      Region r;
      seen[start] = 1;
      stack.push_back(start);
      while (!stack.empty()) {
        const auto p = stack.back();
        stack.pop_back();
        r.pixels.push_back(p);
        const int px = static_cast<int>(p) % w, py = static_cast<int>(p) / w;
        for (int dy = -1; dy <= 1; ++dy) {
          for (int dx = -1; dx <= 1; ++dx) {
            const int nx = px + dx, ny = py + dy;
            if ((dx == 0 && dy == 0) || nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
            const auto q = static_cast<std::uint32_t>(ny * w + nx);
            if (m.test(q) && !seen[q]) {
              seen[q] = 1;
              stack.push_back(q);
            }
          }
        }
      }
      std::sort(r.pixels.begin(), r.pixels.end());
      r.bbox = *pixels_to_bbox(r.pixels, w);
      out.push_back(std::move(r));
    }
  }
  return out;
}

namespace detail {

class DisjointSets {
 public:
  explicit DisjointSets(std::size_t n) : parent_(n) { std::iota(parent_.begin(), parent_.end(), 0); }
  std::size_t find(std::size_t x) {
    while (parent_[x] != x) {
      parent_[x] = parent_[parent_[x]];
      x = parent_[x];
    }
    return x;
  }
  void unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a == b) return;
    if (b < a) std::swap(a, b);
    parent_[b] = a;
  }

 private:
  std::vector<std::size_t> parent_;
};

// One pass: group by transitive IoU > h, replace each group by its enclosing
// box. Groups are emitted in order of their first member.
inline std::vector<BBox> merge_pass(const std::vector<BBox>& boxes, double h) {
  DisjointSets sets(boxes.size());
  for (std::size_t i = 0; i < boxes.size(); ++i) {
    for (std::size_t j = i + 1; j < boxes.size(); ++j) {
      if (iou(boxes[i], boxes[j]) > h) sets.unite(i, j);
    }
  }
  std::vector<std::optional<BBox>> groups(boxes.size());
  for (std::size_t i = 0; i < boxes.size(); ++i) {
    auto& g = groups[sets.find(i)];
    g = g ? enclosing(*g, boxes[i]) : boxes[i];
  }
  std::vector<BBox> out;
  for (auto& g : groups) {
    if (g) out.push_back(*g);
  }
  return out;
}

}  // namespace detail

/// Merges boxes whose pairwise IoU exceeds h (transitively) into their
/// enclosing rectangle, repeating until no pair exceeds h. Idempotent.
inline std::vector<BBox> merge_overlapping(std::vector<BBox> boxes, double h) {
  while (true) {
    auto merged = detail::merge_pass(boxes, h);
    if (merged.size() == boxes.size()) return merged;
    boxes = std::move(merged);
  }
}

}  // namespace tao
