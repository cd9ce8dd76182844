// Run-length codec for binary masks ("tao-rle/1").
//
// Runs alternate zero/one over the row-major pixel sequence, starting with a
// zero-run that may have length 0. Interior runs are never zero; the runs sum
// to width * height.
#pragma once

#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "tao/core.hpp"

namespace tao {

inline constexpr const char* kRleFormat = "tao-rle/1";

struct RleMask {
  int width = 0;
  int height = 0;
  std::vector<std::uint32_t> runs;

  bool operator==(const RleMask&) const = default;
};

inline RleMask rle_encode(const MaskPlane& m) {
  RleMask r{m.width(), m.height(), {}};
  std::uint32_t run = 0;
  bool current = false;
  for (std::size_t i = 0; i < m.size(); ++i) {
    if (m.test(i) != current) {
      r.runs.push_back(run);
      run = 0;
      current = !current;
    }
    ++run;
  }
  if (run > 0 || r.runs.empty()) r.runs.push_back(run);
  return r;
}

inline void rle_validate(const RleMask& r) {
  if (r.width < 0 || r.height < 0) throw ValidationError("rle: negative dimensions");
  if (r.runs.empty()) throw ValidationError("rle: no runs");
  std::uint64_t total = 0;
  for (std::size_t i = 0; i < r.runs.size(); ++i) {
    if (i > 0 && r.runs[i] == 0) {
      throw ValidationError("rle: zero-length interior run at position " + std::to_string(i));
    }
    total += r.runs[i];
  }
  const auto expected = static_cast<std::uint64_t>(r.width) * static_cast<std::uint64_t>(r.height);
  if (total != expected) {
    throw ValidationError("rle: runs sum to " + std::to_string(total) + ", expected " +
                          std::to_string(expected));
  }
  // A lone zero run is only valid for an empty plane.
  if (r.runs.size() == 1 && r.runs[0] == 0 && expected != 0) {
    throw ValidationError("rle: zero-length interior run at position 0");
  }
}

inline MaskPlane rle_decode(const RleMask& r) {
  rle_validate(r);
  MaskPlane m(r.width, r.height);
  std::size_t pos = 0;
  bool value = false;
  for (auto run : r.runs) {
    if (value) {
      for (std::uint32_t i = 0; i < run; ++i) m.set_index(pos + i);
    }
    pos += run;
    value = !value;
  }
  return m;
}

}  // namespace tao
