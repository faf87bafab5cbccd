#pragma once

#include <cstdint>
#include <vector>

namespace seqseg {

// Per-pixel class ids. 0 = background, 1 = crop, 2 = weed; the simulator
// additionally emits 3 = intra-row weed in ground truth masks.
struct ClassMask {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> values;

  ClassMask() = default;
  ClassMask(int h, int w, std::uint8_t fill = 0)
      : height(h), width(w), values(static_cast<std::size_t>(h) * w, fill) {}

  std::uint8_t& at(int r, int c) { return values[static_cast<std::size_t>(r) * width + c]; }
  std::uint8_t at(int r, int c) const { return values[static_cast<std::size_t>(r) * width + c]; }
  std::size_t size() const { return values.size(); }

  bool operator==(const ClassMask& other) const = default;
};

}  // namespace seqseg
