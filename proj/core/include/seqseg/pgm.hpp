#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "seqseg/mask.hpp"
#include "seqseg/tensor.hpp"

namespace seqseg {

/// Binary portable graymap (P5, maxval 255).
void write_pgm(const std::string& path, int height, int width,
               const std::vector<std::uint8_t>& gray);

/// Reads a P5 graymap written by write_pgm.
std::vector<std::uint8_t> read_pgm(const std::string& path, int& height, int& width);

/// Linear [lo,hi] -> [0,255] with clamping, for exporting a [H,W] channel.
std::vector<std::uint8_t> gray_from_channel(const Tensor& channel, double lo, double hi);

/// Class ids rendered as distinct gray levels (background 0, crop 255,
/// weed 150, intra-row weed 80).
std::vector<std::uint8_t> gray_from_mask(const ClassMask& mask);

}  // namespace seqseg
