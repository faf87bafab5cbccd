#pragma once

#include <array>

#include "seqseg/tensor.hpp"

namespace seqseg {

/// Normalized 1D taps of the 5x5 blur kernel: the unit Gaussian sampled at
/// integer offsets -2..2, scaled to sum 1. The 2D kernel is the outer
/// product of these taps.
const std::array<double, 5>& gaussian_taps5();

/// 5x5 Gaussian blur of a single [H,W] channel with edge replication at the
/// borders. Returns a plain data tensor (no gradient history).
Tensor gaussian_blur5(const Tensor& channel);

/// Subtracts the channel mean, divides by the channel standard deviation,
/// then maps into [-1,1] by dividing by the maximum absolute value. A
/// constant channel maps to all zeros.
Tensor standardize_normalize(const Tensor& channel);

/// Blur followed by standardization, independently per channel of a [C,H,W]
/// image. The output of every non-constant channel spans to +/-1 and is the
/// same for any positive affine rescaling a*x+b of the input, which is what
/// makes the conditioning insensitive to global lighting changes.
Tensor preprocess_image(const Tensor& image);

}  // namespace seqseg
