#pragma once

#include <vector>

#include "seqseg/mask.hpp"
#include "seqseg/tensor.hpp"

namespace seqseg {

/// Planar robot pose on the ground plane; x/y in cm, heading in radians.
struct Pose {
  double x = 0.0;
  double y = 0.0;
  double heading = 0.0;

  bool operator==(const Pose&) const = default;
};

/// One training or evaluation unit: S frames in acquisition order (the
/// current frame last), the aligned ground-truth masks, and the camera pose
/// per frame.
struct SequenceSample {
  std::vector<Tensor> frames;     // S x [C,H,W]
  std::vector<ClassMask> labels;  // S masks, values {0,1,2,3}
  std::vector<Pose> poses;        // S, strictly ordered along the track
};

}  // namespace seqseg
