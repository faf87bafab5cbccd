#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "seqseg/mask.hpp"

namespace seqseg {

/// 8-connected components of the pixels labeled `cls`. Component pixel
/// lists are sorted flat indices; components are ordered by their smallest
/// pixel.
std::vector<std::vector<int>> connected_components(const ClassMask& mask, std::uint8_t cls);

/// Pixel-count equivalent of an object-space area threshold.
double min_area_pixels(double min_area_cm2, double resolution_mm_per_px);

/// Drops objects with fewer pixels than `min_pixels` (objects matching the
/// threshold exactly are kept).
void filter_small(std::vector<std::vector<int>>& objects, double min_pixels);

struct ClassScore {
  double recall = 0.0;
  double precision = 0.0;
  double f1 = 0.0;
  long gt_objects = 0;
  long matched_gt = 0;        // ground-truth objects whose pixel plurality is correct
  long predicted_objects = 0; // per-class prediction components (see report rules)
  long matched_pred = 0;
};

/// Plant-level scores from connected-component matching.
///
/// Matching rules (fixed here so numbers are reproducible):
///  - Objects below the area threshold are dropped on both sides.
///  - A ground-truth object is recalled when the plurality of the predicted
///    classes over its pixels equals its trained class; ties never match.
///    Intra-row weeds (ground truth 3) train as weed, so their target is 2.
///  - A predicted crop/weed object is a true positive when the plurality of
///    the ground-truth classes over its pixels (with 3 folded into 2)
///    equals the predicted class.
///  - Intra-row weed precision is scored over the predicted plant objects
///    whose raw ground-truth plurality is 3: the fraction predicted weed.
///  - A class with zero objects on both sides scores recall = precision =
///    1; with exactly one empty side both are 0.
/// The intra-row column is reported (and included in the average F1) only
/// when the ground truth contains class 3.
struct ObjectWiseReport {
  ClassScore crop;
  ClassScore weed;
  ClassScore intra_row_weed;
  bool has_intra_row = false;
  double average_f1 = 0.0;

  std::string table() const;      // human-readable text table
  std::string key_values() const; // line-oriented key=value records
};

/// Accumulates object counts over many mask pairs and derives one report;
/// metrics are computed from the summed counts.
class ReportAccumulator {
 public:
  explicit ReportAccumulator(double resolution_mm_per_px, double min_area_cm2 = 0.5);

  void add(const ClassMask& predicted, const ClassMask& ground_truth);
  ObjectWiseReport report() const;

 private:
  double min_pixels_;
  bool saw_intra_ = false;
  ClassScore crop_, weed_, intra_;
};

/// Single-pair report.
ObjectWiseReport object_report(const ClassMask& predicted, const ClassMask& ground_truth,
                               double resolution_mm_per_px, double min_area_cm2 = 0.5);

}  // namespace seqseg
