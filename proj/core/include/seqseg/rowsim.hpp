#pragma once

#include <cstdint>
#include <vector>

#include "seqseg/rng.hpp"
#include "seqseg/sample.hpp"

namespace seqseg {

/// Latent parameters of one simulated field. Distances in cm.
struct FieldModel {
  double intra_row_cm = 20.0;      // crop spacing along a row, [15,25]
  double inter_row_cm = 45.0;      // spacing between rows, [30,60]
  double weed_pressure = 0.5;      // weeds as a fraction of crop count, [0,2]
  double blob_area_cm2 = 4.0;      // plant blob area, uniform within a sequence, [0.5,8]
  double position_noise_cm = 2.0;  // sigma of the lattice perturbation
  double row_heading = 0.0;        // rows run along +x; camera travel direction

  void validate() const;
};

/// Nadir camera over the ground plane. Image columns point along the travel
/// direction, rows across it.
struct CameraModel {
  double resolution_mm_per_px = 4.0;
  int width_px = 128;
  int height_px = 96;
  double steering_noise_rad = 2.0 * 3.14159265358979323846 / 180.0;

  double cm_per_px() const { return resolution_mm_per_px / 10.0; }
  double footprint_w_cm() const { return width_px * cm_per_px(); }   // along travel
  double footprint_h_cm() const { return height_px * cm_per_px(); }  // across travel
};

enum class PlantClass : std::uint8_t { Crop = 1, Weed = 2, IntraRowWeed = 3 };

struct PlantInstance {
  double x_cm = 0.0;
  double y_cm = 0.0;
  PlantClass cls = PlantClass::Crop;
  double area_cm2 = 0.0;
};

/// Uniform draws over the documented parameter ranges; the lattice noise
/// sigma is 10% of the drawn intra-row distance.
FieldModel sample_field_model(Rng& rng);

/// Zero ground-plane overlap test between two camera footprints (oriented
/// rectangles; touching edges count as disjoint).
bool footprints_overlap(const Pose& a, const Pose& b, const CameraModel& camera);

/// Walks the pose history backwards from the most recent frame, greedily
/// keeping frames whose footprints are pairwise disjoint, and returns the
/// chosen indices in time order (most recent last). Throws when fewer than
/// `count` non-overlapping frames exist.
std::vector<std::size_t> select_nonoverlapping(const std::vector<Pose>& poses,
                                               const CameraModel& camera, int count);

struct RenderedSequence {
  SequenceSample sample;
  std::vector<PlantInstance> plants;  // every instance populating the strip
};

/// Generates one sequence: populates a field strip with crops on the row
/// lattice, weeds off the rows and intra-row weeds inside the row band,
/// drives the camera along the row with steering jitter, picks the
/// non-overlapping frames, and rasterizes binary frames plus aligned class
/// masks (single channel; blobs are filled disks of one shared area).
RenderedSequence render_sequence(const FieldModel& field, const CameraModel& camera,
                                 int sequence_length, Rng& rng);

}  // namespace seqseg
