#include "seqseg/rowsim.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace seqseg {
namespace {

constexpr double kPi = 3.14159265358979323846;

struct Box {
  double cx, cy;    // center
  double ux, uy;    // travel-direction unit vector
  double hw, hh;    // half extents along / across travel
};

Box footprint_box(const Pose& pose, const CameraModel& camera) {
  return {pose.x,
          pose.y,
          std::cos(pose.heading),
          std::sin(pose.heading),
          0.5 * camera.footprint_w_cm(),
          0.5 * camera.footprint_h_cm()};
}

// Projection radius of `b` onto the axis (ax,ay).
double project(const Box& b, double ax, double ay) {
  const double vx = -b.uy, vy = b.ux;
  return b.hw * std::abs(b.ux * ax + b.uy * ay) + b.hh * std::abs(vx * ax + vy * ay);
}

}  // namespace

void FieldModel::validate() const {
  if (intra_row_cm < 15.0 || intra_row_cm > 25.0) {
    throw std::invalid_argument("field model: intra-row distance must lie in [15,25] cm");
  }
  if (inter_row_cm < 30.0 || inter_row_cm > 60.0) {
    throw std::invalid_argument("field model: inter-row distance must lie in [30,60] cm");
  }
  if (weed_pressure < 0.0 || weed_pressure > 2.0) {
    throw std::invalid_argument("field model: weed pressure must lie in [0,2]");
  }
  if (blob_area_cm2 < 0.5 || blob_area_cm2 > 8.0) {
    throw std::invalid_argument("field model: blob area must lie in [0.5,8] cm^2");
  }
  if (position_noise_cm < 0.0) throw std::invalid_argument("field model: negative position noise");
}

FieldModel sample_field_model(Rng& rng) {
  FieldModel f;
  f.intra_row_cm = rng.uniform(15.0, 25.0);
  f.inter_row_cm = rng.uniform(30.0, 60.0);
  f.weed_pressure = rng.uniform(0.0, 2.0);
  f.blob_area_cm2 = rng.uniform(0.5, 8.0);
  f.position_noise_cm = 0.1 * f.intra_row_cm;
  f.row_heading = 0.0;
  return f;
}

bool footprints_overlap(const Pose& a, const Pose& b, const CameraModel& camera) {
  const Box ba = footprint_box(a, camera);
  const Box bb = footprint_box(b, camera);
  const double dx = bb.cx - ba.cx, dy = bb.cy - ba.cy;
  // Separating-axis test over both boxes' axes; a contact with zero
  // intersection area counts as disjoint.
  const double axes[4][2] = {{ba.ux, ba.uy}, {-ba.uy, ba.ux}, {bb.ux, bb.uy}, {-bb.uy, bb.ux}};
  for (const auto& axis : axes) {
    const double dist = std::abs(dx * axis[0] + dy * axis[1]);
    if (dist >= project(ba, axis[0], axis[1]) + project(bb, axis[0], axis[1]) - 1e-9) {
      return false;
    }
  }
  return true;
}

std::vector<std::size_t> select_nonoverlapping(const std::vector<Pose>& poses,
                                               const CameraModel& camera, int count) {
  if (count < 1) throw std::invalid_argument("select_nonoverlapping: count must be >= 1");
  std::vector<std::size_t> chosen;
  for (std::size_t i = poses.size(); i-- > 0;) {
    bool clear = true;
    for (std::size_t c : chosen) {
      if (footprints_overlap(poses[i], poses[c], camera)) {
        clear = false;
        break;
      }
    }
    if (clear) {
      chosen.push_back(i);
      if (static_cast<int>(chosen.size()) == count) break;
    }
  }
  if (static_cast<int>(chosen.size()) < count) {
    throw std::runtime_error("select_nonoverlapping: insufficient history, only " +
                             std::to_string(chosen.size()) + " of " + std::to_string(count) +
                             " non-overlapping frames available");
  }
  std::reverse(chosen.begin(), chosen.end());
  return chosen;
}

RenderedSequence render_sequence(const FieldModel& field, const CameraModel& camera,
                                 int sequence_length, Rng& rng) {
  field.validate();
  if (sequence_length < 1) throw std::invalid_argument("render_sequence: sequence length must be >= 1");
  const double radius_cm = std::sqrt(field.blob_area_cm2 / kPi);
  const double fw = camera.footprint_w_cm(), fh = camera.footprint_h_cm();
  if (radius_cm > 0.5 * std::min(fw, fh)) {
    throw std::runtime_error("render_sequence: blob radius " + std::to_string(radius_cm) +
                             " cm exceeds half the footprint");
  }

  // Camera track along row 0 (the x axis): dense pose history with steering
  // jitter, then the non-overlap selection picks the frames, which ends up
  // advancing roughly one footprint per frame.
  const double lateral_offset = rng.uniform(-0.15, 0.15) * fh;
  const double start_x = rng.uniform(0.0, field.intra_row_cm);
  std::vector<Pose> history;
  const int dense_count = 4 * sequence_length + 8;
  for (int i = 0; i < dense_count; ++i) {
    Pose p;
    p.x = start_x + static_cast<double>(i) * fw / 4.0;
    p.y = lateral_offset;
    p.heading = field.row_heading + rng.uniform(-camera.steering_noise_rad, camera.steering_noise_rad);
    history.push_back(p);
  }
  const std::vector<std::size_t> picked = select_nonoverlapping(history, camera, sequence_length);

  // Extent of ground to populate: selected footprints plus a margin wide
  // enough that border blobs and lattice noise cannot leak into view.
  double xmin = 1e30, xmax = -1e30, ymin = 1e30, ymax = -1e30;
  for (std::size_t i : picked) {
    const Box b = footprint_box(history[i], camera);
    for (int corner = 0; corner < 4; ++corner) {
      const double sx = (corner & 1) ? 1.0 : -1.0;
      const double sy = (corner & 2) ? 1.0 : -1.0;
      const double px = b.cx + sx * b.hw * b.ux - sy * b.hh * b.uy;
      const double py = b.cy + sx * b.hw * b.uy + sy * b.hh * b.ux;
      xmin = std::min(xmin, px);
      xmax = std::max(xmax, px);
      ymin = std::min(ymin, py);
      ymax = std::max(ymax, py);
    }
  }
  const double margin = 2.0 * radius_cm + 4.0 * field.position_noise_cm + camera.cm_per_px();
  xmin -= margin;
  xmax += margin;
  ymin -= margin;
  ymax += margin;

  // Lattice noise truncated at 2 sigma per axis, so consecutive crops along
  // a row always stay within intra_row +/- 4 sigma of each other.
  auto lattice_noise = [&]() {
    double n = rng.normal(0.0, field.position_noise_cm);
    while (std::abs(n) > 2.0 * field.position_noise_cm) n = rng.normal(0.0, field.position_noise_cm);
    return n;
  };

  std::vector<PlantInstance> plants;
  const int row_lo = static_cast<int>(std::floor(ymin / field.inter_row_cm));
  const int row_hi = static_cast<int>(std::ceil(ymax / field.inter_row_cm));
  struct RowInfo {
    double y;
    double phase;
  };
  std::vector<RowInfo> rows;
  long crop_count = 0;
  for (int j = row_lo; j <= row_hi; ++j) {
    RowInfo row{static_cast<double>(j) * field.inter_row_cm, rng.uniform(0.0, field.intra_row_cm)};
    rows.push_back(row);
    if (row.y < ymin || row.y > ymax) continue;
    const int k_lo = static_cast<int>(std::floor((xmin - row.phase) / field.intra_row_cm));
    const int k_hi = static_cast<int>(std::ceil((xmax - row.phase) / field.intra_row_cm));
    for (int k = k_lo; k <= k_hi; ++k) {
      const double base_x = row.phase + static_cast<double>(k) * field.intra_row_cm;
      if (base_x < xmin || base_x > xmax) continue;
      PlantInstance plant;
      plant.x_cm = base_x + lattice_noise();
      plant.y_cm = row.y + lattice_noise();
      plant.cls = PlantClass::Crop;
      plant.area_cm2 = field.blob_area_cm2;
      plants.push_back(plant);
      ++crop_count;
    }
  }

  const double min_separation = 2.0 * radius_cm + 2.0 * camera.cm_per_px();
  auto collides = [&](double x, double y) {
    for (const PlantInstance& p : plants) {
      const double dx = p.x_cm - x, dy = p.y_cm - y;
      if (dx * dx + dy * dy < min_separation * min_separation) return true;
    }
    return false;
  };
  auto nearest_row = [&](double y) {
    return field.inter_row_cm * std::round(y / field.inter_row_cm);
  };

  const double target = field.weed_pressure * static_cast<double>(crop_count);
  long weed_count = static_cast<long>(std::floor(target));
  if (rng.uniform() < target - std::floor(target)) ++weed_count;

  constexpr double kIntraFraction = 0.25;  // share of weeds placed inside the row band
  constexpr int kMaxTries = 200;
  for (long i = 0; i < weed_count; ++i) {
    const bool intra = rng.uniform() < kIntraFraction;
    for (int attempt = 0; attempt < kMaxTries; ++attempt) {
      double x, y;
      if (intra) {
        const RowInfo& row = rows[rng.uniform_int(rows.size())];
        x = rng.uniform(xmin, xmax);
        y = row.y + rng.uniform(-0.25, 0.25) * field.inter_row_cm;
        // Keep clear of the lattice so the class stays geometrically
        // separable from the crops.
        const double nearest_x = row.phase + field.intra_row_cm * std::round((x - row.phase) / field.intra_row_cm);
        const double dx = x - nearest_x, dy = y - row.y;
        if (std::sqrt(dx * dx + dy * dy) < 0.3 * field.intra_row_cm) continue;
      } else {
        x = rng.uniform(xmin, xmax);
        y = rng.uniform(ymin, ymax);
        if (std::abs(y - nearest_row(y)) < 0.25 * field.inter_row_cm) continue;
      }
      if (collides(x, y)) continue;
      PlantInstance plant;
      plant.x_cm = x;
      plant.y_cm = y;
      plant.cls = intra ? PlantClass::IntraRowWeed : PlantClass::Weed;
      plant.area_cm2 = field.blob_area_cm2;
      plants.push_back(plant);
      break;
    }
  }

  // Rasterize the selected frames.
  RenderedSequence out;
  out.plants = plants;
  const int w = camera.width_px, h = camera.height_px;
  const double res = camera.cm_per_px();
  const double rad_px = radius_cm / res;
  for (std::size_t idx : picked) {
    const Pose& pose = history[idx];
    const double ch = std::cos(pose.heading), sh = std::sin(pose.heading);
    Tensor frame = Tensor::zeros({1, h, w});
    ClassMask mask(h, w);
    for (const PlantInstance& p : plants) {
      const double dx = p.x_cm - pose.x, dy = p.y_cm - pose.y;
      const double u = ch * dx + sh * dy;   // along travel -> image column
      const double v = -sh * dx + ch * dy;  // across travel -> image row
      const double col = u / res + 0.5 * w - 0.5;
      const double row = v / res + 0.5 * h - 0.5;
      const int r0 = std::max(0, static_cast<int>(std::ceil(row - rad_px)));
      const int r1 = std::min(h - 1, static_cast<int>(std::floor(row + rad_px)));
      const int c0 = std::max(0, static_cast<int>(std::ceil(col - rad_px)));
      const int c1 = std::min(w - 1, static_cast<int>(std::floor(col + rad_px)));
      for (int r = r0; r <= r1; ++r) {
        for (int c = c0; c <= c1; ++c) {
          const double dr = r - row, dc = c - col;
          if (dr * dr + dc * dc <= rad_px * rad_px) {
            frame.data()[static_cast<std::size_t>(r) * w + c] = 1.0;
            mask.at(r, c) = static_cast<std::uint8_t>(p.cls);
          }
        }
      }
    }
    out.sample.frames.push_back(std::move(frame));
    out.sample.labels.push_back(std::move(mask));
    out.sample.poses.push_back(pose);
  }
  return out;
}

}  // namespace seqseg
