#include "seqseg/metrics.hpp"

#include <algorithm>
#include <array>
#include <sstream>
#include <stdexcept>

namespace seqseg {
namespace {

// Plurality class over a pixel set; -1 on ties. `fold_intra` maps ground
// truth 3 onto 2 before counting.
int plurality(const ClassMask& mask, const std::vector<int>& pixels, bool fold_intra) {
  std::array<long, 4> counts{};
  for (int p : pixels) {
    int v = mask.values[static_cast<std::size_t>(p)];
    if (fold_intra && v == 3) v = 2;
    ++counts[static_cast<std::size_t>(v)];
  }
  int best = 0;
  bool tie = false;
  for (int c = 1; c < 4; ++c) {
    if (counts[static_cast<std::size_t>(c)] > counts[static_cast<std::size_t>(best)]) {
      best = c;
      tie = false;
    } else if (c != best && counts[static_cast<std::size_t>(c)] == counts[static_cast<std::size_t>(best)]) {
      tie = true;
    }
  }
  return tie ? -1 : best;
}

void finalize_score(ClassScore& s) {
  if (s.gt_objects == 0 && s.predicted_objects == 0) {
    s.recall = s.precision = 1.0;
  } else if (s.gt_objects == 0 || s.predicted_objects == 0) {
    s.recall = s.precision = 0.0;
  } else {
    s.recall = static_cast<double>(s.matched_gt) / static_cast<double>(s.gt_objects);
    s.precision = static_cast<double>(s.matched_pred) / static_cast<double>(s.predicted_objects);
  }
  s.f1 = (s.recall + s.precision) > 0.0
             ? 2.0 * s.recall * s.precision / (s.recall + s.precision)
             : 0.0;
}

void append_score(std::ostringstream& os, const char* name, const ClassScore& s) {
  os << name << "_recall=" << s.recall << '\n'
     << name << "_precision=" << s.precision << '\n'
     << name << "_f1=" << s.f1 << '\n'
     << name << "_gt_objects=" << s.gt_objects << '\n'
     << name << "_matched_gt=" << s.matched_gt << '\n'
     << name << "_predicted_objects=" << s.predicted_objects << '\n'
     << name << "_matched_pred=" << s.matched_pred << '\n';
}

}  // namespace

std::vector<std::vector<int>> connected_components(const ClassMask& mask, std::uint8_t cls) {
  const int h = mask.height, w = mask.width;
  std::vector<std::vector<int>> components;
  std::vector<char> seen(mask.size(), 0);
  std::vector<int> stack;
  for (int start = 0; start < static_cast<int>(mask.size()); ++start) {
    if (seen[static_cast<std::size_t>(start)] || mask.values[static_cast<std::size_t>(start)] != cls) continue;
    std::vector<int> pixels;
    stack.assign(1, start);
    seen[static_cast<std::size_t>(start)] = 1;
    while (!stack.empty()) {
      const int p = stack.back();
      stack.pop_back();
      pixels.push_back(p);
      const int r = p / w, c = p % w;
      for (int dr = -1; dr <= 1; ++dr) {
        for (int dc = -1; dc <= 1; ++dc) {
          if (dr == 0 && dc == 0) continue;
          const int nr = r + dr, nc = c + dc;
          if (nr < 0 || nr >= h || nc < 0 || nc >= w) continue;
          const int np = nr * w + nc;
          if (!seen[static_cast<std::size_t>(np)] && mask.values[static_cast<std::size_t>(np)] == cls) {
            seen[static_cast<std::size_t>(np)] = 1;
            stack.push_back(np);
          }
        }
      }
    }
    std::sort(pixels.begin(), pixels.end());
    components.push_back(std::move(pixels));
  }
  return components;
}

double min_area_pixels(double min_area_cm2, double resolution_mm_per_px) {
  if (resolution_mm_per_px <= 0.0) throw std::invalid_argument("min_area_pixels: resolution must be positive");
  const double px_area_mm2 = resolution_mm_per_px * resolution_mm_per_px;
  return min_area_cm2 * 100.0 / px_area_mm2;
}

void filter_small(std::vector<std::vector<int>>& objects, double min_pixels) {
  std::erase_if(objects, [min_pixels](const std::vector<int>& obj) {
    return static_cast<double>(obj.size()) < min_pixels;
  });
}

ReportAccumulator::ReportAccumulator(double resolution_mm_per_px, double min_area_cm2)
    : min_pixels_(min_area_pixels(min_area_cm2, resolution_mm_per_px)) {}

void ReportAccumulator::add(const ClassMask& predicted, const ClassMask& ground_truth) {
  if (predicted.height != ground_truth.height || predicted.width != ground_truth.width) {
    throw std::invalid_argument("object report: mask extents differ");
  }
  for (std::uint8_t v : ground_truth.values) {
    if (v == 3) {
      saw_intra_ = true;
      break;
    }
  }

  // Ground-truth side: recall per class, intra matched when predicted weed.
  struct GtClass {
    std::uint8_t cls;
    int target;
    ClassScore* score;
  };
  for (const GtClass& g : {GtClass{1, 1, &crop_}, GtClass{2, 2, &weed_}, GtClass{3, 2, &intra_}}) {
    auto objects = connected_components(ground_truth, g.cls);
    filter_small(objects, min_pixels_);
    g.score->gt_objects += static_cast<long>(objects.size());
    for (const auto& obj : objects) {
      if (plurality(predicted, obj, false) == g.target) ++g.score->matched_gt;
    }
  }

  // Prediction side: crop/weed precision against folded ground truth;
  // predicted plant objects sitting on raw intra ground truth feed the
  // intra precision column.
  for (std::uint8_t m : {std::uint8_t{1}, std::uint8_t{2}}) {
    auto objects = connected_components(predicted, m);
    filter_small(objects, min_pixels_);
    ClassScore& own = (m == 1) ? crop_ : weed_;
    own.predicted_objects += static_cast<long>(objects.size());
    for (const auto& obj : objects) {
      if (plurality(ground_truth, obj, true) == static_cast<int>(m)) ++own.matched_pred;
      if (plurality(ground_truth, obj, false) == 3) {
        ++intra_.predicted_objects;
        if (m == 2) ++intra_.matched_pred;
      }
    }
  }
}

ObjectWiseReport ReportAccumulator::report() const {
  ObjectWiseReport rep;
  rep.crop = crop_;
  rep.weed = weed_;
  rep.intra_row_weed = intra_;
  rep.has_intra_row = saw_intra_;
  finalize_score(rep.crop);
  finalize_score(rep.weed);
  finalize_score(rep.intra_row_weed);
  rep.average_f1 = rep.has_intra_row
                       ? (rep.crop.f1 + rep.weed.f1 + rep.intra_row_weed.f1) / 3.0
                       : (rep.crop.f1 + rep.weed.f1) / 2.0;
  return rep;
}

ObjectWiseReport object_report(const ClassMask& predicted, const ClassMask& ground_truth,
                               double resolution_mm_per_px, double min_area_cm2) {
  ReportAccumulator acc(resolution_mm_per_px, min_area_cm2);
  acc.add(predicted, ground_truth);
  return acc.report();
}

std::string ObjectWiseReport::table() const {
  std::ostringstream os;
  os << "class            recall  precision  f1      gt  pred\n";
  auto row = [&os](const char* name, const ClassScore& s) {
    os << name;
    for (std::size_t i = std::string(name).size(); i < 17; ++i) os << ' ';
    char buf[96];
    std::snprintf(buf, sizeof(buf), "%6.1f%%    %6.1f%%  %6.1f%%  %4ld  %4ld\n",
                  100.0 * s.recall, 100.0 * s.precision, 100.0 * s.f1, s.gt_objects,
                  s.predicted_objects);
    os << buf;
  };
  row("crop", crop);
  row("weed", weed);
  if (has_intra_row) row("intra_row_weed", intra_row_weed);
  char buf[48];
  std::snprintf(buf, sizeof(buf), "average_f1       %6.1f%%\n", 100.0 * average_f1);
  os << buf;
  return os.str();
}

std::string ObjectWiseReport::key_values() const {
  std::ostringstream os;
  os.precision(17);
  append_score(os, "crop", crop);
  append_score(os, "weed", weed);
  if (has_intra_row) append_score(os, "intra_row_weed", intra_row_weed);
  os << "average_f1=" << average_f1 << '\n';
  return os.str();
}

}  // namespace seqseg
