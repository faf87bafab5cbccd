// Independent reference implementations the tests check the library
// against. Everything here is written in the most literal form possible
// and stays decoupled from the code under test.
#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "seqseg/mask.hpp"
#include "seqseg/tensor.hpp"

namespace oracles {

// Output extent and low-side padding, re-derived from first principles:
// same padding produces ceil(in/stride) outputs and centers the kernel,
// valid padding only keeps fully covered positions.
inline void axis_geom(int in, int k, int stride, int dil, bool same, int& out, int& pad) {
  const int eff = (k - 1) * dil + 1;
  if (same) {
    out = (in + stride - 1) / stride;
    const int total = std::max(0, (out - 1) * stride + eff - in);
    pad = total / 2;
  } else {
    out = (in - eff) / stride + 1;
    pad = 0;
  }
}

// Literal quadruple-loop 2D cross-correlation with explicit bounds checks.
inline std::vector<double> conv2d(const std::vector<double>& x, int cin, int h, int w,
                                  const std::vector<double>& k, int cout, int kh, int kw,
                                  const std::vector<double>* bias, int stride, int dil,
                                  bool same, int& ho, int& wo) {
  int pad_h = 0, pad_w = 0;
  axis_geom(h, kh, stride, dil, same, ho, pad_h);
  axis_geom(w, kw, stride, dil, same, wo, pad_w);
  std::vector<double> y(static_cast<std::size_t>(cout) * ho * wo, 0.0);
  for (int co = 0; co < cout; ++co) {
    for (int oy = 0; oy < ho; ++oy) {
      for (int ox = 0; ox < wo; ++ox) {
        double acc = bias ? (*bias)[static_cast<std::size_t>(co)] : 0.0;
        for (int ci = 0; ci < cin; ++ci) {
          for (int r = 0; r < kh; ++r) {
            for (int c = 0; c < kw; ++c) {
              const int iy = oy * stride + r * dil - pad_h;
              const int ix = ox * stride + c * dil - pad_w;
              if (iy < 0 || iy >= h || ix < 0 || ix >= w) continue;
              acc += x[(static_cast<std::size_t>(ci) * h + iy) * w + ix] *
                     k[((static_cast<std::size_t>(co) * cin + ci) * kh + r) * kw + c];
            }
          }
        }
        y[(static_cast<std::size_t>(co) * ho + oy) * wo + ox] = acc;
      }
    }
  }
  return y;
}

// Literal 3D cross-correlation; unit strides, spatial-only dilation,
// spatial padding always centered, temporal padding optional.
inline std::vector<double> conv3d(const std::vector<double>& x, int cin, int t, int h, int w,
                                  const std::vector<double>& k, int cout, int kt, int kh, int kw,
                                  const std::vector<double>* bias, int dil, bool temporal_same,
                                  int& to, int& ho, int& wo) {
  int pad_t = 0, pad_h = 0, pad_w = 0;
  axis_geom(t, kt, 1, 1, temporal_same, to, pad_t);
  axis_geom(h, kh, 1, dil, true, ho, pad_h);
  axis_geom(w, kw, 1, dil, true, wo, pad_w);
  std::vector<double> y(static_cast<std::size_t>(cout) * to * ho * wo, 0.0);
  for (int co = 0; co < cout; ++co) {
    for (int ot = 0; ot < to; ++ot) {
      for (int oy = 0; oy < ho; ++oy) {
        for (int ox = 0; ox < wo; ++ox) {
          double acc = bias ? (*bias)[static_cast<std::size_t>(co)] : 0.0;
          for (int ci = 0; ci < cin; ++ci) {
            for (int rt = 0; rt < kt; ++rt) {
              for (int r = 0; r < kh; ++r) {
                for (int c = 0; c < kw; ++c) {
                  const int it = ot + rt - pad_t;
                  const int iy = oy + r * dil - pad_h;
                  const int ix = ox + c * dil - pad_w;
                  if (it < 0 || it >= t || iy < 0 || iy >= h || ix < 0 || ix >= w) continue;
                  acc += x[((static_cast<std::size_t>(ci) * t + it) * h + iy) * w + ix] *
                         k[(((static_cast<std::size_t>(co) * cin + ci) * kt + rt) * kh + r) * kw + c];
                }
              }
            }
          }
          y[((static_cast<std::size_t>(co) * to + ot) * ho + oy) * wo + ox] = acc;
        }
      }
    }
  }
  return y;
}

// Central finite differences of a scalar functional with a magnitude-scaled
// step. The functional must re-run the whole forward pass on every call.
inline std::vector<double> finite_diff(seqseg::Tensor& x, const std::function<double()>& f,
                                       double base_step = 1e-5) {
  std::vector<double> grad(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = x.data()[i];
    const double h = base_step * std::max(1.0, std::abs(orig));
    x.data()[i] = orig + h;
    const double fp = f();
    x.data()[i] = orig - h;
    const double fm = f();
    x.data()[i] = orig;
    grad[i] = (fp - fm) / (2.0 * h);
  }
  return grad;
}

inline double rel_err(double a, double b) {
  return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)});
}

inline double max_rel_err(const std::vector<double>& a, const std::vector<double>& b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, rel_err(a[i], b[i]));
  return worst;
}

// Connected components by iterative minimum-label propagation: every pixel
// of the class starts as its own label and repeatedly adopts the smallest
// label among its 8 neighbours until nothing changes.
inline std::vector<std::vector<int>> flood_components(const seqseg::ClassMask& mask,
                                                      std::uint8_t cls) {
  const int h = mask.height, w = mask.width;
  std::vector<int> label(mask.size(), -1);
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (mask.values[i] == cls) label[i] = static_cast<int>(i);
  }
  bool changed = true;
  while (changed) {
    changed = false;
    for (int r = 0; r < h; ++r) {
      for (int c = 0; c < w; ++c) {
        const int p = r * w + c;
        if (label[static_cast<std::size_t>(p)] < 0) continue;
        for (int dr = -1; dr <= 1; ++dr) {
          for (int dc = -1; dc <= 1; ++dc) {
            const int nr = r + dr, nc = c + dc;
            if (nr < 0 || nr >= h || nc < 0 || nc >= w) continue;
            const int np = nr * w + nc;
            if (label[static_cast<std::size_t>(np)] >= 0 &&
                label[static_cast<std::size_t>(np)] < label[static_cast<std::size_t>(p)]) {
              label[static_cast<std::size_t>(p)] = label[static_cast<std::size_t>(np)];
              changed = true;
            }
          }
        }
      }
    }
  }
  std::vector<std::vector<int>> comps;
  std::vector<int> roots;
  for (std::size_t i = 0; i < label.size(); ++i) {
    if (label[i] < 0) continue;
    auto it = std::find(roots.begin(), roots.end(), label[i]);
    std::size_t idx;
    if (it == roots.end()) {
      roots.push_back(label[i]);
      comps.emplace_back();
      idx = comps.size() - 1;
    } else {
      idx = static_cast<std::size_t>(it - roots.begin());
    }
    comps[idx].push_back(static_cast<int>(i));
  }
  for (auto& c : comps) std::sort(c.begin(), c.end());
  return comps;
}

}  // namespace oracles
