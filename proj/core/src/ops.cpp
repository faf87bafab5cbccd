#include "seqseg/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <memory>
#include <stdexcept>

namespace seqseg {
namespace {

// Index ranges keeping convolution reads in bounds. Each output element is
// written by exactly one loop iteration (and one OpenMP thread), so results
// are bit-identical for any thread count.
inline int out_lo(int pad, int koff, int stride) {
  const int a = pad - koff;
  return a <= 0 ? 0 : (a + stride - 1) / stride;
}
inline int out_hi(int pad, int koff, int stride, int in, int out) {
  const int a = in - 1 + pad - koff;
  if (a < 0) return 0;
  return std::min(out, a / stride + 1);
}

void conv2d_fwd(const double* x, int cin, int h, int w, const double* k,
                int cout, int kh, int kw, const double* bias, int stride,
                int dil, int pad_h, int pad_w, double* y, int ho, int wo) {
#pragma omp parallel for schedule(static)
  for (int co = 0; co < cout; ++co) {
    double* yc = y + static_cast<std::size_t>(co) * ho * wo;
    std::fill(yc, yc + static_cast<std::size_t>(ho) * wo, bias ? bias[co] : 0.0);
    for (int ci = 0; ci < cin; ++ci) {
      const double* xc = x + static_cast<std::size_t>(ci) * h * w;
      const double* kc = k + (static_cast<std::size_t>(co) * cin + ci) * kh * kw;
      for (int r = 0; r < kh; ++r) {
        const int ro0 = out_lo(pad_h, r * dil, stride);
        const int ro1 = out_hi(pad_h, r * dil, stride, h, ho);
        for (int c = 0; c < kw; ++c) {
          const double wv = kc[r * kw + c];
          const int co0 = out_lo(pad_w, c * dil, stride);
          const int co1 = out_hi(pad_w, c * dil, stride, w, wo);
          const int n = co1 - co0;
          if (n <= 0) continue;
          for (int orow = ro0; orow < ro1; ++orow) {
            const int irow = orow * stride + r * dil - pad_h;
            const double* xr = xc + static_cast<std::size_t>(irow) * w +
                               (co0 * stride + c * dil - pad_w);
            double* yr = yc + static_cast<std::size_t>(orow) * wo + co0;
            if (stride == 1) {
              for (int i = 0; i < n; ++i) yr[i] += wv * xr[i];
            } else {
              for (int i = 0; i < n; ++i) yr[i] += wv * xr[static_cast<std::size_t>(i) * stride];
            }
          }
        }
      }
    }
  }
}

void conv2d_bwd_data(const double* gy, int cout, int ho, int wo,
                     const double* k, int cin, int kh, int kw, int stride,
                     int dil, int pad_h, int pad_w, double* gx, int h, int w) {
#pragma omp parallel for schedule(static)
  for (int ci = 0; ci < cin; ++ci) {
    double* gxc = gx + static_cast<std::size_t>(ci) * h * w;
    for (int co = 0; co < cout; ++co) {
      const double* gyc = gy + static_cast<std::size_t>(co) * ho * wo;
      const double* kc = k + (static_cast<std::size_t>(co) * cin + ci) * kh * kw;
      for (int r = 0; r < kh; ++r) {
        const int ro0 = out_lo(pad_h, r * dil, stride);
        const int ro1 = out_hi(pad_h, r * dil, stride, h, ho);
        for (int c = 0; c < kw; ++c) {
          const double wv = kc[r * kw + c];
          const int co0 = out_lo(pad_w, c * dil, stride);
          const int co1 = out_hi(pad_w, c * dil, stride, w, wo);
          const int n = co1 - co0;
          if (n <= 0) continue;
          for (int orow = ro0; orow < ro1; ++orow) {
            const int irow = orow * stride + r * dil - pad_h;
            double* gxr = gxc + static_cast<std::size_t>(irow) * w +
                          (co0 * stride + c * dil - pad_w);
            const double* gyr = gyc + static_cast<std::size_t>(orow) * wo + co0;
            if (stride == 1) {
              for (int i = 0; i < n; ++i) gxr[i] += wv * gyr[i];
            } else {
              for (int i = 0; i < n; ++i) gxr[static_cast<std::size_t>(i) * stride] += wv * gyr[i];
            }
          }
        }
      }
    }
  }
}

void conv2d_bwd_weights(const double* gy, const double* x, int cout, int cin,
                        int kh, int kw, int h, int w, int ho, int wo,
                        int stride, int dil, int pad_h, int pad_w, double* gk) {
#pragma omp parallel for schedule(static)
  for (int co = 0; co < cout; ++co) {
    const double* gyc = gy + static_cast<std::size_t>(co) * ho * wo;
    for (int ci = 0; ci < cin; ++ci) {
      const double* xc = x + static_cast<std::size_t>(ci) * h * w;
      double* gkc = gk + (static_cast<std::size_t>(co) * cin + ci) * kh * kw;
      for (int r = 0; r < kh; ++r) {
        const int ro0 = out_lo(pad_h, r * dil, stride);
        const int ro1 = out_hi(pad_h, r * dil, stride, h, ho);
        for (int c = 0; c < kw; ++c) {
          const int co0 = out_lo(pad_w, c * dil, stride);
          const int co1 = out_hi(pad_w, c * dil, stride, w, wo);
          const int n = co1 - co0;
          if (n <= 0) continue;
          double acc = 0.0;
          for (int orow = ro0; orow < ro1; ++orow) {
            const int irow = orow * stride + r * dil - pad_h;
            const double* xr = xc + static_cast<std::size_t>(irow) * w +
                               (co0 * stride + c * dil - pad_w);
            const double* gyr = gyc + static_cast<std::size_t>(orow) * wo + co0;
            if (stride == 1) {
              for (int i = 0; i < n; ++i) acc += xr[i] * gyr[i];
            } else {
              for (int i = 0; i < n; ++i) acc += xr[static_cast<std::size_t>(i) * stride] * gyr[i];
            }
          }
          gkc[r * kw + c] += acc;
        }
      }
    }
  }
}

void conv3d_fwd(const double* x, int cin, int t, int h, int w, const double* k,
                int cout, int kt, int kh, int kw, const double* bias, int dil,
                int pad_t, int pad_h, int pad_w, double* y, int to, int ho, int wo) {
#pragma omp parallel for schedule(static)
  for (int co = 0; co < cout; ++co) {
    double* yc = y + static_cast<std::size_t>(co) * to * ho * wo;
    std::fill(yc, yc + static_cast<std::size_t>(to) * ho * wo, bias ? bias[co] : 0.0);
    for (int ci = 0; ci < cin; ++ci) {
      const double* xc = x + static_cast<std::size_t>(ci) * t * h * w;
      for (int rt = 0; rt < kt; ++rt) {
        const int to0 = out_lo(pad_t, rt, 1);
        const int to1 = out_hi(pad_t, rt, 1, t, to);
        for (int r = 0; r < kh; ++r) {
          const int ro0 = out_lo(pad_h, r * dil, 1);
          const int ro1 = out_hi(pad_h, r * dil, 1, h, ho);
          for (int c = 0; c < kw; ++c) {
            const double wv = k[(((static_cast<std::size_t>(co) * cin + ci) * kt + rt) * kh + r) * kw + c];
            const int co0 = out_lo(pad_w, c * dil, 1);
            const int co1 = out_hi(pad_w, c * dil, 1, w, wo);
            const int n = co1 - co0;
            if (n <= 0) continue;
            for (int ot = to0; ot < to1; ++ot) {
              const int it = ot + rt - pad_t;
              for (int orow = ro0; orow < ro1; ++orow) {
                const int irow = orow + r * dil - pad_h;
                const double* xr = xc + (static_cast<std::size_t>(it) * h + irow) * w +
                                   (co0 + c * dil - pad_w);
                double* yr = yc + (static_cast<std::size_t>(ot) * ho + orow) * wo + co0;
                for (int i = 0; i < n; ++i) yr[i] += wv * xr[i];
              }
            }
          }
        }
      }
    }
  }
}

void conv3d_bwd_data(const double* gy, int cout, int to, int ho, int wo,
                     const double* k, int cin, int kt, int kh, int kw, int dil,
                     int pad_t, int pad_h, int pad_w, double* gx, int t, int h, int w) {
#pragma omp parallel for schedule(static)
  for (int ci = 0; ci < cin; ++ci) {
    double* gxc = gx + static_cast<std::size_t>(ci) * t * h * w;
    for (int co = 0; co < cout; ++co) {
      const double* gyc = gy + static_cast<std::size_t>(co) * to * ho * wo;
      for (int rt = 0; rt < kt; ++rt) {
        const int to0 = out_lo(pad_t, rt, 1);
        const int to1 = out_hi(pad_t, rt, 1, t, to);
        for (int r = 0; r < kh; ++r) {
          const int ro0 = out_lo(pad_h, r * dil, 1);
          const int ro1 = out_hi(pad_h, r * dil, 1, h, ho);
          for (int c = 0; c < kw; ++c) {
            const double wv = k[(((static_cast<std::size_t>(co) * cin + ci) * kt + rt) * kh + r) * kw + c];
            const int co0 = out_lo(pad_w, c * dil, 1);
            const int co1 = out_hi(pad_w, c * dil, 1, w, wo);
            const int n = co1 - co0;
            if (n <= 0) continue;
            for (int ot = to0; ot < to1; ++ot) {
              const int it = ot + rt - pad_t;
              for (int orow = ro0; orow < ro1; ++orow) {
                const int irow = orow + r * dil - pad_h;
                double* gxr = gxc + (static_cast<std::size_t>(it) * h + irow) * w +
                              (co0 + c * dil - pad_w);
                const double* gyr = gyc + (static_cast<std::size_t>(ot) * ho + orow) * wo + co0;
                for (int i = 0; i < n; ++i) gxr[i] += wv * gyr[i];
              }
            }
          }
        }
      }
    }
  }
}

void conv3d_bwd_weights(const double* gy, const double* x, int cout, int cin,
                        int kt, int kh, int kw, int t, int h, int w, int to,
                        int ho, int wo, int dil, int pad_t, int pad_h,
                        int pad_w, double* gk) {
#pragma omp parallel for schedule(static)
  for (int co = 0; co < cout; ++co) {
    const double* gyc = gy + static_cast<std::size_t>(co) * to * ho * wo;
    for (int ci = 0; ci < cin; ++ci) {
      const double* xc = x + static_cast<std::size_t>(ci) * t * h * w;
      for (int rt = 0; rt < kt; ++rt) {
        const int to0 = out_lo(pad_t, rt, 1);
        const int to1 = out_hi(pad_t, rt, 1, t, to);
        for (int r = 0; r < kh; ++r) {
          const int ro0 = out_lo(pad_h, r * dil, 1);
          const int ro1 = out_hi(pad_h, r * dil, 1, h, ho);
          for (int c = 0; c < kw; ++c) {
            const int co0 = out_lo(pad_w, c * dil, 1);
            const int co1 = out_hi(pad_w, c * dil, 1, w, wo);
            const int n = co1 - co0;
            if (n <= 0) continue;
            double acc = 0.0;
            for (int ot = to0; ot < to1; ++ot) {
              const int it = ot + rt - pad_t;
              for (int orow = ro0; orow < ro1; ++orow) {
                const int irow = orow + r * dil - pad_h;
                const double* xr = xc + (static_cast<std::size_t>(it) * h + irow) * w +
                                   (co0 + c * dil - pad_w);
                const double* gyr = gyc + (static_cast<std::size_t>(ot) * ho + orow) * wo + co0;
                for (int i = 0; i < n; ++i) acc += xr[i] * gyr[i];
              }
            }
            gk[(((static_cast<std::size_t>(co) * cin + ci) * kt + rt) * kh + r) * kw + c] += acc;
          }
        }
      }
    }
  }
}

bool wants_grad(const Tensor& t) { return t.defined() && t.requires_grad(); }

void check_bias(const Tensor& bias, int cout, const char* op) {
  if (!bias.defined()) return;
  if (bias.ndim() != 1 || bias.dim(0) != cout) {
    throw std::invalid_argument(std::string(op) + ": bias shape " + shape_str(bias.shape()) +
                                " does not match " + std::to_string(cout) + " output maps");
  }
}

}  // namespace

AxisGeom conv_axis_geom(int in, int kernel, int stride, int dilation, Padding padding) {
  const int eff = (kernel - 1) * dilation + 1;
  if (padding == Padding::Valid) {
    if (in < eff) {
      throw std::invalid_argument("valid padding: input extent " + std::to_string(in) +
                                  " smaller than effective kernel " + std::to_string(eff));
    }
    return {(in - eff) / stride + 1, 0};
  }
  const int out = (in + stride - 1) / stride;
  const int total = std::max(0, (out - 1) * stride + eff - in);
  return {out, total / 2};
}

Tensor conv2d(const Tensor& input, const Tensor& kernels, const Tensor& bias,
              int stride, int dilation, Padding padding) {
  if (input.ndim() != 3) throw std::invalid_argument("conv2d: input must be [C,H,W], got " + shape_str(input.shape()));
  if (kernels.ndim() != 4) throw std::invalid_argument("conv2d: kernels must be [C_out,C_in,kh,kw], got " + shape_str(kernels.shape()));
  if (kernels.dim(1) != input.dim(0)) {
    throw std::invalid_argument("conv2d: input has " + std::to_string(input.dim(0)) +
                                " channels but kernels expect " + std::to_string(kernels.dim(1)));
  }
  if (stride < 1 || dilation < 1) throw std::invalid_argument("conv2d: stride and dilation must be >= 1");
  const int cin = input.dim(0), h = input.dim(1), w = input.dim(2);
  const int cout = kernels.dim(0), kh = kernels.dim(2), kw = kernels.dim(3);
  if (padding == Padding::Same && (kh % 2 == 0 || kw % 2 == 0)) {
    throw std::invalid_argument("conv2d: same padding requires odd kernel extents");
  }
  check_bias(bias, cout, "conv2d");

  const AxisGeom gh = conv_axis_geom(h, kh, stride, dilation, padding);
  const AxisGeom gw = conv_axis_geom(w, kw, stride, dilation, padding);
  std::vector<double> out(static_cast<std::size_t>(cout) * gh.out * gw.out);
  conv2d_fwd(input.data().data(), cin, h, w, kernels.data().data(), cout, kh, kw,
             bias.defined() ? bias.data().data() : nullptr, stride, dilation,
             gh.pad, gw.pad, out.data(), gh.out, gw.out);

  std::vector<Tensor> parents{input, kernels};
  if (bias.defined()) parents.push_back(bias);
  return Tensor::make_op_result(
      {cout, gh.out, gw.out}, std::move(out), std::move(parents),
      [=](Tensor::Node& node) {
        const double* gy = node.grad.data();
        if (wants_grad(input)) {
          conv2d_bwd_data(gy, cout, gh.out, gw.out, kernels.data().data(), cin, kh, kw,
                          stride, dilation, gh.pad, gw.pad,
                          const_cast<Tensor&>(input).grad().data(), h, w);
        }
        if (wants_grad(kernels)) {
          conv2d_bwd_weights(gy, input.data().data(), cout, cin, kh, kw, h, w, gh.out,
                             gw.out, stride, dilation, gh.pad, gw.pad,
                             const_cast<Tensor&>(kernels).grad().data());
        }
        if (bias.defined() && wants_grad(bias)) {
          double* gb = const_cast<Tensor&>(bias).grad().data();
          const std::size_t plane = static_cast<std::size_t>(gh.out) * gw.out;
          for (int co = 0; co < cout; ++co) {
            double acc = 0.0;
            for (std::size_t i = 0; i < plane; ++i) acc += gy[co * plane + i];
            gb[co] += acc;
          }
        }
      });
}

Tensor conv3d(const Tensor& input, const Tensor& kernels, const Tensor& bias,
              int spatial_dilation, Padding temporal_padding) {
  if (input.ndim() != 4) throw std::invalid_argument("conv3d: input must be [C,T,H,W], got " + shape_str(input.shape()));
  if (kernels.ndim() != 5) throw std::invalid_argument("conv3d: kernels must be [C_out,C_in,kt,kh,kw], got " + shape_str(kernels.shape()));
  if (kernels.dim(1) != input.dim(0)) {
    throw std::invalid_argument("conv3d: input has " + std::to_string(input.dim(0)) +
                                " channels but kernels expect " + std::to_string(kernels.dim(1)));
  }
  if (spatial_dilation < 1) throw std::invalid_argument("conv3d: dilation must be >= 1");
  const int cin = input.dim(0), t = input.dim(1), h = input.dim(2), w = input.dim(3);
  const int cout = kernels.dim(0), kt = kernels.dim(2), kh = kernels.dim(3), kw = kernels.dim(4);
  if (kh % 2 == 0 || kw % 2 == 0) {
    throw std::invalid_argument("conv3d: spatial kernel extents must be odd (same padding)");
  }
  if (temporal_padding == Padding::Valid && kt > t) {
    throw std::invalid_argument("conv3d: temporal kernel " + std::to_string(kt) +
                                " exceeds sequence extent " + std::to_string(t) +
                                " under valid padding");
  }
  check_bias(bias, cout, "conv3d");

  const AxisGeom gt = conv_axis_geom(t, kt, 1, 1, temporal_padding);
  const AxisGeom gh = conv_axis_geom(h, kh, 1, spatial_dilation, Padding::Same);
  const AxisGeom gw = conv_axis_geom(w, kw, 1, spatial_dilation, Padding::Same);
  std::vector<double> out(static_cast<std::size_t>(cout) * gt.out * gh.out * gw.out);
  conv3d_fwd(input.data().data(), cin, t, h, w, kernels.data().data(), cout, kt, kh, kw,
             bias.defined() ? bias.data().data() : nullptr, spatial_dilation,
             gt.pad, gh.pad, gw.pad, out.data(), gt.out, gh.out, gw.out);

  std::vector<Tensor> parents{input, kernels};
  if (bias.defined()) parents.push_back(bias);
  const int dil = spatial_dilation;
  return Tensor::make_op_result(
      {cout, gt.out, gh.out, gw.out}, std::move(out), std::move(parents),
      [=](Tensor::Node& node) {
        const double* gy = node.grad.data();
        if (wants_grad(input)) {
          conv3d_bwd_data(gy, cout, gt.out, gh.out, gw.out, kernels.data().data(), cin,
                          kt, kh, kw, dil, gt.pad, gh.pad, gw.pad,
                          const_cast<Tensor&>(input).grad().data(), t, h, w);
        }
        if (wants_grad(kernels)) {
          conv3d_bwd_weights(gy, input.data().data(), cout, cin, kt, kh, kw, t, h, w,
                             gt.out, gh.out, gw.out, dil, gt.pad, gh.pad, gw.pad,
                             const_cast<Tensor&>(kernels).grad().data());
        }
        if (bias.defined() && wants_grad(bias)) {
          double* gb = const_cast<Tensor&>(bias).grad().data();
          const std::size_t vol = static_cast<std::size_t>(gt.out) * gh.out * gw.out;
          for (int co = 0; co < cout; ++co) {
            double acc = 0.0;
            for (std::size_t i = 0; i < vol; ++i) acc += gy[co * vol + i];
            gb[co] += acc;
          }
        }
      });
}

Tensor transposed_conv2d(const Tensor& input, const Tensor& kernels,
                         const Tensor& bias, int stride) {
  if (input.ndim() != 3) throw std::invalid_argument("transposed_conv2d: input must be [C,H,W]");
  if (kernels.ndim() != 4) throw std::invalid_argument("transposed_conv2d: kernels must be [C_in,C_out,kh,kw]");
  if (kernels.dim(0) != input.dim(0)) {
    throw std::invalid_argument("transposed_conv2d: input has " + std::to_string(input.dim(0)) +
                                " channels but kernels expect " + std::to_string(kernels.dim(0)));
  }
  if (stride < 1) throw std::invalid_argument("transposed_conv2d: stride must be >= 1");
  const int cin = input.dim(0), h = input.dim(1), w = input.dim(2);
  const int cout = kernels.dim(1), kh = kernels.dim(2), kw = kernels.dim(3);
  const int ho = (h - 1) * stride + kh;
  const int wo = (w - 1) * stride + kw;
  check_bias(bias, cout, "transposed_conv2d");

  std::vector<double> out(static_cast<std::size_t>(cout) * ho * wo);
  {
    const double* x = input.data().data();
    const double* k = kernels.data().data();
    const double* b = bias.defined() ? bias.data().data() : nullptr;
    double* y = out.data();
#pragma omp parallel for schedule(static)
    for (int co = 0; co < cout; ++co) {
      double* yc = y + static_cast<std::size_t>(co) * ho * wo;
      std::fill(yc, yc + static_cast<std::size_t>(ho) * wo, b ? b[co] : 0.0);
      for (int ci = 0; ci < cin; ++ci) {
        const double* xc = x + static_cast<std::size_t>(ci) * h * w;
        const double* kc = k + (static_cast<std::size_t>(ci) * cout + co) * kh * kw;
        for (int r = 0; r < kh; ++r) {
          for (int c = 0; c < kw; ++c) {
            const double wv = kc[r * kw + c];
            for (int ih = 0; ih < h; ++ih) {
              const double* xr = xc + static_cast<std::size_t>(ih) * w;
              double* yr = yc + static_cast<std::size_t>(ih * stride + r) * wo + c;
              for (int iw = 0; iw < w; ++iw) yr[static_cast<std::size_t>(iw) * stride] += wv * xr[iw];
            }
          }
        }
      }
    }
  }

  std::vector<Tensor> parents{input, kernels};
  if (bias.defined()) parents.push_back(bias);
  return Tensor::make_op_result(
      {cout, ho, wo}, std::move(out), std::move(parents),
      [=](Tensor::Node& node) {
        const double* gy = node.grad.data();
        const double* k = kernels.data().data();
        if (wants_grad(input)) {
          double* gx = const_cast<Tensor&>(input).grad().data();
#pragma omp parallel for schedule(static)
          for (int ci = 0; ci < cin; ++ci) {
            double* gxc = gx + static_cast<std::size_t>(ci) * h * w;
            for (int co = 0; co < cout; ++co) {
              const double* gyc = gy + static_cast<std::size_t>(co) * ho * wo;
              const double* kc = k + (static_cast<std::size_t>(ci) * cout + co) * kh * kw;
              for (int r = 0; r < kh; ++r) {
                for (int c = 0; c < kw; ++c) {
                  const double wv = kc[r * kw + c];
                  for (int ih = 0; ih < h; ++ih) {
                    const double* gyr = gyc + static_cast<std::size_t>(ih * stride + r) * wo + c;
                    double* gxr = gxc + static_cast<std::size_t>(ih) * w;
                    for (int iw = 0; iw < w; ++iw) gxr[iw] += wv * gyr[static_cast<std::size_t>(iw) * stride];
                  }
                }
              }
            }
          }
        }
        if (wants_grad(kernels)) {
          double* gk = const_cast<Tensor&>(kernels).grad().data();
          const double* x = input.data().data();
#pragma omp parallel for schedule(static)
          for (int ci = 0; ci < cin; ++ci) {
            const double* xc = x + static_cast<std::size_t>(ci) * h * w;
            for (int co = 0; co < cout; ++co) {
              const double* gyc = gy + static_cast<std::size_t>(co) * ho * wo;
              double* gkc = gk + (static_cast<std::size_t>(ci) * cout + co) * kh * kw;
              for (int r = 0; r < kh; ++r) {
                for (int c = 0; c < kw; ++c) {
                  double acc = 0.0;
                  for (int ih = 0; ih < h; ++ih) {
                    const double* xr = xc + static_cast<std::size_t>(ih) * w;
                    const double* gyr = gyc + static_cast<std::size_t>(ih * stride + r) * wo + c;
                    for (int iw = 0; iw < w; ++iw) acc += xr[iw] * gyr[static_cast<std::size_t>(iw) * stride];
                  }
                  gkc[r * kw + c] += acc;
                }
              }
            }
          }
        }
        if (bias.defined() && wants_grad(bias)) {
          double* gb = const_cast<Tensor&>(bias).grad().data();
          const std::size_t plane = static_cast<std::size_t>(ho) * wo;
          for (int co = 0; co < cout; ++co) {
            double acc = 0.0;
            for (std::size_t i = 0; i < plane; ++i) acc += gy[co * plane + i];
            gb[co] += acc;
          }
        }
      });
}

Tensor relu(const Tensor& input) {
  std::vector<double> out(input.size());
  const auto& x = input.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] > 0.0 ? x[i] : 0.0;
  return Tensor::make_op_result(
      input.shape(), std::move(out), {input}, [input](Tensor::Node& node) {
        if (!wants_grad(input)) return;
        double* gx = const_cast<Tensor&>(input).grad().data();
        const double* x = input.data().data();
        const double* gy = node.grad.data();
        for (std::size_t i = 0; i < node.numel(); ++i) {
          if (x[i] > 0.0) gx[i] += gy[i];
        }
      });
}

Tensor batch_norm(const Tensor& input, const Tensor& gamma, const Tensor& beta,
                  Tensor& running_mean, Tensor& running_var, Mode mode,
                  double momentum, double epsilon) {
  if (input.ndim() < 2) throw std::invalid_argument("batch_norm: input must have a feature axis plus data axes");
  const int cn = input.dim(0);
  const std::size_t m = input.size() / static_cast<std::size_t>(cn);
  auto check_vec = [&](const Tensor& v, const char* name) {
    if (v.ndim() != 1 || v.dim(0) != cn) {
      throw std::invalid_argument(std::string("batch_norm: ") + name + " must be [" +
                                  std::to_string(cn) + "], got " + shape_str(v.shape()));
    }
  };
  check_vec(gamma, "gamma");
  check_vec(beta, "beta");
  check_vec(running_mean, "running_mean");
  check_vec(running_var, "running_var");
  if (m == 0) throw std::invalid_argument("batch_norm: empty input");

  auto mean = std::make_shared<std::vector<double>>(cn);
  auto invstd = std::make_shared<std::vector<double>>(cn);
  const double* x = input.data().data();
  if (mode == Mode::Train) {
    for (int c = 0; c < cn; ++c) {
      const double* xc = x + c * m;
      double s = 0.0;
      for (std::size_t i = 0; i < m; ++i) s += xc[i];
      const double mu = s / static_cast<double>(m);
      double v = 0.0;
      for (std::size_t i = 0; i < m; ++i) {
        const double d = xc[i] - mu;
        v += d * d;
      }
      v /= static_cast<double>(m);
      (*mean)[c] = mu;
      (*invstd)[c] = 1.0 / std::sqrt(v + epsilon);
      running_mean.data()[c] = (1.0 - momentum) * running_mean.data()[c] + momentum * mu;
      running_var.data()[c] = (1.0 - momentum) * running_var.data()[c] + momentum * v;
    }
  } else {
    for (int c = 0; c < cn; ++c) {
      (*mean)[c] = running_mean.data()[c];
      (*invstd)[c] = 1.0 / std::sqrt(running_var.data()[c] + epsilon);
    }
  }

  std::vector<double> out(input.size());
  for (int c = 0; c < cn; ++c) {
    const double mu = (*mean)[c], is = (*invstd)[c];
    const double g = gamma.data()[c], b = beta.data()[c];
    const double* xc = x + c * m;
    double* yc = out.data() + c * m;
    for (std::size_t i = 0; i < m; ++i) yc[i] = g * (xc[i] - mu) * is + b;
  }

  return Tensor::make_op_result(
      input.shape(), std::move(out), {input, gamma, beta},
      [input, gamma, beta, mean, invstd, mode, cn, m](Tensor::Node& node) {
        const double* gy = node.grad.data();
        const double* x = input.data().data();
        for (int c = 0; c < cn; ++c) {
          const double mu = (*mean)[c], is = (*invstd)[c];
          const double g = gamma.data()[c];
          const double* xc = x + c * m;
          const double* gyc = gy + c * m;
          double sum_gy = 0.0, sum_gy_xhat = 0.0;
          for (std::size_t i = 0; i < m; ++i) {
            sum_gy += gyc[i];
            sum_gy_xhat += gyc[i] * (xc[i] - mu) * is;
          }
          if (wants_grad(beta)) const_cast<Tensor&>(beta).grad()[c] += sum_gy;
          if (wants_grad(gamma)) const_cast<Tensor&>(gamma).grad()[c] += sum_gy_xhat;
          if (wants_grad(input)) {
            double* gxc = const_cast<Tensor&>(input).grad().data() + c * m;
            if (mode == Mode::Train) {
              const double inv_m = 1.0 / static_cast<double>(m);
              for (std::size_t i = 0; i < m; ++i) {
                const double xhat = (xc[i] - mu) * is;
                gxc[i] += g * is * (gyc[i] - sum_gy * inv_m - xhat * sum_gy_xhat * inv_m);
              }
            } else {
              for (std::size_t i = 0; i < m; ++i) gxc[i] += gyc[i] * g * is;
            }
          }
        }
      });
}

Tensor dropout(const Tensor& input, double rate, Mode mode, Rng& rng) {
  if (rate < 0.0 || rate >= 1.0) {
    throw std::invalid_argument("dropout: rate must be in [0,1), got " + std::to_string(rate));
  }
  if (mode == Mode::Eval || rate == 0.0) return input;

  const double keep_scale = 1.0 / (1.0 - rate);
  auto mask = std::make_shared<std::vector<std::uint8_t>>(input.size());
  std::vector<double> out(input.size());
  const auto& x = input.data();
  for (std::size_t i = 0; i < out.size(); ++i) {
    const bool keep = rng.uniform() >= rate;
    (*mask)[i] = keep;
    out[i] = keep ? x[i] * keep_scale : 0.0;
  }
  return Tensor::make_op_result(
      input.shape(), std::move(out), {input},
      [input, mask, keep_scale](Tensor::Node& node) {
        if (!wants_grad(input)) return;
        double* gx = const_cast<Tensor&>(input).grad().data();
        const double* gy = node.grad.data();
        for (std::size_t i = 0; i < node.numel(); ++i) {
          if ((*mask)[i]) gx[i] += gy[i] * keep_scale;
        }
      });
}

Tensor softmax(const Tensor& logits) {
  if (logits.ndim() < 1) throw std::invalid_argument("softmax: scalar input");
  const int cn = logits.dim(0);
  const std::size_t p = logits.size() / static_cast<std::size_t>(cn);
  std::vector<double> out(logits.size());
  const double* x = logits.data().data();
  for (std::size_t i = 0; i < p; ++i) {
    double mx = x[i];
    for (int c = 1; c < cn; ++c) mx = std::max(mx, x[c * p + i]);
    double z = 0.0;
    for (int c = 0; c < cn; ++c) {
      const double e = std::exp(x[c * p + i] - mx);
      out[c * p + i] = e;
      z += e;
    }
    for (int c = 0; c < cn; ++c) out[c * p + i] /= z;
  }
  return Tensor::make_op_result(
      logits.shape(), std::move(out), {logits}, [logits, cn, p](Tensor::Node& node) {
        if (!wants_grad(logits)) return;
        double* gx = const_cast<Tensor&>(logits).grad().data();
        const double* y = node.data.data();
        const double* gy = node.grad.data();
        for (std::size_t i = 0; i < p; ++i) {
          double dot = 0.0;
          for (int c = 0; c < cn; ++c) dot += gy[c * p + i] * y[c * p + i];
          for (int c = 0; c < cn; ++c) gx[c * p + i] += y[c * p + i] * (gy[c * p + i] - dot);
        }
      });
}

Tensor softmax_cross_entropy(const Tensor& logits, const ClassMask& labels,
                             const std::array<double, 3>& class_weights) {
  if (logits.ndim() != 3 || logits.dim(0) != 3) {
    throw std::invalid_argument("softmax_cross_entropy: logits must be [3,H,W], got " + shape_str(logits.shape()));
  }
  if (logits.dim(1) != labels.height || logits.dim(2) != labels.width) {
    throw std::invalid_argument("softmax_cross_entropy: logits " + shape_str(logits.shape()) +
                                " do not match labels " + std::to_string(labels.height) + "x" +
                                std::to_string(labels.width));
  }
  for (double w : class_weights) {
    if (w <= 0.0) throw std::invalid_argument("softmax_cross_entropy: class weights must be positive");
  }
  const std::size_t p = labels.size();
  for (std::size_t i = 0; i < p; ++i) {
    if (labels.values[i] > 2) {
      throw std::invalid_argument("softmax_cross_entropy: label " + std::to_string(labels.values[i]) +
                                  " outside class range {0,1,2}");
    }
  }

  auto probs = std::make_shared<std::vector<double>>(3 * p);
  const double* x = logits.data().data();
  double loss = 0.0;
  for (std::size_t i = 0; i < p; ++i) {
    const double mx = std::max(x[i], std::max(x[p + i], x[2 * p + i]));
    double z = 0.0;
    for (int c = 0; c < 3; ++c) {
      const double e = std::exp(x[c * p + i] - mx);
      (*probs)[c * p + i] = e;
      z += e;
    }
    for (int c = 0; c < 3; ++c) (*probs)[c * p + i] /= z;
    const int y = labels.values[i];
    const double logp = (x[y * p + i] - mx) - std::log(z);
    loss -= class_weights[static_cast<std::size_t>(y)] * logp;
  }
  loss /= static_cast<double>(p);

  auto labels_copy = std::make_shared<ClassMask>(labels);
  return Tensor::make_op_result(
      {1}, {loss}, {logits},
      [logits, probs, labels_copy, class_weights, p](Tensor::Node& node) {
        if (!wants_grad(logits)) return;
        const double g = node.grad[0] / static_cast<double>(p);
        double* gx = const_cast<Tensor&>(logits).grad().data();
        for (std::size_t i = 0; i < p; ++i) {
          const int y = labels_copy->values[i];
          const double wy = class_weights[static_cast<std::size_t>(y)];
          for (int c = 0; c < 3; ++c) {
            const double delta = (c == y) ? 1.0 : 0.0;
            gx[c * p + i] += g * wy * ((*probs)[c * p + i] - delta);
          }
        }
      });
}

Tensor concat(const std::vector<Tensor>& inputs) {
  if (inputs.empty()) throw std::invalid_argument("concat: no inputs");
  const Shape& first = inputs.front().shape();
  int total = 0;
  for (const Tensor& t : inputs) {
    if (t.ndim() != static_cast<int>(first.size())) {
      throw std::invalid_argument("concat: rank mismatch");
    }
    for (int i = 1; i < t.ndim(); ++i) {
      if (t.dim(i) != first[static_cast<std::size_t>(i)]) {
        throw std::invalid_argument("concat: trailing dims mismatch: " + shape_str(t.shape()) +
                                    " vs " + shape_str(first));
      }
    }
    total += t.dim(0);
  }
  Shape out_shape = first;
  out_shape[0] = total;
  std::vector<double> out(shape_numel(out_shape));
  std::size_t off = 0;
  for (const Tensor& t : inputs) {
    std::memcpy(out.data() + off, t.data().data(), t.size() * sizeof(double));
    off += t.size();
  }
  return Tensor::make_op_result(
      std::move(out_shape), std::move(out), inputs, [inputs](Tensor::Node& node) {
        const double* gy = node.grad.data();
        std::size_t off = 0;
        for (const Tensor& t : inputs) {
          if (wants_grad(t)) {
            double* gx = const_cast<Tensor&>(t).grad().data();
            for (std::size_t i = 0; i < t.size(); ++i) gx[i] += gy[off + i];
          }
          off += t.size();
        }
      });
}

Tensor stack_time(const std::vector<Tensor>& frames) {
  if (frames.empty()) throw std::invalid_argument("stack_time: no frames");
  const Shape& fs = frames.front().shape();
  if (fs.size() != 3) throw std::invalid_argument("stack_time: frames must be [C,H,W]");
  for (const Tensor& f : frames) {
    if (!shape_eq(f.shape(), fs)) {
      throw std::invalid_argument("stack_time: frame shape " + shape_str(f.shape()) +
                                  " differs from " + shape_str(fs));
    }
  }
  const int s = static_cast<int>(frames.size());
  const int c = fs[0], h = fs[1], w = fs[2];
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  std::vector<double> out(static_cast<std::size_t>(c) * s * plane);
  for (int ci = 0; ci < c; ++ci) {
    for (int si = 0; si < s; ++si) {
      std::memcpy(out.data() + (static_cast<std::size_t>(ci) * s + si) * plane,
                  frames[static_cast<std::size_t>(si)].data().data() + ci * plane,
                  plane * sizeof(double));
    }
  }
  return Tensor::make_op_result(
      {c, s, h, w}, std::move(out), frames, [frames, c, s, plane](Tensor::Node& node) {
        const double* gy = node.grad.data();
        for (int si = 0; si < s; ++si) {
          const Tensor& f = frames[static_cast<std::size_t>(si)];
          if (!wants_grad(f)) continue;
          double* gx = const_cast<Tensor&>(f).grad().data();
          for (int ci = 0; ci < c; ++ci) {
            const double* g = gy + (static_cast<std::size_t>(ci) * s + si) * plane;
            double* dst = gx + ci * plane;
            for (std::size_t i = 0; i < plane; ++i) dst[i] += g[i];
          }
        }
      });
}

Tensor sum(const Tensor& input) {
  double acc = 0.0;
  for (double v : input.data()) acc += v;
  return Tensor::make_op_result({1}, {acc}, {input}, [input](Tensor::Node& node) {
    if (!wants_grad(input)) return;
    const double g = node.grad[0];
    double* gx = const_cast<Tensor&>(input).grad().data();
    for (std::size_t i = 0; i < input.size(); ++i) gx[i] += g;
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  if (!shape_eq(a.shape(), b.shape())) {
    throw std::invalid_argument("add: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i];
  return Tensor::make_op_result(a.shape(), std::move(out), {a, b}, [a, b](Tensor::Node& node) {
    const double* gy = node.grad.data();
    for (const Tensor* t : {&a, &b}) {
      if (!wants_grad(*t)) continue;
      double* gx = const_cast<Tensor*>(t)->grad().data();
      for (std::size_t i = 0; i < node.numel(); ++i) gx[i] += gy[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  if (!shape_eq(a.shape(), b.shape())) {
    throw std::invalid_argument("mul: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
  return Tensor::make_op_result(a.shape(), std::move(out), {a, b}, [a, b](Tensor::Node& node) {
    const double* gy = node.grad.data();
    if (wants_grad(a)) {
      double* gx = const_cast<Tensor&>(a).grad().data();
      for (std::size_t i = 0; i < node.numel(); ++i) gx[i] += gy[i] * b.data()[i];
    }
    if (wants_grad(b)) {
      double* gx = const_cast<Tensor&>(b).grad().data();
      for (std::size_t i = 0; i < node.numel(); ++i) gx[i] += gy[i] * a.data()[i];
    }
  });
}

Tensor scale(const Tensor& input, double factor) {
  std::vector<double> out(input.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = input.data()[i] * factor;
  return Tensor::make_op_result(input.shape(), std::move(out), {input},
                                [input, factor](Tensor::Node& node) {
                                  if (!wants_grad(input)) return;
                                  double* gx = const_cast<Tensor&>(input).grad().data();
                                  const double* gy = node.grad.data();
                                  for (std::size_t i = 0; i < node.numel(); ++i) gx[i] += gy[i] * factor;
                                });
}

Tensor reshape(const Tensor& input, Shape shape) {
  if (shape_numel(shape) != input.size()) {
    throw std::invalid_argument("reshape: " + shape_str(input.shape()) + " has " +
                                std::to_string(input.size()) + " elements, target " +
                                shape_str(shape) + " needs " + std::to_string(shape_numel(shape)));
  }
  std::vector<double> out = input.data();
  return Tensor::make_op_result(std::move(shape), std::move(out), {input},
                                [input](Tensor::Node& node) {
                                  if (!wants_grad(input)) return;
                                  double* gx = const_cast<Tensor&>(input).grad().data();
                                  const double* gy = node.grad.data();
                                  for (std::size_t i = 0; i < node.numel(); ++i) gx[i] += gy[i];
                                });
}

Tensor he_init(Shape shape, int fan_in, Rng& rng, bool requires_grad) {
  if (fan_in < 1) throw std::invalid_argument("he_init: fan_in must be >= 1");
  const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
  std::vector<double> data(shape_numel(shape));
  for (double& v : data) v = rng.normal() * stddev;
  return Tensor::from_data(std::move(shape), std::move(data), requires_grad);
}

}  // namespace seqseg
