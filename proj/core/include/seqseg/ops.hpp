#pragma once

#include <array>
#include <vector>

#include "seqseg/mask.hpp"
#include "seqseg/rng.hpp"
#include "seqseg/tensor.hpp"

namespace seqseg {

enum class Padding { Same, Valid };
enum class Mode { Train, Eval };

// Output extent and low-side padding for one convolution axis. Same padding
// follows the ceil convention: out = ceil(in / stride), with any odd total
// padding placed on the high side.
struct AxisGeom {
  int out = 0;
  int pad = 0;
};
AxisGeom conv_axis_geom(int in, int kernel, int stride, int dilation, Padding padding);

/// 2D cross-correlation. input [C_in,H,W], kernels [C_out,C_in,kh,kw],
/// optional bias [C_out] (pass a default-constructed Tensor for none).
/// Same padding requires odd kernel extents.
Tensor conv2d(const Tensor& input, const Tensor& kernels, const Tensor& bias,
              int stride, int dilation, Padding padding);

/// 3D cross-correlation over [C_in,T,H,W] with kernels
/// [C_out,C_in,kt,kh,kw]. Unit strides; dilation applies to the spatial
/// axes only. Spatial padding is always same; the time axis is padded
/// per `temporal_padding` (valid requires kt <= T).
Tensor conv3d(const Tensor& input, const Tensor& kernels, const Tensor& bias,
              int spatial_dilation, Padding temporal_padding);

/// Strided transposed 2D convolution (adjoint of the matching strided
/// conv2d). input [C_in,H,W], kernels [C_in,C_out,kh,kw], output
/// [C_out,(H-1)*stride+kh,(W-1)*stride+kw]; with the 2x2/stride-2
/// configuration this is an exact doubling of the spatial extents.
Tensor transposed_conv2d(const Tensor& input, const Tensor& kernels,
                         const Tensor& bias, int stride);

/// Elementwise max(0,x). Subgradient at 0 is taken as 0.
Tensor relu(const Tensor& input);

/// Normalizes per feature map (axis 0) over all remaining axes, so a
/// [C,T,H,W] volume is normalized jointly across time. Train mode uses the
/// current statistics and folds them into the running buffers; eval mode
/// applies the running statistics. Variance is always regularized by
/// epsilon, so constant inputs normalize to zero instead of dividing by 0.
Tensor batch_norm(const Tensor& input, const Tensor& gamma, const Tensor& beta,
                  Tensor& running_mean, Tensor& running_var, Mode mode,
                  double momentum = 0.1, double epsilon = 1e-5);

/// Inverted dropout: train mode zeroes each element with probability `rate`
/// and scales survivors by 1/(1-rate); eval mode (and rate 0) is the
/// identity, returning the input tensor itself.
Tensor dropout(const Tensor& input, double rate, Mode mode, Rng& rng);

/// Softmax along axis 0.
Tensor softmax(const Tensor& logits);

/// Mean over pixels of w[label] * -log softmax(logits)[label].
/// logits [3,H,W], labels values in {0,1,2}.
Tensor softmax_cross_entropy(const Tensor& logits, const ClassMask& labels,
                             const std::array<double, 3>& class_weights);

/// Concatenation along the feature axis (axis 0).
Tensor concat(const std::vector<Tensor>& inputs);

/// S tensors [C,H,W] -> [C,S,H,W], frame index becoming the time axis.
Tensor stack_time(const std::vector<Tensor>& frames);

Tensor sum(const Tensor& input);
Tensor add(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& input, double factor);

/// Same data, new shape (element counts must agree).
Tensor reshape(const Tensor& input, Shape shape);

/// Zero-mean normal draws with variance 2/fan_in.
Tensor he_init(Shape shape, int fan_in, Rng& rng, bool requires_grad = true);

}  // namespace seqseg
