#pragma once

#include <string>
#include <vector>

#include "seqseg/ops.hpp"
#include "seqseg/rng.hpp"
#include "seqseg/tensor.hpp"

namespace seqseg {

/// One named parameter or persistent buffer (batch-norm running statistics).
/// Buffers are serialized with the parameters but receive no gradients.
struct ParamEntry {
  std::string name;
  Tensor tensor;
  bool buffer = false;
};
using ParamList = std::vector<ParamEntry>;

struct ConvLayerSpec {
  int kernel = 3;
  int out_maps = 0;
  int stride = 1;
  int dilation = 1;
  double dropout_rate = 0.0;

  void validate() const;
};

struct DenseBlockSpec {
  int layers = 2;  // L
  int growth = 4;  // G

  void validate() const;
};

/// Composite 2D convolutional layer: convolution, ReLU, batch
/// normalization, dropout — applied in exactly that order.
class ConvLayer2d {
 public:
  ConvLayer2d() = default;
  ConvLayer2d(int in_maps, ConvLayerSpec spec, double bn_momentum, Rng& rng);

  Tensor forward(const Tensor& input, Mode mode, Rng& rng);
  void register_params(const std::string& prefix, ParamList& out);

  const ConvLayerSpec& spec() const { return spec_; }
  int in_maps() const { return in_maps_; }

 private:
  ConvLayerSpec spec_;
  int in_maps_ = 0;
  double bn_momentum_ = 0.1;
  Tensor weights_, bias_, gamma_, beta_;
  Tensor running_mean_, running_var_;
};

/// 3D analogue used by the spatio-temporal fusion. Unit strides; the
/// temporal extent of the kernel and the temporal padding are explicit.
class ConvLayer3d {
 public:
  ConvLayer3d() = default;
  ConvLayer3d(int in_maps, int out_maps, int kernel, int dilation, int temporal_kernel,
              Padding temporal_padding, double dropout_rate, double bn_momentum, Rng& rng);

  Tensor forward(const Tensor& input, Mode mode, Rng& rng);
  void register_params(const std::string& prefix, ParamList& out);

  int kernel() const { return kernel_; }
  int dilation() const { return dilation_; }
  int out_maps() const { return out_maps_; }

 private:
  int in_maps_ = 0, out_maps_ = 0, kernel_ = 0, dilation_ = 1, temporal_kernel_ = 1;
  Padding temporal_padding_ = Padding::Same;
  double dropout_rate_ = 0.0;
  double bn_momentum_ = 0.1;
  Tensor weights_, bias_, gamma_, beta_;
  Tensor running_mean_, running_var_;
};

/// 1x1 composite layer compressing the feature axis.
ConvLayer2d make_bottleneck(int in_maps, int out_maps, double dropout_rate,
                            double bn_momentum, Rng& rng);

/// Stack of L composite layers; layer l consumes the concatenation of the
/// block input with every previous layer's output and contributes G new
/// maps (preceded by a 2G bottleneck). The block output concatenates only
/// the L newly computed G-map groups, so it always carries L*G maps.
class DenseBlock {
 public:
  DenseBlock() = default;
  DenseBlock(int in_maps, DenseBlockSpec spec, double dropout_rate, double bn_momentum, Rng& rng);

  Tensor forward(const Tensor& input, Mode mode, Rng& rng);
  void register_params(const std::string& prefix, ParamList& out);

  int out_maps() const { return spec_.layers * spec_.growth; }
  int layer_in_maps(int layer) const;  // concat width seen by layer (0-based)

 private:
  DenseBlockSpec spec_;
  int in_maps_ = 0;
  struct Layer {
    ConvLayer2d bottleneck;
    ConvLayer2d conv;
  };
  std::vector<Layer> layers_;
};

/// Halving bottleneck followed by a 5x5 stride-2 composite layer; spatial
/// extents halve (ceil), feature maps halve (floor).
class TransitionDown {
 public:
  TransitionDown() = default;
  TransitionDown(int in_maps, double dropout_rate, double bn_momentum, Rng& rng);

  Tensor forward(const Tensor& input, Mode mode, Rng& rng);
  void register_params(const std::string& prefix, ParamList& out);

  int out_maps() const { return down_.spec().out_maps; }

 private:
  ConvLayer2d bottleneck_;
  ConvLayer2d down_;
};

/// Learnable 2x upsampling (2x2 stride-2 transposed convolution), optional
/// skip concatenation, halving bottleneck, dense block. The dense block's
/// input is not re-concatenated to its output, so the stage emits exactly
/// L*G maps.
class TransitionUp {
 public:
  TransitionUp() = default;
  TransitionUp(int in_maps, int skip_maps, DenseBlockSpec spec, double dropout_rate,
               double bn_momentum, Rng& rng);

  /// `skip` may be undefined for the skipless (spatio-temporal) variant;
  /// it must then have been constructed with skip_maps == 0.
  Tensor forward(const Tensor& input, const Tensor& skip, Mode mode, Rng& rng);
  void register_params(const std::string& prefix, ParamList& out);

  int out_maps() const { return block_.out_maps(); }

 private:
  int skip_maps_ = 0;
  Tensor up_weights_, up_bias_;
  ConvLayer2d bottleneck_;
  DenseBlock block_;
};

}  // namespace seqseg
