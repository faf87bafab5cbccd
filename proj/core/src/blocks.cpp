#include "seqseg/blocks.hpp"

#include <stdexcept>

namespace seqseg {

void ConvLayerSpec::validate() const {
  if (kernel < 1 || kernel % 2 == 0) {
    throw std::invalid_argument("conv layer kernel must be odd and positive, got " + std::to_string(kernel));
  }
  if (out_maps < 1) throw std::invalid_argument("conv layer needs at least one output map");
  if (stride != 1 && stride != 2) throw std::invalid_argument("conv layer stride must be 1 or 2");
  if (dilation < 1) throw std::invalid_argument("conv layer dilation must be >= 1");
  if (dropout_rate < 0.0 || dropout_rate >= 1.0) {
    throw std::invalid_argument("conv layer dropout rate must be in [0,1)");
  }
}

void DenseBlockSpec::validate() const {
  if (layers < 1) throw std::invalid_argument("dense block needs L >= 1");
  if (growth < 1) throw std::invalid_argument("dense block needs G >= 1");
}

namespace {

void register_norm(const std::string& prefix, Tensor& gamma, Tensor& beta,
                   Tensor& running_mean, Tensor& running_var, ParamList& out) {
  out.push_back({prefix + ".bn_gamma", gamma, false});
  out.push_back({prefix + ".bn_beta", beta, false});
  out.push_back({prefix + ".bn_mean", running_mean, true});
  out.push_back({prefix + ".bn_var", running_var, true});
}

}  // namespace

ConvLayer2d::ConvLayer2d(int in_maps, ConvLayerSpec spec, double bn_momentum, Rng& rng)
    : spec_(spec), in_maps_(in_maps), bn_momentum_(bn_momentum) {
  spec_.validate();
  if (in_maps < 1) throw std::invalid_argument("conv layer needs at least one input map");
  const int k = spec_.kernel;
  weights_ = he_init({spec_.out_maps, in_maps, k, k}, in_maps * k * k, rng);
  bias_ = Tensor::zeros({spec_.out_maps}, true);
  gamma_ = Tensor::full({spec_.out_maps}, 1.0, true);
  beta_ = Tensor::zeros({spec_.out_maps}, true);
  running_mean_ = Tensor::zeros({spec_.out_maps});
  running_var_ = Tensor::full({spec_.out_maps}, 1.0);
}

Tensor ConvLayer2d::forward(const Tensor& input, Mode mode, Rng& rng) {
  Tensor y = conv2d(input, weights_, bias_, spec_.stride, spec_.dilation, Padding::Same);
  y = relu(y);
  y = batch_norm(y, gamma_, beta_, running_mean_, running_var_, mode, bn_momentum_);
  return dropout(y, spec_.dropout_rate, mode, rng);
}

void ConvLayer2d::register_params(const std::string& prefix, ParamList& out) {
  out.push_back({prefix + ".w", weights_, false});
  out.push_back({prefix + ".b", bias_, false});
  register_norm(prefix, gamma_, beta_, running_mean_, running_var_, out);
}

ConvLayer3d::ConvLayer3d(int in_maps, int out_maps, int kernel, int dilation,
                         int temporal_kernel, Padding temporal_padding,
                         double dropout_rate, double bn_momentum, Rng& rng)
    : in_maps_(in_maps),
      out_maps_(out_maps),
      kernel_(kernel),
      dilation_(dilation),
      temporal_kernel_(temporal_kernel),
      temporal_padding_(temporal_padding),
      dropout_rate_(dropout_rate),
      bn_momentum_(bn_momentum) {
  if (in_maps < 1 || out_maps < 1) throw std::invalid_argument("3D conv layer needs input and output maps");
  if (kernel < 1 || kernel % 2 == 0) throw std::invalid_argument("3D conv layer spatial kernel must be odd");
  if (temporal_kernel < 1) throw std::invalid_argument("3D conv layer temporal kernel must be >= 1");
  weights_ = he_init({out_maps, in_maps, temporal_kernel, kernel, kernel},
                     in_maps * temporal_kernel * kernel * kernel, rng);
  bias_ = Tensor::zeros({out_maps}, true);
  gamma_ = Tensor::full({out_maps}, 1.0, true);
  beta_ = Tensor::zeros({out_maps}, true);
  running_mean_ = Tensor::zeros({out_maps});
  running_var_ = Tensor::full({out_maps}, 1.0);
}

Tensor ConvLayer3d::forward(const Tensor& input, Mode mode, Rng& rng) {
  Tensor y = conv3d(input, weights_, bias_, dilation_, temporal_padding_);
  y = relu(y);
  y = batch_norm(y, gamma_, beta_, running_mean_, running_var_, mode, bn_momentum_);
  return dropout(y, dropout_rate_, mode, rng);
}

void ConvLayer3d::register_params(const std::string& prefix, ParamList& out) {
  out.push_back({prefix + ".w", weights_, false});
  out.push_back({prefix + ".b", bias_, false});
  register_norm(prefix, gamma_, beta_, running_mean_, running_var_, out);
}

ConvLayer2d make_bottleneck(int in_maps, int out_maps, double dropout_rate,
                            double bn_momentum, Rng& rng) {
  ConvLayerSpec spec;
  spec.kernel = 1;
  spec.out_maps = out_maps;
  spec.dropout_rate = dropout_rate;
  return ConvLayer2d(in_maps, spec, bn_momentum, rng);
}

DenseBlock::DenseBlock(int in_maps, DenseBlockSpec spec, double dropout_rate,
                       double bn_momentum, Rng& rng)
    : spec_(spec), in_maps_(in_maps) {
  spec_.validate();
  layers_.reserve(static_cast<std::size_t>(spec_.layers));
  for (int l = 0; l < spec_.layers; ++l) {
    Layer layer;
    layer.bottleneck = make_bottleneck(layer_in_maps(l), 2 * spec_.growth, dropout_rate, bn_momentum, rng);
    ConvLayerSpec conv_spec;
    conv_spec.kernel = 3;
    conv_spec.out_maps = spec_.growth;
    conv_spec.dropout_rate = dropout_rate;
    layer.conv = ConvLayer2d(2 * spec_.growth, conv_spec, bn_momentum, rng);
    layers_.push_back(std::move(layer));
  }
}

int DenseBlock::layer_in_maps(int layer) const { return in_maps_ + layer * spec_.growth; }

Tensor DenseBlock::forward(const Tensor& input, Mode mode, Rng& rng) {
  std::vector<Tensor> feed{input};
  std::vector<Tensor> produced;
  produced.reserve(layers_.size());
  for (auto& layer : layers_) {
    Tensor x = feed.size() == 1 ? feed.front() : concat(feed);
    x = layer.bottleneck.forward(x, mode, rng);
    x = layer.conv.forward(x, mode, rng);
    produced.push_back(x);
    feed.push_back(x);
  }
  return produced.size() == 1 ? produced.front() : concat(produced);
}

void DenseBlock::register_params(const std::string& prefix, ParamList& out) {
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const std::string base = prefix + ".l" + std::to_string(l);
    layers_[l].bottleneck.register_params(base + ".bneck", out);
    layers_[l].conv.register_params(base + ".conv", out);
  }
}

TransitionDown::TransitionDown(int in_maps, double dropout_rate, double bn_momentum, Rng& rng) {
  if (in_maps < 2) throw std::invalid_argument("transition down needs at least 2 input maps");
  const int mid = in_maps / 2;
  bottleneck_ = make_bottleneck(in_maps, mid, dropout_rate, bn_momentum, rng);
  ConvLayerSpec down_spec;
  down_spec.kernel = 5;
  down_spec.out_maps = mid;
  down_spec.stride = 2;
  down_spec.dropout_rate = dropout_rate;
  down_ = ConvLayer2d(mid, down_spec, bn_momentum, rng);
}

Tensor TransitionDown::forward(const Tensor& input, Mode mode, Rng& rng) {
  if (input.dim(1) < 2 || input.dim(2) < 2) {
    throw std::invalid_argument("transition down: spatial extents must be >= 2, got " + shape_str(input.shape()));
  }
  Tensor y = bottleneck_.forward(input, mode, rng);
  return down_.forward(y, mode, rng);
}

void TransitionDown::register_params(const std::string& prefix, ParamList& out) {
  bottleneck_.register_params(prefix + ".bneck", out);
  down_.register_params(prefix + ".down", out);
}

TransitionUp::TransitionUp(int in_maps, int skip_maps, DenseBlockSpec spec,
                           double dropout_rate, double bn_momentum, Rng& rng)
    : skip_maps_(skip_maps) {
  if (in_maps < 1) throw std::invalid_argument("transition up needs input maps");
  if (skip_maps < 0) throw std::invalid_argument("transition up: negative skip maps");
  up_weights_ = he_init({in_maps, in_maps, 2, 2}, in_maps * 4, rng);
  up_bias_ = Tensor::zeros({in_maps}, true);
  const int cat_maps = in_maps + skip_maps;
  bottleneck_ = make_bottleneck(cat_maps, std::max(1, cat_maps / 2), dropout_rate, bn_momentum, rng);
  block_ = DenseBlock(std::max(1, cat_maps / 2), spec, dropout_rate, bn_momentum, rng);
}

Tensor TransitionUp::forward(const Tensor& input, const Tensor& skip, Mode mode, Rng& rng) {
  Tensor up = transposed_conv2d(input, up_weights_, up_bias_, 2);
  Tensor x = up;
  if (skip.defined()) {
    if (skip_maps_ != skip.dim(0)) {
      throw std::invalid_argument("transition up: skip has " + std::to_string(skip.dim(0)) +
                                  " maps, expected " + std::to_string(skip_maps_));
    }
    if (skip.dim(1) != up.dim(1) || skip.dim(2) != up.dim(2)) {
      throw std::invalid_argument("transition up: skip extent " + shape_str(skip.shape()) +
                                  " does not match upsampled " + shape_str(up.shape()));
    }
    x = concat({up, skip});
  } else if (skip_maps_ != 0) {
    throw std::invalid_argument("transition up: built with a skip path but none provided");
  }
  x = bottleneck_.forward(x, mode, rng);
  return block_.forward(x, mode, rng);
}

void TransitionUp::register_params(const std::string& prefix, ParamList& out) {
  out.push_back({prefix + ".up_w", up_weights_, false});
  out.push_back({prefix + ".up_b", up_bias_, false});
  bottleneck_.register_params(prefix + ".bneck", out);
  block_.register_params(prefix + ".block", out);
}

}  // namespace seqseg
