#include "seqseg/network.hpp"

#include <stdexcept>

namespace seqseg {

void NetworkConfig::validate() const {
  if (sequence_length < 1) throw std::invalid_argument("config: sequence length must be >= 1");
  if (in_channels < 1) throw std::invalid_argument("config: need at least one input channel");
  if (height < 1 || width < 1) throw std::invalid_argument("config: empty input extent");
  if (encoder_depth < 1) throw std::invalid_argument("config: encoder depth must be >= 1");
  const int factor = 1 << encoder_depth;
  if (height % factor != 0 || width % factor != 0) {
    throw std::invalid_argument("config: input " + std::to_string(width) + "x" + std::to_string(height) +
                                " not divisible by 2^depth = " + std::to_string(factor) +
                                "; upsampling could not restore the input extent");
  }
  DenseBlockSpec{dense_layers, growth_rate}.validate();
  if (stem_maps < 1) throw std::invalid_argument("config: stem needs output maps");
  for (int k : fusion_kernels) {
    if (k < 1 || k % 2 == 0) throw std::invalid_argument("config: fusion kernels must be odd");
  }
  for (int d : fusion_dilations) {
    if (d < 1) throw std::invalid_argument("config: fusion dilations must be >= 1");
  }
  if (fusion_maps < 1) throw std::invalid_argument("config: fusion needs output maps");
  if (merge_maps < 1) throw std::invalid_argument("config: merge needs output maps");
  if (num_classes != 3) throw std::invalid_argument("config: the classifier is fixed to 3 classes");
  if (dropout_rate < 0.0 || dropout_rate >= 1.0) {
    throw std::invalid_argument("config: dropout rate must be in [0,1)");
  }
  if (bn_momentum <= 0.0 || bn_momentum > 1.0) {
    throw std::invalid_argument("config: batch-norm momentum must be in (0,1]");
  }
}

std::array<int, 3> NetworkConfig::active_fusion_kernels() const {
  return spatial_context ? fusion_kernels : std::array<int, 3>{5, 5, 5};
}

std::array<int, 3> NetworkConfig::active_fusion_dilations() const {
  return spatial_context ? fusion_dilations : std::array<int, 3>{1, 1, 1};
}

int receptive_field(const std::vector<LayerRf>& chain) {
  int rf = 1;
  long long jump = 1;
  for (const LayerRf& layer : chain) {
    rf += static_cast<int>((static_cast<long long>(layer.kernel) - 1) * layer.dilation * jump);
    jump *= layer.stride;
  }
  return rf;
}

int fusion_receptive_field(const NetworkConfig& config) {
  std::vector<LayerRf> chain;
  const auto ks = config.active_fusion_kernels();
  const auto ds = config.active_fusion_dilations();
  for (int i = 0; i < 3; ++i) chain.push_back({ks[static_cast<std::size_t>(i)], ds[static_cast<std::size_t>(i)], 1});
  return receptive_field(chain);
}

std::vector<StageRf> receptive_field_report(const NetworkConfig& config) {
  std::vector<StageRf> report;
  std::vector<LayerRf> chain{{5, 1, 1}};
  auto emit = [&](const std::string& name) {
    const int rf = receptive_field(chain);
    report.push_back({name, rf, rf});
  };
  emit("stem");
  for (int s = 0; s < config.encoder_depth; ++s) {
    for (int l = 0; l < config.dense_layers; ++l) {
      chain.push_back({1, 1, 1});
      chain.push_back({3, 1, 1});
    }
    emit("encoder_block_" + std::to_string(s));
    chain.push_back({1, 1, 1});
    chain.push_back({5, 1, 2});
    emit("transition_down_" + std::to_string(s));
  }
  emit("visual_code");

  const int fusion_rf = fusion_receptive_field(config);
  report.push_back({"fusion_stack_at_code", fusion_rf, fusion_rf});

  std::vector<LayerRf> full = chain;
  const auto ks = config.active_fusion_kernels();
  const auto ds = config.active_fusion_dilations();
  for (int i = 0; i < 3; ++i) full.push_back({ks[static_cast<std::size_t>(i)], ds[static_cast<std::size_t>(i)], 1});
  const int rf = receptive_field(full);
  report.push_back({"fusion_stack_at_input", rf, rf});
  return report;
}

Network::Network(NetworkConfig config, Rng& rng) : config_(std::move(config)) {
  config_.validate();
  const double drop = config_.dropout_rate;
  const double mom = config_.bn_momentum;
  const DenseBlockSpec block_spec{config_.dense_layers, config_.growth_rate};

  ConvLayerSpec stem_spec;
  stem_spec.kernel = 5;
  stem_spec.out_maps = config_.stem_maps;
  stem_spec.dropout_rate = drop;
  stem_ = ConvLayer2d(config_.in_channels, stem_spec, mom, rng);

  int maps = config_.stem_maps;
  std::vector<int> skip_maps;
  for (int s = 0; s < config_.encoder_depth; ++s) {
    EncoderStage stage;
    stage.block = DenseBlock(maps, block_spec, drop, mom, rng);
    stage.skip_maps = maps + stage.block.out_maps();
    stage.down = TransitionDown(stage.skip_maps, drop, mom, rng);
    maps = stage.down.out_maps();
    skip_maps.push_back(stage.skip_maps);
    encoder_.push_back(std::move(stage));
  }
  code_maps_ = maps;

  for (int s = config_.encoder_depth - 1; s >= 0; --s) {
    visual_decoder_.emplace_back(maps, skip_maps[static_cast<std::size_t>(s)], block_spec, drop, mom, rng);
    maps = visual_decoder_.back().out_maps();
  }
  const int visual_feature_maps = maps;

  int seq_feature_maps = 0;
  if (config_.sequential_module) {
    const auto ks = config_.active_fusion_kernels();
    const auto ds = config_.active_fusion_dilations();
    int fin = code_maps_;
    for (int i = 0; i < 3; ++i) {
      // The time axis survives the first two layers and is collapsed by a
      // final valid convolution spanning the whole sequence.
      const Padding tpad = i < 2 ? Padding::Same : Padding::Valid;
      fusion_.emplace_back(fin, config_.fusion_maps, ks[static_cast<std::size_t>(i)],
                           ds[static_cast<std::size_t>(i)], config_.sequence_length, tpad,
                           drop, mom, rng);
      fin = config_.fusion_maps;
    }
    int smaps = config_.fusion_maps;
    for (int s = config_.encoder_depth - 1; s >= 0; --s) {
      sequence_decoder_.emplace_back(smaps, 0, block_spec, drop, mom, rng);
      smaps = sequence_decoder_.back().out_maps();
    }
    seq_feature_maps = smaps;
  }

  const int merge_in = visual_feature_maps + seq_feature_maps;
  merge_bottleneck_ = make_bottleneck(merge_in, config_.merge_maps, drop, mom, rng);
  ConvLayerSpec merge_spec;
  merge_spec.kernel = 5;
  merge_spec.out_maps = config_.merge_maps;
  merge_spec.dropout_rate = drop;
  merge_conv1_ = ConvLayer2d(config_.merge_maps, merge_spec, mom, rng);
  merge_conv2_ = ConvLayer2d(config_.merge_maps, merge_spec, mom, rng);
  classifier_weights_ = he_init({config_.num_classes, config_.merge_maps, 1, 1}, config_.merge_maps, rng);
  classifier_bias_ = Tensor::zeros({config_.num_classes}, true);
}

Network::EncodedFrame Network::encode_frame(const Tensor& frame, Mode mode, Rng& rng) {
  if (frame.ndim() != 3 || frame.dim(0) != config_.in_channels ||
      frame.dim(1) != config_.height || frame.dim(2) != config_.width) {
    throw std::invalid_argument("network: frame shape " + shape_str(frame.shape()) + " does not match config [" +
                                std::to_string(config_.in_channels) + "," + std::to_string(config_.height) +
                                "," + std::to_string(config_.width) + "]");
  }
  EncodedFrame out;
  Tensor x = stem_.forward(frame, mode, rng);
  for (auto& stage : encoder_) {
    Tensor block_out = stage.block.forward(x, mode, rng);
    Tensor skip = concat({x, block_out});
    out.skips.push_back(skip);
    x = stage.down.forward(skip, mode, rng);
  }
  out.code = x;
  return out;
}

Tensor Network::decode_visual(const EncodedFrame& encoded, Mode mode, Rng& rng) {
  Tensor x = encoded.code;
  for (std::size_t i = 0; i < visual_decoder_.size(); ++i) {
    const Tensor& skip = encoded.skips[encoded.skips.size() - 1 - i];
    x = visual_decoder_[i].forward(x, skip, mode, rng);
  }
  return x;
}

Tensor Network::fuse_codes(const std::vector<Tensor>& codes, Mode mode, Rng& rng) {
  if (!config_.sequential_module) throw std::logic_error("network: sequential module disabled");
  if (static_cast<int>(codes.size()) != config_.sequence_length) {
    throw std::invalid_argument("network: expected " + std::to_string(config_.sequence_length) +
                                " visual codes, got " + std::to_string(codes.size()));
  }
  Tensor x = stack_time(codes);
  for (auto& layer : fusion_) x = layer.forward(x, mode, rng);
  // [maps, 1, h, w] after the valid temporal collapse.
  return reshape(x, {x.dim(0), x.dim(2), x.dim(3)});
}

Tensor Network::decode_sequence(const Tensor& sequence_code, Mode mode, Rng& rng) {
  Tensor x = sequence_code;
  for (auto& tu : sequence_decoder_) x = tu.forward(x, Tensor(), mode, rng);
  return x;
}

Tensor Network::merge_features(const Tensor& visual_features, const Tensor& sequence_features,
                               Mode mode, Rng& rng) {
  Tensor x = visual_features;
  if (config_.sequential_module) {
    if (!sequence_features.defined()) {
      throw std::invalid_argument("network: merge needs sequence features when the sequential module is on");
    }
    if (sequence_features.dim(1) != visual_features.dim(1) ||
        sequence_features.dim(2) != visual_features.dim(2)) {
      throw std::invalid_argument("network: merge extent mismatch, visual " +
                                  shape_str(visual_features.shape()) + " vs sequence " +
                                  shape_str(sequence_features.shape()));
    }
    x = concat({visual_features, sequence_features});
  }
  x = merge_bottleneck_.forward(x, mode, rng);
  x = merge_conv1_.forward(x, mode, rng);
  x = merge_conv2_.forward(x, mode, rng);
  return conv2d(x, classifier_weights_, classifier_bias_, 1, 1, Padding::Same);
}

std::vector<Tensor> Network::forward_logits(const std::vector<Tensor>& frames, Mode mode, Rng& rng) {
  if (static_cast<int>(frames.size()) != config_.sequence_length) {
    throw std::invalid_argument("network: expected " + std::to_string(config_.sequence_length) +
                                " frames, got " + std::to_string(frames.size()));
  }
  std::vector<EncodedFrame> encoded;
  encoded.reserve(frames.size());
  for (const Tensor& frame : frames) encoded.push_back(encode_frame(frame, mode, rng));

  Tensor sequence_features;
  if (config_.sequential_module) {
    std::vector<Tensor> codes;
    codes.reserve(encoded.size());
    for (const auto& e : encoded) codes.push_back(e.code);
    sequence_features = decode_sequence(fuse_codes(codes, mode, rng), mode, rng);
  }

  std::vector<Tensor> logits;
  logits.reserve(frames.size());
  for (const auto& e : encoded) {
    Tensor visual = decode_visual(e, mode, rng);
    logits.push_back(merge_features(visual, sequence_features, mode, rng));
  }
  return logits;
}

std::vector<Tensor> Network::forward_sequence(const std::vector<Tensor>& frames, Mode mode, Rng& rng) {
  std::vector<Tensor> masks;
  for (Tensor& l : forward_logits(frames, mode, rng)) masks.push_back(softmax(l));
  return masks;
}

std::vector<Tensor> Network::forward_sequence(const SequenceSample& sample, Mode mode, Rng& rng) {
  return forward_sequence(sample.frames, mode, rng);
}

ParamList Network::named_entries() {
  ParamList out;
  stem_.register_params("stem", out);
  for (std::size_t s = 0; s < encoder_.size(); ++s) {
    encoder_[s].block.register_params("enc" + std::to_string(s) + ".block", out);
    encoder_[s].down.register_params("enc" + std::to_string(s) + ".down", out);
  }
  for (std::size_t s = 0; s < visual_decoder_.size(); ++s) {
    visual_decoder_[s].register_params("vdec" + std::to_string(s), out);
  }
  for (std::size_t i = 0; i < fusion_.size(); ++i) {
    fusion_[i].register_params("fusion" + std::to_string(i), out);
  }
  for (std::size_t s = 0; s < sequence_decoder_.size(); ++s) {
    sequence_decoder_[s].register_params("sdec" + std::to_string(s), out);
  }
  merge_bottleneck_.register_params("merge.bneck", out);
  merge_conv1_.register_params("merge.conv1", out);
  merge_conv2_.register_params("merge.conv2", out);
  out.push_back({"merge.classifier.w", classifier_weights_, false});
  out.push_back({"merge.classifier.b", classifier_bias_, false});
  return out;
}

std::vector<Tensor> Network::parameters() const {
  ParamList entries = const_cast<Network*>(this)->named_entries();
  std::vector<Tensor> params;
  for (auto& e : entries) {
    if (!e.buffer) params.push_back(e.tensor);
  }
  return params;
}

std::size_t Network::parameter_count() const {
  std::size_t n = 0;
  for (const Tensor& p : parameters()) n += p.size();
  return n;
}

}  // namespace seqseg
