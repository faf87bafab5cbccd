#pragma once

#include <array>
#include <string>
#include <vector>

#include "seqseg/blocks.hpp"
#include "seqseg/sample.hpp"

namespace seqseg {

/// Every architectural knob of the model plus the three ablation switches.
struct NetworkConfig {
  int sequence_length = 5;  // S
  int in_channels = 1;
  int height = 96;
  int width = 128;
  int encoder_depth = 2;  // number of transition downs
  int dense_layers = 2;   // L per dense block
  int growth_rate = 4;    // G
  int stem_maps = 32;
  std::array<int, 3> fusion_kernels{5, 7, 9};
  std::array<int, 3> fusion_dilations{1, 2, 4};
  int fusion_maps = 16;
  int merge_maps = 12;
  int num_classes = 3;
  double dropout_rate = 1.0 / 3.0;
  double bn_momentum = 0.1;

  // Ablation switches.
  bool preprocessing = true;      // input conditioning applied by the trainer
  bool sequential_module = true;  // fused sequence pathway; off = per-frame FCN
  bool spatial_context = true;    // growing fusion kernels/dilations; off = 5/1 throughout

  void validate() const;
  std::array<int, 3> active_fusion_kernels() const;
  std::array<int, 3> active_fusion_dilations() const;
};

/// Receptive-field diagnostic for a chain of convolution layers.
struct LayerRf {
  int kernel = 1;
  int dilation = 1;
  int stride = 1;
};
int receptive_field(const std::vector<LayerRf>& chain);

struct StageRf {
  std::string name;
  int rf_h = 1;
  int rf_w = 1;
};
/// Per-stage receptive fields; fusion stages are reported at the visual
/// code resolution and additionally scaled back to input pixels.
std::vector<StageRf> receptive_field_report(const NetworkConfig& config);
/// Receptive field of the three-layer fusion stack at code resolution.
int fusion_receptive_field(const NetworkConfig& config);

/// The full sequential FCN: a shared-weight dense-block encoder/decoder
/// applied per frame, a 3D-convolutional fusion over the S visual codes
/// with its own decoder, and a merge head emitting per-pixel class
/// distributions for every frame.
class Network {
 public:
  Network(NetworkConfig config, Rng& rng);

  const NetworkConfig& config() const { return config_; }
  std::size_t parameter_count() const;  // trainable scalars
  std::vector<Tensor> parameters() const;
  ParamList named_entries();  // parameters + batch-norm buffers

  struct EncodedFrame {
    Tensor code;
    std::vector<Tensor> skips;  // per encoder stage, full resolution first
  };
  EncodedFrame encode_frame(const Tensor& frame, Mode mode, Rng& rng);
  Tensor decode_visual(const EncodedFrame& encoded, Mode mode, Rng& rng);

  /// Stacks S same-shape visual codes along the time axis and applies the
  /// three fusion layers; the final valid temporal convolution collapses
  /// time, leaving a single sequence code [fusion_maps,h,w].
  Tensor fuse_codes(const std::vector<Tensor>& codes, Mode mode, Rng& rng);
  Tensor decode_sequence(const Tensor& sequence_code, Mode mode, Rng& rng);

  /// Merge head on concatenated visual+sequence features (or visual only
  /// when the sequential module is disabled). Returns class logits.
  Tensor merge_features(const Tensor& visual_features, const Tensor& sequence_features,
                        Mode mode, Rng& rng);

  /// Per-frame class logits [3,H,W], one per input frame.
  std::vector<Tensor> forward_logits(const std::vector<Tensor>& frames, Mode mode, Rng& rng);
  /// Per-frame label masks (softmax of the logits).
  std::vector<Tensor> forward_sequence(const std::vector<Tensor>& frames, Mode mode, Rng& rng);
  std::vector<Tensor> forward_sequence(const SequenceSample& sample, Mode mode, Rng& rng);

 private:
  NetworkConfig config_;
  ConvLayer2d stem_;
  struct EncoderStage {
    DenseBlock block;
    TransitionDown down;
    int skip_maps = 0;
  };
  std::vector<EncoderStage> encoder_;
  std::vector<TransitionUp> visual_decoder_;  // deepest stage first
  std::vector<ConvLayer3d> fusion_;
  std::vector<TransitionUp> sequence_decoder_;
  ConvLayer2d merge_bottleneck_;
  ConvLayer2d merge_conv1_, merge_conv2_;
  Tensor classifier_weights_, classifier_bias_;  // plain 1x1 conv, unconstrained logits
  int code_maps_ = 0;
};

}  // namespace seqseg
