#pragma once

#include <array>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>

#include "seqseg/checkpoint.hpp"
#include "seqseg/dataset.hpp"
#include "seqseg/metrics.hpp"
#include "seqseg/optim.hpp"

namespace seqseg {

struct TrainConfig {
  NetworkConfig network;
  int epochs = 40;
  int batch_sequences = 2;  // B; a batch of B sequences is B*S images
  double base_learning_rate = 0.01;
  std::array<int, 2> reference_drop_epochs{10, 25};  // divide lr by 10 after these
  int reference_epochs = 200;  // schedule is scaled by epochs/reference for shorter runs
  std::array<double, 3> class_weights{1.0, 10.0, 10.0};
  std::uint64_t seed = 0;
  int checkpoint_interval = 0;  // epochs between checkpoints; 0 = final only

  enum class LossFrames { Current, All };
  LossFrames loss_frames = LossFrames::All;

  void validate() const;
};

/// Learning rate for a 1-based epoch index under the (scaled) step schedule.
double learning_rate_at(const TrainConfig& config, int epoch);

struct TrainingDiverged : std::runtime_error {
  TrainingDiverged(const std::string& message, double lr, long long step, double max_grad)
      : std::runtime_error(message), learning_rate(lr), step(step), max_grad_abs(max_grad) {}
  double learning_rate;
  long long step;
  double max_grad_abs;
};

struct EpochStats {
  int epoch = 0;
  double mean_loss = 0.0;
  double learning_rate = 0.0;
};

struct TrainResult {
  std::vector<double> step_losses;
  std::vector<EpochStats> epoch_stats;
  std::size_t parameter_count = 0;
};

/// Drives RMSPROP training over a sequence dataset. Fully deterministic
/// given the seed; a checkpoint restores parameters, buffers, optimizer
/// accumulators and generator state so a resumed run continues bit-exactly.
class Trainer {
 public:
  explicit Trainer(const TrainConfig& config);
  Trainer(const TrainConfig& config, const std::string& resume_checkpoint);

  TrainResult train(const Dataset& data, const std::string& checkpoint_path,
                    std::ostream* log = nullptr);

  Network& network() { return *net_; }
  int epochs_done() const { return epochs_done_; }
  void save(const std::string& path);

 private:
  Tensor sequence_loss(const SequenceSample& sample, Rng& rng);

  TrainConfig cfg_;
  Rng rng_;
  std::optional<Network> net_;
  std::optional<RmsProp> opt_;
  int epochs_done_ = 0;
  long long steps_done_ = 0;
};

struct EvalOptions {
  enum class FrameScope { Current, All };
  FrameScope frame_scope = FrameScope::Current;
  double min_area_cm2 = 0.5;
};

/// Eval-mode inference and object-wise scoring against the raw ground
/// truth (intra-row weeds keep their own class on the ground-truth side).
ObjectWiseReport evaluate(Network& net, const Dataset& data, const EvalOptions& options = {});

/// Scoring path with externally supplied predictions, bypassing inference.
ObjectWiseReport evaluate_predictions(const std::vector<ClassMask>& predictions,
                                      const std::vector<ClassMask>& ground_truth,
                                      double resolution_mm_per_px, double min_area_cm2 = 0.5);

/// Per-pixel argmax of a [3,H,W] distribution or logit volume.
ClassMask argmax_mask(const Tensor& mask);

/// Training view of a ground-truth mask: intra-row weed (3) folds into
/// weed (2).
ClassMask fold_labels(const ClassMask& labels);

}  // namespace seqseg
