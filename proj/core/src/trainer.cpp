#include "seqseg/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>

#include "seqseg/preprocess.hpp"

namespace seqseg {

void TrainConfig::validate() const {
  network.validate();
  if (epochs < 1) throw std::invalid_argument("train config: epochs must be >= 1");
  if (batch_sequences < 1) throw std::invalid_argument("train config: batch size must be >= 1");
  if (base_learning_rate <= 0.0) throw std::invalid_argument("train config: learning rate must be positive");
  if (reference_drop_epochs[0] >= reference_drop_epochs[1]) {
    throw std::invalid_argument("train config: schedule epochs must be strictly increasing");
  }
  if (reference_epochs < 1) throw std::invalid_argument("train config: reference epochs must be >= 1");
  for (double w : class_weights) {
    if (w <= 0.0) throw std::invalid_argument("train config: class weights must be positive");
  }
  if (checkpoint_interval < 0) throw std::invalid_argument("train config: negative checkpoint interval");
}

double learning_rate_at(const TrainConfig& config, int epoch) {
  int b1 = config.reference_drop_epochs[0];
  int b2 = config.reference_drop_epochs[1];
  if (config.epochs < config.reference_epochs) {
    const double s = static_cast<double>(config.epochs) / static_cast<double>(config.reference_epochs);
    b1 = std::max(1, static_cast<int>(std::lround(b1 * s)));
    b2 = std::max(b1 + 1, static_cast<int>(std::lround(b2 * s)));
  }
  double lr = config.base_learning_rate;
  if (epoch > b1) lr *= 0.1;
  if (epoch > b2) lr *= 0.1;
  return lr;
}

ClassMask fold_labels(const ClassMask& labels) {
  ClassMask folded = labels;
  for (auto& v : folded.values) {
    if (v == 3) v = 2;
  }
  return folded;
}

ClassMask argmax_mask(const Tensor& mask) {
  if (mask.ndim() != 3 || mask.dim(0) != 3) {
    throw std::invalid_argument("argmax_mask: expected [3,H,W], got " + shape_str(mask.shape()));
  }
  const int h = mask.dim(1), w = mask.dim(2);
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  ClassMask out(h, w);
  const double* d = mask.data().data();
  for (std::size_t i = 0; i < plane; ++i) {
    int best = 0;
    if (d[plane + i] > d[static_cast<std::size_t>(best) * plane + i]) best = 1;
    if (d[2 * plane + i] > d[static_cast<std::size_t>(best) * plane + i]) best = 2;
    out.values[i] = static_cast<std::uint8_t>(best);
  }
  return out;
}

namespace {

std::vector<Tensor> conditioned_frames(const SequenceSample& sample, bool preprocessing) {
  if (!preprocessing) return sample.frames;
  std::vector<Tensor> frames;
  frames.reserve(sample.frames.size());
  for (const Tensor& f : sample.frames) frames.push_back(preprocess_image(f));
  return frames;
}

void check_dataset(const NetworkConfig& net, const Dataset& data) {
  const DatasetHeader& h = data.header;
  if (h.channels != net.in_channels || h.height != net.height || h.width != net.width ||
      h.sequence_length != net.sequence_length) {
    throw std::invalid_argument(
        "dataset/config mismatch: container is C=" + std::to_string(h.channels) + " " +
        std::to_string(h.width) + "x" + std::to_string(h.height) + " S=" +
        std::to_string(h.sequence_length) + ", network expects C=" + std::to_string(net.in_channels) +
        " " + std::to_string(net.width) + "x" + std::to_string(net.height) + " S=" +
        std::to_string(net.sequence_length));
  }
}

}  // namespace

Trainer::Trainer(const TrainConfig& config) : cfg_(config), rng_(config.seed) {
  cfg_.validate();
  net_.emplace(cfg_.network, rng_);
  opt_.emplace(net_->parameters());
}

Trainer::Trainer(const TrainConfig& config, const std::string& resume_checkpoint)
    : cfg_(config), rng_(config.seed) {
  cfg_.validate();
  Checkpoint ckpt = load_checkpoint(resume_checkpoint);
  if (!ckpt.snapshot) {
    throw std::runtime_error("resume: checkpoint " + resume_checkpoint + " carries no trainer state");
  }
  cfg_.network = ckpt.config;
  net_.emplace(ckpt.build());
  opt_.emplace(net_->parameters(), ckpt.snapshot->rho, ckpt.snapshot->epsilon);
  if (ckpt.snapshot->accumulators.size() != opt_->accumulators().size()) {
    throw std::runtime_error("resume: optimizer state does not match parameter list");
  }
  opt_->accumulators() = ckpt.snapshot->accumulators;
  epochs_done_ = ckpt.snapshot->epochs_done;
  steps_done_ = ckpt.snapshot->steps_done;
  rng_.load_state(ckpt.snapshot->rng_state);
}

void Trainer::save(const std::string& path) {
  TrainerSnapshot snap;
  snap.rho = opt_->rho();
  snap.epsilon = opt_->epsilon();
  snap.epochs_done = epochs_done_;
  snap.steps_done = steps_done_;
  snap.accumulators = opt_->accumulators();
  snap.rng_state = rng_.save_state();
  save_checkpoint(path, net_->config(), net_->named_entries(), &snap);
}

Tensor Trainer::sequence_loss(const SequenceSample& sample, Rng& rng) {
  const std::vector<Tensor> frames = conditioned_frames(sample, cfg_.network.preprocessing);
  std::vector<Tensor> logits = net_->forward_logits(frames, Mode::Train, rng);
  if (cfg_.loss_frames == TrainConfig::LossFrames::Current) {
    return softmax_cross_entropy(logits.back(), fold_labels(sample.labels.back()), cfg_.class_weights);
  }
  Tensor total;
  for (std::size_t f = 0; f < logits.size(); ++f) {
    Tensor ce = softmax_cross_entropy(logits[f], fold_labels(sample.labels[f]), cfg_.class_weights);
    total = total.defined() ? add(total, ce) : ce;
  }
  return scale(total, 1.0 / static_cast<double>(logits.size()));
}

TrainResult Trainer::train(const Dataset& data, const std::string& checkpoint_path,
                           std::ostream* log) {
  check_dataset(net_->config(), data);
  if (data.size() == 0) throw std::invalid_argument("train: empty dataset");

  TrainResult result;
  result.parameter_count = net_->parameter_count();

  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = epochs_done_ + 1; epoch <= cfg_.epochs; ++epoch) {
    const double lr = learning_rate_at(cfg_, epoch);
    rng_.shuffle(order);
    double epoch_loss = 0.0;
    long batches = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += static_cast<std::size_t>(cfg_.batch_sequences)) {
      const std::size_t end = std::min(order.size(), begin + static_cast<std::size_t>(cfg_.batch_sequences));
      const double inv = 1.0 / static_cast<double>(end - begin);
      opt_->zero_grad();
      double batch_loss = 0.0;
      for (std::size_t i = begin; i < end; ++i) {
        Tensor loss = scale(sequence_loss(data.samples[order[i]], rng_), inv);
        loss.backward();
        batch_loss += loss.item();
      }
      if (!std::isfinite(batch_loss)) {
        double max_grad = 0.0;
        for (const Tensor& p : opt_->params()) {
          if (!p.has_grad()) continue;
          for (double g : p.grad()) max_grad = std::max(max_grad, std::abs(g));
        }
        throw TrainingDiverged("training diverged: non-finite loss at step " +
                                   std::to_string(steps_done_ + 1) + " (lr " + std::to_string(lr) +
                                   ", max |grad| " + std::to_string(max_grad) + ")",
                               lr, steps_done_ + 1, max_grad);
      }
      opt_->step(lr);
      ++steps_done_;
      ++batches;
      epoch_loss += batch_loss;
      result.step_losses.push_back(batch_loss);
      if (log) {
        (*log) << "record=step epoch=" << epoch << " step=" << steps_done_;
        log->precision(17);
        (*log) << " loss=" << batch_loss << " lr=" << lr << '\n';
      }
    }
    epochs_done_ = epoch;
    EpochStats stats{epoch, epoch_loss / static_cast<double>(batches), lr};
    result.epoch_stats.push_back(stats);
    if (log) {
      (*log) << "record=epoch epoch=" << epoch;
      log->precision(17);
      (*log) << " mean_loss=" << stats.mean_loss << " lr=" << lr << '\n';
      log->flush();
    }
    const bool interval_hit = cfg_.checkpoint_interval > 0 && epoch % cfg_.checkpoint_interval == 0;
    if (!checkpoint_path.empty() && (interval_hit || epoch == cfg_.epochs)) {
      save(checkpoint_path);
    }
  }
  return result;
}

ObjectWiseReport evaluate(Network& net, const Dataset& data, const EvalOptions& options) {
  check_dataset(net.config(), data);
  ReportAccumulator acc(data.header.resolution_mm_per_px, options.min_area_cm2);
  Rng scratch(0);  // eval mode draws nothing
  for (const SequenceSample& sample : data.samples) {
    const std::vector<Tensor> frames = conditioned_frames(sample, net.config().preprocessing);
    const std::vector<Tensor> masks = net.forward_sequence(frames, Mode::Eval, scratch);
    if (options.frame_scope == EvalOptions::FrameScope::All) {
      for (std::size_t f = 0; f < masks.size(); ++f) {
        acc.add(argmax_mask(masks[f]), sample.labels[f]);
      }
    } else {
      acc.add(argmax_mask(masks.back()), sample.labels.back());
    }
  }
  return acc.report();
}

ObjectWiseReport evaluate_predictions(const std::vector<ClassMask>& predictions,
                                      const std::vector<ClassMask>& ground_truth,
                                      double resolution_mm_per_px, double min_area_cm2) {
  if (predictions.size() != ground_truth.size()) {
    throw std::invalid_argument("evaluate_predictions: prediction/ground-truth count mismatch");
  }
  ReportAccumulator acc(resolution_mm_per_px, min_area_cm2);
  for (std::size_t i = 0; i < predictions.size(); ++i) acc.add(predictions[i], ground_truth[i]);
  return acc.report();
}

}  // namespace seqseg
