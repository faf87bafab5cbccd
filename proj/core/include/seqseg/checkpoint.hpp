#pragma once

#include <optional>
#include <string>
#include <vector>

#include "seqseg/network.hpp"

namespace seqseg {

/// Optimizer and progress state stored next to the parameters so training
/// can resume bit-exactly.
struct TrainerSnapshot {
  double rho = 0.9;
  double epsilon = 1e-8;
  int epochs_done = 0;
  long long steps_done = 0;
  std::vector<std::vector<double>> accumulators;  // one per trainable parameter
  std::string rng_state;
};

/// Writes config, every named parameter/buffer and (optionally) the trainer
/// snapshot into a single checksummed RCKP container.
void save_checkpoint(const std::string& path, const NetworkConfig& config,
                     const ParamList& entries, const TrainerSnapshot* snapshot);

struct Checkpoint {
  NetworkConfig config;
  std::optional<TrainerSnapshot> snapshot;

  /// Freshly built network with the stored parameter values.
  Network build() const;

 private:
  friend Checkpoint load_checkpoint(const std::string& path);
  struct StoredTensor {
    std::string name;
    bool buffer = false;
    Shape shape;
    std::vector<double> data;
  };
  std::vector<StoredTensor> tensors_;
};

Checkpoint load_checkpoint(const std::string& path);

/// JSON round-trip of the architecture config (used inside checkpoints and
/// by the CLI).
std::string network_config_to_json(const NetworkConfig& config);
NetworkConfig network_config_from_json(const std::string& json_text);

}  // namespace seqseg
