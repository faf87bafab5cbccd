#pragma once

#include <vector>

#include "seqseg/tensor.hpp"

namespace seqseg {

/// Running second-moment accumulator for one parameter.
/// v stays elementwise nonnegative by construction.
struct RmsPropState {
  std::vector<double> v;
  double rho = 0.9;
  double epsilon = 1e-8;
  double learning_rate = 0.01;
};

/// v <- rho*v + (1-rho)*g^2;  param <- param - lr * g / sqrt(v + eps).
/// Reads the parameter's populated grad buffer.
void rmsprop_step(Tensor& param, RmsPropState& state);

/// Convenience wrapper stepping a whole parameter list with shared
/// hyperparameters and per-parameter accumulators.
class RmsProp {
 public:
  explicit RmsProp(std::vector<Tensor> params, double rho = 0.9, double epsilon = 1e-8);

  void step(double learning_rate);
  void zero_grad();

  double rho() const { return rho_; }
  double epsilon() const { return epsilon_; }
  std::vector<std::vector<double>>& accumulators() { return v_; }
  const std::vector<Tensor>& params() const { return params_; }

 private:
  std::vector<Tensor> params_;
  std::vector<std::vector<double>> v_;
  double rho_;
  double epsilon_;
};

}  // namespace seqseg
