#include "seqseg/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace seqseg {

void rmsprop_step(Tensor& param, RmsPropState& state) {
  if (state.v.size() != param.size()) {
    if (!state.v.empty()) {
      throw std::invalid_argument("rmsprop_step: accumulator size " + std::to_string(state.v.size()) +
                                  " does not match parameter size " + std::to_string(param.size()));
    }
    state.v.assign(param.size(), 0.0);
  }
  const auto& g = param.grad();
  auto& p = param.data();
  for (std::size_t i = 0; i < p.size(); ++i) {
    state.v[i] = state.rho * state.v[i] + (1.0 - state.rho) * g[i] * g[i];
    p[i] -= state.learning_rate * g[i] / std::sqrt(state.v[i] + state.epsilon);
  }
}

RmsProp::RmsProp(std::vector<Tensor> params, double rho, double epsilon)
    : params_(std::move(params)), rho_(rho), epsilon_(epsilon) {
  v_.reserve(params_.size());
  for (const Tensor& p : params_) v_.emplace_back(p.size(), 0.0);
}

void RmsProp::step(double learning_rate) {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    RmsPropState state{std::move(v_[i]), rho_, epsilon_, learning_rate};
    rmsprop_step(params_[i], state);
    v_[i] = std::move(state.v);
  }
}

void RmsProp::zero_grad() {
  for (Tensor& p : params_) p.zero_grad();
}

}  // namespace seqseg
