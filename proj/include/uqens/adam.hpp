#pragma once

#include "uqens/network.hpp"

namespace uqens {

struct AdamConfig {
  double learning_rate = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  /// Decoupled: each step also subtracts learning_rate * weight_decay * param.
  double weight_decay = 0.001;

  void validate() const;
};

/// Bias-corrected Adam update in place; increments params.step.
void adam_step(ParameterSet& params, const Gradients& grads, const AdamConfig& config);

}  // namespace uqens
