#include "uqens/adam.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace uqens {

void AdamConfig::validate() const {
  if (!(learning_rate > 0.0)) throw std::invalid_argument("learning_rate must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0)) throw std::invalid_argument("beta1 must lie in [0, 1)");
  if (!(beta2 >= 0.0 && beta2 < 1.0)) throw std::invalid_argument("beta2 must lie in [0, 1)");
  if (!(epsilon > 0.0)) throw std::invalid_argument("epsilon must be positive");
  if (!(weight_decay >= 0.0)) throw std::invalid_argument("weight_decay must be non-negative");
}

void adam_step(ParameterSet& params, const Gradients& grads, const AdamConfig& config) {
  config.validate();
  if (grads.values.size() != params.parameters.size()) {
    throw ShapeError("adam_step got " + std::to_string(grads.values.size()) + " gradients for " +
                     std::to_string(params.parameters.size()) + " parameters");
  }
  for (std::size_t i = 0; i < grads.values.size(); ++i) {
    const Parameter& p = params.parameters[i];
    if (!grads.values[i].same_shape(p.value) || !p.first_moment.same_shape(p.value) ||
        !p.second_moment.same_shape(p.value)) {
      throw ShapeError("adam_step shape mismatch for " + p.name + ": parameter " +
                       shape_string(p.value.shape()) + ", gradient " + shape_string(grads.values[i].shape()));
    }
  }
  const double t = static_cast<double>(params.step + 1);
  const double correction1 = 1.0 - std::pow(config.beta1, t);
  const double correction2 = 1.0 - std::pow(config.beta2, t);
  for (std::size_t i = 0; i < grads.values.size(); ++i) {
    Parameter& p = params.parameters[i];
    const Tensor& g = grads.values[i];
    for (std::size_t j = 0; j < g.size(); ++j) {
      double& m = p.first_moment[j];
      double& v = p.second_moment[j];
      m = config.beta1 * m + (1.0 - config.beta1) * g[j];
      v = config.beta2 * v + (1.0 - config.beta2) * g[j] * g[j];
      const double m_hat = m / correction1;
      const double v_hat = v / correction2;
      p.value[j] -= config.learning_rate * (m_hat / (std::sqrt(v_hat) + config.epsilon) +
                                            config.weight_decay * p.value[j]);
    }
  }
  ++params.step;
}

}  // namespace uqens
