#include "tarnet/optimizer.hpp"

#include <cmath>
#include <string>

#include "tarnet/error.hpp"

namespace tarnet {

OptimizerState::OptimizerState(const ParameterStore& store, AdamOptions options)
    : options_(options),
      first_(Gradients::zeros_like(store)),
      second_(Gradients::zeros_like(store)) {
  set_learning_rate(options.learning_rate);
}

void OptimizerState::set_learning_rate(double lr) {
  if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("learning rate must be positive");
  options_.learning_rate = lr;
}

namespace {

void check_finite(const ParameterStore& store, const Gradients& grads) {
  for (std::size_t l = 0; l < store.layer_count(); ++l) {
    if (store.layer(l).frozen) continue;
    const auto& g = grads.layers[l];
    for (std::size_t j = 0; j < g.weights.size(); ++j) {
      if (!std::isfinite(g.weights[j])) {
        throw NumericalError("non-finite gradient in layer " + std::to_string(l) +
                             " weight " + std::to_string(j));
      }
    }
    for (std::size_t j = 0; j < g.biases.size(); ++j) {
      if (!std::isfinite(g.biases[j])) {
        throw NumericalError("non-finite gradient in layer " + std::to_string(l) + " bias " +
                             std::to_string(j));
      }
    }
  }
}

void update(std::vector<double>& param, const std::vector<double>& grad, std::vector<double>& m,
            std::vector<double>& v, const AdamOptions& o, double c1, double c2) {
  for (std::size_t j = 0; j < param.size(); ++j) {
    m[j] = o.beta1 * m[j] + (1.0 - o.beta1) * grad[j];
    v[j] = o.beta2 * v[j] + (1.0 - o.beta2) * grad[j] * grad[j];
    const double m_hat = m[j] / c1;
    const double v_hat = v[j] / c2;
    param[j] -= o.learning_rate * m_hat / (std::sqrt(v_hat) + o.epsilon);
  }
}

}  // namespace

void adam_step(ParameterStore& store, const Gradients& grads, OptimizerState& state) {
  if (grads.layers.size() != store.layer_count() ||
      state.first_.layers.size() != store.layer_count()) {
    throw DimensionError("adam_step: gradient/state shape does not match the store");
  }
  for (std::size_t l = 0; l < store.layer_count(); ++l) {
    if (grads.layers[l].weights.size() != store.layer(l).weights.size() ||
        grads.layers[l].biases.size() != store.layer(l).biases.size()) {
      throw DimensionError("adam_step: gradient shape mismatch in layer " + std::to_string(l));
    }
  }
  check_finite(store, grads);

  ++state.step_;
  const AdamOptions& o = state.options_;
  const double t = static_cast<double>(state.step_);
  const double c1 = 1.0 - std::pow(o.beta1, t);
  const double c2 = 1.0 - std::pow(o.beta2, t);
  for (std::size_t l = 0; l < store.layer_count(); ++l) {
    if (store.layer(l).frozen) continue;
    DenseLayer& layer = store.mutable_layer(l);
    update(layer.weights, grads.layers[l].weights, state.first_.layers[l].weights,
           state.second_.layers[l].weights, o, c1, c2);
    update(layer.biases, grads.layers[l].biases, state.first_.layers[l].biases,
           state.second_.layers[l].biases, o, c1, c2);
  }
}

}  // namespace tarnet
