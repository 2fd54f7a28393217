#pragma once

#include <cstdint>

#include "tarnet/network.hpp"

namespace tarnet {

struct AdamOptions {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

class OptimizerState {
 public:
  OptimizerState(const ParameterStore& store, AdamOptions options);

  const AdamOptions& options() const noexcept { return options_; }
  void set_learning_rate(double lr);
  std::uint64_t step() const noexcept { return step_; }

 private:
  friend void adam_step(ParameterStore&, const Gradients&, OptimizerState&);

  AdamOptions options_;
  Gradients first_;
  Gradients second_;
  std::uint64_t step_ = 0;
};

// Bias-corrected Adam update of every non-frozen layer. Throws NumericalError
// (naming the layer and slot) on a non-finite gradient, before touching any
// parameter.
void adam_step(ParameterStore& store, const Gradients& grads, OptimizerState& state);

}  // namespace tarnet
