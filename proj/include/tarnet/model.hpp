#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "tarnet/dataset.hpp"
#include "tarnet/ipm.hpp"
#include "tarnet/network.hpp"

namespace tarnet {

class TarnetModel {
 public:
  // Throws InvalidSpecError when the store does not match `spec` layer by layer.
  TarnetModel(NetworkSpec spec, ParameterStore params);

  static TarnetModel initialize(const NetworkSpec& spec, std::uint64_t seed);

  const NetworkSpec& spec() const noexcept { return spec_; }
  const ParameterStore& params() const noexcept { return params_; }
  ParameterStore& mutable_params() noexcept { return params_; }

  const Chain& encoder_chain() const noexcept { return encoder_; }
  const Chain& head_chain(int treatment) const { return heads_.at(treatment); }

 private:
  NetworkSpec spec_;
  ParameterStore params_;
  Chain encoder_;
  std::vector<Chain> heads_;
};

struct ForwardOutput {
  double y0 = 0.0;
  double y1 = 0.0;
  std::vector<double> phi;
};

ForwardOutput tarnet_forward(const TarnetModel& model, std::span<const double> x);

// Row-major covariates; per row y1_hat - y0_hat.
std::vector<double> predict_ite(const TarnetModel& model, std::span<const double> X);
std::vector<double> predict_ite(const TarnetModel& model, const DataView& data);

// Average predicted effect over the rows of data.
double mean_ite(const TarnetModel& model, const DataView& data);

// w_i = t_i/(2v) + (1-t_i)/(2(1-v)) with v the treated fraction of t.
// Throws DataError when t holds a single group.
std::vector<double> sample_weights(std::span<const int> t);

struct LossSettings {
  double alpha = 0.0;
  IpmConfig ipm;
  // Weights use this treated fraction instead of the batch's own; lets a
  // single-group batch still be scored.
  std::optional<double> weight_fraction;
  // Plain mean of squared residuals.
  bool unweighted = false;
};

struct LossValue {
  double factual = 0.0;
  double ipm = 0.0;
  double total = 0.0;
  // alpha > 0 but the batch lacked one of the groups.
  bool ipm_skipped = false;
  Gradients grads;
};

// (1/N) sum w_i (y_i - h_{t_i}(phi(x_i)))^2 + alpha * IPM(phi | t=0, phi | t=1)
// over `rows` of `data`. The IPM estimator is never called when alpha == 0.
LossValue evaluate_loss(const TarnetModel& model, const DataView& data,
                        std::span<const std::size_t> rows, const LossSettings& settings,
                        bool with_gradients = true);

LossValue factual_loss(const TarnetModel& model, const DataView& data,
                       std::span<const std::size_t> rows);
LossValue total_loss(const TarnetModel& model, const DataView& data,
                     std::span<const std::size_t> rows, double alpha, const IpmConfig& ipm);

std::vector<std::size_t> all_rows(std::size_t n);

}  // namespace tarnet
