#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "tarnet/dataset.hpp"

namespace tarnet {

// Linear outcome model with treatment-covariate interactions:
//   y0 = alpha + gamma'x + e,  y1 = alpha + beta + (gamma + omega)'x + e,
// x ~ N(0, I_d), T ~ Bernoulli(1/2), e ~ N(0, sigma^2) shared by both arms.
struct DgpParams {
  double alpha = 0.0;
  double beta = 1.0;
  std::vector<double> gamma = std::vector<double>(5, 0.5);
  std::vector<double> omega = std::vector<double>(5, 0.5);
  double sigma = 1.0;
  std::size_t d = 5;

  void validate() const;
};

double expit(double z) noexcept;

Dataset gen_source(std::size_t n, const DgpParams& params, std::uint64_t seed);

// Uniform draw of n_t rows without replacement; treatment kept.
Dataset subsample_random(const Dataset& source, std::size_t n_t, std::uint64_t seed);

// Uniform draw of n_t persons whose treatment is then reassigned with
// P(T = 1) = expit(y0); observed outcomes follow the new assignment.
Dataset subsample_biased(const Dataset& source, std::size_t n_t, std::uint64_t seed);

}  // namespace tarnet
