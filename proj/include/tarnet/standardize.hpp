#pragma once

#include <span>
#include <string>
#include <utility>
#include <vector>

#include "tarnet/dataset.hpp"

namespace tarnet {

struct StandardizeOptions {
  bool scale_outcome = false;
};

// Per-column affine map x' = (x - mean) * scale with scale = 1 / sd (sample
// SD). Outcome pieces are used only when outcome_scaled is set.
struct StandardizeTransform {
  std::vector<std::string> names;
  std::vector<double> means;
  std::vector<double> sds;
  std::vector<double> scales;
  bool outcome_scaled = false;
  double outcome_mean = 0.0;
  double outcome_sd = 1.0;
};

// Throws DataError naming the column when a covariate (or the scaled outcome)
// has zero variance, or when there are fewer than two rows.
std::pair<Dataset, StandardizeTransform> standardize(const Dataset& data,
                                                     StandardizeOptions options = {});

// Reuses a fitted transform, e.g. the source's on a target file.
Dataset apply_transform(const Dataset& data, const StandardizeTransform& transform);
Dataset inverse_transform(const Dataset& data, const StandardizeTransform& transform);

// Effects estimated on a scaled outcome, back in original outcome units.
std::vector<double> ite_to_original_units(std::span<const double> tau_hat,
                                          const StandardizeTransform& transform);

}  // namespace tarnet
