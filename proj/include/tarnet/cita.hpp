#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "tarnet/dataset.hpp"
#include "tarnet/model.hpp"

namespace tarnet {

enum class HeadOrder { identity, swapped };

std::string to_string(HeadOrder order);

struct FisherDiagonal {
  std::vector<double> values;
  std::size_t n_samples = 0;
};

// Mean squared per-example gradient of the weighted factual loss, for every
// parameter (freeze flags are ignored). Under `swapped`, example i is scored
// by head 1 - t_i. Weights come from the dataset's own treated fraction.
FisherDiagonal diag_fisher(const TarnetModel& model, const DataView& data, HeadOrder order);

// ||sqrt(a) - sqrt(b)|| / sqrt(2)
double cita_raw(const FisherDiagonal& a, const FisherDiagonal& b);
// ||sqrt(a) - sqrt(b)|| / (||sqrt(a)|| + ||sqrt(b)||), in [0, 1].
double cita_normalized(const FisherDiagonal& a, const FisherDiagonal& b);

struct CitaScore {
  double raw = 0.0;
  double normalized = 0.0;
  HeadOrder permutation = HeadOrder::identity;
  // Identity order only.
  double one_sided_raw = 0.0;
  double one_sided_normalized = 0.0;
  std::size_t n_source = 0;
  std::size_t n_target = 0;
};

// Minimum over the two head orders of the target Fisher.
CitaScore cita_symmetrized(const TarnetModel& model, const DataView& source,
                           const DataView& target);
CitaScore cita_symmetrized(const FisherDiagonal& f_ss, const TarnetModel& model,
                           const DataView& target, std::size_t n_source);

}  // namespace tarnet
