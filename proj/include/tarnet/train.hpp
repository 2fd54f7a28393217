#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "tarnet/dataset.hpp"
#include "tarnet/error.hpp"
#include "tarnet/ipm.hpp"
#include "tarnet/model.hpp"
#include "tarnet/rng.hpp"

namespace tarnet {

struct TrainConfig {
  double learning_rate = 0.005;
  std::size_t epochs = 700;
  std::size_t batch_size = 32;
  double alpha = 1.0;
  IpmConfig ipm;
  std::uint64_t seed = 0;
  // The rest is held out and only scored.
  double train_fraction = 0.8;

  // Throws ConfigError.
  void validate() const;
};

struct TrainHistory {
  std::vector<double> factual;
  std::vector<double> ipm;
  std::vector<double> total;
  std::vector<std::size_t> skipped_batches;
  // Empty when nothing is held out.
  std::vector<double> holdout_factual;

  std::size_t epochs() const noexcept { return factual.size(); }
};

// Raised on a non-finite loss or gradient; carries what was recorded so far.
class TrainingDiverged : public NumericalError {
 public:
  TrainingDiverged(const std::string& what, TrainHistory history)
      : NumericalError(what), history_(std::move(history)) {}
  const TrainHistory& history() const noexcept { return history_; }

 private:
  TrainHistory history_;
};

struct TrainResult {
  TarnetModel model;
  TrainHistory history;
  std::vector<std::size_t> train_rows;
  std::vector<std::size_t> holdout_rows;
};

// Splits rows into ceil(n / batch_size) batches; treated and control rows are
// shuffled separately and dealt evenly, so each batch keeps roughly the
// overall treated fraction.
std::vector<std::vector<std::size_t>> stratified_batches(const DataView& data,
                                                         std::span<const std::size_t> rows,
                                                         std::size_t batch_size, Rng& rng);

// Fresh Glorot initialization seeded from cfg.seed, then train_model.
TrainResult train_source(const DataView& data, const NetworkSpec& spec, const TrainConfig& cfg);

// Mini-batch Adam from the given parameters; frozen layers stay put.
TrainResult train_model(TarnetModel model, const DataView& data, const TrainConfig& cfg);

// epoch,factual,ipm,total,skipped_batches[,holdout_factual]
std::string history_to_csv(const TrainHistory& history);

}  // namespace tarnet
