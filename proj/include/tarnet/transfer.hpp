#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tarnet/dataset.hpp"
#include "tarnet/error.hpp"
#include "tarnet/ipm.hpp"
#include "tarnet/model.hpp"
#include "tarnet/train.hpp"

namespace tarnet {

struct AlignPhaseConfig {
  double learning_rate = 1e-5;
  std::size_t epochs = 1500;
  IpmConfig ipm;
};

struct FinetunePhaseConfig {
  double learning_rate = 1e-5;
  std::size_t epochs = 1500;
  // Unset: every target row in one batch per epoch.
  std::optional<std::size_t> batch_size;
};

struct TransferConfig {
  // Leading layers held fixed; unset means all encoder layers but the last.
  std::optional<std::size_t> freeze_depth;
  AlignPhaseConfig phase1;
  FinetunePhaseConfig phase2;
  double lambda_tt = 1.0;  // target vs source, treated
  double lambda_cc = 1.0;  // target vs source, control
  double lambda_wt = 1.0;  // treated vs control within target
  // Phase 1 aligns against at most this many source rows.
  std::size_t source_reference_size = 2000;
  std::uint64_t seed = 0;

  std::size_t resolved_freeze_depth(const NetworkSpec& spec) const;
  // Throws ConfigError.
  void validate(const NetworkSpec& spec) const;
};

// Copies every parameter and freezes the first `freeze_depth` layers. Throws
// InvalidSpecError when no trainable layer would remain.
TarnetModel transplant(const TarnetModel& source, std::size_t freeze_depth);

// Covariates split by treatment group; no outcome values.
struct GroupedCovariates {
  SampleSet control;
  SampleSet treated;
};

// Reads only covariates and treatments. Throws DataError when a group is empty.
GroupedCovariates group_covariates(const DataView& data, std::span<const std::size_t> rows);

struct AlignmentTerms {
  double target_source_treated = 0.0;
  double target_source_control = 0.0;
  double within_target = 0.0;
  double total = 0.0;
};

struct AlignmentValue {
  AlignmentTerms terms;
  Gradients grads;
};

// Bandwidths (epsilons) for the three terms, fixed for a run of phase 1.
struct AlignmentScales {
  IpmConfig treated;
  IpmConfig control;
  IpmConfig within;
};

AlignmentScales resolve_alignment_scales(const TarnetModel& model, const GroupedCovariates& source,
                                         const GroupedCovariates& target, const IpmConfig& ipm);

AlignmentValue alignment_loss(const TarnetModel& model, const GroupedCovariates& source,
                              const GroupedCovariates& target, const TransferConfig& cfg,
                              const AlignmentScales& scales, bool with_gradients = true);

// All rows of both datasets, scales resolved from the current representation.
AlignmentValue alignment_loss(const TarnetModel& model, const DataView& source,
                              const DataView& target, const TransferConfig& cfg);

struct AlignPhaseResult {
  TarnetModel model;
  // Alignment loss ahead of each update.
  std::vector<double> trace;
  AlignmentTerms initial;
  AlignmentTerms final;
  AlignmentScales scales;
  std::vector<std::size_t> source_reference;
};

class AlignmentDiverged : public NumericalError {
 public:
  AlignmentDiverged(const std::string& what, std::vector<double> trace)
      : NumericalError(what), trace_(std::move(trace)) {}
  const std::vector<double>& trace() const noexcept { return trace_; }

 private:
  std::vector<double> trace_;
};

// Full-batch Adam on the alignment loss against a fixed reference sample of
// min(N_S, cfg.source_reference_size) source rows. Never reads outcomes.
AlignPhaseResult phase1_align(const TarnetModel& model, const DataView& source,
                              const DataView& target, const TransferConfig& cfg);

struct FinetunePhaseResult {
  TarnetModel model;
  TrainHistory history;
  double initial_factual = 0.0;  // over all target rows
  double final_factual = 0.0;
};

// Mini-batch Adam on the target factual loss only.
FinetunePhaseResult phase2_finetune(const TarnetModel& model, const DataView& target,
                                    const TransferConfig& cfg);

struct TransferReport {
  std::size_t freeze_depth = 0;
  std::size_t frozen_scalars = 0;
  std::vector<double> phase1_trace;
  AlignmentTerms phase1_initial;
  AlignmentTerms phase1_final;
  TrainHistory phase2_history;
  double phase2_initial_factual = 0.0;
  double phase2_final_factual = 0.0;
  // All three alignment terms under the final model, phase-1 reference rows
  // and scales.
  AlignmentTerms final_ipm;
  double mean_ite_before = 0.0;  // transplanted source model on target rows
  double mean_ite_after = 0.0;
};

struct TransferResult {
  TarnetModel model;
  TransferReport report;
};

// transplant -> phase1_align -> phase2_finetune. Errors are re-raised with the
// failing phase named.
TransferResult transfer_pipeline(const TarnetModel& source_model, const DataView& source,
                                 const DataView& target, const TransferConfig& cfg);

std::string alignment_trace_to_csv(std::span<const double> trace);

}  // namespace tarnet
