#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "tarnet/cita.hpp"
#include "tarnet/dataset.hpp"
#include "tarnet/experiment_config.hpp"
#include "tarnet/metrics.hpp"
#include "tarnet/model.hpp"
#include "tarnet/transfer.hpp"

namespace tarnet {

inline constexpr const char* kToolVersion = "tltarnet 1.0.0";

struct SimulateOutput {
  std::vector<std::filesystem::path> source_files;
  std::vector<std::filesystem::path> target_files;
};

// Writes data/source_ns<N>_r<r>.csv and data/target_ns<N>_nt<M>_<sampling>_r<r>.csv
// (each with a .meta.json sidecar) plus manifest.json.
SimulateOutput run_simulate(const ExperimentConfig& cfg, const std::filesystem::path& out_dir);

// One (target size, sampling regime) cell of a replication.
struct CellResult {
  std::size_t n_target = 0;
  Origin sampling = Origin::target_random;
  CellSeeds seeds;
  ReplicationResult tarnet;
  ReplicationResult tl_tarnet;
  std::optional<CitaScore> cita;
  TransferReport report;
  // Source-row reads made while fitting the plain baseline; always 0.
  std::size_t baseline_source_reads = 0;
  std::optional<TarnetModel> baseline_model;
  std::optional<TarnetModel> transfer_model;
};

// One source dataset (size, replication) and every target drawn from it.
struct UnitResult {
  std::size_t n_source = 0;
  std::size_t replication = 0;
  UnitSeeds seeds;
  std::optional<TarnetModel> source_model;
  TrainHistory source_history;
  std::vector<CellResult> cells;
};

// Pure computation, no files.
UnitResult run_unit(const ExperimentConfig& cfg, std::size_t n_source, std::size_t replication);

struct StudyOptions {
  std::size_t workers = 1;
  // Skip units already completed under the same config hash.
  bool resume = false;
  // Stop once this many units have been computed in this invocation
  // (interruption for testing resumes).
  std::optional<std::size_t> stop_after;
};

struct StudyOutcome {
  std::size_t total_units = 0;
  std::size_t computed = 0;
  std::size_t reused = 0;
  std::vector<std::string> failures;
  bool complete = false;
  // Failures include a numerical one (maps to exit code 3).
  bool numerical_failure = false;
};

// simulate -> train sources -> plain TARNet and TL-TARNet per target -> evaluate.
// Per-unit outputs land in units/ns<N>_r<r>/; manifest.json and, once every
// unit is done, the evaluation tables are written by the calling thread.
StudyOutcome run_full_study(const ExperimentConfig& cfg, const std::filesystem::path& out_dir,
                            const StudyOptions& options);

struct EvaluateOutput {
  std::vector<ReplicationResult> results;
  std::vector<ScenarioSummary> summaries;
};

// Reads manifest.json and every unit's results.csv; writes summary.csv,
// mean_ite_long.csv and pehe_long.csv. Throws DataError listing missing or
// incomplete units, or when the directory holds no runs.
EvaluateOutput run_evaluate(const std::filesystem::path& run_dir);

// Parsing of a results.csv produced by the study.
std::vector<ReplicationResult> parse_results_csv(const std::string& text);

}  // namespace tarnet
