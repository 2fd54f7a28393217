#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "tarnet/dataset.hpp"
#include "tarnet/dgp.hpp"
#include "tarnet/network.hpp"
#include "tarnet/train.hpp"
#include "tarnet/transfer.hpp"

namespace tarnet {

// Baseline network used for targets up to max_target_size rows (unset: no
// upper limit). Rules are tried in order.
struct TargetSpecRule {
  std::optional<std::size_t> max_target_size;
  std::vector<std::size_t> encoder_widths;
  std::vector<std::size_t> head_widths;
};

std::vector<TargetSpecRule> default_target_specs();
TrainConfig default_target_train();

struct ExperimentConfig {
  DgpParams dgp;
  std::vector<std::size_t> source_sizes = {1000, 5000, 10000, 20000, 30000};
  std::vector<std::size_t> target_sizes = {50, 100, 250, 500};
  std::vector<Origin> sampling = {Origin::target_random, Origin::target_biased};
  std::size_t replications = 100;
  // input_dim follows dgp.d.
  NetworkSpec spec{5, {16, 16, 16}, {8, 8}};
  TrainConfig source_train;
  // Plain TARNet fitted on target rows only.
  TrainConfig target_train = default_target_train();
  std::vector<TargetSpecRule> target_specs = default_target_specs();
  TransferConfig transfer;
  // Skip the (1000 source, 500 target) cell.
  bool exclude_small_source_large_target = true;
  bool compute_cita = true;
  std::uint64_t master_seed = 20240601;
  std::size_t workers = 1;

  // Throws ConfigError.
  void validate() const;
};

std::string sampling_name(Origin origin);
Origin sampling_from_name(const std::string& name);

NetworkSpec source_spec(const ExperimentConfig& cfg);
NetworkSpec target_spec_for(const ExperimentConfig& cfg, std::size_t n_target);
bool cell_excluded(const ExperimentConfig& cfg, std::size_t n_source, std::size_t n_target);

nlohmann::json config_to_json(const ExperimentConfig& cfg);
ExperimentConfig config_from_json(const nlohmann::json& j);
// Accepts a config file or a run manifest (its embedded config is used).
ExperimentConfig load_config(const std::filesystem::path& path);

// FNV-1a over the canonical JSON of everything that affects results (worker
// count excluded), as 16 hex digits.
std::string config_hash(const ExperimentConfig& cfg);

struct UnitSeeds {
  std::uint64_t source_data = 0;
  std::uint64_t source_train = 0;
};
struct CellSeeds {
  std::uint64_t target_data = 0;
  std::uint64_t baseline_train = 0;
  std::uint64_t transfer = 0;
};

UnitSeeds unit_seeds(std::uint64_t master, std::size_t n_source, std::size_t replication);
CellSeeds cell_seeds(std::uint64_t master, std::size_t n_source, std::size_t replication,
                     std::size_t n_target, Origin sampling);

}  // namespace tarnet
