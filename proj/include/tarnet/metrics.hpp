#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace tarnet {

// Mean squared difference. Throws DataError on empty or unequal inputs.
double pehe(std::span<const double> tau_hat, std::span<const double> tau_true);
double pehe_rmse(std::span<const double> tau_hat, std::span<const double> tau_true);

double mean_ite(std::span<const double> tau_hat);

struct Dispersion {
  double sd = 0.0;  // n - 1 denominator; 0 for a single value
  double se = 0.0;
};
Dispersion dispersion(std::span<const double> values);

struct ScenarioKey {
  std::size_t n_source = 0;
  std::size_t n_target = 0;
  std::string sampling;
  std::string method;

  auto operator<=>(const ScenarioKey&) const = default;
};

struct ReplicationResult {
  ScenarioKey key;
  std::size_t replication = 0;
  std::uint64_t seed = 0;
  double mean_ite = 0.0;
  double pehe = 0.0;  // squared
  std::optional<double> cita;
};

struct ScenarioSummary {
  ScenarioKey key;
  std::size_t replications = 0;
  double mean_ite = 0.0;
  double bias = 0.0;
  std::optional<double> se;  // absent for a single replication
  double pehe_sq_mean = 0.0;
  double pehe_rmse_mean = 0.0;
  std::optional<double> cita_mean;
};

// Groups by key (sorted); within a group results are ordered by replication
// so the output does not depend on input order.
std::vector<ScenarioSummary> summarize(std::vector<ReplicationResult> results, double beta);

std::string summary_to_csv(const std::vector<ScenarioSummary>& summaries);

}  // namespace tarnet
