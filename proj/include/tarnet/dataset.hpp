#pragma once

#include <atomic>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace tarnet {

enum class Origin { source, target_random, target_biased, external_csv };

std::string to_string(Origin origin);
Origin origin_from_string(const std::string& name);

// Covariates, binary treatment and observed outcome. Simulated data also
// carries both potential outcomes and the true effect.
struct Dataset {
  std::size_t dim = 0;
  std::vector<double> X;  // size() x dim, row-major
  std::vector<int> t;
  std::vector<double> y;
  std::vector<double> y0;
  std::vector<double> y1;
  std::vector<double> tau;
  std::vector<std::string> covariate_names;
  Origin origin = Origin::external_csv;

  std::size_t size() const noexcept { return t.size(); }
  std::span<const double> row(std::size_t i) const { return {X.data() + i * dim, dim}; }
  bool has_potential_outcomes() const noexcept { return !y0.empty(); }
  std::size_t treated_count() const noexcept;
  double treated_fraction() const;

  // Throws DataError on inconsistent lengths, non-binary treatment, or a
  // violated y = t*y1 + (1-t)*y0 identity.
  void validate() const;

  Dataset subset(std::span<const std::size_t> rows) const;
};

// Row-reading counters for auditing which data a procedure touches.
struct AccessLog {
  std::atomic<std::size_t> covariate_reads{0};
  std::atomic<std::size_t> treatment_reads{0};
  std::atomic<std::size_t> outcome_reads{0};

  std::size_t total() const noexcept {
    return covariate_reads.load() + treatment_reads.load() + outcome_reads.load();
  }
};

// Read access used by every training and scoring routine; optionally counts
// reads into an AccessLog.
class DataView {
 public:
  DataView(const Dataset& data, AccessLog* log = nullptr) : data_(&data), log_(log) {}

  std::size_t size() const noexcept { return data_->size(); }
  std::size_t dim() const noexcept { return data_->dim; }

  std::span<const double> x(std::size_t i) const {
    if (log_) log_->covariate_reads.fetch_add(1, std::memory_order_relaxed);
    return data_->row(i);
  }
  int t(std::size_t i) const {
    if (log_) log_->treatment_reads.fetch_add(1, std::memory_order_relaxed);
    return data_->t[i];
  }
  double y(std::size_t i) const {
    if (log_) log_->outcome_reads.fetch_add(1, std::memory_order_relaxed);
    return data_->y[i];
  }

  std::size_t treated_count() const;

 private:
  const Dataset* data_;
  AccessLog* log_;
};

}  // namespace tarnet
