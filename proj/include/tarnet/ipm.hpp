#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace tarnet {

enum class IpmKind { mmd_rbf, sinkhorn };

std::string to_string(IpmKind kind);
IpmKind ipm_kind_from_string(const std::string& name);

struct IpmConfig {
  IpmKind kind = IpmKind::mmd_rbf;
  // RBF bandwidth; unset means the median pairwise distance of the pooled sets.
  std::optional<double> bandwidth;
  // Entropic regularization; unset means 0.1 x median pairwise distance.
  std::optional<double> epsilon;
  int max_iters = 200;
  double convergence_tol = 1e-6;

  void validate() const;
};

// Row-major set of equal-length vectors.
class SampleSet {
 public:
  SampleSet() = default;
  SampleSet(std::size_t dim) : dim_(dim) {}
  SampleSet(std::size_t rows, std::size_t dim, std::vector<double> values);

  std::size_t size() const noexcept { return dim_ == 0 ? 0 : values_.size() / dim_; }
  std::size_t dim() const noexcept { return dim_; }
  bool empty() const noexcept { return values_.empty(); }
  std::span<const double> row(std::size_t i) const {
    return {values_.data() + i * dim_, dim_};
  }
  void push_back(std::span<const double> v);
  const std::vector<double>& values() const noexcept { return values_; }

 private:
  std::size_t dim_ = 0;
  std::vector<double> values_;
};

struct IpmResult {
  double value = 0.0;
  // d(value)/d(row), row-major, same shape as the inputs.
  std::vector<double> grad_a;
  std::vector<double> grad_b;
  // Sinkhorn only: false when some inner problem hit max_iters.
  bool converged = true;
  int iterations = 0;
  // Bandwidth (MMD) or epsilon (Sinkhorn) actually used.
  double scale = 0.0;
};

// Median Euclidean distance over all distinct pairs of the pooled sets.
double median_pairwise_distance(const SampleSet& a, const SampleSet& b);

// Biased (V-statistic) squared MMD with a Gaussian kernel, clamped at zero.
IpmResult mmd_rbf(const SampleSet& a, const SampleSet& b, const IpmConfig& cfg);

// Entropic OT cost (dual value) between uniform measures with Euclidean ground
// cost, computed in the log domain. Gradients follow from the potentials.
struct EntropicOtResult {
  double value = 0.0;
  std::vector<double> grad_a;
  std::vector<double> grad_b;
  bool converged = false;
  int iterations = 0;
};
EntropicOtResult entropic_ot(const SampleSet& a, const SampleSet& b, double epsilon,
                             int max_iters, double tol);

// OT_e(a,b) - OT_e(a,a)/2 - OT_e(b,b)/2, clamped at zero.
IpmResult sinkhorn_divergence(const SampleSet& a, const SampleSet& b, const IpmConfig& cfg);

// Dispatches on cfg.kind.
IpmResult ipm(const SampleSet& a, const SampleSet& b, const IpmConfig& cfg);

}  // namespace tarnet
