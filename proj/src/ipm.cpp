#include "tarnet/ipm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <tuple>

#include "tarnet/error.hpp"

namespace tarnet {

std::string to_string(IpmKind kind) {
  return kind == IpmKind::mmd_rbf ? "mmd_rbf" : "sinkhorn";
}

IpmKind ipm_kind_from_string(const std::string& name) {
  if (name == "mmd_rbf" || name == "mmd") return IpmKind::mmd_rbf;
  if (name == "sinkhorn" || name == "wasserstein") return IpmKind::sinkhorn;
  throw ConfigError("unknown IPM kind '" + name + "'");
}

void IpmConfig::validate() const {
  if (bandwidth && !(*bandwidth > 0.0)) throw ConfigError("ipm: bandwidth must be positive");
  if (epsilon && !(*epsilon > 0.0)) throw ConfigError("ipm: epsilon must be positive");
  if (max_iters < 1) throw ConfigError("ipm: max_iters must be >= 1");
  if (!(convergence_tol > 0.0)) throw ConfigError("ipm: convergence_tol must be positive");
}

SampleSet::SampleSet(std::size_t rows, std::size_t dim, std::vector<double> values)
    : dim_(dim), values_(std::move(values)) {
  if (dim_ == 0 || values_.size() != rows * dim_) {
    throw DimensionError("sample set: value count does not match rows x dim");
  }
}

void SampleSet::push_back(std::span<const double> v) {
  if (dim_ == 0) dim_ = v.size();
  if (v.size() != dim_ || dim_ == 0) throw DimensionError("sample set: row has wrong dimension");
  values_.insert(values_.end(), v.begin(), v.end());
}

namespace {

constexpr std::size_t kMedianRowLimit = 1024;

void check_pair(const SampleSet& a, const SampleSet& b) {
  if (a.empty() || b.empty()) throw DataError("ipm: empty sample set");
  if (a.dim() != b.dim()) {
    throw DimensionError("ipm: sample sets have dimensions " + std::to_string(a.dim()) +
                         " and " + std::to_string(b.dim()));
  }
}

inline double sq_dist(const double* u, const double* v, std::size_t d) {
  double s = 0.0;
  for (std::size_t k = 0; k < d; ++k) {
    const double diff = u[k] - v[k];
    s += diff * diff;
  }
  return s;
}

// Estimators are evaluated with their arguments in a canonical order so that
// swapping the arguments gives bit-identical values.
bool canonical_swap(const SampleSet& a, const SampleSet& b) {
  const std::size_t n = a.size();
  const std::size_t m = b.size();
  return std::tie(m, b.values()) < std::tie(n, a.values());
}

}  // namespace

double median_pairwise_distance(const SampleSet& a, const SampleSet& b) {
  check_pair(a, b);
  const std::size_t d = a.dim();
  std::vector<const double*> rows;
  rows.reserve(a.size() + b.size());
  for (std::size_t i = 0; i < a.size(); ++i) rows.push_back(a.row(i).data());
  for (std::size_t i = 0; i < b.size(); ++i) rows.push_back(b.row(i).data());
  if (rows.size() > kMedianRowLimit) {
    // Evenly strided subsample keeps the cost bounded on large pools.
    std::vector<const double*> sub;
    sub.reserve(kMedianRowLimit);
    for (std::size_t k = 0; k < kMedianRowLimit; ++k) {
      sub.push_back(rows[k * rows.size() / kMedianRowLimit]);
    }
    rows.swap(sub);
  }
  if (rows.size() < 2) return 0.0;
  std::vector<double> dists;
  dists.reserve(rows.size() * (rows.size() - 1) / 2);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = i + 1; j < rows.size(); ++j) {
      dists.push_back(std::sqrt(sq_dist(rows[i], rows[j], d)));
    }
  }
  const std::size_t mid = dists.size() / 2;
  std::nth_element(dists.begin(), dists.begin() + static_cast<std::ptrdiff_t>(mid), dists.end());
  double med = dists[mid];
  if (dists.size() % 2 == 0) {
    const double lower =
        *std::max_element(dists.begin(), dists.begin() + static_cast<std::ptrdiff_t>(mid));
    med = 0.5 * (med + lower);
  }
  return med;
}

namespace {

// Accumulates sum_{i,j} k(x_i, x_j) over one set and the matching gradient
// (scaled by `scale`) using the i<j symmetry.
double self_kernel_sum(const SampleSet& x, double inv_two_s2, double inv_s2, double scale,
                       std::vector<double>& grad) {
  const std::size_t n = x.size();
  const std::size_t d = x.dim();
  const double* v = x.values().data();
  double off = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double* xi = v + i * d;
    double* gi = grad.data() + i * d;
    for (std::size_t j = i + 1; j < n; ++j) {
      const double* xj = v + j * d;
      const double k = std::exp(-sq_dist(xi, xj, d) * inv_two_s2);
      off += k;
      // d/dx_i of 2 k(x_i,x_j) = -2 k (x_i - x_j) / s^2
      const double c = -2.0 * scale * k * inv_s2;
      double* gj = grad.data() + j * d;
      for (std::size_t t = 0; t < d; ++t) {
        const double diff = xi[t] - xj[t];
        gi[t] += c * diff;
        gj[t] -= c * diff;
      }
    }
  }
  return static_cast<double>(n) + 2.0 * off;
}

IpmResult mmd_ordered(const SampleSet& a, const SampleSet& b, const IpmConfig& cfg) {
  const std::size_t n = a.size();
  const std::size_t m = b.size();
  const std::size_t d = a.dim();
  double sigma = cfg.bandwidth ? *cfg.bandwidth : median_pairwise_distance(a, b);
  if (!(sigma > 0.0) || !std::isfinite(sigma)) sigma = 1.0;
  const double inv_s2 = 1.0 / (sigma * sigma);
  const double inv_two_s2 = 0.5 * inv_s2;

  IpmResult r;
  r.scale = sigma;
  r.grad_a.assign(n * d, 0.0);
  r.grad_b.assign(m * d, 0.0);
  const double nn = static_cast<double>(n) * static_cast<double>(n);
  const double mm = static_cast<double>(m) * static_cast<double>(m);
  const double nm = static_cast<double>(n) * static_cast<double>(m);

  const double saa = self_kernel_sum(a, inv_two_s2, inv_s2, 1.0 / nn, r.grad_a);
  const double sbb = self_kernel_sum(b, inv_two_s2, inv_s2, 1.0 / mm, r.grad_b);

  double sab = 0.0;
  const double* av = a.values().data();
  const double* bv = b.values().data();
  for (std::size_t i = 0; i < n; ++i) {
    const double* ai = av + i * d;
    double* gi = r.grad_a.data() + i * d;
    for (std::size_t j = 0; j < m; ++j) {
      const double* bj = bv + j * d;
      const double k = std::exp(-sq_dist(ai, bj, d) * inv_two_s2);
      sab += k;
      // d/da_i of -2/(nm) k(a_i,b_j) = 2/(nm) k (a_i - b_j) / s^2
      const double c = 2.0 * k * inv_s2 / nm;
      double* gj = r.grad_b.data() + j * d;
      for (std::size_t t = 0; t < d; ++t) {
        const double diff = ai[t] - bj[t];
        gi[t] += c * diff;
        gj[t] -= c * diff;
      }
    }
  }
  const double raw = (saa / nn + sbb / mm) - 2.0 * sab / nm;
  if (raw > 0.0) {
    r.value = raw;
  } else {
    r.value = 0.0;
    std::fill(r.grad_a.begin(), r.grad_a.end(), 0.0);
    std::fill(r.grad_b.begin(), r.grad_b.end(), 0.0);
  }
  return r;
}

bool same_multiset(const SampleSet& a, const SampleSet& b) {
  if (a.size() != b.size()) return false;
  auto sorted_rows = [](const SampleSet& s) {
    std::vector<std::vector<double>> rows;
    for (std::size_t i = 0; i < s.size(); ++i) rows.emplace_back(s.row(i).begin(), s.row(i).end());
    std::sort(rows.begin(), rows.end());
    return rows;
  };
  return sorted_rows(a) == sorted_rows(b);
}

IpmResult swapped(IpmResult r) {
  std::swap(r.grad_a, r.grad_b);
  return r;
}

}  // namespace

IpmResult mmd_rbf(const SampleSet& a, const SampleSet& b, const IpmConfig& cfg) {
  check_pair(a, b);
  cfg.validate();
  // Rounding would otherwise leave ~1e-16 where the estimator is exactly 0
  // (the gradient cancels too).
  if (same_multiset(a, b)) {
    IpmResult r;
    r.scale = cfg.bandwidth ? *cfg.bandwidth : median_pairwise_distance(a, b);
    r.grad_a.assign(a.values().size(), 0.0);
    r.grad_b.assign(b.values().size(), 0.0);
    return r;
  }
  if (canonical_swap(a, b)) return swapped(mmd_ordered(b, a, cfg));
  return mmd_ordered(a, b, cfg);
}

namespace {

double log_sum_exp(const double* v, std::size_t n) {
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) mx = std::max(mx, v[i]);
  if (!std::isfinite(mx)) return mx;
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += std::exp(v[i] - mx);
  return mx + std::log(s);
}

}  // namespace

EntropicOtResult entropic_ot(const SampleSet& a, const SampleSet& b, double epsilon,
                             int max_iters, double tol) {
  check_pair(a, b);
  if (!(epsilon > 0.0)) throw ConfigError("sinkhorn: epsilon must be positive");
  const std::size_t n = a.size();
  const std::size_t m = b.size();
  const std::size_t d = a.dim();
  const double log_a = -std::log(static_cast<double>(n));
  const double log_b = -std::log(static_cast<double>(m));

  std::vector<double> cost(n * m);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      cost[i * m + j] = std::sqrt(sq_dist(a.row(i).data(), b.row(j).data(), d));
    }
  }

  std::vector<double> f(n, 0.0), g(m, 0.0), buf(std::max(n, m));
  EntropicOtResult r;
  const double inv_eps = 1.0 / epsilon;
  for (int it = 1; it <= max_iters; ++it) {
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < m; ++j) buf[j] = (g[j] - cost[i * m + j]) * inv_eps + log_b;
      f[i] = -epsilon * log_sum_exp(buf.data(), m);
    }
    for (std::size_t j = 0; j < m; ++j) {
      for (std::size_t i = 0; i < n; ++i) buf[i] = (f[i] - cost[i * m + j]) * inv_eps + log_a;
      g[j] = -epsilon * log_sum_exp(buf.data(), n);
    }
    // Column marginals are exact after the g-update; measure the row side.
    double err = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double row = 0.0;
      for (std::size_t j = 0; j < m; ++j) {
        row += std::exp((f[i] + g[j] - cost[i * m + j]) * inv_eps + log_a + log_b);
      }
      err += std::abs(row - std::exp(log_a));
    }
    r.iterations = it;
    if (err < tol) {
      r.converged = true;
      break;
    }
  }

  double fa = 0.0, gb = 0.0;
  for (double v : f) fa += v;
  for (double v : g) gb += v;
  r.value = fa / static_cast<double>(n) + gb / static_cast<double>(m);

  r.grad_a.assign(n * d, 0.0);
  r.grad_b.assign(m * d, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const double* ai = a.row(i).data();
    for (std::size_t j = 0; j < m; ++j) {
      const double c = cost[i * m + j];
      if (c <= 0.0) continue;
      const double p = std::exp((f[i] + g[j] - c) * inv_eps + log_a + log_b);
      const double* bj = b.row(j).data();
      const double w = p / c;
      for (std::size_t t = 0; t < d; ++t) {
        const double diff = ai[t] - bj[t];
        r.grad_a[i * d + t] += w * diff;
        r.grad_b[j * d + t] -= w * diff;
      }
    }
  }
  return r;
}

namespace {

IpmResult sinkhorn_ordered(const SampleSet& a, const SampleSet& b, const IpmConfig& cfg) {
  double eps = 0.0;
  if (cfg.epsilon) {
    eps = *cfg.epsilon;
  } else {
    eps = 0.1 * median_pairwise_distance(a, b);
    if (!(eps > 0.0) || !std::isfinite(eps)) eps = 0.1;
  }
  const EntropicOtResult ab = entropic_ot(a, b, eps, cfg.max_iters, cfg.convergence_tol);
  const EntropicOtResult aa = entropic_ot(a, a, eps, cfg.max_iters, cfg.convergence_tol);
  const EntropicOtResult bb = entropic_ot(b, b, eps, cfg.max_iters, cfg.convergence_tol);

  IpmResult r;
  r.scale = eps;
  r.converged = ab.converged && aa.converged && bb.converged;
  r.iterations = std::max({ab.iterations, aa.iterations, bb.iterations});
  const double raw = ab.value - 0.5 * aa.value - 0.5 * bb.value;
  r.grad_a.resize(ab.grad_a.size());
  r.grad_b.resize(ab.grad_b.size());
  if (raw > 0.0) {
    r.value = raw;
    for (std::size_t k = 0; k < r.grad_a.size(); ++k) {
      r.grad_a[k] = ab.grad_a[k] - 0.5 * (aa.grad_a[k] + aa.grad_b[k]);
    }
    for (std::size_t k = 0; k < r.grad_b.size(); ++k) {
      r.grad_b[k] = ab.grad_b[k] - 0.5 * (bb.grad_a[k] + bb.grad_b[k]);
    }
  } else {
    r.value = 0.0;
    std::fill(r.grad_a.begin(), r.grad_a.end(), 0.0);
    std::fill(r.grad_b.begin(), r.grad_b.end(), 0.0);
  }
  return r;
}

}  // namespace

IpmResult sinkhorn_divergence(const SampleSet& a, const SampleSet& b, const IpmConfig& cfg) {
  check_pair(a, b);
  cfg.validate();
  if (canonical_swap(a, b)) return swapped(sinkhorn_ordered(b, a, cfg));
  return sinkhorn_ordered(a, b, cfg);
}

IpmResult ipm(const SampleSet& a, const SampleSet& b, const IpmConfig& cfg) {
  switch (cfg.kind) {
    case IpmKind::mmd_rbf:
      return mmd_rbf(a, b, cfg);
    case IpmKind::sinkhorn:
      return sinkhorn_divergence(a, b, cfg);
  }
  throw ConfigError("ipm: unknown kind");
}

}  // namespace tarnet
