#include "tarnet/dgp.hpp"

#include <cmath>
#include <numeric>
#include <random>

#include "tarnet/error.hpp"
#include "tarnet/rng.hpp"

namespace tarnet {

void DgpParams::validate() const {
  if (d < 1) throw ConfigError("dgp: d must be >= 1");
  if (gamma.size() != d || omega.size() != d) {
    throw ConfigError("dgp: gamma and omega must have length d");
  }
  if (!(sigma > 0.0)) throw ConfigError("dgp: sigma must be positive");
}

double expit(double z) noexcept {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

Dataset gen_source(std::size_t n, const DgpParams& params, std::uint64_t seed) {
  params.validate();
  if (n < 2) throw ConfigError("gen_source: need at least 2 rows");
  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::bernoulli_distribution coin(0.5);

  Dataset data;
  data.dim = params.d;
  data.origin = Origin::source;
  data.X.resize(n * params.d);
  data.t.resize(n);
  data.y.resize(n);
  data.y0.resize(n);
  data.y1.resize(n);
  data.tau.resize(n);
  for (std::size_t k = 0; k < params.d; ++k) data.covariate_names.push_back("x" + std::to_string(k + 1));

  for (std::size_t i = 0; i < n; ++i) {
    double base = params.alpha;
    double treated = params.alpha + params.beta;
    for (std::size_t k = 0; k < params.d; ++k) {
      const double x = normal(rng);
      data.X[i * params.d + k] = x;
      base += params.gamma[k] * x;
      treated += (params.gamma[k] + params.omega[k]) * x;
    }
    const int t = coin(rng) ? 1 : 0;
    const double e = params.sigma * normal(rng);
    data.y0[i] = base + e;
    data.y1[i] = treated + e;
    data.tau[i] = data.y1[i] - data.y0[i];
    data.t[i] = t;
    data.y[i] = t == 1 ? data.y1[i] : data.y0[i];
  }
  return data;
}

namespace {

std::vector<std::size_t> draw_without_replacement(std::size_t n, std::size_t k, Rng& rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  for (std::size_t i = 0; i < k; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, n - 1);
    std::swap(idx[i], idx[pick(rng)]);
  }
  idx.resize(k);
  return idx;
}

}  // namespace

Dataset subsample_random(const Dataset& source, std::size_t n_t, std::uint64_t seed) {
  if (n_t < 1 || n_t > source.size()) {
    throw DataError("subsample_random: n_t=" + std::to_string(n_t) + " not in [1, " +
                    std::to_string(source.size()) + "]");
  }
  Rng rng(seed);
  const auto rows = draw_without_replacement(source.size(), n_t, rng);
  Dataset out = source.subset(rows);
  out.origin = Origin::target_random;
  return out;
}

Dataset subsample_biased(const Dataset& source, std::size_t n_t, std::uint64_t seed) {
  if (!source.has_potential_outcomes()) {
    throw DataError("subsample_biased: source lacks potential outcomes");
  }
  if (n_t < 1 || n_t > source.size()) {
    throw DataError("subsample_biased: n_t=" + std::to_string(n_t) + " not in [1, " +
                    std::to_string(source.size()) + "]");
  }
  Rng rng(seed);
  const auto rows = draw_without_replacement(source.size(), n_t, rng);
  Dataset out = source.subset(rows);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (std::size_t i = 0; i < out.size(); ++i) {
    out.t[i] = unif(rng) < expit(out.y0[i]) ? 1 : 0;
    out.y[i] = out.t[i] == 1 ? out.y1[i] : out.y0[i];
  }
  out.origin = Origin::target_biased;
  return out;
}

}  // namespace tarnet
