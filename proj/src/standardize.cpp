#include "tarnet/standardize.hpp"

#include <cmath>

#include "tarnet/error.hpp"

namespace tarnet {

namespace {

std::string column_name(const Dataset& data, std::size_t k) {
  return k < data.covariate_names.size() ? data.covariate_names[k] : "x" + std::to_string(k + 1);
}

double sample_sd(const std::vector<double>& v, double mean) {
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

// tau is rebuilt from the mapped arms so the identities stay exact.
void map_outcomes(Dataset& d, double shift, double scale, bool inverse) {
  auto f = [&](double v) { return inverse ? v / scale + shift : (v - shift) * scale; };
  for (double& v : d.y) v = f(v);
  if (d.has_potential_outcomes()) {
    for (std::size_t i = 0; i < d.size(); ++i) {
      d.y0[i] = f(d.y0[i]);
      d.y1[i] = f(d.y1[i]);
      d.tau[i] = d.y1[i] - d.y0[i];
      d.y[i] = d.t[i] == 1 ? d.y1[i] : d.y0[i];
    }
  }
}

}  // namespace

std::pair<Dataset, StandardizeTransform> standardize(const Dataset& data,
                                                     StandardizeOptions options) {
  data.validate();
  const std::size_t n = data.size();
  if (n < 2) throw DataError("standardize: need at least two rows");
  StandardizeTransform tr;
  for (std::size_t k = 0; k < data.dim; ++k) {
    std::vector<double> col(n);
    for (std::size_t i = 0; i < n; ++i) col[i] = data.X[i * data.dim + k];
    const double m = mean_of(col);
    const double sd = sample_sd(col, m);
    if (!(sd > 0.0)) {
      throw DataError("standardize: column '" + column_name(data, k) + "' has zero variance");
    }
    tr.names.push_back(column_name(data, k));
    tr.means.push_back(m);
    tr.sds.push_back(sd);
    tr.scales.push_back(1.0 / sd);
  }
  if (options.scale_outcome) {
    tr.outcome_scaled = true;
    tr.outcome_mean = mean_of(data.y);
    tr.outcome_sd = sample_sd(data.y, tr.outcome_mean);
    if (!(tr.outcome_sd > 0.0)) throw DataError("standardize: outcome has zero variance");
  }
  return {apply_transform(data, tr), tr};
}

Dataset apply_transform(const Dataset& data, const StandardizeTransform& tr) {
  if (tr.means.size() != data.dim) {
    throw DimensionError("standardize: transform fitted on " + std::to_string(tr.means.size()) +
                         " columns, data has " + std::to_string(data.dim));
  }
  Dataset out = data;
  for (std::size_t i = 0; i < out.size(); ++i) {
    for (std::size_t k = 0; k < out.dim; ++k) {
      double& v = out.X[i * out.dim + k];
      v = (v - tr.means[k]) * tr.scales[k];
    }
  }
  if (tr.outcome_scaled) map_outcomes(out, tr.outcome_mean, 1.0 / tr.outcome_sd, false);
  return out;
}

Dataset inverse_transform(const Dataset& data, const StandardizeTransform& tr) {
  if (tr.means.size() != data.dim) {
    throw DimensionError("standardize: transform does not match data width");
  }
  Dataset out = data;
  for (std::size_t i = 0; i < out.size(); ++i) {
    for (std::size_t k = 0; k < out.dim; ++k) {
      double& v = out.X[i * out.dim + k];
      v = v / tr.scales[k] + tr.means[k];
    }
  }
  if (tr.outcome_scaled) map_outcomes(out, tr.outcome_mean, 1.0 / tr.outcome_sd, true);
  return out;
}

std::vector<double> ite_to_original_units(std::span<const double> tau_hat,
                                          const StandardizeTransform& tr) {
  std::vector<double> out(tau_hat.begin(), tau_hat.end());
  if (tr.outcome_scaled) {
    for (double& v : out) v *= tr.outcome_sd;
  }
  return out;
}

}  // namespace tarnet
