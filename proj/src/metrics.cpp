#include "tarnet/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <tuple>

#include "tarnet/error.hpp"
#include "tarnet/io.hpp"

namespace tarnet {

namespace {

void check_pair(std::span<const double> a, std::span<const double> b) {
  if (a.empty()) throw DataError("pehe: empty input");
  if (a.size() != b.size()) {
    throw DataError("pehe: lengths differ (" + std::to_string(a.size()) + " vs " +
                    std::to_string(b.size()) + ")");
  }
}

double mean_of(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

}  // namespace

double pehe(std::span<const double> tau_hat, std::span<const double> tau_true) {
  check_pair(tau_hat, tau_true);
  double s = 0.0;
  for (std::size_t i = 0; i < tau_hat.size(); ++i) {
    const double d = tau_hat[i] - tau_true[i];
    s += d * d;
  }
  return s / static_cast<double>(tau_hat.size());
}

double pehe_rmse(std::span<const double> tau_hat, std::span<const double> tau_true) {
  return std::sqrt(pehe(tau_hat, tau_true));
}

double mean_ite(std::span<const double> tau_hat) {
  if (tau_hat.empty()) throw DataError("mean_ite: empty input");
  return mean_of(tau_hat);
}

Dispersion dispersion(std::span<const double> values) {
  if (values.empty()) throw DataError("dispersion: empty input");
  const std::size_t n = values.size();
  if (n == 1) return {};
  const double m = mean_of(values);
  double ss = 0.0;
  for (double v : values) ss += (v - m) * (v - m);
  Dispersion d;
  d.sd = std::sqrt(ss / static_cast<double>(n - 1));
  d.se = d.sd / std::sqrt(static_cast<double>(n));
  return d;
}

std::vector<ScenarioSummary> summarize(std::vector<ReplicationResult> results, double beta) {
  if (results.empty()) throw DataError("summarize: no results");
  std::sort(results.begin(), results.end(), [](const auto& a, const auto& b) {
    return std::tie(a.key, a.replication, a.seed, a.mean_ite, a.pehe) <
           std::tie(b.key, b.replication, b.seed, b.mean_ite, b.pehe);
  });
  std::vector<ScenarioSummary> out;
  std::size_t lo = 0;
  while (lo < results.size()) {
    std::size_t hi = lo;
    while (hi < results.size() && results[hi].key == results[lo].key) ++hi;
    std::vector<double> ite, rmse, sq, cita;
    for (std::size_t i = lo; i < hi; ++i) {
      const auto& r = results[i];
      if (!(r.pehe >= 0.0)) throw DataError("summarize: negative or missing pehe");
      ite.push_back(r.mean_ite);
      sq.push_back(r.pehe);
      rmse.push_back(std::sqrt(r.pehe));
      if (r.cita) cita.push_back(*r.cita);
    }
    ScenarioSummary s;
    s.key = results[lo].key;
    s.replications = hi - lo;
    s.mean_ite = mean_of(ite);
    s.bias = s.mean_ite - beta;
    if (s.replications > 1) s.se = dispersion(ite).se;
    s.pehe_sq_mean = mean_of(sq);
    s.pehe_rmse_mean = mean_of(rmse);
    if (!cita.empty()) s.cita_mean = mean_of(cita);
    out.push_back(std::move(s));
    lo = hi;
  }
  return out;
}

std::string summary_to_csv(const std::vector<ScenarioSummary>& summaries) {
  std::string out =
      "n_source,n_target,sampling,method,R,mean_ite,bias,se,pehe_sq_mean,pehe_rmse_mean,"
      "cita_mean\n";
  for (const auto& s : summaries) {
    out += std::to_string(s.key.n_source) + ',' + std::to_string(s.key.n_target) + ',' +
           s.key.sampling + ',' + s.key.method + ',' + std::to_string(s.replications) + ',' +
           format_double(s.mean_ite) + ',' + format_double(s.bias) + ',' +
           (s.se ? format_double(*s.se) : "") + ',' + format_double(s.pehe_sq_mean) + ',' +
           format_double(s.pehe_rmse_mean) + ',' + (s.cita_mean ? format_double(*s.cita_mean) : "") +
           '\n';
  }
  return out;
}

}  // namespace tarnet
