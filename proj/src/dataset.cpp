#include "tarnet/dataset.hpp"

#include "tarnet/error.hpp"

namespace tarnet {

std::string to_string(Origin origin) {
  switch (origin) {
    case Origin::source:
      return "source";
    case Origin::target_random:
      return "target-random";
    case Origin::target_biased:
      return "target-biased";
    case Origin::external_csv:
      return "external-csv";
  }
  return "unknown";
}

Origin origin_from_string(const std::string& name) {
  if (name == "source") return Origin::source;
  if (name == "target-random") return Origin::target_random;
  if (name == "target-biased") return Origin::target_biased;
  if (name == "external-csv") return Origin::external_csv;
  throw DataError("unknown dataset origin '" + name + "'");
}

std::size_t Dataset::treated_count() const noexcept {
  std::size_t n = 0;
  for (int v : t) n += (v == 1);
  return n;
}

double Dataset::treated_fraction() const {
  if (t.empty()) throw DataError("treated fraction of an empty dataset");
  return static_cast<double>(treated_count()) / static_cast<double>(t.size());
}

void Dataset::validate() const {
  const std::size_t n = size();
  if (dim == 0) throw DataError("dataset: zero covariates");
  if (X.size() != n * dim) throw DataError("dataset: covariate matrix has wrong size");
  if (y.size() != n) throw DataError("dataset: outcome length differs from treatment length");
  if (!covariate_names.empty() && covariate_names.size() != dim) {
    throw DataError("dataset: covariate name count differs from dim");
  }
  for (int v : t) {
    if (v != 0 && v != 1) throw DataError("dataset: treatment must be 0 or 1");
  }
  if (has_potential_outcomes()) {
    if (y0.size() != n || y1.size() != n || tau.size() != n) {
      throw DataError("dataset: potential outcome columns have wrong length");
    }
    for (std::size_t i = 0; i < n; ++i) {
      const double expect = t[i] == 1 ? y1[i] : y0[i];
      if (y[i] != expect) {
        throw DataError("dataset: row " + std::to_string(i) +
                        " violates y = t*y1 + (1-t)*y0");
      }
      if (tau[i] != y1[i] - y0[i]) {
        throw DataError("dataset: row " + std::to_string(i) + " violates tau = y1 - y0");
      }
    }
  } else if (!y1.empty() || !tau.empty()) {
    throw DataError("dataset: partial potential outcome columns");
  }
}

Dataset Dataset::subset(std::span<const std::size_t> rows) const {
  Dataset out;
  out.dim = dim;
  out.covariate_names = covariate_names;
  out.origin = origin;
  out.X.reserve(rows.size() * dim);
  const bool po = has_potential_outcomes();
  for (std::size_t r : rows) {
    if (r >= size()) throw DataError("dataset subset: row index out of range");
    auto x = row(r);
    out.X.insert(out.X.end(), x.begin(), x.end());
    out.t.push_back(t[r]);
    out.y.push_back(y[r]);
    if (po) {
      out.y0.push_back(y0[r]);
      out.y1.push_back(y1[r]);
      out.tau.push_back(tau[r]);
    }
  }
  return out;
}

std::size_t DataView::treated_count() const {
  std::size_t n = 0;
  for (std::size_t i = 0; i < size(); ++i) n += (t(i) == 1);
  return n;
}

}  // namespace tarnet
