#include "tarnet/cita.hpp"

#include <cmath>

#include "tarnet/error.hpp"

namespace tarnet {

std::string to_string(HeadOrder order) {
  return order == HeadOrder::identity ? "identity" : "swapped";
}

FisherDiagonal diag_fisher(const TarnetModel& model, const DataView& data, HeadOrder order) {
  if (data.size() == 0) throw DataError("fisher: empty data");
  if (data.dim() != model.spec().input_dim) {
    throw DimensionError("fisher: data has " + std::to_string(data.dim()) +
                         " covariates, model takes " + std::to_string(model.spec().input_dim));
  }
  const std::size_t n = data.size();
  std::vector<int> t(n);
  for (std::size_t i = 0; i < n; ++i) t[i] = data.t(i);
  std::vector<double> w;
  try {
    w = sample_weights(t);
  } catch (const DataError&) {
    throw DataError("fisher: data holds a single treatment group");
  }

  // Every parameter counts, so work on a copy with nothing frozen.
  const TarnetModel open(model.spec(), freeze_layers(model.params(), 0));
  const ParameterStore& store = open.params();
  Gradients g = Gradients::zeros_like(store);
  FisherDiagonal out;
  out.values.assign(store.scalar_count(), 0.0);
  out.n_samples = n;

  ChainTrace enc, head;
  std::vector<double> phi_grad;
  for (std::size_t i = 0; i < n; ++i) {
    g.zero();
    const int arm = order == HeadOrder::identity ? t[i] : 1 - t[i];
    forward(store, open.encoder_chain(), data.x(i), enc);
    const Chain& h = open.head_chain(arm);
    forward(store, h, enc.output(), head);
    const double up = 2.0 * w[i] * (head.output()[0] - data.y(i));
    backward(store, h, head, std::span<const double>(&up, 1), g, &phi_grad);
    backward(store, open.encoder_chain(), enc, phi_grad, g);
    std::size_t k = 0;
    for (const auto& layer : g.layers) {
      for (double v : layer.weights) out.values[k++] += v * v;
      for (double v : layer.biases) out.values[k++] += v * v;
    }
  }
  const double inv = 1.0 / static_cast<double>(n);
  for (double& v : out.values) v *= inv;
  return out;
}

namespace {

struct Norms {
  double diff = 0.0;
  double a = 0.0;
  double b = 0.0;
};

Norms sqrt_norms(const FisherDiagonal& a, const FisherDiagonal& b) {
  if (a.values.size() != b.values.size()) {
    throw DimensionError("cita: Fisher diagonals have lengths " + std::to_string(a.values.size()) +
                         " and " + std::to_string(b.values.size()));
  }
  Norms s;
  for (std::size_t k = 0; k < a.values.size(); ++k) {
    const double ra = std::sqrt(a.values[k]);
    const double rb = std::sqrt(b.values[k]);
    s.diff += (ra - rb) * (ra - rb);
    s.a += a.values[k];
    s.b += b.values[k];
  }
  s.diff = std::sqrt(s.diff);
  s.a = std::sqrt(s.a);
  s.b = std::sqrt(s.b);
  return s;
}

}  // namespace

double cita_raw(const FisherDiagonal& a, const FisherDiagonal& b) {
  return sqrt_norms(a, b).diff / std::sqrt(2.0);
}

double cita_normalized(const FisherDiagonal& a, const FisherDiagonal& b) {
  const Norms s = sqrt_norms(a, b);
  if (s.a + s.b == 0.0) throw DataError("cita: both Fisher diagonals are zero");
  return std::min(1.0, s.diff / (s.a + s.b));
}

CitaScore cita_symmetrized(const FisherDiagonal& f_ss, const TarnetModel& model,
                           const DataView& target, std::size_t n_source) {
  const FisherDiagonal id = diag_fisher(model, target, HeadOrder::identity);
  const FisherDiagonal sw = diag_fisher(model, target, HeadOrder::swapped);
  CitaScore s;
  s.n_source = n_source;
  s.n_target = target.size();
  s.one_sided_raw = cita_raw(f_ss, id);
  s.one_sided_normalized = cita_normalized(f_ss, id);
  const double raw_sw = cita_raw(f_ss, sw);
  const double norm_sw = cita_normalized(f_ss, sw);
  s.raw = std::min(s.one_sided_raw, raw_sw);
  if (norm_sw < s.one_sided_normalized) {
    s.normalized = norm_sw;
    s.permutation = HeadOrder::swapped;
  } else {
    s.normalized = s.one_sided_normalized;
    s.permutation = HeadOrder::identity;
  }
  return s;
}

CitaScore cita_symmetrized(const TarnetModel& model, const DataView& source,
                           const DataView& target) {
  return cita_symmetrized(diag_fisher(model, source, HeadOrder::identity), model, target,
                          source.size());
}

}  // namespace tarnet
