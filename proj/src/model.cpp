#include "tarnet/model.hpp"

#include <cmath>
#include <numeric>
#include <tuple>

#include "tarnet/error.hpp"

namespace tarnet {

TarnetModel::TarnetModel(NetworkSpec spec, ParameterStore params)
    : spec_(std::move(spec)), params_(std::move(params)) {
  spec_.validate();
  const ParameterStore shape = init_network(spec_, 0);
  if (params_.layer_count() != shape.layer_count()) {
    throw InvalidSpecError("model: store has " + std::to_string(params_.layer_count()) +
                           " layers, spec needs " + std::to_string(shape.layer_count()));
  }
  for (std::size_t i = 0; i < shape.layer_count(); ++i) {
    if (params_.layer(i).fan_in != shape.layer(i).fan_in ||
        params_.layer(i).fan_out != shape.layer(i).fan_out) {
      throw InvalidSpecError("model: layer " + layer_name(spec_, i) + " does not match spec");
    }
  }
  for (std::size_t k = 0; k < spec_.encoder_layer_count(); ++k) {
    encoder_.layers.push_back(encoder_layer_index(k));
  }
  encoder_.linear_output = false;
  heads_.resize(2);
  for (int h = 0; h < 2; ++h) {
    for (std::size_t d = 0; d < spec_.head_layer_count(); ++d) {
      heads_[h].layers.push_back(head_layer_index(spec_, h, d));
    }
    heads_[h].linear_output = true;
  }
}

TarnetModel TarnetModel::initialize(const NetworkSpec& spec, std::uint64_t seed) {
  return TarnetModel(spec, init_network(spec, seed));
}

ForwardOutput tarnet_forward(const TarnetModel& model, std::span<const double> x) {
  if (x.size() != model.spec().input_dim) {
    throw DimensionError("forward: input has " + std::to_string(x.size()) + " values, model takes " +
                         std::to_string(model.spec().input_dim));
  }
  ChainTrace enc, head;
  forward(model.params(), model.encoder_chain(), x, enc);
  ForwardOutput out;
  out.phi.assign(enc.output().begin(), enc.output().end());
  forward(model.params(), model.head_chain(0), out.phi, head);
  out.y0 = head.output()[0];
  forward(model.params(), model.head_chain(1), out.phi, head);
  out.y1 = head.output()[0];
  return out;
}

std::vector<double> predict_ite(const TarnetModel& model, std::span<const double> X) {
  const std::size_t d = model.spec().input_dim;
  if (X.size() % d != 0) {
    throw DimensionError("predict_ite: covariate matrix is not a multiple of input_dim");
  }
  std::vector<double> tau(X.size() / d);
  for (std::size_t i = 0; i < tau.size(); ++i) {
    const auto f = tarnet_forward(model, X.subspan(i * d, d));
    tau[i] = f.y1 - f.y0;
  }
  return tau;
}

std::vector<double> predict_ite(const TarnetModel& model, const DataView& data) {
  if (data.dim() != model.spec().input_dim) {
    throw DimensionError("predict_ite: data has " + std::to_string(data.dim()) +
                         " covariates, model takes " + std::to_string(model.spec().input_dim));
  }
  std::vector<double> tau(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto f = tarnet_forward(model, data.x(i));
    tau[i] = f.y1 - f.y0;
  }
  return tau;
}

double mean_ite(const TarnetModel& model, const DataView& data) {
  if (data.size() == 0) throw DataError("mean_ite: empty data");
  const auto tau = predict_ite(model, data);
  return std::accumulate(tau.begin(), tau.end(), 0.0) / static_cast<double>(tau.size());
}

namespace {

// Counts instead of v itself: n/(2 n1) equals 1/(2v) and is unchanged when
// the labels are flipped.
std::pair<double, double> group_weights(std::size_t n, std::size_t n1) {
  const double nd = static_cast<double>(n);
  return {nd / (2.0 * static_cast<double>(n - n1)), nd / (2.0 * static_cast<double>(n1))};
}

}  // namespace

std::vector<double> sample_weights(std::span<const int> t) {
  std::size_t n1 = 0;
  for (int v : t) n1 += (v == 1);
  if (n1 == 0 || n1 == t.size()) {
    throw DataError("sample weights undefined: batch holds a single treatment group");
  }
  const auto [w0, w1] = group_weights(t.size(), n1);
  std::vector<double> w(t.size());
  for (std::size_t i = 0; i < t.size(); ++i) w[i] = t[i] == 1 ? w1 : w0;
  return w;
}

std::vector<std::size_t> all_rows(std::size_t n) {
  std::vector<std::size_t> rows(n);
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  return rows;
}

LossValue evaluate_loss(const TarnetModel& model, const DataView& data,
                        std::span<const std::size_t> rows, const LossSettings& settings,
                        bool with_gradients) {
  if (rows.empty()) throw DataError("loss: empty batch");
  if (data.dim() != model.spec().input_dim) {
    throw DimensionError("loss: data has " + std::to_string(data.dim()) +
                         " covariates, model takes " + std::to_string(model.spec().input_dim));
  }
  const std::size_t n = rows.size();
  std::vector<int> t(n);
  for (std::size_t b = 0; b < n; ++b) t[b] = data.t(rows[b]);
  std::size_t n1 = 0;
  for (int v : t) n1 += (v == 1);
  const bool both_groups = n1 > 0 && n1 < n;

  double w0 = 1.0, w1 = 1.0;
  if (!settings.unweighted) {
    if (both_groups) {
      std::tie(w0, w1) = group_weights(n, n1);
    } else if (settings.weight_fraction) {
      const double v = *settings.weight_fraction;
      if (!(v > 0.0 && v < 1.0)) throw DataError("loss: weight fraction must lie in (0, 1)");
      w0 = 1.0 / (2.0 * (1.0 - v));
      w1 = 1.0 / (2.0 * v);
    } else {
      throw DataError("sample weights undefined: batch holds a single treatment group");
    }
  }

  const ParameterStore& store = model.params();
  LossValue out;
  if (with_gradients) out.grads = Gradients::zeros_like(store);

  std::vector<ChainTrace> enc(n);
  ChainTrace head;
  const std::size_t rep = model.spec().representation_dim();
  std::vector<double> phi_grad(n * rep, 0.0);
  std::vector<double> g_in;
  const double inv_n = 1.0 / static_cast<double>(n);
  double factual = 0.0;
  for (std::size_t b = 0; b < n; ++b) {
    forward(store, model.encoder_chain(), data.x(rows[b]), enc[b]);
    const Chain& h = model.head_chain(t[b]);
    forward(store, h, enc[b].output(), head);
    const double r = head.output()[0] - data.y(rows[b]);
    const double w = t[b] == 1 ? w1 : w0;
    factual += w * r * r;
    if (with_gradients) {
      const double up = 2.0 * w * r * inv_n;
      backward(store, h, head, std::span<const double>(&up, 1), out.grads, &g_in);
      for (std::size_t j = 0; j < rep; ++j) phi_grad[b * rep + j] += g_in[j];
    }
  }
  out.factual = factual * inv_n;

  if (settings.alpha > 0.0) {
    if (both_groups) {
      SampleSet control(rep), treated(rep);
      std::vector<std::size_t> control_pos, treated_pos;
      for (std::size_t b = 0; b < n; ++b) {
        if (t[b] == 1) {
          treated.push_back(enc[b].output());
          treated_pos.push_back(b);
        } else {
          control.push_back(enc[b].output());
          control_pos.push_back(b);
        }
      }
      const IpmResult d = ipm(control, treated, settings.ipm);
      out.ipm = d.value;
      if (with_gradients) {
        for (std::size_t k = 0; k < control_pos.size(); ++k) {
          for (std::size_t j = 0; j < rep; ++j) {
            phi_grad[control_pos[k] * rep + j] += settings.alpha * d.grad_a[k * rep + j];
          }
        }
        for (std::size_t k = 0; k < treated_pos.size(); ++k) {
          for (std::size_t j = 0; j < rep; ++j) {
            phi_grad[treated_pos[k] * rep + j] += settings.alpha * d.grad_b[k * rep + j];
          }
        }
      }
    } else {
      out.ipm_skipped = true;
    }
  }
  out.total = out.factual + settings.alpha * out.ipm;

  if (with_gradients) {
    for (std::size_t b = 0; b < n; ++b) {
      backward(store, model.encoder_chain(), enc[b],
               std::span<const double>(phi_grad.data() + b * rep, rep), out.grads);
    }
  }
  return out;
}

LossValue factual_loss(const TarnetModel& model, const DataView& data,
                       std::span<const std::size_t> rows) {
  return evaluate_loss(model, data, rows, LossSettings{});
}

LossValue total_loss(const TarnetModel& model, const DataView& data,
                     std::span<const std::size_t> rows, double alpha, const IpmConfig& ipm) {
  LossSettings s;
  s.alpha = alpha;
  s.ipm = ipm;
  return evaluate_loss(model, data, rows, s);
}

}  // namespace tarnet
