#include "tarnet/network.hpp"

#include <algorithm>
#include <cmath>

#include "tarnet/error.hpp"
#include "tarnet/rng.hpp"

namespace tarnet {

void NetworkSpec::validate() const {
  if (input_dim < 1) throw InvalidSpecError("network spec: input_dim must be >= 1");
  if (encoder_widths.empty()) {
    throw InvalidSpecError("network spec: encoder needs at least one layer");
  }
  for (std::size_t w : encoder_widths) {
    if (w < 1) throw InvalidSpecError("network spec: zero-width encoder layer");
  }
  for (std::size_t w : head_widths) {
    if (w < 1) throw InvalidSpecError("network spec: zero-width head layer");
  }
}

std::size_t NetworkSpec::representation_dim() const {
  if (encoder_widths.empty()) throw InvalidSpecError("network spec: empty encoder");
  return encoder_widths.back();
}

namespace {

// (fan_in, fan_out) for every layer in store order.
std::vector<std::pair<std::size_t, std::size_t>> layer_shapes(const NetworkSpec& spec) {
  spec.validate();
  std::vector<std::pair<std::size_t, std::size_t>> shapes;
  std::size_t fan_in = spec.input_dim;
  for (std::size_t w : spec.encoder_widths) {
    shapes.emplace_back(fan_in, w);
    fan_in = w;
  }
  std::size_t head_in = fan_in;
  for (std::size_t depth = 0; depth < spec.head_layer_count(); ++depth) {
    const std::size_t out = depth < spec.head_widths.size() ? spec.head_widths[depth] : 1;
    shapes.emplace_back(head_in, out);
    shapes.emplace_back(head_in, out);
    head_in = out;
  }
  return shapes;
}

}  // namespace

std::size_t parameter_count(const NetworkSpec& spec) {
  std::size_t total = 0;
  for (auto [in, out] : layer_shapes(spec)) total += in * out + out;
  return total;
}

std::size_t encoder_layer_index(std::size_t depth) noexcept { return depth; }

std::size_t head_layer_index(const NetworkSpec& spec, int head, std::size_t depth) noexcept {
  return spec.encoder_layer_count() + 2 * depth + static_cast<std::size_t>(head);
}

std::string layer_name(const NetworkSpec& spec, std::size_t index) {
  const std::size_t enc = spec.encoder_layer_count();
  if (index < enc) return "encoder." + std::to_string(index);
  const std::size_t rel = index - enc;
  const std::size_t depth = rel / 2;
  const std::string head = (rel % 2 == 0) ? "head0." : "head1.";
  if (depth + 1 == spec.head_layer_count()) return head + "out";
  return head + std::to_string(depth);
}

ParameterStore::ParameterStore(std::vector<DenseLayer> layers, std::uint64_t rng_seed)
    : layers_(std::move(layers)), rng_seed_(rng_seed) {
  for (const auto& l : layers_) {
    if (l.fan_in == 0 || l.fan_out == 0 || l.weights.size() != l.fan_in * l.fan_out ||
        l.biases.size() != l.fan_out) {
      throw InvalidSpecError("parameter store: layer shape inconsistent");
    }
  }
}

std::size_t ParameterStore::scalar_count() const noexcept {
  std::size_t n = 0;
  for (const auto& l : layers_) n += l.scalar_count();
  return n;
}

std::size_t ParameterStore::frozen_scalar_count() const noexcept {
  std::size_t n = 0;
  for (const auto& l : layers_) {
    if (l.frozen) n += l.scalar_count();
  }
  return n;
}

DenseLayer& ParameterStore::mutable_layer(std::size_t i) {
  ++version_;
  return layers_.at(i);
}

bool ParameterStore::same_parameters(const ParameterStore& other) const {
  return rng_seed_ == other.rng_seed_ && layers_ == other.layers_;
}

ParameterStore init_network(const NetworkSpec& spec, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<DenseLayer> layers;
  for (auto [in, out] : layer_shapes(spec)) {
    DenseLayer layer;
    layer.fan_in = in;
    layer.fan_out = out;
    const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
    std::uniform_real_distribution<double> dist(-limit, limit);
    layer.weights.resize(in * out);
    for (double& w : layer.weights) w = dist(rng);
    layer.biases.assign(out, 0.0);
    layers.push_back(std::move(layer));
  }
  return ParameterStore(std::move(layers), seed);
}

ParameterStore freeze_layers(const ParameterStore& store, std::size_t depth) {
  if (depth > store.layer_count()) {
    throw InvalidSpecError("freeze depth " + std::to_string(depth) + " exceeds layer count " +
                           std::to_string(store.layer_count()));
  }
  ParameterStore out = store;
  for (std::size_t i = 0; i < out.layer_count(); ++i) out.mutable_layer(i).frozen = i < depth;
  return out;
}

Gradients Gradients::zeros_like(const ParameterStore& store) {
  Gradients g;
  g.layers.resize(store.layer_count());
  for (std::size_t i = 0; i < store.layer_count(); ++i) {
    g.layers[i].weights.assign(store.layer(i).weights.size(), 0.0);
    g.layers[i].biases.assign(store.layer(i).biases.size(), 0.0);
  }
  return g;
}

void Gradients::zero() noexcept {
  for (auto& l : layers) {
    std::fill(l.weights.begin(), l.weights.end(), 0.0);
    std::fill(l.biases.begin(), l.biases.end(), 0.0);
  }
}

void Gradients::add_scaled(const Gradients& other, double scale) {
  if (other.layers.size() != layers.size()) throw DimensionError("gradient shape mismatch");
  for (std::size_t i = 0; i < layers.size(); ++i) {
    auto& a = layers[i];
    const auto& b = other.layers[i];
    if (a.weights.size() != b.weights.size() || a.biases.size() != b.biases.size()) {
      throw DimensionError("gradient shape mismatch");
    }
    for (std::size_t j = 0; j < a.weights.size(); ++j) a.weights[j] += scale * b.weights[j];
    for (std::size_t j = 0; j < a.biases.size(); ++j) a.biases[j] += scale * b.biases[j];
  }
}

std::vector<double> Gradients::flatten() const {
  std::vector<double> flat;
  for (const auto& l : layers) {
    flat.insert(flat.end(), l.weights.begin(), l.weights.end());
    flat.insert(flat.end(), l.biases.begin(), l.biases.end());
  }
  return flat;
}

void forward(const ParameterStore& store, const Chain& chain, std::span<const double> x,
             ChainTrace& trace) {
  if (chain.layers.empty()) throw InvalidSpecError("forward: empty chain");
  const DenseLayer& first = store.layer(chain.layers.front());
  if (x.size() != first.fan_in) {
    throw DimensionError("forward: input has " + std::to_string(x.size()) +
                         " entries, layer expects " + std::to_string(first.fan_in));
  }
  trace.values.resize(chain.layers.size() + 1);
  trace.values[0].assign(x.begin(), x.end());
  for (std::size_t k = 0; k < chain.layers.size(); ++k) {
    const DenseLayer& layer = store.layer(chain.layers[k]);
    const std::vector<double>& in = trace.values[k];
    if (in.size() != layer.fan_in) throw DimensionError("forward: chain layers do not compose");
    std::vector<double>& out = trace.values[k + 1];
    out.resize(layer.fan_out);
    const bool relu = !(chain.linear_output && k + 1 == chain.layers.size());
    const double* w = layer.weights.data();
    for (std::size_t o = 0; o < layer.fan_out; ++o) {
      double z = layer.biases[o];
      const double* row = w + o * layer.fan_in;
      for (std::size_t i = 0; i < layer.fan_in; ++i) z += row[i] * in[i];
      out[o] = (relu && z <= 0.0) ? 0.0 : z;
    }
  }
  trace.store = &store;
  trace.store_version = store.version();
}

void backward(const ParameterStore& store, const Chain& chain, const ChainTrace& trace,
              std::span<const double> upstream, Gradients& grads,
              std::vector<double>* input_grad) {
  if (trace.store != &store || trace.store_version != store.version() ||
      trace.values.size() != chain.layers.size() + 1) {
    throw DimensionError("backward: activations are stale or come from another chain");
  }
  if (upstream.size() != trace.values.back().size()) {
    throw DimensionError("backward: upstream gradient has wrong length");
  }
  if (grads.layers.size() != store.layer_count()) {
    throw DimensionError("backward: gradient set shaped for another store");
  }

  // Propagation below the first trainable layer is only needed for input_grad.
  std::size_t first_trainable = chain.layers.size();
  for (std::size_t k = 0; k < chain.layers.size(); ++k) {
    if (!store.layer(chain.layers[k]).frozen) {
      first_trainable = k;
      break;
    }
  }
  const std::size_t stop = input_grad ? 0 : first_trainable;

  std::vector<double> delta(upstream.begin(), upstream.end());
  std::vector<double> next;
  for (std::size_t k = chain.layers.size(); k-- > stop;) {
    const DenseLayer& layer = store.layer(chain.layers[k]);
    const std::vector<double>& out = trace.values[k + 1];
    const std::vector<double>& in = trace.values[k];
    const bool relu = !(chain.linear_output && k + 1 == chain.layers.size());
    if (relu) {
      for (std::size_t o = 0; o < layer.fan_out; ++o) {
        if (out[o] <= 0.0) delta[o] = 0.0;
      }
    }
    if (!layer.frozen) {
      LayerGradient& g = grads.layers[chain.layers[k]];
      for (std::size_t o = 0; o < layer.fan_out; ++o) {
        const double d = delta[o];
        if (d == 0.0) continue;
        g.biases[o] += d;
        double* grow = g.weights.data() + o * layer.fan_in;
        for (std::size_t i = 0; i < layer.fan_in; ++i) grow[i] += d * in[i];
      }
    }
    if (k == stop && !(input_grad && k == 0)) break;
    next.assign(layer.fan_in, 0.0);
    for (std::size_t o = 0; o < layer.fan_out; ++o) {
      const double d = delta[o];
      if (d == 0.0) continue;
      const double* row = layer.weights.data() + o * layer.fan_in;
      for (std::size_t i = 0; i < layer.fan_in; ++i) next[i] += row[i] * d;
    }
    delta.swap(next);
  }
  if (input_grad) *input_grad = delta;
}

}  // namespace tarnet
