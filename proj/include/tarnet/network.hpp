#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace tarnet {

// Shape of a two-headed network: a shared ReLU encoder and two outcome heads
// with identical hidden widths, each ending in an implicit scalar linear layer.
struct NetworkSpec {
  std::size_t input_dim = 0;
  std::vector<std::size_t> encoder_widths;
  std::vector<std::size_t> head_widths;

  // Throws InvalidSpecError.
  void validate() const;

  std::size_t encoder_layer_count() const noexcept { return encoder_widths.size(); }
  // Hidden layers plus the scalar output layer.
  std::size_t head_layer_count() const noexcept { return head_widths.size() + 1; }
  std::size_t layer_count() const noexcept {
    return encoder_layer_count() + 2 * head_layer_count();
  }
  std::size_t representation_dim() const;

  bool operator==(const NetworkSpec&) const = default;
};

std::size_t parameter_count(const NetworkSpec& spec);

struct DenseLayer {
  std::size_t fan_in = 0;
  std::size_t fan_out = 0;
  std::vector<double> weights;  // fan_out x fan_in, row-major
  std::vector<double> biases;
  bool frozen = false;

  std::size_t scalar_count() const noexcept { return weights.size() + biases.size(); }
  bool operator==(const DenseLayer&) const = default;
};

// Layer order in a store is encoder first, then the heads interleaved by
// depth: h0[0], h1[0], h0[1], h1[1], ..., h0[out], h1[out].
std::size_t encoder_layer_index(std::size_t depth) noexcept;
std::size_t head_layer_index(const NetworkSpec& spec, int head, std::size_t depth) noexcept;
std::string layer_name(const NetworkSpec& spec, std::size_t index);

class ParameterStore {
 public:
  ParameterStore() = default;
  ParameterStore(std::vector<DenseLayer> layers, std::uint64_t rng_seed);

  std::size_t layer_count() const noexcept { return layers_.size(); }
  std::size_t scalar_count() const noexcept;
  std::size_t frozen_scalar_count() const noexcept;

  const DenseLayer& layer(std::size_t i) const { return layers_.at(i); }
  // Any mutable access invalidates traces recorded against this store.
  DenseLayer& mutable_layer(std::size_t i);
  std::span<const DenseLayer> layers() const noexcept { return layers_; }

  std::uint64_t rng_seed() const noexcept { return rng_seed_; }
  std::uint64_t version() const noexcept { return version_; }
  void touch() noexcept { ++version_; }

  // Element-wise equality of weights, biases, freeze flags and seed.
  bool same_parameters(const ParameterStore& other) const;

 private:
  std::vector<DenseLayer> layers_;
  std::uint64_t rng_seed_ = 0;
  std::uint64_t version_ = 0;
};

// Glorot-uniform weights, zero biases, nothing frozen.
ParameterStore init_network(const NetworkSpec& spec, std::uint64_t seed);

// Marks the first `depth` layers frozen and every later layer trainable.
ParameterStore freeze_layers(const ParameterStore& store, std::size_t depth);

struct LayerGradient {
  std::vector<double> weights;
  std::vector<double> biases;
};

// One gradient slot per parameter, shaped like the store.
struct Gradients {
  std::vector<LayerGradient> layers;

  static Gradients zeros_like(const ParameterStore& store);
  void zero() noexcept;
  void add_scaled(const Gradients& other, double scale);
  // Layer order, weights row-major then biases.
  std::vector<double> flatten() const;
};

// A path through the store: hidden layers apply ReLU; the last one is linear
// when `linear_output` is set.
struct Chain {
  std::vector<std::size_t> layers;
  bool linear_output = false;
};

// values[0] is the chain input; values[k + 1] the post-activation output of
// chain.layers[k].
struct ChainTrace {
  std::vector<std::vector<double>> values;
  std::uint64_t store_version = 0;
  const ParameterStore* store = nullptr;

  std::span<const double> output() const { return values.back(); }
};

// Runs the chain on x, recording all activations into `trace` (buffers are
// reused across calls).
void forward(const ParameterStore& store, const Chain& chain, std::span<const double> x,
             ChainTrace& trace);

// Accumulates d(loss)/d(param) into `grads` for every non-frozen layer of the
// chain, given d(loss)/d(output) in `upstream`. Frozen layers receive nothing.
// When `input_grad` is non-null it receives d(loss)/d(input).
void backward(const ParameterStore& store, const Chain& chain, const ChainTrace& trace,
              std::span<const double> upstream, Gradients& grads,
              std::vector<double>* input_grad = nullptr);

}  // namespace tarnet
