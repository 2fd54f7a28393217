#include "tarnet/checkpoint.hpp"

#include <cmath>
#include <json.hpp>

#include "tarnet/error.hpp"
#include "tarnet/io.hpp"

namespace tarnet {

namespace {

using nlohmann::json;

void append_sizes(std::string& out, const std::vector<std::size_t>& v) {
  out += '[';
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ", ";
    out += std::to_string(v[i]);
  }
  out += ']';
}

void append_reals(std::string& out, const std::vector<double>& v) {
  out += '[';
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!std::isfinite(v[i])) throw NumericalError("checkpoint: non-finite parameter");
    if (i) out += ", ";
    out += format_double(v[i], 17);
  }
  out += ']';
}

CheckpointError corrupt(const std::string& what) {
  return CheckpointError(CheckpointError::Kind::corrupt, "checkpoint: " + what);
}

CheckpointError shape(const std::string& what) {
  return CheckpointError(CheckpointError::Kind::shape_mismatch, "checkpoint: " + what);
}

std::vector<std::size_t> read_sizes(const json& j, const char* key) {
  if (!j.contains(key) || !j[key].is_array()) throw corrupt(std::string("missing ") + key);
  std::vector<std::size_t> out;
  for (const auto& v : j[key]) {
    if (!v.is_number_unsigned()) throw corrupt(std::string("bad entry in ") + key);
    out.push_back(v.get<std::size_t>());
  }
  return out;
}

std::vector<double> read_reals(const json& j, const char* key) {
  if (!j.contains(key) || !j[key].is_array()) throw corrupt(std::string("missing ") + key);
  std::vector<double> out;
  out.reserve(j[key].size());
  for (const auto& v : j[key]) {
    if (!v.is_number()) throw corrupt(std::string("bad entry in ") + key);
    out.push_back(v.get<double>());
  }
  return out;
}

}  // namespace

std::string checkpoint_to_string(const ParameterStore& store, const NetworkSpec& spec) {
  spec.validate();
  const ParameterStore reference = init_network(spec, 0);
  if (reference.layer_count() != store.layer_count()) {
    throw shape("store does not match spec layer count");
  }
  std::string out;
  out += "{\n";
  out += "  \"format_version\": " + std::to_string(kCheckpointFormatVersion) + ",\n";
  out += "  \"spec\": {\"input_dim\": " + std::to_string(spec.input_dim) +
         ", \"encoder_widths\": ";
  append_sizes(out, spec.encoder_widths);
  out += ", \"head_widths\": ";
  append_sizes(out, spec.head_widths);
  out += "},\n";
  out += "  \"rng_seed\": " + std::to_string(store.rng_seed()) + ",\n";
  out += "  \"layers\": [\n";
  for (std::size_t i = 0; i < store.layer_count(); ++i) {
    const DenseLayer& l = store.layer(i);
    if (l.fan_in != reference.layer(i).fan_in || l.fan_out != reference.layer(i).fan_out) {
      throw shape("layer " + std::to_string(i) + " does not match spec");
    }
    out += "    {\"name\": \"" + layer_name(spec, i) + "\", \"fan_in\": " +
           std::to_string(l.fan_in) + ", \"fan_out\": " + std::to_string(l.fan_out) +
           ", \"frozen\": " + (l.frozen ? "true" : "false") + ",\n";
    out += "     \"weights\": ";
    append_reals(out, l.weights);
    out += ",\n     \"biases\": ";
    append_reals(out, l.biases);
    out += "}";
    out += (i + 1 < store.layer_count()) ? ",\n" : "\n";
  }
  out += "  ]\n}\n";
  return out;
}

namespace {

Checkpoint parse_checkpoint(const json& j) {
  if (!j.is_object()) throw corrupt("top level is not an object");
  if (!j.contains("format_version") || !j["format_version"].is_number_integer()) {
    throw corrupt("missing format_version");
  }
  const int version = j["format_version"].get<int>();
  if (version != kCheckpointFormatVersion) {
    throw CheckpointError(CheckpointError::Kind::version_mismatch,
                          "checkpoint: format_version " + std::to_string(version) +
                              " unsupported (expected " +
                              std::to_string(kCheckpointFormatVersion) + ")");
  }
  if (!j.contains("spec") || !j["spec"].is_object()) throw corrupt("missing spec");
  const json& js = j["spec"];
  NetworkSpec spec;
  if (!js.contains("input_dim") || !js["input_dim"].is_number_unsigned()) {
    throw corrupt("missing spec.input_dim");
  }
  spec.input_dim = js["input_dim"].get<std::size_t>();
  spec.encoder_widths = read_sizes(js, "encoder_widths");
  spec.head_widths = read_sizes(js, "head_widths");
  try {
    spec.validate();
  } catch (const InvalidSpecError& e) {
    throw shape(e.what());
  }
  if (!j.contains("rng_seed") || !j["rng_seed"].is_number_unsigned()) {
    throw corrupt("missing rng_seed");
  }
  const auto seed = j["rng_seed"].get<std::uint64_t>();
  if (!j.contains("layers") || !j["layers"].is_array()) throw corrupt("missing layers");

  const ParameterStore reference = init_network(spec, 0);
  const json& jl = j["layers"];
  if (jl.size() != reference.layer_count()) {
    throw shape("expected " + std::to_string(reference.layer_count()) + " layers, found " +
                std::to_string(jl.size()));
  }
  std::vector<DenseLayer> layers;
  for (std::size_t i = 0; i < jl.size(); ++i) {
    const json& l = jl[i];
    if (!l.is_object()) throw corrupt("layer entry is not an object");
    DenseLayer layer;
    if (!l.contains("fan_in") || !l.contains("fan_out") || !l.contains("frozen") ||
        !l["frozen"].is_boolean()) {
      throw corrupt("layer " + std::to_string(i) + " incomplete");
    }
    layer.fan_in = l["fan_in"].get<std::size_t>();
    layer.fan_out = l["fan_out"].get<std::size_t>();
    layer.frozen = l["frozen"].get<bool>();
    layer.weights = read_reals(l, "weights");
    layer.biases = read_reals(l, "biases");
    const DenseLayer& ref = reference.layer(i);
    if (layer.fan_in != ref.fan_in || layer.fan_out != ref.fan_out ||
        layer.weights.size() != ref.weights.size() || layer.biases.size() != ref.biases.size()) {
      throw shape("layer " + std::to_string(i) + " shape disagrees with spec");
    }
    layers.push_back(std::move(layer));
  }
  return Checkpoint{ParameterStore(std::move(layers), seed), std::move(spec)};
}

}  // namespace

Checkpoint checkpoint_from_string(std::string_view text) {
  try {
    return parse_checkpoint(json::parse(text));
  } catch (const json::exception& e) {
    throw corrupt(std::string("unparseable (") + e.what() + ")");
  }
}

void save_checkpoint(const ParameterStore& store, const NetworkSpec& spec,
                     const std::filesystem::path& path) {
  write_file_atomic(path, checkpoint_to_string(store, spec));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  return checkpoint_from_string(read_file(path));
}

}  // namespace tarnet
