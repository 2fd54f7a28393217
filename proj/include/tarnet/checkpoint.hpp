#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "tarnet/network.hpp"

namespace tarnet {

inline constexpr int kCheckpointFormatVersion = 1;

struct Checkpoint {
  ParameterStore store;
  NetworkSpec spec;
};

// JSON text; every float is written with 17 significant digits so that a
// load reproduces the exact bits.
std::string checkpoint_to_string(const ParameterStore& store, const NetworkSpec& spec);
Checkpoint checkpoint_from_string(std::string_view text);

void save_checkpoint(const ParameterStore& store, const NetworkSpec& spec,
                     const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace tarnet
