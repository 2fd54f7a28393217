#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <string_view>

namespace tarnet {

using Rng = std::mt19937_64;

std::uint64_t splitmix64(std::uint64_t x) noexcept;

// 64-bit FNV-1a; used to turn stream names into seed coordinates.
std::uint64_t fnv1a(std::string_view text) noexcept;

// Counter-based seed derivation: the result depends only on the master seed
// and the coordinate tuple, never on the order in which streams are requested.
std::uint64_t derive_seed(std::uint64_t master,
                          std::initializer_list<std::uint64_t> coords) noexcept;

}  // namespace tarnet
