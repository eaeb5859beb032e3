#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace rfpca {

using Rng = std::mt19937_64;

/// One step of the splitmix64 finalizer.
std::uint64_t splitmix64(std::uint64_t x) noexcept;

/// Derives an independent stream seed from a master seed and a key path, e.g.
/// derive_seed(master, {setting, d_index, k_index, replication}). Each key is
/// folded in turn: s <- splitmix64(s ^ splitmix64(key + 1)).
std::uint64_t derive_seed(std::uint64_t master, std::initializer_list<std::uint64_t> keys) noexcept;

}  // namespace rfpca
