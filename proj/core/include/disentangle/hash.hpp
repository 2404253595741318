#pragma once

#include <cstdint>
#include <initializer_list>
#include <string_view>

namespace disentangle {

/// 64-bit FNV-1a.
std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t basis = 0xcbf29ce484222325ULL);

/// SplitMix64 finalizer; a bijective scrambler used to derive RNG seeds.
std::uint64_t splitmix64(std::uint64_t x);

/// Seed for an independent stream identified by (seed, tags...).
std::uint64_t derive_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> tags);

}  // namespace disentangle
