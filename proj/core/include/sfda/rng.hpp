// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace sfda {

using Rng = std::mt19937_64;

// Mixes a run seed, a named stream and up to two indices into an independent
// 64-bit seed. Every source of randomness in a run is derived through here so
// that the single run seed determines all of them.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view stream,
                          std::uint64_t a = 0, std::uint64_t b = 0);

inline Rng make_rng(std::uint64_t seed, std::string_view stream,
                    std::uint64_t a = 0, std::uint64_t b = 0) {
  return Rng(derive_seed(seed, stream, a, b));
}

// Uniform double in [0, 1) from 53 random bits. Used instead of
// std::uniform_real_distribution where the exact draw sequence matters.
inline double uniform01(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

}  // namespace sfda
