// Copyright 2026 The mmvae Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <random>
#include <string_view>
#include <utility>
#include <vector>

namespace mmvae {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t fnv1a64(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Child seed for a named subsystem. Distinct names give independent streams.
inline std::uint64_t derive_seed(std::uint64_t parent, std::string_view name) {
  return splitmix64(splitmix64(parent) ^ fnv1a64(name));
}

/// Seeded random source whose outputs are fixed by this header alone.
///
/// The standard distributions are implementation-defined, so uniform and
/// normal draws are produced here directly from the raw mt19937_64 stream.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  /// Uniform on the open interval (0, 1).
  double uniform() {
    return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53;
  }

  /// Standard normal via Box-Muller; one draw consumes two uniforms.
  double normal() {
    const double u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  std::vector<double> normal_vector(std::size_t n, double scale = 1.0) {
    std::vector<double> out(n);
    for (auto& v : out) v = scale * normal();
    return out;
  }

  /// Uniform integer in [0, n).
  std::size_t index(std::size_t n) {
    const auto wide = static_cast<unsigned __int128>(engine_()) * n;
    return static_cast<std::size_t>(wide >> 64);
  }

  template <class T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::swap(items[i - 1], items[index(i)]);
    }
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace mmvae
