#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <string_view>
#include <vector>

namespace charcom {

using Rng = std::mt19937_64;

// splitmix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

constexpr std::uint64_t fnv1a64(std::string_view s) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Derives an independent stream seed from a base seed and a path of
/// integer/label components. Used everywhere a sub-computation needs its own
/// reproducible randomness (per step, per scene, per character).
inline std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> path) {
  std::uint64_t h = mix64(base);
  for (auto p : path) h = mix64(h ^ mix64(p));
  return h;
}

inline std::uint64_t derive_seed(std::uint64_t base, std::string_view label,
                                 std::initializer_list<std::uint64_t> path = {}) {
  std::uint64_t h = mix64(base ^ fnv1a64(label));
  for (auto p : path) h = mix64(h ^ mix64(p));
  return h;
}

inline std::vector<double> gaussian_vector(std::size_t n, Rng& rng, double stddev = 1.0) {
  std::normal_distribution<double> dist(0.0, stddev);
  std::vector<double> v(n);
  for (auto& x : v) x = dist(rng);
  return v;
}

}  // namespace charcom
