#pragma once

// Counter-based random numbers: every draw is a pure function of
// (seed, stream, step, slot), so path i's numbers never depend on how many
// other paths were generated or in which order.

#include <cstdint>
#include <string_view>

namespace nhedge {

// splitmix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

constexpr std::uint64_t combine(std::uint64_t a, std::uint64_t b) {
  return mix64(a ^ mix64(b + 0x632BE59BD9B4E019ull));
}

// FNV-1a, used to turn role tags into seed material.
constexpr std::uint64_t hash_tag(std::string_view tag) {
  std::uint64_t h = 0xCBF29CE484222325ull;
  for (char c : tag) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001B3ull;
  }
  return h;
}

// Sub-seed for a (role, index, block) triple under a master seed.
std::uint64_t derive_seed(std::uint64_t master, std::string_view role, std::uint64_t index = 0,
                          std::uint64_t block = 0);

// Uniform in the open interval (0, 1).
double counter_uniform(std::uint64_t seed, std::uint64_t stream, std::uint64_t step,
                       std::uint64_t slot);

// Standard normal via Box-Muller on two counter uniforms.
double counter_normal(std::uint64_t seed, std::uint64_t stream, std::uint64_t step,
                      std::uint64_t slot);

}  // namespace nhedge
