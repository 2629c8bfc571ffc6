#include "nhedge/rng.hpp"

#include <cmath>
#include <numbers>

namespace nhedge {

std::uint64_t derive_seed(std::uint64_t master, std::string_view role, std::uint64_t index,
                          std::uint64_t block) {
  return combine(combine(combine(master, hash_tag(role)), index), block);
}

namespace {

std::uint64_t counter_bits(std::uint64_t seed, std::uint64_t stream, std::uint64_t step,
                           std::uint64_t slot) {
  return combine(combine(combine(seed, stream), step), slot);
}

double to_open_unit(std::uint64_t bits) {
  // 53 random bits, shifted off zero.
  return (static_cast<double>(bits >> 11) + 0.5) * 0x1.0p-53;
}

}  // namespace

double counter_uniform(std::uint64_t seed, std::uint64_t stream, std::uint64_t step,
                       std::uint64_t slot) {
  return to_open_unit(counter_bits(seed, stream, step, 2 * slot));
}

double counter_normal(std::uint64_t seed, std::uint64_t stream, std::uint64_t step,
                      std::uint64_t slot) {
  const double u1 = to_open_unit(counter_bits(seed, stream, step, 2 * slot));
  const double u2 = to_open_unit(counter_bits(seed, stream, step, 2 * slot + 1));
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

}  // namespace nhedge
