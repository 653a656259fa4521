#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace ttsnap {

using Rng = std::mt19937_64;

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Derives a child seed from a parent seed and a path of tags.
///
/// All randomness in an experiment is reached from the master seed through
/// this function: master -> (instance) -> (role) -> trajectory seeds, and
/// master -> (search, instance, repeat, N) for search draws.
inline std::uint64_t derive_seed(std::uint64_t parent,
                                 std::initializer_list<std::uint64_t> path) noexcept {
  std::uint64_t s = splitmix64(parent);
  for (std::uint64_t tag : path) s = splitmix64(s ^ splitmix64(tag + 0x632be59bd9b4e019ULL));
  return s;
}

// Stream tags used with derive_seed.
namespace seed_tag {
inline constexpr std::uint64_t kInstance = 1;
inline constexpr std::uint64_t kTrainRole = 2;
inline constexpr std::uint64_t kEvalRole = 3;
inline constexpr std::uint64_t kSearch = 4;
inline constexpr std::uint64_t kTraining = 5;
}  // namespace seed_tag

}  // namespace ttsnap
