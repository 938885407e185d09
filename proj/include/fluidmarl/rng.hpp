// Copyright 2026 The fluidmarl Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef FLUIDMARL_RNG_HPP_
#define FLUIDMARL_RNG_HPP_

#include <cstdint>
#include <initializer_list>
#include <random>

namespace fluidmarl {

using Rng = std::mt19937_64;

// Named streams. A stream seed is a pure function of (master, tag, counters),
// so adding a consumer never shifts the draws seen by another one.
enum class Stream : std::uint64_t {
  kInit = 1,
  kRollout = 2,
  kEval = 3,
  kGeometry = 4,
  kPositions = 5,
  kShuffle = 6,
  kAnalysis = 7,
};

constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t master, Stream tag,
                                 std::initializer_list<std::uint64_t> counters = {}) {
  std::uint64_t h = splitmix64(master ^ splitmix64(static_cast<std::uint64_t>(tag)));
  for (std::uint64_t c : counters) h = splitmix64(h ^ splitmix64(c + 0x632be59bd9b4e019ULL));
  return h;
}

inline Rng make_rng(std::uint64_t master, Stream tag,
                    std::initializer_list<std::uint64_t> counters = {}) {
  return Rng(derive_seed(master, tag, counters));
}

}  // namespace fluidmarl

#endif  // FLUIDMARL_RNG_HPP_
