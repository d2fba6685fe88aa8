#pragma once

#include <cstdint>
#include <random>

#include "tad/types.hpp"

namespace tad {

// Independent generator for (seed, stream, index); the same triple always
// gives the same sequence, so draws do not depend on call order elsewhere.
inline std::mt19937_64 make_rng(std::uint64_t seed, std::uint64_t stream, std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
  return std::mt19937_64(seq);
}

inline Vector standard_normal(std::mt19937_64& rng, Eigen::Index n) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector z(n);
  for (Eigen::Index i = 0; i < n; ++i) z[i] = normal(rng);
  return z;
}

// Stream identifiers.
enum Stream : std::uint64_t {
  kStreamInitialBatch = 1,
  kStreamPerturb = 2,
  kStreamTadRestart = 3,
  kStreamGpRestart = 4,
  kStreamOracle = 5,
  kStreamDuplicate = 6,
  kStreamInitialDesign = 7,
};

}  // namespace tad
