#pragma once

#include <cstdint>
#include <random>

#include "flowdistill/types.hpp"

namespace flowdistill {

using Rng = std::mt19937_64;

// SplitMix64 finalizer; used to derive independent stream seeds from counters.
std::uint64_t mix64(std::uint64_t x) noexcept;

// Counter-based seed derivation: the stream for (seed, a, b) does not depend on
// how many draws other streams consumed.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0) noexcept;

inline Rng make_rng(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0) {
  return Rng(derive_seed(seed, a, b));
}

// i.i.d. N(0, stddev^2) entries.
Vector normal_vector(Rng& rng, Eigen::Index dim, double stddev = 1.0);

double uniform01(Rng& rng);

}  // namespace flowdistill
