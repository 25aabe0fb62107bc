#pragma once

#include <cstdint>
#include <random>

namespace demixkit {

// All randomness in the toolkit flows through mt19937_64 plus the helpers
// below. Distribution sampling is written out by hand so that a given seed
// produces the same stream on every platform; std::*_distribution is
// implementation-defined and would break byte-identical reruns.
using Rng = std::mt19937_64;

// splitmix64 step, used to derive independent substream seeds.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream);

// Uniform in [lo, hi).
double uniform(Rng& rng, double lo, double hi);

// Standard normal via Box-Muller (two draws per sample, no caching).
double normal(Rng& rng);

// Uniform integer in [0, n). n must be positive.
std::uint64_t uniform_index(Rng& rng, std::uint64_t n);

}  // namespace demixkit
