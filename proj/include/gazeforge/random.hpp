#pragma once

#include <cstdint>
#include <random>
#include <string>

#include "gazeforge/tensor.hpp"

namespace gazeforge {

// Stable substream derivation so one run seed can feed many independent
// consumers (init, sampling, eval) without order coupling.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream);
std::uint64_t mix_seed(std::uint64_t seed, const std::string& stream);

Tensor randn(Shape shape, std::mt19937_64& rng, double stddev = 1.0, double mean = 0.0);
Tensor rand_uniform(Shape shape, std::mt19937_64& rng, double lo = 0.0, double hi = 1.0);
double uniform_in(std::mt19937_64& rng, double lo, double hi);

}  // namespace gazeforge
