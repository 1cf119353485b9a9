#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <utility>
#include <vector>

namespace isomix {

using Rng = std::mt19937_64;

// Independent generator for (seed, stream, substream). Streams are derived
// by index, so results do not depend on the order replicates run in.
Rng make_stream(std::uint64_t seed, std::uint64_t stream, std::uint64_t substream = 0);

// Uniform on [0, 1) with 53 random bits.
double uniform01(Rng& rng);

// Uniform on {0, ..., n-1}; unbiased.
std::size_t uniform_index(Rng& rng, std::size_t n);

template <class T>
void shuffle_in_place(std::vector<T>& values, Rng& rng) {
  for (std::size_t i = values.size(); i > 1; --i) {
    const std::size_t j = uniform_index(rng, i);
    std::swap(values[i - 1], values[j]);
  }
}

// Nondeterministic seed, for runs where the caller supplied none.
std::uint64_t fresh_seed();

}  // namespace isomix
