#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace tomcoord {

using Rng = std::mt19937_64;

// 64-bit FNV-1a.
std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ULL);

// Seed of a named substream of `root`, further keyed by up to two indices.
std::uint64_t substream_seed(std::uint64_t root, std::string_view name,
                             std::uint64_t a = 0, std::uint64_t b = 0);
Rng substream(std::uint64_t root, std::string_view name, std::uint64_t a = 0,
              std::uint64_t b = 0);

// Uniform integer in [0, n).
std::size_t uniform_index(Rng& rng, std::size_t n);
double uniform01(Rng& rng);
// Draw from a discrete distribution given by non-negative weights.
std::size_t sample_discrete(Rng& rng, const std::vector<double>& weights);
// Dirichlet draw via normalized gamma variates.
std::vector<double> sample_dirichlet(Rng& rng, const std::vector<double>& alpha);

template <typename T>
void shuffle(Rng& rng, std::vector<T>& v) {
  for (std::size_t i = v.size(); i > 1; --i) {
    std::swap(v[i - 1], v[uniform_index(rng, i)]);
  }
}

}  // namespace tomcoord
