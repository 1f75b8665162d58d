#include "tomcoord/util/random.hpp"

#include <numeric>
#include <stdexcept>

namespace tomcoord {

std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

namespace {

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

std::uint64_t substream_seed(std::uint64_t root, std::string_view name,
                             std::uint64_t a, std::uint64_t b) {
  std::uint64_t h = splitmix(root);
  h = splitmix(h ^ fnv1a(name));
  h = splitmix(h ^ a);
  return splitmix(h ^ (b * 0x632be59bd9b4e019ULL));
}

Rng substream(std::uint64_t root, std::string_view name, std::uint64_t a,
              std::uint64_t b) {
  return Rng(substream_seed(root, name, a, b));
}

std::size_t uniform_index(Rng& rng, std::size_t n) {
  if (n == 0) throw std::invalid_argument("uniform_index: empty range");
  return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
}

double uniform01(Rng& rng) {
  return std::uniform_real_distribution<double>(0.0, 1.0)(rng);
}

std::size_t sample_discrete(Rng& rng, const std::vector<double>& weights) {
  const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
  if (!(total > 0.0)) throw std::invalid_argument("sample_discrete: zero mass");
  double u = uniform01(rng) * total;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (u < weights[i]) return i;
    u -= weights[i];
  }
  // Rounding can leave u just above the last bucket.
  for (std::size_t i = weights.size(); i-- > 0;) {
    if (weights[i] > 0.0) return i;
  }
  return weights.size() - 1;
}

std::vector<double> sample_dirichlet(Rng& rng, const std::vector<double>& alpha) {
  std::vector<double> out(alpha.size());
  double total = 0.0;
  for (std::size_t i = 0; i < alpha.size(); ++i) {
    if (!(alpha[i] > 0.0)) throw std::invalid_argument("dirichlet: alpha must be positive");
    out[i] = std::gamma_distribution<double>(alpha[i], 1.0)(rng);
    total += out[i];
  }
  if (!(total > 0.0)) {
    // Every gamma draw underflowed (tiny alpha); fall back to a vertex.
    out.assign(alpha.size(), 0.0);
    out[uniform_index(rng, alpha.size())] = 1.0;
    return out;
  }
  for (double& v : out) v /= total;
  return out;
}

}  // namespace tomcoord
