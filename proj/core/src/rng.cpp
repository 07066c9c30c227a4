#include "flowdistill/rng.hpp"

namespace flowdistill {

std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b) noexcept {
  return mix64(mix64(mix64(seed) ^ a) ^ (b * 0xd1b54a32d192ed03ULL));
}

Vector normal_vector(Rng& rng, Eigen::Index dim, double stddev) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector out(dim);
  for (Eigen::Index i = 0; i < dim; ++i) out[i] = stddev * normal(rng);
  return out;
}

double uniform01(Rng& rng) {
  return std::uniform_real_distribution<double>(0.0, 1.0)(rng);
}

}  // namespace flowdistill
