#pragma once

#include <cstdint>
#include <random>

#include "vamp/types.hpp"

namespace vamp {

using Rng = std::mt19937_64;

/// splitmix64 step; used to decorrelate substream seeds.
inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ull);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

/// Derives an independent substream seed from a master seed and up to three
/// stream indices (experiment point, trial, purpose). Results do not depend
/// on evaluation order, so trials can run on any worker.
inline std::uint64_t substream_seed(std::uint64_t master, std::uint64_t a,
                                    std::uint64_t b = 0, std::uint64_t c = 0) {
  std::uint64_t s = master;
  std::uint64_t h = splitmix64(s);
  s ^= a + 0x9e3779b97f4a7c15ull;
  h ^= splitmix64(s);
  s ^= b + 0xa0761d6478bd642full;
  h ^= splitmix64(s);
  s ^= c + 0xe7037ed1a0b428dbull;
  h ^= splitmix64(s);
  return h;
}

inline Rng make_rng(std::uint64_t seed) { return Rng(seed); }

inline double gaussian(Rng& rng, double mean = 0.0, double stddev = 1.0) {
  std::normal_distribution<double> dist(mean, stddev);
  return dist(rng);
}

inline Vector gaussian_vector(Index n, Rng& rng, double mean = 0.0,
                              double stddev = 1.0) {
  std::normal_distribution<double> dist(mean, stddev);
  Vector v(n);
  for (Index i = 0; i < n; ++i) v[i] = dist(rng);
  return v;
}

inline Matrix gaussian_matrix(Index rows, Index cols, Rng& rng,
                              double mean = 0.0, double stddev = 1.0) {
  std::normal_distribution<double> dist(mean, stddev);
  Matrix m(rows, cols);
  // column-major fill, matches Eigen storage order
  for (Index j = 0; j < cols; ++j)
    for (Index i = 0; i < rows; ++i) m(i, j) = dist(rng);
  return m;
}

}  // namespace vamp
