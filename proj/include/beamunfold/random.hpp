#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "beamunfold/cmatrix.hpp"

namespace beamunfold {

inline std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Independent stream seed for item `index` of a run seeded with `base`.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index) noexcept {
  return splitmix64(splitmix64(base) ^ splitmix64(index + 0x632be59bd9b4e019ULL));
}

using Rng = std::mt19937_64;

/// CN(0, variance): independent real/imag parts with variance/2 each.
inline cplx complex_gaussian(Rng& rng, double variance = 1.0) {
  std::normal_distribution<double> normal(0.0, std::sqrt(0.5 * variance));
  const double re = normal(rng);
  const double im = normal(rng);
  return {re, im};
}

inline CMatrix complex_gaussian_matrix(Rng& rng, std::size_t rows, std::size_t cols,
                                       double variance = 1.0) {
  CMatrix m(rows, cols);
  for (auto& z : m.data()) z = complex_gaussian(rng, variance);
  return m;
}

}  // namespace beamunfold
