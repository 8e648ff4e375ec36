#ifndef INDEXLAB_RANDOM_HPP
#define INDEXLAB_RANDOM_HPP

// Seeded random matrices for checks and demos.

#include <cstdint>
#include <random>

#include "model.hpp"
#include "operator.hpp"

namespace indexlab::rnd {

inline Matrix complex_gaussian(Index rows, Index cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix g(rows, cols);
  for (Index j = 0; j < cols; ++j)
    for (Index i = 0; i < rows; ++i) {
      const double re = normal(rng);
      const double im = normal(rng);
      g(i, j) = Complex(re, im);
    }
  return g;
}

/// scale * (G + G^*) / (2 sqrt(d)).
inline Matrix hermitian(Index d, std::uint64_t seed, double scale = 1.0) {
  const Matrix g = complex_gaussian(d, d, seed);
  return scale * (g + g.adjoint()) / (2.0 * std::sqrt(static_cast<double>(d)));
}

/// scale * G G^* / d, positive semidefinite.
inline Matrix psd(Index d, std::uint64_t seed, double scale = 1.0) {
  const Matrix g = complex_gaussian(d, d, seed);
  return scale * (g * g.adjoint()) / static_cast<double>(d);
}

inline Matrix unitary(Index d, std::uint64_t seed) { return detail::seeded_unitary(d, seed); }

} // namespace indexlab::rnd

#endif // INDEXLAB_RANDOM_HPP
