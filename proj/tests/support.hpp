#pragma once

// Shared fixtures for the unit tests.

#include <unsupported/Eigen/MatrixFunctions>

#include "lrt/lattice.hpp"
#include "lrt/random.hpp"
#include "lrt/types.hpp"

namespace lrt::testing {

inline double max_abs(const Operator& a) { return a.size() ? a.cwiseAbs().maxCoeff() : 0.0; }

inline lattice::ModelSpec spec(int L, long p, long q,
                               lattice::DisplacementMode mode = lattice::DisplacementMode::minimal_image,
                               double W = 0.0, std::uint64_t seed = 1) {
  lattice::ModelSpec s;
  s.L1 = s.L2 = L;
  s.flux_p = p;
  s.flux_q = q;
  s.disorder_W = W;
  s.seed = seed;
  s.displacement = mode;
  return s;
}

inline constexpr auto kOpen = lattice::DisplacementMode::open_positions;
inline constexpr auto kMinimal = lattice::DisplacementMode::minimal_image;

// exp(-i t H), independent of the eigensolver (Pade / scaling and squaring).
inline Operator expm_unitary(const Operator& h, double t) { return Operator(-I * t * h).exp(); }

inline Operator diag(std::initializer_list<double> v) {
  RealVector d(Index(v.size()));
  Index i = 0;
  for (double x : v) d(i++) = x;
  return d.cast<cplx>().asDiagonal();
}

}  // namespace lrt::testing
