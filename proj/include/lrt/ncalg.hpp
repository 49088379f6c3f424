#pragma once

// Finite-dimensional stand-in for the non-commutative calculus: traces,
// Schatten norms, derivations, the Liouvillian and its resolvent, Heisenberg
// evolution and the Bohr-frequency pinching.

#include <cstdint>
#include <functional>
#include <limits>
#include <vector>

#include "lrt/types.hpp"

namespace lrt::ncalg {

inline constexpr double kHermitianTol = 1e-12;
inline constexpr double kUnitaryTol = 1e-10;
inline constexpr double kProjectionTol = 1e-10;
inline constexpr double kInfinity = std::numeric_limits<double>::infinity();

bool is_hermitian(const Operator& a, double tol = kHermitianTol);
bool is_unitary(const Operator& a, double tol = kUnitaryTol);
bool is_projection(const Operator& a, double tol = kProjectionTol);

// Largest singular value.
double operator_norm(const Operator& a);

void require_hermitian(const Operator& a, const char* what);
void require_same_dim(const Operator& a, const Operator& b, const char* what);

/// Eigendecomposition H = V diag(E) V* of a Hermitian operator.
/// Eigenvalues are ascending; inside a degenerate cluster the basis is an
/// arbitrary orthonormal one, so everything derived from it must be
/// insensitive to rotations within clusters.
class SpectralData {
 public:
  SpectralData(Operator source, RealVector eigenvalues, Operator eigenvectors);

  const Operator& source() const { return source_; }
  const RealVector& eigenvalues() const { return eigenvalues_; }
  const Operator& eigenvectors() const { return eigenvectors_; }
  Index dim() const { return eigenvalues_.size(); }

  Operator to_eigenbasis(const Operator& a) const;
  Operator from_eigenbasis(const Operator& a) const;
  Operator reconstruct() const;

  // omega(m, n) = E_m - E_n
  RealMatrix bohr_frequencies() const;

  // Tolerance used to decide that two eigenvalues coincide.
  double degeneracy_tol() const;

 private:
  Operator source_;
  RealVector eigenvalues_;
  Operator eigenvectors_;
};

SpectralData spectral_decompose(const Operator& h);

// Returns a copy whose eigenvectors are rotated by independent Haar-random
// unitaries inside every degenerate cluster.
SpectralData rerandomize_clusters(const SpectralData& s, std::uint64_t seed, double tol = -1.0);

Operator apply_function(const SpectralData& s, const std::function<double(double)>& f);

enum class TraceMode { normalized, site };

/// Finite-volume trace T(A) = sum_i w_i A_ii.
/// normalized: w_i = 1/N. site: uniform average over a reference cell,
/// the finite analogue of <delta_0|A|delta_0> (equal to the normalized trace
/// on covariant operators).
class TracialAlgebra {
 public:
  static TracialAlgebra normalized(Index dim);
  static TracialAlgebra site(Index dim, const std::vector<Index>& cell);

  Index dim() const { return weights_.size(); }
  TraceMode mode() const { return mode_; }
  const RealVector& weights() const { return weights_; }

 private:
  TracialAlgebra(TraceMode mode, RealVector weights) : mode_(mode), weights_(std::move(weights)) {}

  TraceMode mode_;
  RealVector weights_;
};

cplx trace(const TracialAlgebra& alg, const Operator& a);
// T(A B) without forming the product.
cplx trace_product(const TracialAlgebra& alg, const Operator& a, const Operator& b);

// T(|A|^p)^(1/p); p = kInfinity gives the operator norm.
double schatten_norm(const TracialAlgebra& alg, const Operator& a, double p);

Operator commutator(const Operator& a, const Operator& b);
Operator anticommutator(const Operator& a, const Operator& b);

// i[X, A] for Hermitian X.
Operator derivation(const Operator& x, const Operator& a);

// L_H(A) = -i[H, A]
Operator liouvillian_apply(const SpectralData& s, const Operator& a);

// (eps + i*kappa - L_H)^{-1}(A); entrywise A_mn / (eps + i*kappa + i(E_m - E_n)) in the eigenbasis.
Operator liouvillian_resolvent(const SpectralData& s, double eps, double kappa, const Operator& a);

// alpha_t(A) = e^{t L_H}(A) = e^{-itH} A e^{itH}
Operator heisenberg_evolve(const SpectralData& s, double t, const Operator& a);

struct Pinching {
  Operator kernel_part;      // block-diagonal over degenerate clusters
  Operator complement_part;  // everything else
};

Pinching pinching_projector(const SpectralData& s, const Operator& a, double tol = -1.0);

}  // namespace lrt::ncalg
