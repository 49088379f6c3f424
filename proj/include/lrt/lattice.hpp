#pragma once

// Magnetic (Hofstadter) model on an L1 x L2 torus: hoppings, magnetic
// translations, positions and their displacement kernels, currents, Fermi
// states, Bloch reduction and a lattice Chern-number reference.

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "lrt/ncalg.hpp"
#include "lrt/types.hpp"

namespace lrt::lattice {

inline constexpr int kDirections = 2;

enum class DisplacementMode { minimal_image, open_positions };

struct ModelSpec {
  int L1 = 8;
  int L2 = 8;
  long flux_p = 0;
  long flux_q = 1;
  double disorder_W = 0.0;
  std::uint64_t seed = 0;
  DisplacementMode displacement = DisplacementMode::minimal_image;
  // Which member of the disorder ensemble build_model draws.
  std::uint64_t realization = 0;

  Index sites() const { return Index(L1) * Index(L2); }
  // Phase of a single magnetic hopping; the flux through a plaquette is twice this.
  double theta() const;
  bool clean() const { return disorder_W == 0.0; }
};

// Throws FluxIncommensurate / InvalidArgument.
void validate(const ModelSpec& spec);

// Site (n1, n2) <-> basis index, n1 running fastest.
struct Torus {
  int L1;
  int L2;
  Index index(int n1, int n2) const;
  int n1(Index i) const { return int(i % L1); }
  int n2(Index i) const { return int(i / L1); }
};

Torus torus(const ModelSpec& spec);

std::uint64_t realization_seed(std::uint64_t seed, std::uint64_t realization);

// On-site disorder of one realization, uniform in [-W/2, W/2]; each site's
// value depends only on (seed, realization, site).
std::vector<double> disorder_potential(const ModelSpec& spec, std::uint64_t realization);

/// Commutators with the position operators, stored as Hadamard kernels:
/// [X_k, A] = d_k o A.  open_positions uses the genuine diagonal positions
/// (d_k(m, n) = x_m - x_n); minimal_image wraps the difference into
/// (-L/2, L/2], which is not a commutator with any operator but is the
/// torus-compatible derivation of covariant operators.
class Displacement {
 public:
  explicit Displacement(const ModelSpec& spec);

  DisplacementMode mode() const { return mode_; }
  Index dim() const { return kernel_[0].rows(); }
  const RealMatrix& kernel(int k) const { return kernel_.at(std::size_t(k)); }

  Operator commutator(int k, const Operator& a) const;
  // partial_k(A) = i [X_k, A]
  Operator derive(int k, const Operator& a) const;
  // e^{i phi.X} A e^{-i phi.X}; in minimal_image mode the Peierls twist e^{i phi.d} o A.
  Operator twist(std::span<const double> phi, const Operator& a) const;

 private:
  DisplacementMode mode_;
  std::vector<RealMatrix> kernel_;
};

struct LatticeOperatorSet {
  ModelSpec spec;
  Operator H;
  std::vector<Operator> X;  // diagonal positions in [0, L_k)
  std::vector<Operator> S;  // magnetic translations
  Displacement displacement;
  std::vector<double> onsite;

  Index dim() const { return H.rows(); }
};

// Magnetic hoppings (T1 phi)(n) = e^{i theta n2} phi(n - e1), (T2 phi)(n) = e^{-i theta n1} phi(n - e2).
std::vector<Operator> hopping_operators(const ModelSpec& spec);
// (S1 phi)(n) = e^{i theta n2} phi(n + e1), (S2 phi)(n) = e^{i theta n1} phi(n - e2); they commute with T1, T2.
std::vector<Operator> magnetic_translations(const ModelSpec& spec);
std::vector<Operator> position_operators(const ModelSpec& spec);

LatticeOperatorSet build_model(const ModelSpec& spec);
LatticeOperatorSet build_model(const ModelSpec& spec, std::span<const double> onsite);

// J_k = i[H, X_k]
Operator current_operator(const LatticeOperatorSet& set, int k);
std::vector<Operator> current_operators(const LatticeOperatorSet& set);

struct FermiProjection {
  Operator P;
  Index rank = 0;
  double gap_distance = 0.0;  // min |E_i - E_F|
  bool on_eigenvalue = false;
};

FermiProjection fermi_projection(const ncalg::SpectralData& s, double fermi_energy);
// Numerically stable 1/(1 + e^{beta (E - E_F)}).
Operator fermi_dirac_state(const ncalg::SpectralData& s, double beta, double fermi_energy);
double fermi_dirac(double beta, double energy, double fermi_energy);

/// Clean model in the magnetic Bloch representation: q x q matrices indexed
/// by a reduced momentum K1 in [0, 2pi) and k2.  The torus momenta are
/// K1 = 2 pi m / (L1/q), k2 = 2 pi m / L2.
class BlochFamily {
 public:
  explicit BlochFamily(const ModelSpec& spec);

  long q() const { return q_; }
  const ModelSpec& spec() const { return spec_; }
  Operator at(double K1, double k2) const;
  std::vector<double> torus_K1() const;
  std::vector<double> torus_k2() const;
  // All eigenvalues on the torus momentum grid (equals the spectrum of H).
  std::vector<double> torus_spectrum() const;
  // (max of band n, min of band n+1) over the torus grid, n counted from 1.
  std::pair<double, double> gap_edges(int below_band) const;

 private:
  ModelSpec spec_;
  long q_;
  double phi_;
};

// Throws RequiresCleanModel / FluxIncommensurate.
BlochFamily bloch_reduce(const ModelSpec& spec);

struct ChernOptions {
  int grid = 60;
  int refinements = 1;   // each doubles the grid; all levels must agree
  double gap_tol = 1e-8;
};

// Sum of the Chern numbers of the lowest band_count bands by plaquette
// link phases; throws GapClosure when the bands touch on the grid.
long chern_number(const BlochFamily& family, int band_count, const ChernOptions& options = {});

// Mid-gap energy above band `below_band` of the clean model on this torus.
double band_gap_center(const ModelSpec& spec, int below_band);

struct KernelEntry {
  int a1;
  int a2;
  cplx value;
};

// sum_a f(a) W(a) with W(a)(n, n - a) = e^{i theta (a1 n2 - a2 n1)}: commutes
// with the magnetic translations.  Offsets must satisfy |a_k| < L_k / 2.
Operator covariant_from_kernel(const ModelSpec& spec, std::span<const KernelEntry> kernel);

}  // namespace lrt::lattice
