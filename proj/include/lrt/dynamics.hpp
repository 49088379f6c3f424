#pragma once

// Adiabatically switched gauge perturbation: switch function, field profile
// Phi^eps(t), gauge-transformed Hamiltonian, its additive expansion, and the
// time-ordered propagator.

#include <optional>
#include <span>
#include <variant>
#include <vector>

#include "lrt/lattice.hpp"
#include "lrt/ncalg.hpp"

namespace lrt::dynamics {

struct Constant {};
// sin^2 bump supported on [t0, t1].
struct CompactBump {
  double t0;
  double t1;
};
// cos(omega t + phase) on the whole time axis.
struct FourierCosine {
  double omega;
  double phase = 0.0;
};

using Modulation = std::variant<Constant, CompactBump, FourierCosine>;

struct PerturbationProfile {
  double eps = 0.5;
  std::vector<double> field;            // Phi_k, one per direction
  std::vector<Modulation> modulation;   // f_k, one per direction

  static PerturbationProfile constant(double eps, std::vector<double> field);

  // Earliest time at which any modulation is non-zero (-inf if unbounded).
  double t_start() const;
  void validate() const;
};

// s(t) = e^{eps t} for t <= 0, 1 afterwards.
double switch_value(double eps, double t);
double modulation_value(const Modulation& f, double t);

// Phi^eps_k(t) = Phi_k * int_{-inf}^t s(tau) f_k(tau) dtau
std::vector<double> phi_profile(const PerturbationProfile& p, double t);
// d/dt Phi^eps_k(t) = Phi_k s(t) f_k(t)
std::vector<double> phi_rate(const PerturbationProfile& p, double t);

// Start of the time axis used in place of -infinity: the integrated switch
// weight before it is below tol/scale.  Finite supports start exactly.
double truncation_time(const PerturbationProfile& p, double t, double tol, double scale = 1.0);

// G(t) = exp(i sum_k Phi^eps_k(t) X_k) with genuine positions.
Operator gauge_unitary(const lattice::LatticeOperatorSet& set, const PerturbationProfile& p, double t);

// H_Phi(t): conjugation of H by the gauge unitary (twisted hoppings in minimal-image mode).
Operator perturbed_hamiltonian(const lattice::LatticeOperatorSet& set, const PerturbationProfile& p, double t);

// W_N = sum_{r=1}^{N} (-1)^r sum_{|kappa|=r} Phi^kappa / kappa! J_kappa with
// J_kappa = (-1)^{|kappa|} ad_X^kappa(H); converges to H_Phi - H.
Operator bch_additive_perturbation(const lattice::LatticeOperatorSet& set, std::span<const double> phi, int order);
Operator bch_additive_perturbation(const lattice::LatticeOperatorSet& set, const PerturbationProfile& p, double t,
                                   int order);

/// Exponential-midpoint steps exp(-i h H_Phi(t + h/2)).  In open-positions
/// mode the step is G U0(h) G*, exact and one product per step.
/// Caches the free step, so one instance must not be shared between threads.
class Stepper {
 public:
  Stepper(const lattice::LatticeOperatorSet& set, const PerturbationProfile& p);

  // U <- S(t_mid, h) U
  void apply(double t_mid, double h, Operator& u) const;
  Operator step(double t_mid, double h) const;

 private:
  const Operator& free_step(double h) const;

  lattice::Displacement displacement_;
  PerturbationProfile profile_;
  ncalg::SpectralData spectrum_;
  mutable double cached_h_ = 0.0;
  mutable Operator cached_free_;
};

// Uniform grid of n steps (n even, at least 2) covering [t0, t1] with h <= dt.
struct TimeGrid {
  double t0;
  double t1;
  long steps;
  double h() const { return (t1 - t0) / double(steps); }
  double node(long i) const { return t0 + (t1 - t0) * double(i) / double(steps); }
};

TimeGrid make_grid(double t0, double t1, double dt);

struct PropagatorResult {
  Operator U;  // U(t1, t0)
  double t0;
  double t1;
  double dt;
  long steps;
  std::optional<double> cocycle_residual;
};

// Solves i d/dt U(t, t0) = H_Phi(t) U(t, t0); t1 < t0 returns U(t0, t1)*.
PropagatorResult propagate(const lattice::LatticeOperatorSet& set, const PerturbationProfile& p, double t0, double t1,
                           double dt, bool record_cocycle = false);

// || U_Phi(t,s) - U_0(t-s) + i int_s^t U_Phi(t,tau) W(tau) U_0(tau-s) dtau ||_2 (normalized trace)
double duhamel_residual(const lattice::LatticeOperatorSet& set, const PerturbationProfile& p, double t, double s,
                        double dt);

}  // namespace lrt::dynamics
