#pragma once

// Linear response of the switched gauge perturbation: interaction and full
// states, net currents, and the conductivity by several independent routes
// (finite differences of the dynamics, Kubo time integral, Liouvillian
// resolvent, adiabatic limit, Streda formula).

#include <optional>
#include <string>
#include <vector>

#include "lrt/dynamics.hpp"
#include "lrt/lattice.hpp"
#include "lrt/ncalg.hpp"

namespace lrt::response {

// Overall constant in front of the Kubo integral (recorded in every report).
inline constexpr double kKuboPrefactor = -1.0;

// Pairwise agreement expected between routes on the same sample point.
inline constexpr double kFdKuboTolerance = 1e-3;         // times max(1, |sigma_kubo|)
inline constexpr double kKuboResolventTolerance = 1e-8;  // absolute
inline constexpr double kAdiabaticStredaTolerance = 1e-2;  // absolute, raw sigma

/// The unperturbed system: lattice operators, spectrum of H and the trace.
struct System {
  lattice::LatticeOperatorSet ops;
  ncalg::SpectralData spectrum;
  ncalg::TracialAlgebra trace;

  static System build(lattice::LatticeOperatorSet ops);
  static System build(lattice::LatticeOperatorSet ops, ncalg::TracialAlgebra trace);

  const lattice::Displacement& displacement() const { return ops.displacement; }
  Index dim() const { return ops.dim(); }
};

struct TimeOptions {
  double dt = 1e-3;
  double tail_tol = 1e-8;
};

// [H, rho] must vanish; throws NotEquilibrium.
void require_equilibrium(const System& sys, const Operator& rho, double tol = 1e-10);

// gamma_t(rho): the state transported by the gauge unitary.
Operator interaction_state(const System& sys, const dynamics::PerturbationProfile& p, const Operator& rho, double t);

Operator full_state_direct(const System& sys, const dynamics::PerturbationProfile& p, const Operator& rho, double t,
                           const TimeOptions& opts = {});

/// rho_full(t) computed by propagation, next to rho_int(t) and the
/// first-order kernels K_k with rho_full = rho_int + sum_k Phi_k K_k
/// (exact in open-positions mode, where the gauge transport is unitary).
struct EvolutionPair {
  double t = 0.0;
  Operator rho_int;
  Operator rho_full;
  std::vector<Operator> K;
  std::string method;
  double tail_start = 0.0;
  long steps = 0;

  // rho_full - rho_int - sum_k Phi_k K_k
  Operator residual(std::span<const double> field) const;
};

EvolutionPair full_state_expansion(const System& sys, const dynamics::PerturbationProfile& p, const Operator& rho,
                                   double t, const TimeOptions& opts = {});

struct NetCurrent {
  double relative_form;    // T(J_Phi(t) (rho_full - rho_int))
  double difference_form;  // T(J_Phi(t) rho_full) - T(J rho)
};

NetCurrent net_current(const System& sys, const dynamics::PerturbationProfile& p, const Operator& current,
                       const Operator& rho, double t, const TimeOptions& opts = {});

/// sigma(k, j): response of the current J_j to a field along direction k.
struct Conductivity {
  RealMatrix sigma;
  RealMatrix error;
};

struct FdOptions {
  double dphi = 1e-2;
  double dt = 2e-3;
  double tail_tol = 1e-8;
  double tolerance = 1e-4;  // allowed disagreement of the two Richardson levels is 10x this
};

Conductivity conductivity_fd(const System& sys, const dynamics::PerturbationProfile& p,
                             const std::vector<Operator>& currents, const Operator& rho, double t,
                             const FdOptions& opts = {});

struct KuboOptions {
  double tail_tol = 1e-10;
  double abs_tol = 1e-11;
  double panel = 1.0;
};

Conductivity conductivity_kubo(const System& sys, const dynamics::PerturbationProfile& p,
                               const std::vector<Operator>& currents, const Operator& rho, double t,
                               const KuboOptions& opts = {});

// Closed form of the same time integral through Liouvillian resolvents;
// Constant and FourierCosine modulations only.
RealMatrix conductivity_resolvent(const System& sys, const dynamics::PerturbationProfile& p,
                                  const std::vector<Operator>& currents, const Operator& rho, double t);

// The part of sigma^eps(t) that is e^{eps t} times a t-independent quantity;
// coincides with conductivity_resolvent for t <= 0.
RealMatrix nontrivial_conductivity(const System& sys, const dynamics::PerturbationProfile& p,
                                   const std::vector<Operator>& currents, const Operator& rho, double t);

/// eps -> 0 limit -T(P_perp(Q_J) partial_k rho).  An entry whose current and
/// state derivative pair on degenerate levels (the limit then diverges like
/// 1/eps) is NaN and flagged; `entry` throws DiagonalObstruction for it.
struct AdiabaticConductivity {
  RealMatrix sigma;
  RealMatrix obstruction;  // |degenerate-level pairing|
  Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> obstructed;

  double entry(Index k, Index j) const;
};

AdiabaticConductivity adiabatic_conductivity(const System& sys, const std::vector<Operator>& currents,
                                             const Operator& rho, double tol = 1e-9);

struct StredaValue {
  cplx trace_form;    // -i T(P [partial_k P, partial_j P])
  cplx pairing_form;  // i T([P, partial_k P]* partial_j P)
  double value;
};

StredaValue kubo_streda(const ncalg::TracialAlgebra& trace, const ncalg::SpectralData& spectrum,
                        const lattice::Displacement& displacement, const Operator& P, int k, int j);
RealMatrix streda_tensor(const System& sys, const Operator& P);

struct ZeroTemperatureRow {
  double beta;  // +inf for the projection
  RealMatrix sigma;
  double state_distance;  // ||rho_beta - P||_1
};

struct ZeroTemperatureTable {
  std::vector<ZeroTemperatureRow> rows;
  RealMatrix projection_sigma;
  AdiabaticConductivity adiabatic;  // eps -> 0 of the projection column
};

ZeroTemperatureTable zero_temperature_sweep(const System& sys, const dynamics::PerturbationProfile& p,
                                            const std::vector<Operator>& currents, double fermi_energy,
                                            const std::vector<double>& betas, double t);

struct ConductivityReport {
  std::optional<Conductivity> fd;
  std::optional<Conductivity> kubo;
  std::optional<RealMatrix> resolvent;
  std::optional<AdiabaticConductivity> adiabatic;
  std::optional<RealMatrix> streda;
  double kubo_prefactor = kKuboPrefactor;
};

}  // namespace lrt::response
