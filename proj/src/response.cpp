#include "lrt/response.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "lrt/error.hpp"
#include "lrt/quadrature.hpp"

namespace lrt::response {

using dynamics::PerturbationProfile;

System System::build(lattice::LatticeOperatorSet ops) {
  const Index n = ops.dim();
  return build(std::move(ops), ncalg::TracialAlgebra::normalized(n));
}

System System::build(lattice::LatticeOperatorSet ops, ncalg::TracialAlgebra trace) {
  if (trace.dim() != ops.dim()) throw Error(ErrorCode::DimMismatch, "trace dimension differs from the model");
  ncalg::SpectralData spectrum = ncalg::spectral_decompose(ops.H);
  return System{std::move(ops), std::move(spectrum), std::move(trace)};
}

void require_equilibrium(const System& sys, const Operator& rho, double tol) {
  ncalg::require_same_dim(sys.ops.H, rho, "state dimension differs from the model");
  const double scale = std::max(1.0, ncalg::operator_norm(sys.ops.H)) * std::max(1.0, rho.cwiseAbs().maxCoeff());
  if (ncalg::commutator(sys.ops.H, rho).cwiseAbs().maxCoeff() > tol * scale)
    throw Error(ErrorCode::NotEquilibrium, "state does not commute with the Hamiltonian");
}

Operator interaction_state(const System& sys, const PerturbationProfile& p, const Operator& rho, double t) {
  return sys.displacement().twist(dynamics::phi_profile(p, t), rho);
}

namespace {

double max_trace_norm(const System& sys, const std::vector<Operator>& ops) {
  double m = 0.0;
  for (const auto& a : ops) m = std::max(m, ncalg::schatten_norm(sys.trace, a, 1.0));
  return m;
}

std::vector<Operator> derivatives(const System& sys, const Operator& a) {
  std::vector<Operator> out;
  for (int k = 0; k < lattice::kDirections; ++k) out.push_back(sys.displacement().derive(k, a));
  return out;
}

double max_abs(std::span<const double> v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

}  // namespace

Operator EvolutionPair::residual(std::span<const double> field) const {
  Operator r = rho_full - rho_int;
  for (std::size_t k = 0; k < K.size() && k < field.size(); ++k) r -= field[k] * K[k];
  return r;
}

EvolutionPair full_state_expansion(const System& sys, const PerturbationProfile& p, const Operator& rho, double t,
                                   const TimeOptions& opts) {
  require_equilibrium(sys, rho);
  p.validate();
  const Index n = sys.dim();
  const std::vector<Operator> drho = derivatives(sys, rho);
  const double scale = max_abs(p.field) * max_trace_norm(sys, drho);
  EvolutionPair out;
  out.t = t;
  out.method = "midpoint propagation with Simpson quadrature of the first-order kernel";
  out.tail_start = dynamics::truncation_time(p, t, opts.tail_tol, std::max(scale, 1e-300));
  out.rho_int = interaction_state(sys, p, rho, t);
  out.K.assign(lattice::kDirections, Operator::Zero(n, n));
  if (!(t > out.tail_start)) {
    out.rho_full = rho;
    return out;
  }
  const dynamics::Stepper stepper(sys.ops, p);
  const dynamics::TimeGrid grid = dynamics::make_grid(out.tail_start, t, opts.dt);
  const double h = grid.h();
  out.steps = grid.steps;
  Operator u = Operator::Identity(n, n);
  std::vector<Operator> acc(lattice::kDirections, Operator::Zero(n, n));
  for (long i = 0; i <= grid.steps; ++i) {
    const double tau = grid.node(i);
    const double weight = ((i == 0 || i == grid.steps) ? 1.0 : (i % 2 ? 4.0 : 2.0)) * h / 3.0;
    const double s = dynamics::switch_value(p.eps, tau);
    const Operator rho_tau = interaction_state(sys, p, rho, tau);
    for (int k = 0; k < lattice::kDirections; ++k) {
      const double sf = s * dynamics::modulation_value(p.modulation[std::size_t(k)], tau);
      if (sf == 0.0) continue;
      const Operator d = sys.displacement().derive(k, rho_tau);
      acc[std::size_t(k)].noalias() += (weight * sf) * (u.adjoint() * (d * u));
    }
    if (i < grid.steps) stepper.apply(tau + 0.5 * h, h, u);
  }
  out.rho_full = u * rho * u.adjoint();
  for (int k = 0; k < lattice::kDirections; ++k) out.K[std::size_t(k)] = -(u * acc[std::size_t(k)] * u.adjoint());
  return out;
}

Operator full_state_direct(const System& sys, const PerturbationProfile& p, const Operator& rho, double t,
                           const TimeOptions& opts) {
  require_equilibrium(sys, rho);
  p.validate();
  const double scale = max_abs(p.field) * max_trace_norm(sys, derivatives(sys, rho));
  const double start = dynamics::truncation_time(p, t, opts.tail_tol, std::max(scale, 1e-300));
  if (!(t > start)) return rho;
  const auto prop = dynamics::propagate(sys.ops, p, start, t, opts.dt);
  return prop.U * rho * prop.U.adjoint();
}

NetCurrent net_current(const System& sys, const PerturbationProfile& p, const Operator& current, const Operator& rho,
                       double t, const TimeOptions& opts) {
  const Operator full = full_state_direct(sys, p, rho, t, opts);
  const auto phi = dynamics::phi_profile(p, t);
  const Operator j_phi = sys.displacement().twist(phi, current);
  const Operator rho_int = sys.displacement().twist(phi, rho);
  NetCurrent out;
  out.relative_form = ncalg::trace_product(sys.trace, j_phi, full - rho_int).real();
  out.difference_form =
      ncalg::trace_product(sys.trace, j_phi, full).real() - ncalg::trace_product(sys.trace, current, rho).real();
  return out;
}

Conductivity conductivity_fd(const System& sys, const PerturbationProfile& p, const std::vector<Operator>& currents,
                             const Operator& rho, double t, const FdOptions& opts) {
  require_equilibrium(sys, rho);
  p.validate();
  if (!(opts.dphi > 0.0)) throw Error(ErrorCode::NonPositiveStep, "finite-difference step must be positive");
  const Index d = lattice::kDirections;
  const Index nj = Index(currents.size());
  double jnorm = 0.0;
  for (const auto& j : currents) jnorm = std::max(jnorm, ncalg::operator_norm(j));
  const double scale = jnorm * max_trace_norm(sys, derivatives(sys, rho));

  std::vector<double> base(static_cast<std::size_t>(nj));
  for (Index j = 0; j < nj; ++j) base[std::size_t(j)] = ncalg::trace_product(sys.trace, currents[std::size_t(j)], rho).real();

  // Net currents J_j at field h e_k.
  auto response = [&](Index k, double h) {
    PerturbationProfile q = p;
    q.field.assign(std::size_t(d), 0.0);
    q.field[std::size_t(k)] = h;
    const double start = dynamics::truncation_time(q, t, opts.tail_tol, std::max(scale, 1e-300));
    Operator full = rho;
    if (t > start) {
      const auto prop = dynamics::propagate(sys.ops, q, start, t, opts.dt);
      full = prop.U * rho * prop.U.adjoint();
    }
    const auto phi = dynamics::phi_profile(q, t);
    RealVector out(nj);
    for (Index j = 0; j < nj; ++j) {
      const Operator jp = sys.displacement().twist(phi, currents[std::size_t(j)]);
      out(j) = ncalg::trace_product(sys.trace, jp, full).real() - base[std::size_t(j)];
    }
    return out;
  };

  Conductivity out{RealMatrix::Zero(d, nj), RealMatrix::Zero(d, nj)};
  for (Index k = 0; k < d; ++k) {
    const double h = opts.dphi;
    const RealVector coarse = (response(k, h) - response(k, -h)) / (2.0 * h);
    const RealVector fine = (response(k, h / 2) - response(k, -h / 2)) / h;
    const RealVector extrapolated = (4.0 * fine - coarse) / 3.0;
    if ((fine - coarse).cwiseAbs().maxCoeff() > 10.0 * opts.tolerance)
      throw Error(ErrorCode::StepTooLarge, "Richardson levels disagree; reduce the finite-difference step");
    out.sigma.row(k) = extrapolated.transpose();
    out.error.row(k) = (extrapolated - fine).cwiseAbs().transpose();
  }
  return out;
}

namespace {

// Correlation C(u) = T(J alpha_u(A)) as a merged list of Bohr frequencies:
// Re C(u) = sum_i a_i cos(u w_i) + b_i sin(u w_i), w_i >= 0.
struct Correlation {
  std::vector<double> omega;
  RealMatrix a;  // frequency x current
  RealMatrix b;
  double bound = 0.0;  // sup_u |C(u)| over currents

  RealVector at(double u) const {
    RealVector out = RealVector::Zero(a.cols());
    for (std::size_t i = 0; i < omega.size(); ++i) {
      const double c = std::cos(u * omega[i]), s = std::sin(u * omega[i]);
      out += c * a.row(Index(i)).transpose() + s * b.row(Index(i)).transpose();
    }
    return out;
  }
};

// Eigenbasis weights Omega_j = V* diag(w) J_j V so that T(J_j B) = sum_mn Omega_j(n,m) B~(m,n).
std::vector<Operator> trace_weights(const System& sys, const std::vector<Operator>& currents) {
  std::vector<Operator> out;
  const auto& v = sys.spectrum.eigenvectors();
  for (const auto& j : currents) {
    ncalg::require_same_dim(sys.ops.H, j, "current dimension differs from the model");
    out.push_back(v.adjoint() * (sys.trace.weights().cast<cplx>().asDiagonal() * j) * v);
  }
  return out;
}

Correlation correlation(const System& sys, const std::vector<Operator>& omega_j, const Operator& a_eig) {
  const Index n = sys.dim();
  const Index nj = Index(omega_j.size());
  const auto& e = sys.spectrum.eigenvalues();
  struct Term {
    double w;
    RealVector a, b;
  };
  std::vector<Term> terms;
  terms.reserve(std::size_t(n * (n + 1) / 2));
  // Pair (m, n) with (n, m): c e^{-iuw} + c' e^{iuw} has real part
  // (Re c + Re c') cos(uw) + (Im c - Im c') sin(uw).
  for (Index m = 0; m < n; ++m)
    for (Index q = m; q < n; ++q) {
      double w = e(m) - e(q);
      RealVector ta(nj), tb(nj);
      for (Index j = 0; j < nj; ++j) {
        const cplx c = omega_j[std::size_t(j)](q, m) * a_eig(m, q);
        const cplx cp = m == q ? cplx(0.0) : omega_j[std::size_t(j)](m, q) * a_eig(q, m);
        ta(j) = c.real() + cp.real();
        tb(j) = c.imag() - cp.imag();
      }
      if (w < 0) {
        w = -w;
        tb = -tb;
      }
      if (ta.cwiseAbs().maxCoeff() == 0.0 && tb.cwiseAbs().maxCoeff() == 0.0) continue;
      terms.push_back({w, std::move(ta), std::move(tb)});
    }
  std::sort(terms.begin(), terms.end(), [](const Term& x, const Term& y) { return x.w < y.w; });
  Correlation out;
  std::vector<RealVector> as, bs;
  for (auto& t : terms) {
    if (!out.omega.empty() && t.w - out.omega.back() <= 1e-13 * std::max(1.0, t.w)) {
      as.back() += t.a;
      bs.back() += t.b;
    } else {
      out.omega.push_back(t.w);
      as.push_back(t.a);
      bs.push_back(t.b);
    }
  }
  out.a.resize(Index(as.size()), nj);
  out.b.resize(Index(as.size()), nj);
  for (std::size_t i = 0; i < as.size(); ++i) {
    out.a.row(Index(i)) = as[i].transpose();
    out.b.row(Index(i)) = bs[i].transpose();
  }
  if (!as.empty())
    out.bound = (out.a.cwiseAbs().colwise().sum() + out.b.cwiseAbs().colwise().sum()).maxCoeff();
  return out;
}

}  // namespace

Conductivity conductivity_kubo(const System& sys, const PerturbationProfile& p, const std::vector<Operator>& currents,
                               const Operator& rho, double t, const KuboOptions& opts) {
  require_equilibrium(sys, rho);
  p.validate();
  const Index d = lattice::kDirections;
  const Index nj = Index(currents.size());
  const auto omega_j = trace_weights(sys, currents);
  Conductivity out{RealMatrix::Zero(d, nj), RealMatrix::Zero(d, nj)};
  for (Index k = 0; k < d; ++k) {
    const Operator a_eig = sys.spectrum.to_eigenbasis(sys.displacement().derive(int(k), rho));
    const Correlation corr = correlation(sys, omega_j, a_eig);
    if (corr.omega.empty()) continue;
    const auto& f = p.modulation[std::size_t(k)];
    // -int s(tau) f(tau) C(t - tau) dtau over (-inf, t]
    auto integrand = [&](double tau) -> RealVector {
      return -(dynamics::switch_value(p.eps, tau) * dynamics::modulation_value(f, tau)) * corr.at(t - tau);
    };
    PerturbationProfile single = p;
    single.modulation = {f};
    single.field = {1.0};
    double lo = dynamics::truncation_time(single, t, opts.tail_tol, std::max(corr.bound, 1e-300));
    double hi = t;
    if (const auto* b = std::get_if<dynamics::CompactBump>(&f)) hi = std::min(hi, b->t1);
    const double tail = std::isfinite(single.t_start()) ? 0.0 : std::exp(p.eps * lo) / p.eps * corr.bound;
    RealVector value = RealVector::Zero(nj);
    double err = tail;
    std::vector<double> cuts{lo};
    if (lo < 0.0 && hi > 0.0) cuts.push_back(0.0);
    cuts.push_back(hi);
    for (std::size_t c = 0; c + 1 < cuts.size(); ++c) {
      if (!(cuts[c + 1] > cuts[c])) continue;
      const auto r = quadrature::integrate(integrand, cuts[c], cuts[c + 1], opts.abs_tol, opts.panel);
      value += r.value;
      err += r.error;
    }
    out.sigma.row(k) = value.transpose();
    out.error.row(k).setConstant(err);
  }
  return out;
}

namespace {

// int_0^t e^{-z u} alpha_u(A) du, entrywise A_mn (1 - e^{-(z + i w) t}) / (z + i w)
Operator finite_laplace(const ncalg::SpectralData& s, cplx z, double t, const Operator& a) {
  Operator at = s.to_eigenbasis(a);
  const auto& e = s.eigenvalues();
  for (Index q = 0; q < s.dim(); ++q)
    for (Index m = 0; m < s.dim(); ++m) {
      const cplx w = z + I * (e(m) - e(q));
      const cplx factor = std::abs(w * t) < 1e-8 ? t * (1.0 - 0.5 * w * t) : (1.0 - std::exp(-w * t)) / w;
      at(m, q) *= factor;
    }
  return s.from_eigenbasis(at);
}

// (weight, kappa, phase) with f(tau) = sum weight e^{i(kappa tau + phase)}
struct Exponential {
  double weight;
  double kappa;
  double phase;
};

std::vector<Exponential> exponentials(const dynamics::Modulation& f) {
  if (std::holds_alternative<dynamics::Constant>(f)) return {{1.0, 0.0, 0.0}};
  if (const auto* c = std::get_if<dynamics::FourierCosine>(&f))
    return {{0.5, c->omega, c->phase}, {0.5, -c->omega, -c->phase}};
  throw Error(ErrorCode::UnsupportedModulation, "closed-form resolvent needs Constant or FourierCosine modulation");
}

}  // namespace

RealMatrix conductivity_resolvent(const System& sys, const PerturbationProfile& p,
                                  const std::vector<Operator>& currents, const Operator& rho, double t) {
  require_equilibrium(sys, rho);
  p.validate();
  const Index d = lattice::kDirections;
  RealMatrix out = RealMatrix::Zero(d, Index(currents.size()));
  for (Index k = 0; k < d; ++k) {
    const Operator a = sys.displacement().derive(int(k), rho);
    for (const auto& x : exponentials(p.modulation[std::size_t(k)])) {
      // Laplace transform at z = eps + i kappa of the correlation, shifted to time t.
      const Operator r = ncalg::liouvillian_resolvent(sys.spectrum, p.eps, x.kappa, a);
      Operator contribution;
      cplx coeff;
      if (t <= 0.0) {
        contribution = r;
        coeff = std::exp(cplx(p.eps * t, x.kappa * t + x.phase));
      } else {
        // history before 0 propagated to t, plus the part switched on in [0, t]
        contribution = ncalg::heisenberg_evolve(sys.spectrum, t, r) * std::exp(I * x.phase);
        contribution += finite_laplace(sys.spectrum, I * x.kappa, t, a) * std::exp(I * (x.kappa * t + x.phase));
        coeff = 1.0;
      }
      for (Index j = 0; j < Index(currents.size()); ++j)
        out(k, j) -= x.weight * (coeff * ncalg::trace_product(sys.trace, currents[std::size_t(j)], contribution)).real();
    }
  }
  return out;
}

RealMatrix nontrivial_conductivity(const System& sys, const PerturbationProfile& p,
                                   const std::vector<Operator>& currents, const Operator& rho, double t) {
  require_equilibrium(sys, rho);
  p.validate();
  const Index d = lattice::kDirections;
  RealMatrix out = RealMatrix::Zero(d, Index(currents.size()));
  for (Index k = 0; k < d; ++k) {
    const Operator a = sys.displacement().derive(int(k), rho);
    for (const auto& x : exponentials(p.modulation[std::size_t(k)])) {
      const Operator r = ncalg::liouvillian_resolvent(sys.spectrum, p.eps, x.kappa, a);
      const cplx coeff = std::exp(cplx(p.eps * t, x.kappa * t + x.phase));
      for (Index j = 0; j < Index(currents.size()); ++j)
        out(k, j) -= x.weight * (coeff * ncalg::trace_product(sys.trace, currents[std::size_t(j)], r)).real();
    }
  }
  return out;
}

double AdiabaticConductivity::entry(Index k, Index j) const {
  if (obstructed(k, j))
    throw Error(ErrorCode::DiagonalObstruction,
                "current and state derivative pair on degenerate levels; the eps -> 0 limit diverges");
  return sigma(k, j);
}

AdiabaticConductivity adiabatic_conductivity(const System& sys, const std::vector<Operator>& currents,
                                             const Operator& rho, double tol) {
  require_equilibrium(sys, rho);
  const Index d = lattice::kDirections;
  const Index n = sys.dim();
  const Index nj = Index(currents.size());
  const auto omega_j = trace_weights(sys, currents);
  const auto& e = sys.spectrum.eigenvalues();
  const double deg = std::max(tol, sys.spectrum.degeneracy_tol());
  AdiabaticConductivity out{RealMatrix::Zero(d, nj), RealMatrix::Zero(d, nj),
                            Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>::Constant(d, nj, false)};
  for (Index k = 0; k < d; ++k) {
    const Operator a = sys.spectrum.to_eigenbasis(sys.displacement().derive(int(k), rho));
    for (Index j = 0; j < nj; ++j) {
      const Operator& om = omega_j[std::size_t(j)];
      cplx regular = 0.0, obstruction = 0.0;
      double scale = 0.0;
      for (Index q = 0; q < n; ++q)
        for (Index m = 0; m < n; ++m) {
          const cplx c = om(q, m) * a(m, q);
          scale += std::abs(c);
          const double w = e(m) - e(q);
          if (std::abs(w) <= deg)
            obstruction += c;
          else
            regular += c / (I * w);
        }
      out.obstruction(k, j) = std::abs(obstruction);
      if (std::abs(obstruction) > 1e-8 * std::max(1.0, scale)) {
        out.obstructed(k, j) = true;
        out.sigma(k, j) = std::numeric_limits<double>::quiet_NaN();
      } else {
        out.sigma(k, j) = -regular.real();
      }
    }
  }
  return out;
}

StredaValue kubo_streda(const ncalg::TracialAlgebra& trace, const ncalg::SpectralData& spectrum,
                        const lattice::Displacement& displacement, const Operator& P, int k, int j) {
  if (!ncalg::is_projection(P, 1e-9)) throw Error(ErrorCode::NotSpectralProjection, "operator is not a projection");
  const Operator& h = spectrum.source();
  ncalg::require_same_dim(h, P, "projection dimension differs from the model");
  const double scale = std::max(1.0, ncalg::operator_norm(h));
  if (ncalg::commutator(h, P).cwiseAbs().maxCoeff() > 1e-10 * scale)
    throw Error(ErrorCode::NotSpectralProjection, "projection does not commute with the Hamiltonian");
  const Operator dk = displacement.derive(k, P);
  const Operator dj = displacement.derive(j, P);
  StredaValue out;
  out.trace_form = -I * ncalg::trace(trace, P * (dk * dj - dj * dk));
  out.pairing_form = I * ncalg::trace_product(trace, ncalg::commutator(P, dk).adjoint(), dj);
  out.value = out.trace_form.real();
  return out;
}

RealMatrix streda_tensor(const System& sys, const Operator& P) {
  const Index d = lattice::kDirections;
  RealMatrix out = RealMatrix::Zero(d, d);
  for (int k = 0; k < d; ++k)
    for (int j = 0; j < d; ++j)
      if (k != j) out(k, j) = kubo_streda(sys.trace, sys.spectrum, sys.displacement(), P, k, j).value;
  return out;
}

ZeroTemperatureTable zero_temperature_sweep(const System& sys, const PerturbationProfile& p,
                                            const std::vector<Operator>& currents, double fermi_energy,
                                            const std::vector<double>& betas, double t) {
  const auto proj = lattice::fermi_projection(sys.spectrum, fermi_energy);
  if (proj.on_eigenvalue) throw Error(ErrorCode::FermiOnEigenvalue, "Fermi energy coincides with an eigenvalue");
  auto sigma = [&](const Operator& rho) -> RealMatrix {
    bool closed_form = true;
    for (const auto& m : p.modulation) closed_form = closed_form && !std::holds_alternative<dynamics::CompactBump>(m);
    if (closed_form) return conductivity_resolvent(sys, p, currents, rho, t);
    return conductivity_kubo(sys, p, currents, rho, t).sigma;
  };
  ZeroTemperatureTable out;
  for (double beta : betas) {
    const Operator rho = lattice::fermi_dirac_state(sys.spectrum, beta, fermi_energy);
    out.rows.push_back({beta, sigma(rho), ncalg::schatten_norm(sys.trace, rho - proj.P, 1.0)});
  }
  out.projection_sigma = sigma(proj.P);
  out.rows.push_back({ncalg::kInfinity, out.projection_sigma, 0.0});
  out.adiabatic = adiabatic_conductivity(sys, currents, proj.P);
  return out;
}

}  // namespace lrt::response
