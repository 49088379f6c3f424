#include "lrt/dynamics.hpp"

#include <cmath>
#include <numbers>

#include <Eigen/Eigenvalues>
#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "lrt/error.hpp"

namespace lrt::dynamics {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

double bump(const CompactBump& b, double t) {
  if (t <= b.t0 || t >= b.t1) return 0.0;
  const double s = std::sin(std::numbers::pi * (t - b.t0) / (b.t1 - b.t0));
  return s * s;
}

// int_{-inf}^t s(tau) f(tau) dtau for one modulation.
double integrated_weight(double eps, const Modulation& f, double t) {
  return std::visit(
      overloaded{
          [&](const Constant&) { return t <= 0 ? std::exp(eps * t) / eps : 1.0 / eps + t; },
          [&](const FourierCosine& c) {
            // Re[e^{i phase} e^{(eps + i omega) a} / (eps + i omega)] + int_0^b cos(omega tau + phase)
            const double a = std::min(t, 0.0), b = std::max(t, 0.0);
            const cplx z(eps, c.omega);
            const double head = std::real(std::exp(cplx(eps * a, c.omega * a + c.phase)) / z);
            double tail;
            if (std::abs(c.omega) * b < 1e-8)
              tail = b * std::cos(c.phase) - 0.5 * c.omega * b * b * std::sin(c.phase);
            else
              tail = (std::sin(c.omega * b + c.phase) - std::sin(c.phase)) / c.omega;
            return head + tail;
          },
          [&](const CompactBump& b) {
            const double hi = std::min(t, b.t1);
            if (hi <= b.t0) return 0.0;
            auto g = [&](double x) { return switch_value(eps, x) * bump(b, x); };
            using GK = boost::math::quadrature::gauss_kronrod<double, 31>;
            double value = 0.0;
            if (b.t0 < 0.0) value += GK::integrate(g, b.t0, std::min(hi, 0.0), 20, 1e-14);
            if (hi > 0.0) value += GK::integrate(g, std::max(b.t0, 0.0), hi, 20, 1e-14);
            return value;
          },
      },
      f);
}

}  // namespace

PerturbationProfile PerturbationProfile::constant(double eps, std::vector<double> field) {
  PerturbationProfile p;
  p.eps = eps;
  p.modulation.assign(field.size(), Constant{});
  p.field = std::move(field);
  return p;
}

double PerturbationProfile::t_start() const {
  double start = ncalg::kInfinity;
  for (const auto& m : modulation) {
    if (const auto* b = std::get_if<CompactBump>(&m))
      start = std::min(start, b->t0);
    else
      return -ncalg::kInfinity;
  }
  return start;
}

void PerturbationProfile::validate() const {
  if (!(eps > 0.0)) throw Error(ErrorCode::NonPositiveEpsilon, "switching rate must be positive");
  if (field.size() != modulation.size())
    throw Error(ErrorCode::DimMismatch, "field and modulation must have one entry per direction");
  for (const auto& m : modulation)
    if (const auto* b = std::get_if<CompactBump>(&m); b && !(b->t1 > b->t0))
      throw Error(ErrorCode::InvalidArgument, "compact bump needs t1 > t0");
}

double switch_value(double eps, double t) { return t <= 0 ? std::exp(eps * t) : 1.0; }

double modulation_value(const Modulation& f, double t) {
  return std::visit(overloaded{
                        [](const Constant&) { return 1.0; },
                        [&](const FourierCosine& c) { return std::cos(c.omega * t + c.phase); },
                        [&](const CompactBump& b) { return bump(b, t); },
                    },
                    f);
}

std::vector<double> phi_profile(const PerturbationProfile& p, double t) {
  p.validate();
  std::vector<double> out(p.field.size(), 0.0);
  for (std::size_t k = 0; k < p.field.size(); ++k)
    if (p.field[k] != 0.0) out[k] = p.field[k] * integrated_weight(p.eps, p.modulation[k], t);
  return out;
}

std::vector<double> phi_rate(const PerturbationProfile& p, double t) {
  std::vector<double> out(p.field.size(), 0.0);
  const double s = switch_value(p.eps, t);
  for (std::size_t k = 0; k < p.field.size(); ++k) out[k] = p.field[k] * s * modulation_value(p.modulation[k], t);
  return out;
}

double truncation_time(const PerturbationProfile& p, double t, double tol, double scale) {
  p.validate();
  const double start = p.t_start();
  if (std::isfinite(start)) return std::min(start, t);
  // tail int_{-inf}^{s} e^{eps tau} dtau = e^{eps s}/eps <= tol/scale
  const double s = std::log(tol * p.eps / std::max(scale, 1e-300)) / p.eps;
  return std::min(s, t);
}

Operator gauge_unitary(const lattice::LatticeOperatorSet& set, const PerturbationProfile& p, double t) {
  const auto phi = phi_profile(p, t);
  if (phi.size() != set.X.size()) throw Error(ErrorCode::DimMismatch, "field has wrong number of components");
  ComplexVector g(set.dim());
  for (Index i = 0; i < set.dim(); ++i) {
    double angle = 0.0;
    for (std::size_t k = 0; k < phi.size(); ++k) angle += phi[k] * set.X[k](i, i).real();
    g(i) = std::polar(1.0, angle);
  }
  return g.asDiagonal();
}

Operator perturbed_hamiltonian(const lattice::LatticeOperatorSet& set, const PerturbationProfile& p, double t) {
  return set.displacement.twist(phi_profile(p, t), set.H);
}

Operator bch_additive_perturbation(const lattice::LatticeOperatorSet& set, std::span<const double> phi, int order) {
  if (order < 0) throw Error(ErrorCode::InvalidArgument, "expansion order must be >= 0");
  if (phi.size() != std::size_t(lattice::kDirections)) throw Error(ErrorCode::DimMismatch, "field size");
  // Since the ad_{X_k} commute, sum_{|kappa|=r} Phi^kappa/kappa! ad^kappa = (Phi.ad)^r / r!,
  // and the (-1)^r of the expansion cancels the (-1)^r in J_kappa.
  Operator w = Operator::Zero(set.dim(), set.dim());
  Operator term = set.H;
  for (int r = 1; r <= order; ++r) {
    Operator next = Operator::Zero(set.dim(), set.dim());
    for (int k = 0; k < lattice::kDirections; ++k)
      if (phi[std::size_t(k)] != 0.0) next += phi[std::size_t(k)] * set.displacement.derive(k, term);
    term = next / double(r);
    w += term;
  }
  return w;
}

Operator bch_additive_perturbation(const lattice::LatticeOperatorSet& set, const PerturbationProfile& p, double t,
                                   int order) {
  const auto phi = phi_profile(p, t);
  return bch_additive_perturbation(set, phi, order);
}

Stepper::Stepper(const lattice::LatticeOperatorSet& set, const PerturbationProfile& p)
    : displacement_(set.displacement), profile_(p), spectrum_(ncalg::spectral_decompose(set.H)) {
  profile_.validate();
}

const Operator& Stepper::free_step(double h) const {
  if (h != cached_h_ || cached_free_.size() == 0) {
    ComplexVector ph(spectrum_.dim());
    for (Index i = 0; i < spectrum_.dim(); ++i) ph(i) = std::exp(-I * (h * spectrum_.eigenvalues()(i)));
    cached_free_ = spectrum_.eigenvectors() * ph.asDiagonal() * spectrum_.eigenvectors().adjoint();
    cached_h_ = h;
  }
  return cached_free_;
}

void Stepper::apply(double t_mid, double h, Operator& u) const {
  const auto phi = phi_profile(profile_, t_mid);
  if (displacement_.mode() == lattice::DisplacementMode::open_positions) {
    // G(t_mid) e^{-ihH} G(t_mid)* with G diagonal; kernel(k)(i, 0) = x_i - x_0 = x_i.
    ComplexVector g(spectrum_.dim());
    for (Index i = 0; i < spectrum_.dim(); ++i) {
      double angle = 0.0;
      for (std::size_t k = 0; k < phi.size(); ++k) angle += phi[k] * displacement_.kernel(int(k))(i, 0);
      g(i) = std::polar(1.0, angle);
    }
    const Operator& u0 = free_step(h);
    Operator tmp = g.conjugate().asDiagonal() * u;
    u.noalias() = u0 * tmp;
    u = g.asDiagonal() * u;
    return;
  }
  u = step(t_mid, h) * u;
}

Operator Stepper::step(double t_mid, double h) const {
  const auto phi = phi_profile(profile_, t_mid);
  if (displacement_.mode() == lattice::DisplacementMode::open_positions) {
    Operator u = Operator::Identity(spectrum_.dim(), spectrum_.dim());
    apply(t_mid, h, u);
    return u;
  }
  const Operator hphi = displacement_.twist(phi, spectrum_.source());
  Eigen::SelfAdjointEigenSolver<Operator> es((hphi + hphi.adjoint()) / 2.0);
  ComplexVector ph(spectrum_.dim());
  for (Index i = 0; i < spectrum_.dim(); ++i) ph(i) = std::exp(-I * (h * es.eigenvalues()(i)));
  return es.eigenvectors() * ph.asDiagonal() * es.eigenvectors().adjoint();
}

TimeGrid make_grid(double t0, double t1, double dt) {
  if (!(dt > 0.0)) throw Error(ErrorCode::NonPositiveStep, "time step must be positive");
  long n = std::max(2L, long(std::ceil((t1 - t0) / dt - 1e-9)));
  if (n % 2) ++n;
  return TimeGrid{t0, t1, n};
}

namespace {

Operator propagate_forward(const Stepper& stepper, double t0, double t1, double dt, long* steps) {
  const TimeGrid grid = make_grid(t0, t1, dt);
  Operator u = Operator::Identity(0, 0);
  const double h = grid.h();
  for (long i = 0; i < grid.steps; ++i) {
    const double mid = grid.node(i) + 0.5 * h;
    if (u.size() == 0) {
      u = stepper.step(mid, h);
    } else {
      stepper.apply(mid, h, u);
    }
  }
  if (steps) *steps = grid.steps;
  return u;
}

}  // namespace

PropagatorResult propagate(const lattice::LatticeOperatorSet& set, const PerturbationProfile& p, double t0, double t1,
                           double dt, bool record_cocycle) {
  if (!(dt > 0.0)) throw Error(ErrorCode::NonPositiveStep, "time step must be positive");
  PropagatorResult out{Operator::Identity(set.dim(), set.dim()), t0, t1, dt, 0, std::nullopt};
  if (t0 == t1) {
    if (record_cocycle) out.cocycle_residual = 0.0;
    return out;
  }
  const Stepper stepper(set, p);
  const double lo = std::min(t0, t1), hi = std::max(t0, t1);
  Operator forward = propagate_forward(stepper, lo, hi, dt, &out.steps);
  if (record_cocycle) {
    // An interior point off the main grid, so the two halves use different steps.
    const double mid = lo + 0.37 * (hi - lo);
    const Operator first = propagate_forward(stepper, lo, mid, dt, nullptr);
    const Operator second = propagate_forward(stepper, mid, hi, dt, nullptr);
    out.cocycle_residual = (second * first - forward).norm() / std::sqrt(double(set.dim()));
  }
  out.U = t1 >= t0 ? std::move(forward) : Operator(forward.adjoint());
  return out;
}

double duhamel_residual(const lattice::LatticeOperatorSet& set, const PerturbationProfile& p, double t, double s,
                        double dt) {
  if (!(t > s)) throw Error(ErrorCode::InvalidArgument, "Duhamel residual needs t > s");
  const Stepper stepper(set, p);
  const ncalg::SpectralData spec = ncalg::spectral_decompose(set.H);
  const TimeGrid grid = make_grid(s, t, dt);
  const double h = grid.h();
  auto free = [&](double tau) {
    ComplexVector ph(spec.dim());
    for (Index i = 0; i < spec.dim(); ++i) ph(i) = std::exp(-I * (tau * spec.eigenvalues()(i)));
    return Operator(spec.eigenvectors() * ph.asDiagonal() * spec.eigenvectors().adjoint());
  };
  // integral of U_Phi(tau, s)* W(tau) U_0(tau - s), Simpson on the propagation grid
  Operator u = Operator::Identity(set.dim(), set.dim());
  Operator acc = Operator::Zero(set.dim(), set.dim());
  for (long i = 0; i <= grid.steps; ++i) {
    const double tau = grid.node(i);
    const double weight = (i == 0 || i == grid.steps) ? 1.0 : (i % 2 ? 4.0 : 2.0);
    const Operator w = perturbed_hamiltonian(set, p, tau) - set.H;
    acc += (weight * h / 3.0) * (u.adjoint() * w * free(tau - s));
    if (i < grid.steps) stepper.apply(tau + 0.5 * h, h, u);
  }
  const Operator residual = u - free(t - s) + I * (u * acc);
  return residual.norm() / std::sqrt(double(set.dim()));
}

}  // namespace lrt::dynamics
