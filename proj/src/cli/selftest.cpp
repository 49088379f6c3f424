#include <chrono>
#include <cmath>
#include <numbers>
#include <ostream>
#include <sstream>

#include "lrt/cli.hpp"
#include "lrt/ensemble.hpp"
#include "lrt/error.hpp"
#include "lrt/quadrature.hpp"
#include "lrt/random.hpp"
#include "lrt/response.hpp"

namespace lrt::cli {

namespace {

using ncalg::TracialAlgebra;
using random::Engine;

struct Outcome {
  bool passed = true;
  std::ostringstream detail;

  void le(const char* label, double value, double bound) { record(label, value, bound, value <= bound, " <= "); }
  void ge(const char* label, double value, double bound) { record(label, value, bound, value >= bound, " >= "); }

 private:
  // NaN compares false and therefore fails.
  void record(const char* label, double value, double bound, bool ok, const char* relation) {
    passed = passed && ok;
    detail << label << '=' << format_double(value);
    if (!ok) detail << " violates" << relation << format_double(bound);
    detail << "; ";
  }
};

struct Context {
  const SelftestOptions& opts;
  bool full;
  int trials(int quick, int full_count) const { return full ? full_count : quick; }
  Engine rng(std::uint64_t salt) const { return Engine(opts.seed ^ (salt * 0x9E3779B97F4A7C15ULL)); }
};

using CheckFn = void (*)(const Context&, Outcome&);

struct Check {
  const char* name;
  bool quick;
  CheckFn run;
};

double l2(const TracialAlgebra& alg, const Operator& a) { return ncalg::schatten_norm(alg, a, 2.0); }

lattice::ModelSpec make_spec(int L, long p, long q, lattice::DisplacementMode mode, double W = 0.0,
                             std::uint64_t seed = 7) {
  lattice::ModelSpec s;
  s.L1 = s.L2 = L;
  s.flux_p = p;
  s.flux_q = q;
  s.disorder_W = W;
  s.seed = seed;
  s.displacement = mode;
  return s;
}

constexpr auto kOpen = lattice::DisplacementMode::open_positions;
constexpr auto kMinimal = lattice::DisplacementMode::minimal_image;

// 8x8 flux 1/4 open-positions model with a Fermi-Dirac state.
struct Desk {
  response::System sys;
  std::vector<Operator> currents;
  Operator rho;
};

Desk desk(int L = 8) {
  auto sys = response::System::build(lattice::build_model(make_spec(L, 1, 4, kOpen)));
  auto currents = lattice::current_operators(sys.ops);
  Operator rho = lattice::fermi_dirac_state(sys.spectrum, 2.0, -1.0);
  return {std::move(sys), std::move(currents), std::move(rho)};
}

// ---- ncalg ----

void holder_duality(const Context& c, Outcome& o) {
  auto rng = c.rng(1);
  const auto alg = TracialAlgebra::normalized(6);
  const std::pair<double, double> pairs[] = {{1.0, ncalg::kInfinity}, {2.0, 2.0}, {3.0, 1.5}};
  double worst = -1e300, worst_trace = -1e300;
  for (int t = 0; t < c.trials(20, 200); ++t) {
    const Operator a = random::ginibre(6, rng), b = random::ginibre(6, rng);
    const double ab1 = ncalg::schatten_norm(alg, a * b, 1.0);
    worst_trace = std::max(worst_trace, std::abs(ncalg::trace(alg, a * b)) - ab1);
    for (auto [p, q] : pairs)
      worst = std::max(worst, ab1 - ncalg::schatten_norm(alg, a, p) * ncalg::schatten_norm(alg, b, q));
  }
  o.le("max(|T(AB)|-|AB|_1)", worst_trace, 1e-10);
  o.le("max(|AB|_1-|A|_p|B|_q)", worst, 1e-10);
}

void interpolation(const Context& c, Outcome& o) {
  auto rng = c.rng(2);
  const auto alg = TracialAlgebra::normalized(6);
  const std::pair<double, double> pairs[] = {{1.0, 3.0}, {2.0, 4.0}};
  double worst = -1e300;
  for (int t = 0; t < c.trials(20, 200); ++t) {
    const Operator a = random::ginibre(6, rng);
    for (auto [p, q] : pairs)
      for (double theta : {0.0, 0.25, 0.5, 1.0}) {
        const double r = p * q / (theta * p + (1.0 - theta) * q);
        const double bound = std::pow(ncalg::schatten_norm(alg, a, p), 1.0 - theta) *
                             std::pow(ncalg::schatten_norm(alg, a, q), theta);
        worst = std::max(worst, ncalg::schatten_norm(alg, a, r) - bound);
      }
  }
  o.le("max(|A|_r - bound)", worst, 1e-10);
}

void adjoint_isometry(const Context& c, Outcome& o) {
  auto rng = c.rng(3);
  const auto alg = TracialAlgebra::normalized(6);
  double worst = 0.0;
  for (int t = 0; t < c.trials(20, 200); ++t) {
    const Operator a = random::ginibre(6, rng);
    const Operator adj = a.adjoint();
    for (double p : {1.0, 2.0, 4.0, ncalg::kInfinity})
      worst = std::max(worst, std::abs(ncalg::schatten_norm(alg, adj, p) - ncalg::schatten_norm(alg, a, p)));
  }
  o.le("max||A*|_p-|A|_p|", worst, 1e-10);
}

void trace_commutator_switch(const Context& c, Outcome& o) {
  auto rng = c.rng(4);
  const auto alg = TracialAlgebra::normalized(6);
  double worst = 0.0;
  for (int t = 0; t < c.trials(20, 200); ++t) {
    const Operator a = random::ginibre(6, rng), b = random::ginibre(6, rng), d = random::ginibre(6, rng);
    worst = std::max(worst, std::abs(ncalg::trace(alg, a * ncalg::commutator(b, d)) -
                                     ncalg::trace(alg, ncalg::commutator(a, b) * d)));
  }
  o.le("max|T(A[B,C])-T([A,B]C)|", worst, 1e-10);
}

void leibniz(const Context& c, Outcome& o) {
  auto rng = c.rng(5);
  double worst = 0.0, worst_adj = 0.0;
  for (int t = 0; t < c.trials(20, 200); ++t) {
    const Operator x = random::hermitian(6, rng), a = random::ginibre(6, rng), b = random::ginibre(6, rng);
    const Operator lhs = ncalg::derivation(x, a * b);
    const Operator rhs = ncalg::derivation(x, a) * b + a * ncalg::derivation(x, b);
    worst = std::max(worst, (lhs - rhs).cwiseAbs().maxCoeff());
    worst_adj = std::max(worst_adj,
                         (ncalg::derivation(x, a.adjoint()) - ncalg::derivation(x, a).adjoint()).cwiseAbs().maxCoeff());
  }
  o.le("leibniz", worst, 1e-10);
  o.le("adjoint", worst_adj, 1e-10);
}

void integration_by_parts(const Context& c, Outcome& o) {
  auto rng = c.rng(6);
  const auto alg = TracialAlgebra::normalized(6);
  double worst = 0.0;
  for (int t = 0; t < c.trials(20, 200); ++t) {
    const Operator x = random::hermitian(6, rng), a = random::ginibre(6, rng), b = random::ginibre(6, rng);
    worst = std::max(worst, std::abs(ncalg::trace(alg, a * ncalg::derivation(x, b)) +
                                     ncalg::trace(alg, ncalg::derivation(x, a) * b)));
  }
  o.le("max|T(A dB)+T(dA B)|", worst, 1e-10);
}

void projection_offdiagonal(const Context& c, Outcome& o) {
  auto rng = c.rng(7);
  double worst = 0.0;
  for (int t = 0; t < c.trials(20, 200); ++t) {
    const Operator x = random::hermitian(6, rng);
    const Operator p = random::projection(6, 1 + t % 5, rng);
    const Operator q = Operator::Identity(6, 6) - p;
    const Operator dp = ncalg::derivation(x, p);
    worst = std::max({worst, (p * dp * p).cwiseAbs().maxCoeff(), (q * dp * q).cwiseAbs().maxCoeff()});
  }
  o.le("max|P dP P|,|Q dP Q|", worst, 1e-10);
}

void double_commutator_identity(const Context& c, Outcome& o) {
  auto rng = c.rng(8);
  double worst = 0.0;
  for (int t = 0; t < c.trials(20, 200); ++t) {
    const Operator x = random::hermitian(6, rng);
    const Operator p = random::projection(6, 1 + t % 5, rng);
    const Operator dp = ncalg::derivation(x, p);
    worst = std::max(worst, (ncalg::commutator(p, ncalg::commutator(p, dp)) - dp).cwiseAbs().maxCoeff());
  }
  o.le("max|[P,[P,dP]]-dP|", worst, 1e-10);
}

void generator_consistency(const Context& c, Outcome& o) {
  auto rng = c.rng(9);
  const auto alg = TracialAlgebra::normalized(8);
  const auto s = ncalg::spectral_decompose(random::hermitian(8, rng));
  const Operator a = random::ginibre(8, rng);
  const Operator gen = ncalg::liouvillian_apply(s, a);
  auto err = [&](double h) { return l2(alg, (ncalg::heisenberg_evolve(s, h, a) - a) / h - gen); };
  const double e3 = err(1e-3), e4 = err(1e-4);
  const double constant = e3 / 1e-3;
  o.le("err(1e-4)/(C*1e-4)", e4 / (constant * 1e-4), 1.5);
  o.ge("err(1e-3)/err(1e-4)", e3 / e4, 5.0);
}

void resolvent_laplace_identity(const Context& c, Outcome& o) {
  auto rng = c.rng(10);
  const int n = c.full ? 6 : 4;
  double worst = 0.0;
  for (int t = 0; t < c.trials(5, 20); ++t) {
    const auto s = ncalg::spectral_decompose(random::hermitian(n, rng));
    const Operator a = random::ginibre(n, rng);
    const double eps = random::uniform(rng, 0.3, 1.0);
    const double scale = a.cwiseAbs().maxCoeff();
    const double upper = std::log(scale / (eps * 1e-13)) / eps;
    auto f = [&](double tau) -> Operator { return std::exp(-eps * tau) * ncalg::heisenberg_evolve(s, tau, a); };
    const auto q = quadrature::integrate(f, 0.0, upper, 1e-11, 0.5);
    const Operator r = c.opts.resolvent(s, eps, 0.0, a);
    worst = std::max(worst, (q.value - r).cwiseAbs().maxCoeff());
  }
  o.le("max|quadrature-resolvent|", worst, 1e-8);
}

void pinching_resolvent_limit(const Context& c, Outcome& o) {
  auto rng = c.rng(11);
  const auto alg = TracialAlgebra::normalized(8);
  const auto s = ncalg::spectral_decompose(random::hermitian(8, rng));
  const Operator a = random::ginibre(8, rng);
  const auto pinch = ncalg::pinching_projector(s, a);
  double previous = 1e300;
  bool monotone = true;
  double last = 0.0;
  for (double eps : {1e-1, 1e-2, 1e-3, 1e-4, 1e-5}) {
    // L (L - eps)^{-1} = -L (eps - L)^{-1}
    const Operator approx = -ncalg::liouvillian_apply(s, c.opts.resolvent(s, eps, 0.0, a));
    last = l2(alg, approx - pinch.complement_part);
    monotone = monotone && last < previous;
    previous = last;
  }
  o.le("distance at eps=1e-5", last, 1e-3);
  o.ge("monotone", monotone ? 1.0 : 0.0, 1.0);
}

// ---- lattice ----

void translation_commutation(const Context&, Outcome& o) {
  for (auto [p, q] : {std::pair{1L, 3L}, std::pair{1L, 4L}, std::pair{2L, 5L}}) {
    const auto set = lattice::build_model(make_spec(int(q) * 2, p, q, kMinimal));
    for (const auto& s : set.S) o.le("|[H,S]|", ncalg::operator_norm(ncalg::commutator(set.H, s)), 1e-11);
  }
}

void translation_cocycle(const Context&, Outcome& o) {
  for (auto [p, q] : {std::pair{1L, 3L}, std::pair{1L, 4L}, std::pair{2L, 5L}}) {
    const auto spec = make_spec(int(q) * 2, p, q, kMinimal);
    const auto s = lattice::magnetic_translations(spec);
    const cplx phase = std::exp(2.0 * I * spec.theta());
    o.le("|S1S2-e^{2i theta}S2S1|", ncalg::operator_norm(s[0] * s[1] - phase * s[1] * s[0]), 1e-11);
  }
}

void magnetic_covariance_disorder(const Context& c, Outcome& o) {
  const auto spec = make_spec(c.full ? 12 : 6, 1, 3, kMinimal, 1.0, 11);
  double worst = 0.0;
  for (std::uint64_t r = 0; r < 3; ++r) {
    const auto real = ensemble::sample_disorder(spec, r);
    for (auto [a1, a2] : {std::pair{0, 0}, std::pair{1, 0}, std::pair{0, 1}, std::pair{3, 5}, std::pair{-2, 4}})
      worst = std::max(worst, ensemble::covariance_check(spec, real, a1, a2));
  }
  o.le("max covariance residual", worst, 1e-11);
}

void equilibrium_no_go(const Context& c, Outcome& o) {
  auto rng = c.rng(12);
  // exact trace cyclicity needs the genuine commutator J = i[H, X]
  const auto set = lattice::build_model(make_spec(6, 1, 3, kOpen, 0.5, 3));
  const auto s = ncalg::spectral_decompose(set.H);
  const auto alg = TracialAlgebra::normalized(set.dim());
  double worst = 0.0;
  for (int t = 0; t < 5; ++t) {
    const double a = random::uniform(rng, -2, 2), b = random::uniform(rng, 0.1, 3);
    const Operator f = ncalg::apply_function(s, [&](double e) { return std::tanh(b * (e - a)) + std::sin(a * e); });
    for (const auto& j : lattice::current_operators(set))
      worst = std::max(worst, std::abs(ncalg::trace_product(alg, j, f)));
  }
  o.le("max|T(J f(H))|", worst, 1e-11);
}

void fermi_sobolev_finite(const Context&, Outcome& o) {
  double n1[2], n2[2];
  int i = 0;
  for (int L : {12, 24}) {
    const auto spec = make_spec(L, 1, 3, kMinimal);
    const auto sys = response::System::build(lattice::build_model(spec));
    const auto p = lattice::fermi_projection(sys.spectrum, lattice::band_gap_center(spec, 1)).P;
    const Operator d = sys.displacement().derive(0, p);
    n1[i] = ncalg::schatten_norm(sys.trace, d, 1.0);
    n2[i] = ncalg::schatten_norm(sys.trace, d, 2.0);
    ++i;
  }
  o.le("|dP|_1 L=12", n1[0], 1e3);
  o.le("relative change |dP|_1", std::abs(n1[1] - n1[0]) / n1[1], 0.05);
  o.le("relative change |dP|_2", std::abs(n2[1] - n2[0]) / n2[1], 0.05);
}

void chern_zero_sum(const Context&, Outcome& o) {
  // The sum over all bands is the Chern number of the full (trivial) bundle.
  for (long q : {3L, 5L}) {
    const auto family = lattice::bloch_reduce(make_spec(int(q), 1, q, kMinimal));
    o.le("|C(all bands)|", double(std::abs(lattice::chern_number(family, int(q)))), 0.0);
  }
  const auto family = lattice::bloch_reduce(make_spec(3, 1, 3, kMinimal));
  o.le("|C(lowest band)-1|", double(std::abs(lattice::chern_number(family, 1) - 1)), 0.0);
  o.le("|C(lowest two)+1|", double(std::abs(lattice::chern_number(family, 2) + 1)), 0.0);
}

void spectral_symmetry(const Context&, Outcome& o) {
  for (auto [p, q] : {std::pair{1L, 3L}, std::pair{1L, 4L}, std::pair{0L, 1L}}) {
    const auto e = ncalg::spectral_decompose(lattice::build_model(make_spec(12, p, q, kMinimal)).H).eigenvalues();
    o.le("max|E_i + E_{n-1-i}|", (e + e.reverse()).cwiseAbs().maxCoeff(), 1e-10);
  }
}

// ---- dynamics ----

void isospectrality(const Context& c, Outcome& o) {
  auto rng = c.rng(13);
  const auto set = lattice::build_model(make_spec(8, 1, 4, kOpen, 0.5, 5));
  const auto e0 = ncalg::spectral_decompose(set.H).eigenvalues();
  double worst = 0.0;
  for (int t = 0; t < c.trials(4, 12); ++t) {
    auto p = dynamics::PerturbationProfile::constant(random::uniform(rng, 0.1, 1.0),
                                                     {random::uniform(rng, -0.5, 0.5), random::uniform(rng, -0.5, 0.5)});
    const auto e = ncalg::spectral_decompose(dynamics::perturbed_hamiltonian(set, p, random::uniform(rng, -2, 2)))
                       .eigenvalues();
    worst = std::max(worst, (e - e0).cwiseAbs().maxCoeff());
  }
  o.le("max eigenvalue deviation", worst, 1e-9);
}

void gauge_group_law(const Context& c, Outcome& o) {
  auto rng = c.rng(14);
  const auto set = lattice::build_model(make_spec(6, 1, 3, kOpen));
  double worst = 0.0;
  for (int t = 0; t < 5; ++t) {
    auto p = dynamics::PerturbationProfile::constant(0.4, {random::uniform(rng, -1, 1), random::uniform(rng, -1, 1)});
    const double time = random::uniform(rng, -2, 2);
    const auto phi = dynamics::phi_profile(p, time);
    Operator g1 = Operator::Zero(set.dim(), set.dim()), g2 = g1;
    g1.diagonal() = (I * phi[0] * set.X[0].diagonal().array()).exp().matrix();
    g2.diagonal() = (I * phi[1] * set.X[1].diagonal().array()).exp().matrix();
    const Operator g = dynamics::gauge_unitary(set, p, time);
    worst = std::max({worst, (g1 * g2 - g).cwiseAbs().maxCoeff(), (g2 * g1 - g).cwiseAbs().maxCoeff()});
  }
  o.le("max|G1G2-G|,|G2G1-G|", worst, 1e-12);
}

void interaction_evolution_derivative(const Context& c, Outcome& o) {
  auto rng = c.rng(15);
  const auto set = lattice::build_model(make_spec(6, 1, 3, kOpen));
  const auto alg = TracialAlgebra::normalized(set.dim());
  const Operator a = random::ginibre(set.dim(), rng);
  auto p = dynamics::PerturbationProfile::constant(0.5, {0.3, -0.2});
  p.modulation = {dynamics::FourierCosine{1.3, 0.2}, dynamics::Constant{}};
  const double t = -0.7;
  auto gamma = [&](double s) { return set.displacement.twist(dynamics::phi_profile(p, s), a); };
  const auto rate = dynamics::phi_rate(p, t);
  const Operator g = gamma(t);
  Operator gen = Operator::Zero(set.dim(), set.dim());
  for (int k = 0; k < 2; ++k) gen += rate[std::size_t(k)] * set.displacement.derive(k, g);
  auto err = [&](double h) { return l2(alg, (gamma(t + h) - g) / h - gen); };
  const double e1 = err(1e-3), e2 = err(1e-4);
  o.ge("err(1e-3)/err(1e-4)", e1 / e2, 5.0);
  o.le("err(1e-4)", e2, 1e-3);
}

void strong_phi_continuity(const Context& c, Outcome& o) {
  auto rng = c.rng(16);
  const auto set = lattice::build_model(make_spec(6, 1, 3, kOpen));
  const auto s0 = ncalg::spectral_decompose(set.H);
  const auto alg = TracialAlgebra::normalized(set.dim());
  const Operator a = random::ginibre(set.dim(), rng);
  const double t = 1.0, s = -1.0;
  double previous = 1e300;
  for (double phi : {0.2, 0.1, 0.05, 0.025}) {
    const auto p = dynamics::PerturbationProfile::constant(0.5, {phi, 0.5 * phi});
    const auto u = dynamics::propagate(set, p, s, t, 1e-2).U;
    const double d = l2(alg, u * a * u.adjoint() - ncalg::heisenberg_evolve(s0, t - s, a));
    o.le("distance", d, previous);
    previous = d;
  }
}

void propagator_isometry(const Context& c, Outcome& o) {
  auto rng = c.rng(17);
  const auto set = lattice::build_model(make_spec(6, 1, 3, kMinimal, 0.3, 2));
  const auto alg = TracialAlgebra::normalized(set.dim());
  const Operator a = random::ginibre(set.dim(), rng);
  const auto p = dynamics::PerturbationProfile::constant(0.5, {0.1, -0.05});
  const auto u = dynamics::propagate(set, p, -2.0, 1.0, 1e-2).U;
  const Operator b = u * a * u.adjoint();
  for (double q : {1.0, 2.0, ncalg::kInfinity})
    o.le("||UAU*|_p-|A|_p|", std::abs(ncalg::schatten_norm(alg, b, q) - ncalg::schatten_norm(alg, a, q)), 1e-9);
}

void propagator_unitarity_cocycle(const Context& c, Outcome& o) {
  const int L = c.full ? 12 : 6;
  const auto set = lattice::build_model(make_spec(L, 1, 3, kOpen));
  const auto p = dynamics::PerturbationProfile::constant(0.5, {0.05, 0.02});
  const auto r = dynamics::propagate(set, p, 0.0, 1.0, 1e-3, true);
  o.le("|UU*-1|", (r.U * r.U.adjoint() - Operator::Identity(set.dim(), set.dim())).cwiseAbs().maxCoeff(), 1e-9);
  o.le("cocycle", r.cocycle_residual.value_or(1e300), 1e-6);
}

void duhamel_second_order(const Context&, Outcome& o) {
  const auto set = lattice::build_model(make_spec(8, 1, 4, kOpen));
  const auto p = dynamics::PerturbationProfile::constant(0.5, {0.05, 0.0});
  const double r1 = dynamics::duhamel_residual(set, p, 1.0, 0.0, 1e-3);
  const double r2 = dynamics::duhamel_residual(set, p, 1.0, 0.0, 5e-4);
  o.le("residual(1e-3)", r1, 1e-5);
  o.ge("residual ratio", r1 / r2, 3.0);
}

// ---- response ----

void equilibrium_product_identity(const Context& c, Outcome& o) {
  auto rng = c.rng(18);
  const auto set = lattice::build_model(make_spec(6, 1, 3, kOpen, 0.4, 9));
  const auto s = ncalg::spectral_decompose(set.H);
  const double b = random::uniform(rng, 0.5, 3.0);
  const Operator rho = ncalg::apply_function(s, [&](double e) { return std::exp(-b * e * e); });
  double worst = 0.0;
  for (int k = 0; k < 2; ++k) {
    const Operator j = lattice::current_operator(set, k);
    const Operator lhs = set.H * set.displacement.derive(k, rho);
    const Operator rhs = j * rho + set.displacement.derive(k, set.H * rho);
    worst = std::max(worst, (lhs - rhs).cwiseAbs().maxCoeff());
  }
  o.le("max|H dρ - Jρ - d(Hρ)|", worst, 1e-11);
}

void generalized_commutator_equilibrium(const Context&, Outcome& o) {
  for (double W : {0.0, 0.7}) {
    const auto sys = response::System::build(lattice::build_model(make_spec(6, 1, 3, kOpen, W)));
    const Operator rho = lattice::fermi_dirac_state(sys.spectrum, 3.0, 0.2);
    const auto p = dynamics::PerturbationProfile::constant(0.5, {0.1, -0.07});
    for (double t : {-1.0, 0.5, 2.0}) {
      const Operator ri = response::interaction_state(sys, p, rho, t);
      const Operator hp = dynamics::perturbed_hamiltonian(sys.ops, p, t);
      o.le("|[H_Phi, rho_int]|", ncalg::commutator(hp, ri).cwiseAbs().maxCoeff(), 1e-10);
    }
  }
}

void comparison_theorem(const Context&, Outcome& o) {
  const auto sys = response::System::build(lattice::build_model(make_spec(8, 0, 1, kOpen)));
  const Operator rho = lattice::fermi_dirac_state(sys.spectrum, 2.0, -1.0);
  const std::vector<double> field{0.05, 0.0};
  const auto p = dynamics::PerturbationProfile::constant(0.5, field);
  const auto pair = response::full_state_expansion(sys, p, rho, 1.0, {2e-3, 1e-8});
  const double direct_gap = ncalg::schatten_norm(
      sys.trace, response::full_state_direct(sys, p, rho, 1.0, {2e-3, 1e-8}) - pair.rho_full, 1.0);
  o.le("|rho_full - rho_int - Phi.K|_1", ncalg::schatten_norm(sys.trace, pair.residual(field), 1.0), 1e-5);
  o.le("|direct - expansion route|_1", direct_gap, 1e-8);
  o.le("||rho_full|_2-|rho|_2|",
       std::abs(ncalg::schatten_norm(sys.trace, pair.rho_full, 2.0) - ncalg::schatten_norm(sys.trace, rho, 2.0)), 1e-8);
}

void route_equivalence(const Context&, Outcome& o) {
  const auto d = desk();
  const auto p = dynamics::PerturbationProfile::constant(0.5, {0.0, 0.0});
  const auto kubo = response::conductivity_kubo(d.sys, p, d.currents, d.rho, 0.0);
  const auto res = response::conductivity_resolvent(d.sys, p, d.currents, d.rho, 0.0);
  const auto fd = response::conductivity_fd(d.sys, p, d.currents, d.rho, 0.0);
  o.le("max|kubo-resolvent|", (kubo.sigma - res).cwiseAbs().maxCoeff(), response::kKuboResolventTolerance);
  double worst = 0.0;
  for (Index k = 0; k < 2; ++k)
    for (Index j = 0; j < 2; ++j)
      worst = std::max(worst, std::abs(fd.sigma(k, j) - kubo.sigma(k, j)) / std::max(1.0, std::abs(kubo.sigma(k, j))));
  o.le("max relative |fd-kubo|", worst, response::kFdKuboTolerance);
}

void streda_antisymmetry_reality(const Context&, Outcome& o) {
  const auto spec = make_spec(12, 1, 3, kMinimal);
  const auto sys = response::System::build(lattice::build_model(spec));
  const auto P = lattice::fermi_projection(sys.spectrum, lattice::band_gap_center(spec, 1)).P;
  const auto s12 = response::kubo_streda(sys.trace, sys.spectrum, sys.displacement(), P, 0, 1);
  const auto s21 = response::kubo_streda(sys.trace, sys.spectrum, sys.displacement(), P, 1, 0);
  o.le("|s12+s21|", std::abs(s12.trace_form + s21.trace_form), 1e-10);
  o.le("|Im s12|", std::abs(s12.trace_form.imag()), 1e-10);
  o.le("|trace form - pairing form|", std::abs(s12.trace_form - s12.pairing_form), 1e-10);
}

void streda_basis_independence(const Context& c, Outcome& o) {
  const auto spec = make_spec(12, 1, 3, kMinimal);
  const auto sys = response::System::build(lattice::build_model(spec));
  const double ef = lattice::band_gap_center(spec, 1);
  const auto P = lattice::fermi_projection(sys.spectrum, ef).P;
  const double base = response::kubo_streda(sys.trace, sys.spectrum, sys.displacement(), P, 0, 1).value;
  for (std::uint64_t r = 0; r < 3; ++r) {
    const auto rotated = ncalg::rerandomize_clusters(sys.spectrum, c.opts.seed + r);
    const auto Pr = lattice::fermi_projection(rotated, ef).P;
    const double v = response::kubo_streda(sys.trace, rotated, sys.displacement(), Pr, 0, 1).value;
    o.le("|change|", std::abs(v - base), 1e-10);
  }
}

void adiabatic_remainder(const Context&, Outcome& o) {
  const auto spec = make_spec(12, 1, 3, kMinimal);
  const auto sys = response::System::build(lattice::build_model(spec));
  const auto currents = lattice::current_operators(sys.ops);
  const auto P = lattice::fermi_projection(sys.spectrum, lattice::band_gap_center(spec, 1)).P;
  double previous = 1e300;
  for (double eps : {0.2, 0.1, 0.05, 0.025}) {
    const auto p = dynamics::PerturbationProfile::constant(eps, {0.0, 0.0});
    const double delta = std::abs(response::conductivity_resolvent(sys, p, currents, P, 1.0)(0, 1) -
                                  response::nontrivial_conductivity(sys, p, currents, P, 1.0)(0, 1));
    o.le("|delta|", delta, previous);
    previous = delta;
  }
}

// ---- ensemble ----

void ergodic_consistency(const Context& c, Outcome& o) {
  // Local quantity (H^2)_{nn} = 4 + V_n^2: box average inside one realization
  // against the ensemble average at a fixed site.
  const auto spec = make_spec(12, 1, 3, kMinimal, 1.0, c.opts.seed);
  const auto set = lattice::build_model(spec);
  const auto boxes = ensemble::trace_per_volume_estimate(spec, set.H * set.H, {{3, 3}});
  const auto& v = boxes[0].values;
  double m = 0.0, var = 0.0;
  for (double x : v) m += x;
  m /= double(v.size());
  for (double x : v) var += (x - m) * (x - m);
  // overlapping placements: use the number of disjoint boxes for the error
  const double se_volume = std::sqrt(var / double(v.size() - 1) / 16.0);
  const auto stats = ensemble::ensemble_average(
      spec,
      [](const ensemble::DisorderRealization& r) {
        const auto s = lattice::build_model(r.spec, r.values);
        return (s.H * s.H)(0, 0).real();
      },
      40, 1);
  const double gap = std::abs(m - stats.mean), combined = std::hypot(se_volume, stats.standard_error);
  o.le("|volume - ensemble| / combined stderr", gap / combined, 3.0);
}

void reference_cell_independence(const Context& c, Outcome& o) {
  const auto spec = make_spec(8, 1, 4, kMinimal, 1.0, c.opts.seed + 1);
  auto density_at = [](Index site) {
    return [site](const ensemble::DisorderRealization& r) {
      const auto sys = response::System::build(lattice::build_model(r.spec, r.values),
                                               TracialAlgebra::site(r.spec.sites(), {site}));
      return ncalg::trace(sys.trace, lattice::fermi_dirac_state(sys.spectrum, 2.0, -1.0)).real();
    };
  };
  const auto a = ensemble::ensemble_average(spec, density_at(0), 30, 1);
  const auto b = ensemble::ensemble_average(spec, density_at(27), 30, 1);
  o.le("|difference| / combined stderr", std::abs(a.mean - b.mean) / std::hypot(a.standard_error, b.standard_error),
       3.0);
}

// ---- cli ----

ExperimentConfig tiny_config() {
  return parse_config(R"(
model: {L: 6, flux_p: 1, flux_q: 3, disorder_W: 0.3, seed: 5}
state: {kind: fermi_dirac, fermi_gap: 1, beta: 4}
run: {routes: [resolvent, adiabatic, streda], eps_grid: [0.5, 0.25], beta_grid: [4, .inf], ensemble_n: 3, workers: 2}
)");
}

std::string csv_without_wall_time(const std::vector<Row>& rows) {
  auto copy = rows;
  for (auto& r : copy) r.wall_ms = 0.0;
  std::ostringstream out;
  write_csv(out, copy);
  return out.str();
}

void csv_determinism(const Context&, Outcome& o) {
  const auto config = tiny_config();
  const auto a = csv_without_wall_time(run_experiment(config).rows);
  auto single = config;
  single.run.workers = 1;
  const auto b = csv_without_wall_time(run_experiment(single).rows);
  o.ge("identical", a == b ? 1.0 : 0.0, 1.0);
  o.ge("rows", double(std::count(a.begin(), a.end(), '\n')), 2.0);
}

void route_agreement_tolerances(const Context&, Outcome& o) {
  const auto report = run_experiment(tiny_config());
  double mismatch = 0.0;
  for (const auto& entry : report.summary.at("route_agreement")) {
    const auto first = entry.at("routes")[0].get<std::string>();
    const double tol = entry.at("tolerance").get<double>();
    const double declared = first == "fd"     ? response::kFdKuboTolerance
                            : first == "kubo" ? response::kKuboResolventTolerance
                                              : response::kAdiabaticStredaTolerance;
    mismatch = std::max(mismatch, std::abs(tol - declared));
  }
  o.le("|declared - reported tolerance|", mismatch, 0.0);
  o.ge("pairs", double(report.summary.at("route_agreement").size()), 3.0);
}

const std::vector<Check>& registry() {
  static const std::vector<Check> checks{
      {"holder_duality", true, holder_duality},
      {"interpolation", true, interpolation},
      {"adjoint_isometry", true, adjoint_isometry},
      {"trace_commutator_switch", true, trace_commutator_switch},
      {"leibniz", true, leibniz},
      {"integration_by_parts", true, integration_by_parts},
      {"projection_offdiagonal", true, projection_offdiagonal},
      {"double_commutator_identity", true, double_commutator_identity},
      {"generator_consistency", true, generator_consistency},
      {"resolvent_laplace_identity", true, resolvent_laplace_identity},
      {"pinching_resolvent_limit", true, pinching_resolvent_limit},
      {"translation_commutation", true, translation_commutation},
      {"translation_cocycle", true, translation_cocycle},
      {"magnetic_covariance_disorder", true, magnetic_covariance_disorder},
      {"equilibrium_no_go", true, equilibrium_no_go},
      {"fermi_sobolev_finite", false, fermi_sobolev_finite},
      {"chern_zero_sum", true, chern_zero_sum},
      {"spectral_symmetry", true, spectral_symmetry},
      {"isospectrality", true, isospectrality},
      {"gauge_group_law", true, gauge_group_law},
      {"interaction_evolution_derivative", true, interaction_evolution_derivative},
      {"strong_phi_continuity", true, strong_phi_continuity},
      {"propagator_isometry", true, propagator_isometry},
      {"propagator_unitarity_cocycle", true, propagator_unitarity_cocycle},
      {"duhamel_second_order", false, duhamel_second_order},
      {"equilibrium_product_identity", true, equilibrium_product_identity},
      {"generalized_commutator_equilibrium", true, generalized_commutator_equilibrium},
      {"comparison_theorem", false, comparison_theorem},
      {"route_equivalence", false, route_equivalence},
      {"streda_antisymmetry_reality", true, streda_antisymmetry_reality},
      {"streda_basis_independence", true, streda_basis_independence},
      {"adiabatic_remainder", true, adiabatic_remainder},
      {"ergodic_consistency", false, ergodic_consistency},
      {"reference_cell_independence", false, reference_cell_independence},
      {"csv_determinism", true, csv_determinism},
      {"route_agreement_tolerances", true, route_agreement_tolerances},
  };
  return checks;
}

}  // namespace

std::vector<std::string> selftest_names(Level level) {
  std::vector<std::string> out;
  for (const auto& c : registry())
    if (c.quick || level == Level::full) out.emplace_back(c.name);
  return out;
}

std::vector<CheckResult> selftest(const SelftestOptions& options, std::ostream* log) {
  SelftestOptions opts = options;
  if (!opts.resolvent) opts.resolvent = ncalg::liouvillian_resolvent;
  const Context ctx{opts, opts.level == Level::full};
  std::vector<CheckResult> out;
  for (const auto& check : registry()) {
    if (!check.quick && opts.level != Level::full) continue;
    const auto start = std::chrono::steady_clock::now();
    CheckResult r{check.name, false, "", 0.0};
    try {
      Outcome o;
      check.run(ctx, o);
      r.passed = o.passed;
      r.detail = o.detail.str();
    } catch (const std::exception& e) {
      r.passed = false;
      r.detail = std::string("threw ") + e.what();
    }
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (log)
      *log << (r.passed ? "PASS " : "FAIL ") << r.name << " (" << format_double(std::round(r.seconds * 100) / 100)
           << " s) " << r.detail << std::endl;
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace lrt::cli
