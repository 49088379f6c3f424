#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>

#include "lrt/error.hpp"
#include "lrt/lattice.hpp"
#include "support.hpp"

using namespace lrt;
using namespace lrt::testing;
using std::numbers::pi;

namespace {

std::vector<double> sorted_eigenvalues(const Operator& h) {
  const auto e = ncalg::spectral_decompose(h).eigenvalues();
  return {e.data(), e.data() + e.size()};
}

double max_deviation(std::vector<double> a, std::vector<double> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  REQUIRE(a.size() == b.size());
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

ErrorCode code_of(auto&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an lrt::Error");
  return ErrorCode::InvalidArgument;
}

}  // namespace

TEST_CASE("free band on small tori matches 2cos k1 + 2cos k2") {
  for (auto [L1, L2] : {std::pair{2, 2}, std::pair{4, 6}, std::pair{5, 3}}) {
    lattice::ModelSpec s;
    s.L1 = L1;
    s.L2 = L2;
    std::vector<double> band;
    for (int m = 0; m < L1; ++m)
      for (int n = 0; n < L2; ++n) band.push_back(2 * std::cos(2 * pi * m / L1) + 2 * std::cos(2 * pi * n / L2));
    CHECK(max_deviation(sorted_eigenvalues(lattice::build_model(s).H), band) < 1e-12);
  }
  // 2x2: the two neighbours in each direction coincide
  const auto e = sorted_eigenvalues(lattice::build_model(spec(2, 0, 1)).H);
  CHECK(e.front() == doctest::Approx(-4.0));
  CHECK(e.back() == doctest::Approx(4.0));
}

TEST_CASE("half-flux-quantum plaquettes: chiral spectrum and closed-form Bloch bands") {
  // Hopping phase 2 pi / 4 puts flux pi through every plaquette.
  const auto s = spec(8, 1, 4);
  const auto e = sorted_eigenvalues(lattice::build_model(s).H);
  for (std::size_t i = 0; i < e.size(); ++i) CHECK(std::abs(e[i] + e[e.size() - 1 - i]) < 1e-12);
  CHECK(std::abs(e.front()) <= 4.0);
  const auto family = lattice::bloch_reduce(s);
  for (double K1 : {0.3, 1.1, 4.0})
    for (double k2 : {0.2, 2.0}) {
      std::vector<double> closed;
      for (double kappa : {K1 / 4, K1 / 4 + pi / 2}) {
        const double v = 2 * std::sqrt(std::cos(kappa) * std::cos(kappa) + std::cos(k2) * std::cos(k2));
        closed.push_back(v);
        closed.push_back(-v);
      }
      CHECK(max_deviation(sorted_eigenvalues(family.at(K1, k2)), closed) < 1e-12);
    }
}

TEST_CASE("model construction") {
  SUBCASE("hermitian with unit hoppings and bounded disorder") {
    const auto set = lattice::build_model(spec(6, 1, 3, kMinimal, 0.5, 42));
    CHECK(ncalg::is_hermitian(set.H));
    Operator off = set.H;
    off.diagonal().setZero();
    for (Index i = 0; i < off.rows(); ++i)
      for (Index j = 0; j < off.cols(); ++j)
        if (std::abs(off(i, j)) > 1e-14) CHECK(std::abs(off(i, j)) == doctest::Approx(1.0));
    for (Index i = 0; i < set.H.rows(); ++i) CHECK(std::abs(set.H(i, i).real()) <= 0.25);
  }
  SUBCASE("seeded disorder is reproducible bit for bit") {
    const auto a = lattice::build_model(spec(6, 1, 3, kMinimal, 0.5, 42));
    const auto b = lattice::build_model(spec(6, 1, 3, kMinimal, 0.5, 42));
    CHECK((a.H.diagonal().array() == b.H.diagonal().array()).all());
    const auto c = lattice::build_model(spec(6, 1, 3, kMinimal, 0.5, 43));
    CHECK_FALSE((a.H.diagonal().array() == c.H.diagonal().array()).all());
  }
  SUBCASE("magnetic translations commute with H and obey the twisted composition law") {
    for (auto [p, q] : {std::pair{1L, 3L}, std::pair{2L, 5L}, std::pair{1L, 4L}}) {
      const auto s = spec(int(2 * q), p, q);
      const auto set = lattice::build_model(s);
      for (const auto& t : set.S) {
        CHECK(ncalg::is_unitary(t));
        CHECK(ncalg::operator_norm(ncalg::commutator(set.H, t)) <= 1e-11);
      }
      CHECK(ncalg::operator_norm(set.S[0] * set.S[1] - std::exp(2.0 * I * s.theta()) * set.S[1] * set.S[0]) <= 1e-11);
    }
  }
  SUBCASE("flux denominator must divide the torus sides") {
    CHECK(code_of([] { lattice::build_model(spec(12, 1, 5)); }) == ErrorCode::FluxIncommensurate);
  }
}

TEST_CASE("positions and displacement kernels") {
  const auto s = spec(8, 0, 1);
  const auto t = lattice::torus(s);
  const auto x = lattice::position_operators(s);
  const Index site = t.index(3, 1);
  CHECK(x[0](site, site).real() == 3.0);
  CHECK(x[1](site, site).real() == 1.0);
  CHECK(max_abs(ncalg::commutator(x[0], x[1])) == 0.0);
  const lattice::Displacement d(s);
  CHECK(std::abs(d.kernel(0)(t.index(0, 0), t.index(7, 0))) == 1.0);
  CHECK(d.kernel(0)(t.index(0, 0), t.index(7, 0)) == -d.kernel(0)(t.index(7, 0), t.index(0, 0)));
  auto open = s;
  open.displacement = kOpen;
  CHECK(lattice::Displacement(open).kernel(0)(t.index(0, 0), t.index(7, 0)) == -7.0);
}

TEST_CASE("current operators") {
  {
    // [X1, T1] = +T1 for (T1 phi)(n) ~ phi(n - e1), hence J1 = i(T1* - T1).
    // Open positions break this on the seam bonds.
    const auto s = spec(6, 1, 3, kMinimal);
    const auto set = lattice::build_model(s);
    const auto hop = lattice::hopping_operators(s);
    CHECK(max_abs(set.displacement.commutator(0, hop[0]) - hop[0]) < 1e-12);
    CHECK(max_abs(lattice::current_operator(set, 0) - I * (hop[0].adjoint() - hop[0])) < 1e-12);
    CHECK(max_abs(lattice::current_operator(set, 1) - I * (hop[1].adjoint() - hop[1])) < 1e-12);
  }
  auto set = lattice::build_model(spec(6, 1, 3, kOpen, 1.0, 3));
  set.H = Operator(set.H.diagonal().asDiagonal());
  CHECK(max_abs(lattice::current_operator(set, 0)) == 0.0);
  random::Engine rng(5);
  set.H = random::hermitian(set.dim(), rng);
  for (int k = 0; k < 2; ++k) CHECK(ncalg::is_hermitian(lattice::current_operator(set, k), 1e-12));
}

TEST_CASE("Fermi projection and Fermi-Dirac state") {
  const auto s = spec(6, 1, 3);
  const auto set = lattice::build_model(s);
  const auto sd = ncalg::spectral_decompose(set.H);
  const auto n = set.dim();
  CHECK(lattice::fermi_projection(sd, -10.0).rank == 0);
  CHECK(max_abs(lattice::fermi_projection(sd, -10.0).P) == 0.0);
  CHECK(max_abs(lattice::fermi_projection(sd, 10.0).P - Operator::Identity(n, n)) < 1e-12);

  const double ef = lattice::band_gap_center(s, 1);
  const auto fp = lattice::fermi_projection(sd, ef);
  CHECK(ncalg::is_projection(fp.P));
  CHECK(max_abs(ncalg::commutator(set.H, fp.P)) <= 1e-11);
  CHECK(ncalg::trace(ncalg::TracialAlgebra::normalized(n), fp.P).real() == doctest::Approx(1.0 / 3.0).epsilon(1e-10));
  CHECK_FALSE(fp.on_eigenvalue);
  CHECK(lattice::fermi_projection(sd, sd.eigenvalues()(3)).on_eigenvalue);

  const double gap = fp.gap_distance * 2.0;
  const Operator rho = lattice::fermi_dirac_state(sd, 400.0 / gap, ef);
  CHECK(ncalg::schatten_norm(ncalg::TracialAlgebra::normalized(n), rho - fp.P, 1.0) <= 1e-8);
  CHECK(ncalg::operator_norm(lattice::fermi_dirac_state(sd, 2.0, 0.1)) <= 1.0);
  CHECK(max_abs(ncalg::heisenberg_evolve(sd, 2.3, rho) - rho) < 1e-12);

  const auto s2 = ncalg::spectral_decompose(diag({0.0, 1.0}));
  CHECK(max_abs(lattice::fermi_dirac_state(s2, 2.0, 0.5) -
                diag({1 / (1 + std::exp(-1.0)), 1 / (1 + std::exp(1.0))})) < 1e-15);
  CHECK(code_of([&] { lattice::fermi_dirac_state(s2, 0.0, 0.5); }) == ErrorCode::NonPositiveBeta);
}

TEST_CASE("Bloch reduction") {
  SUBCASE("flux 0: scalar band") {
    const auto f = lattice::bloch_reduce(spec(4, 0, 1));
    CHECK(f.q() == 1);
    CHECK(std::abs(f.at(0.7, 1.9)(0, 0) - cplx(2 * std::cos(0.7) + 2 * std::cos(1.9))) < 1e-14);
  }
  SUBCASE("flux 1/3 on 6x6 reproduces the dense spectrum") {
    const auto s = spec(6, 1, 3);
    CHECK(max_deviation(lattice::bloch_reduce(s).torus_spectrum(), sorted_eigenvalues(lattice::build_model(s).H)) <
          1e-9);
  }
  SUBCASE("disordered models are rejected") {
    CHECK(code_of([] { lattice::bloch_reduce(spec(6, 1, 3, kMinimal, 0.1)); }) == ErrorCode::RequiresCleanModel);
  }
}

TEST_CASE("lattice Chern numbers") {
  CHECK(lattice::chern_number(lattice::bloch_reduce(spec(2, 0, 1)), 1) == 0);
  const auto third = lattice::bloch_reduce(spec(3, 1, 3));
  CHECK(lattice::chern_number(third, 1) == 1);
  CHECK(lattice::chern_number(third, 2) == -1);
  CHECK(lattice::chern_number(third, 3) == 0);
  const auto fifth = lattice::bloch_reduce(spec(5, 2, 5));
  CHECK(lattice::chern_number(fifth, 5) == 0);
  // the two central bands touch for even q
  CHECK(code_of([] { lattice::chern_number(lattice::bloch_reduce(spec(4, 1, 4)), 2); }) == ErrorCode::GapClosure);
}

TEST_CASE("covariant operators from translation kernels") {
  const auto s = spec(6, 1, 3);
  const auto set = lattice::build_model(s);
  const std::vector<lattice::KernelEntry> delta{{0, 0, 1.0}};
  CHECK(max_abs(lattice::covariant_from_kernel(s, delta) - Operator::Identity(36, 36)) == 0.0);
  const std::vector<lattice::KernelEntry> nn{{1, 0, 1.0}, {-1, 0, 1.0}, {0, 1, 1.0}, {0, -1, 1.0}};
  CHECK(max_abs(lattice::covariant_from_kernel(s, nn) - set.H) < 1e-13);
  random::Engine rng(17);
  std::vector<lattice::KernelEntry> f;
  for (int a1 = -2; a1 <= 2; ++a1)
    for (int a2 = -2; a2 <= 2; ++a2)
      f.push_back({a1, a2, cplx(random::uniform(rng, -1, 1), random::uniform(rng, -1, 1))});
  const Operator a = lattice::covariant_from_kernel(s, f);
  for (const auto& t : set.S) CHECK(ncalg::operator_norm(ncalg::commutator(a, t)) <= 1e-11);
  const std::vector<lattice::KernelEntry> far{{3, 0, 1.0}};
  CHECK(code_of([&] { lattice::covariant_from_kernel(s, far); }) == ErrorCode::RangeExceedsHalfTorus);
}

TEST_CASE("equilibrium carries no net current") {
  const auto set = lattice::build_model(spec(6, 1, 3, kOpen, 0.8, 9));
  const auto sd = ncalg::spectral_decompose(set.H);
  const auto alg = ncalg::TracialAlgebra::normalized(set.dim());
  for (auto f : {+[](double e) { return std::exp(-e * e); }, +[](double e) { return e > 0.3 ? 1.0 : 0.0; }}) {
    const Operator fh = ncalg::apply_function(sd, f);
    for (const auto& j : lattice::current_operators(set)) CHECK(std::abs(ncalg::trace_product(alg, j, fh)) <= 1e-11);
  }
}

TEST_CASE("Sobolev norms of the gapped Fermi projection are stable in the volume") {
  double n2[2];
  int i = 0;
  for (int L : {12, 24}) {
    const auto s = spec(L, 1, 3);
    const auto sd = ncalg::spectral_decompose(lattice::build_model(s).H);
    const Operator p = lattice::fermi_projection(sd, lattice::band_gap_center(s, 1)).P;
    n2[i++] = ncalg::schatten_norm(ncalg::TracialAlgebra::normalized(s.sites()), lattice::Displacement(s).derive(1, p),
                                   2.0);
  }
  CHECK(std::isfinite(n2[0]));
  CHECK(std::abs(n2[1] - n2[0]) / n2[1] < 0.05);
}

TEST_CASE("clean spectrum is symmetric under E -> -E") {
  for (auto [p, q] : {std::pair{1L, 3L}, std::pair{2L, 5L}}) {
    const auto e = sorted_eigenvalues(lattice::build_model(spec(int(2 * q), p, q)).H);
    for (std::size_t i = 0; i < e.size(); ++i) CHECK(std::abs(e[i] + e[e.size() - 1 - i]) < 1e-12);
  }
}
