#include <doctest.h>

#include <atomic>
#include <cmath>
#include <numbers>

#include "lrt/ensemble.hpp"
#include "lrt/error.hpp"
#include "lrt/response.hpp"
#include "support.hpp"

using namespace lrt;
using namespace lrt::testing;

namespace {

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

TEST_CASE("disorder sampling") {
  const auto clean = ensemble::sample_disorder(spec(6, 1, 3), 0);
  CHECK(clean.values.size() == 36);
  for (double v : clean.values) CHECK(v == 0.0);

  const auto s = spec(6, 1, 3, kMinimal, 0.8, 99);
  const auto a = ensemble::sample_disorder(s, 4), b = ensemble::sample_disorder(s, 4), c = ensemble::sample_disorder(s, 5);
  CHECK(a.values == b.values);
  CHECK(a.values != c.values);
  CHECK(a.seed == lattice::realization_seed(99, 4));
  CHECK(a.index == 4);
  for (double v : a.values) CHECK(std::abs(v) <= 0.4);
  // the model builder draws the same realization
  auto sr = s;
  sr.realization = 4;
  const auto set = lattice::build_model(sr);
  for (Index i = 0; i < set.dim(); ++i) CHECK(set.H(i, i).real() == a.values[std::size_t(i)]);
}

TEST_CASE("disorder statistics on a large torus") {
  const double W = 2.0;
  const auto big = ensemble::sample_disorder(spec(100, 0, 1, kMinimal, W, 7), 0);
  const double n = double(big.values.size());
  double m = 0.0, m2 = 0.0;
  for (double v : big.values) {
    m += v;
    m2 += v * v;
  }
  m /= n;
  const double var = m2 / n - m * m;
  CHECK(std::abs(m) <= 4.0 * W / std::sqrt(12.0 * n));
  CHECK(var == doctest::Approx(W * W / 12.0).epsilon(0.05));
}

TEST_CASE("covariance of the disordered model") {
  const auto s = spec(12, 1, 3, kMinimal, 1.0, 21);
  const auto r = ensemble::sample_disorder(s, 2);
  CHECK(ensemble::shift_potential(s, r.values, 0, 0) == r.values);
  const auto t = lattice::torus(s);
  const auto shifted = ensemble::shift_potential(s, r.values, 3, 5);
  CHECK(shifted[std::size_t(t.index(1, 7))] == r.values[std::size_t(t.index(4, 2))]);
  CHECK(shifted[std::size_t(t.index(10, 2))] == r.values[std::size_t(t.index(1, 9))]);
  CHECK(ensemble::covariance_check(s, r, 3, 5) <= 1e-11);
  CHECK(ensemble::covariance_check(s, r, -4, 1) <= 1e-11);
  CHECK(ensemble::covariance_check(spec(12, 1, 3), ensemble::sample_disorder(spec(12, 1, 3), 0), 2, 2) <= 1e-11);
}

TEST_CASE("trace per volume") {
  const auto s = spec(6, 1, 3);
  const Index n = s.sites();
  const auto id = ensemble::trace_per_volume_estimate(s, Operator::Identity(n, n), {{1, 1}, {2, 3}, {6, 6}});
  REQUIRE(id.size() == 3);
  for (const auto& e : id) {
    CHECK(e.mean == doctest::Approx(1.0));
    CHECK(e.spread < 1e-14);
  }

  Operator site = Operator::Zero(n, n);
  site(0, 0) = 1.0;
  const auto one = ensemble::trace_per_volume_estimate(s, site, {{1, 1}})[0];
  CHECK(one.values.size() == std::size_t(n));
  CHECK(one.values[0] == 1.0);
  CHECK(one.mean == doctest::Approx(1.0 / double(n)));

  const auto sys = response::System::build(lattice::build_model(s));
  const Operator P = lattice::fermi_projection(sys.spectrum, lattice::band_gap_center(s, 1)).P;
  const auto boxes = ensemble::trace_per_volume_estimate(s, P, {{3, 3}, {6, 6}});
  CHECK(boxes[0].mean == doctest::Approx(1.0 / 3.0).epsilon(1e-10));
  for (double v : boxes[1].values) CHECK(v == doctest::Approx(ncalg::trace(sys.trace, P).real()).epsilon(1e-12));

  CHECK(code_of([&] { ensemble::trace_per_volume_estimate(s, P, {{7, 1}}); }) == ErrorCode::BoxExceedsTorus);
  CHECK(code_of([&] { ensemble::trace_per_volume_estimate(s, P, {{0, 2}}); }) == ErrorCode::BoxExceedsTorus);
  CHECK(code_of([&] { ensemble::trace_per_volume_estimate(spec(4, 0, 1), P, {{1, 1}}); }) == ErrorCode::DimMismatch);
}

TEST_CASE("ensemble averages") {
  const auto s = spec(6, 1, 3, kMinimal, 0.5, 13);
  const auto constant = ensemble::ensemble_average(s, [](const ensemble::DisorderRealization&) { return 2.5; }, 8);
  CHECK(constant.mean == 2.5);
  CHECK(constant.standard_error == 0.0);
  CHECK(constant.n == 8);
  CHECK_FALSE(constant.single_sample);

  const auto single = ensemble::ensemble_average(s, [](const ensemble::DisorderRealization& r) { return r.values[0]; }, 1);
  CHECK(single.single_sample);
  CHECK(single.standard_error == 0.0);

  CHECK(code_of([&] { ensemble::ensemble_average(s, [](const ensemble::DisorderRealization&) { return 0.0; }, 0); }) ==
        ErrorCode::NonPositiveN);

  const ensemble::Quantity first_site = [](const ensemble::DisorderRealization& r) { return r.values[3]; };
  const auto serial = ensemble::ensemble_average(s, first_site, 12, 1);
  const auto threaded = ensemble::ensemble_average(s, first_site, 12, 4);
  CHECK(serial.samples == threaded.samples);
  CHECK(serial.mean == threaded.mean);

  std::atomic<long> sum{0};
  ensemble::parallel_for(100, 3, [&](long i) { sum += i; });
  CHECK(sum == 4950);
  CHECK_THROWS_AS(ensemble::parallel_for(10, 2, [](long i) {
                    if (i == 7) throw Error(ErrorCode::InvalidArgument, "boom");
                  }),
                  Error);
}

TEST_CASE("disorder-averaged Hall conductance stays quantized in the gap") {
  const auto s = spec(12, 1, 3, kMinimal, 0.3, 2024);
  const double ef = lattice::band_gap_center(spec(12, 1, 3), 1);
  const auto stats = ensemble::ensemble_average(
      s,
      [ef](const ensemble::DisorderRealization& r) {
        const auto sys = response::System::build(lattice::build_model(r.spec, r.values));
        const auto fp = lattice::fermi_projection(sys.spectrum, ef);
        return response::streda_tensor(sys, fp.P)(0, 1);
      },
      20, 2);
  CHECK(2 * std::numbers::pi * stats.mean == doctest::Approx(1.0).epsilon(0.02));
  CHECK(stats.standard_error < 1e-3);
}
