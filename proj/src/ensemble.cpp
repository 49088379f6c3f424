#include "lrt/ensemble.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <thread>

#include "lrt/error.hpp"

namespace lrt::ensemble {

DisorderRealization sample_disorder(const lattice::ModelSpec& spec, std::uint64_t realization_index) {
  lattice::validate(spec);
  DisorderRealization r;
  r.seed = lattice::realization_seed(spec.seed, realization_index);
  r.index = realization_index;
  r.W = spec.disorder_W;
  r.values = lattice::disorder_potential(spec, realization_index);
  r.spec = spec;
  r.spec.realization = realization_index;
  return r;
}

std::vector<double> shift_potential(const lattice::ModelSpec& spec, const std::vector<double>& values, int a1,
                                    int a2) {
  if (Index(values.size()) != spec.sites()) throw Error(ErrorCode::DimMismatch, "potential has wrong length");
  const auto t = lattice::torus(spec);
  std::vector<double> out(values.size());
  for (Index i = 0; i < spec.sites(); ++i) out[std::size_t(i)] = values[std::size_t(t.index(t.n1(i) + a1, t.n2(i) - a2))];
  return out;
}

namespace {

Operator power(const Operator& u, int k) {
  Operator out = Operator::Identity(u.rows(), u.cols());
  const Operator base = k >= 0 ? u : Operator(u.adjoint());
  for (int i = 0; i < std::abs(k); ++i) out = base * out;
  return out;
}

}  // namespace

double covariance_check(const lattice::ModelSpec& spec, const DisorderRealization& realization, int a1, int a2) {
  const auto original = lattice::build_model(spec, realization.values);
  const auto shifted = lattice::build_model(spec, shift_potential(spec, realization.values, a1, a2));
  const Operator s = power(original.S[0], a1) * power(original.S[1], a2);
  return ncalg::operator_norm(s * original.H * s.adjoint() - shifted.H);
}

std::vector<BoxEstimate> trace_per_volume_estimate(const lattice::ModelSpec& spec, const Operator& a,
                                                   const std::vector<BoxSize>& boxes) {
  if (a.rows() != spec.sites() || a.cols() != spec.sites())
    throw Error(ErrorCode::DimMismatch, "operator dimension differs from the torus");
  const auto t = lattice::torus(spec);
  std::vector<BoxEstimate> out;
  for (const auto& box : boxes) {
    if (box.b1 < 1 || box.b2 < 1 || box.b1 > spec.L1 || box.b2 > spec.L2)
      throw Error(ErrorCode::BoxExceedsTorus, "box must fit inside the torus");
    BoxEstimate est{box, {}, 0.0, 0.0};
    const bool full = box.b1 == spec.L1 && box.b2 == spec.L2;
    const int o1 = full ? 1 : spec.L1, o2 = full ? 1 : spec.L2;
    for (int y = 0; y < o2; ++y)
      for (int x = 0; x < o1; ++x) {
        cplx acc = 0.0;
        for (int j = 0; j < box.b2; ++j)
          for (int i = 0; i < box.b1; ++i) {
            const Index s = t.index(x + i, y + j);
            acc += a(s, s);
          }
        est.values.push_back(acc.real() / double(box.b1 * box.b2));
      }
    const auto [lo, hi] = std::minmax_element(est.values.begin(), est.values.end());
    est.spread = *hi - *lo;
    double sum = 0.0;
    for (double v : est.values) sum += v;
    est.mean = sum / double(est.values.size());
    out.push_back(std::move(est));
  }
  return out;
}

void parallel_for(long n, int workers, const std::function<void(long)>& fn) {
  const int threads = int(std::clamp<long>(workers, 1, std::max(1L, n)));
  if (threads <= 1) {
    for (long i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<long> next{0};
  std::exception_ptr failure;
  std::mutex guard;
  std::vector<std::jthread> pool;
  for (int w = 0; w < threads; ++w)
    pool.emplace_back([&] {
      for (long i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(guard);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  pool.clear();
  if (failure) std::rethrow_exception(failure);
}

EnsembleStats ensemble_average(const lattice::ModelSpec& spec, const Quantity& quantity, long n, int workers) {
  if (n <= 0) throw Error(ErrorCode::NonPositiveN, "ensemble needs at least one realization");
  EnsembleStats out;
  out.n = n;
  out.samples.assign(std::size_t(n), 0.0);
  parallel_for(n, workers, [&](long i) {
    out.samples[std::size_t(i)] = quantity(sample_disorder(spec, std::uint64_t(i)));
  });
  double sum = 0.0;
  for (double v : out.samples) sum += v;
  out.mean = sum / double(n);
  if (n == 1) {
    out.single_sample = true;
    return out;
  }
  double var = 0.0;
  for (double v : out.samples) var += (v - out.mean) * (v - out.mean);
  var /= double(n - 1);
  out.standard_error = std::sqrt(var / double(n));
  return out;
}

}  // namespace lrt::ensemble
