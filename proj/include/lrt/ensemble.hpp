#pragma once

// Disorder ensembles: seeded realizations, covariance of the finite-torus
// construction, box-averaged traces, and ensemble means.

#include <cstdint>
#include <functional>
#include <vector>

#include "lrt/lattice.hpp"

namespace lrt::ensemble {

struct DisorderRealization {
  std::uint64_t seed = 0;   // derived per-realization seed
  std::uint64_t index = 0;
  double W = 0.0;
  std::vector<double> values;
  lattice::ModelSpec spec;
};

DisorderRealization sample_disorder(const lattice::ModelSpec& spec, std::uint64_t realization_index);

// Cyclic shift tau_a of a site-indexed potential matching the magnetic
// translation S_a = S1^{a1} S2^{a2}: (tau_a v)(n) = v(n1 + a1, n2 - a2).
std::vector<double> shift_potential(const lattice::ModelSpec& spec, const std::vector<double>& values, int a1, int a2);

// || S_a H_v S_a* - H_{tau_a v} ||_op
double covariance_check(const lattice::ModelSpec& spec, const DisorderRealization& realization, int a1, int a2);

struct BoxSize {
  int b1;
  int b2;
};

struct BoxEstimate {
  BoxSize box;
  std::vector<double> values;  // one per placement (origin), row-major over origins
  double mean = 0.0;
  double spread = 0.0;         // max - min over placements
};

// (1/|box|) Tr(P_box A P_box) for every placement of every box size.
std::vector<BoxEstimate> trace_per_volume_estimate(const lattice::ModelSpec& spec, const Operator& a,
                                                   const std::vector<BoxSize>& boxes);

struct EnsembleStats {
  double mean = 0.0;
  double standard_error = 0.0;
  long n = 0;
  bool single_sample = false;  // n == 1: standard error reported as 0
  std::vector<double> samples;
};

using Quantity = std::function<double(const DisorderRealization&)>;

// Deterministic in (spec.seed, n) whatever the worker count.
EnsembleStats ensemble_average(const lattice::ModelSpec& spec, const Quantity& quantity, long n, int workers = 1);

// Runs fn(i) for i in [0, n) on up to `workers` threads; the first exception is rethrown.
void parallel_for(long n, int workers, const std::function<void(long)>& fn);

}  // namespace lrt::ensemble
