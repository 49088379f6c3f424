#include "lrt/lattice.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <string>

#include <Eigen/Eigenvalues>

#include "lrt/error.hpp"

namespace lrt::lattice {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

double to_unit(std::uint64_t x) { return double(x >> 11) * 0x1.0p-53; }

int wrap(int n, int L) {
  const int r = n % L;
  return r < 0 ? r + L : r;
}

}  // namespace

double ModelSpec::theta() const { return kTwoPi * double(flux_p) / double(flux_q); }

void validate(const ModelSpec& spec) {
  if (spec.L1 < 1 || spec.L2 < 1) throw Error(ErrorCode::InvalidArgument, "torus sides must be positive");
  if (spec.flux_q < 1) throw Error(ErrorCode::FluxIncommensurate, "flux denominator must be >= 1");
  if (std::gcd(spec.flux_p, spec.flux_q) != 1)
    throw Error(ErrorCode::FluxIncommensurate, "flux p/q must be in lowest terms");
  if (spec.L1 % spec.flux_q != 0 || spec.L2 % spec.flux_q != 0)
    throw Error(ErrorCode::FluxIncommensurate,
                "flux denominator " + std::to_string(spec.flux_q) + " must divide both torus sides");
  if (!(spec.disorder_W >= 0.0)) throw Error(ErrorCode::InvalidArgument, "disorder strength must be >= 0");
}

Index Torus::index(int n1, int n2) const { return Index(wrap(n2, L2)) * L1 + wrap(n1, L1); }

Torus torus(const ModelSpec& spec) { return Torus{spec.L1, spec.L2}; }

std::uint64_t realization_seed(std::uint64_t seed, std::uint64_t realization) {
  return splitmix64(seed ^ splitmix64(realization + 0x632be59bd9b4e019ULL));
}

std::vector<double> disorder_potential(const ModelSpec& spec, std::uint64_t realization) {
  std::vector<double> v(std::size_t(spec.sites()), 0.0);
  if (spec.clean()) return v;
  const std::uint64_t key = realization_seed(spec.seed, realization);
  for (std::size_t i = 0; i < v.size(); ++i)
    v[i] = spec.disorder_W * (to_unit(splitmix64(key ^ splitmix64(i))) - 0.5);
  return v;
}

Displacement::Displacement(const ModelSpec& spec) : mode_(spec.displacement) {
  const Torus t = torus(spec);
  const Index n = spec.sites();
  const int sides[kDirections] = {spec.L1, spec.L2};
  for (int k = 0; k < kDirections; ++k) {
    RealMatrix d(n, n);
    const int L = sides[k];
    for (Index c = 0; c < n; ++c) {
      const int xc = k == 0 ? t.n1(c) : t.n2(c);
      for (Index r = 0; r < n; ++r) {
        const int xr = k == 0 ? t.n1(r) : t.n2(r);
        int diff = xr - xc;
        if (mode_ == DisplacementMode::minimal_image) {
          diff = wrap(diff, L);
          if (2 * diff > L) diff -= L;
          // Separation exactly L/2 has no preferred sign; dropping it keeps the
          // kernel antisymmetric so derivations map Hermitian to Hermitian.
          if (2 * diff == L) diff = 0;
        }
        d(r, c) = double(diff);
      }
    }
    kernel_.push_back(std::move(d));
  }
}

Operator Displacement::commutator(int k, const Operator& a) const {
  const RealMatrix& d = kernel(k);
  if (a.rows() != d.rows() || a.cols() != d.cols()) throw Error(ErrorCode::DimMismatch, "displacement commutator");
  return (d.cast<cplx>().array() * a.array()).matrix();
}

Operator Displacement::derive(int k, const Operator& a) const { return I * commutator(k, a); }

Operator Displacement::twist(std::span<const double> phi, const Operator& a) const {
  if (phi.size() != kernel_.size()) throw Error(ErrorCode::DimMismatch, "twist: field has wrong number of components");
  if (a.rows() != dim() || a.cols() != dim()) throw Error(ErrorCode::DimMismatch, "twist");
  Operator out(a.rows(), a.cols());
  for (Index c = 0; c < a.cols(); ++c)
    for (Index r = 0; r < a.rows(); ++r) {
      double angle = 0.0;
      for (std::size_t k = 0; k < phi.size(); ++k) angle += phi[k] * kernel_[k](r, c);
      out(r, c) = std::polar(1.0, angle) * a(r, c);
    }
  return out;
}

std::vector<Operator> hopping_operators(const ModelSpec& spec) {
  validate(spec);
  const Torus t = torus(spec);
  const Index n = spec.sites();
  const double th = spec.theta();
  Operator t1 = Operator::Zero(n, n), t2 = Operator::Zero(n, n);
  for (Index i = 0; i < n; ++i) {
    const int n1 = t.n1(i), n2 = t.n2(i);
    t1(i, t.index(n1 - 1, n2)) += std::polar(1.0, th * n2);
    t2(i, t.index(n1, n2 - 1)) += std::polar(1.0, -th * n1);
  }
  return {t1, t2};
}

std::vector<Operator> magnetic_translations(const ModelSpec& spec) {
  validate(spec);
  const Torus t = torus(spec);
  const Index n = spec.sites();
  const double th = spec.theta();
  Operator s1 = Operator::Zero(n, n), s2 = Operator::Zero(n, n);
  for (Index i = 0; i < n; ++i) {
    const int n1 = t.n1(i), n2 = t.n2(i);
    s1(i, t.index(n1 + 1, n2)) += std::polar(1.0, th * n2);
    s2(i, t.index(n1, n2 - 1)) += std::polar(1.0, th * n1);
  }
  return {s1, s2};
}

std::vector<Operator> position_operators(const ModelSpec& spec) {
  const Torus t = torus(spec);
  const Index n = spec.sites();
  Operator x1 = Operator::Zero(n, n), x2 = Operator::Zero(n, n);
  for (Index i = 0; i < n; ++i) {
    x1(i, i) = double(t.n1(i));
    x2(i, i) = double(t.n2(i));
  }
  return {x1, x2};
}

LatticeOperatorSet build_model(const ModelSpec& spec) {
  validate(spec);
  const std::vector<double> v = disorder_potential(spec, spec.realization);
  return build_model(spec, v);
}

LatticeOperatorSet build_model(const ModelSpec& spec, std::span<const double> onsite) {
  validate(spec);
  if (Index(onsite.size()) != spec.sites()) throw Error(ErrorCode::DimMismatch, "on-site potential has wrong length");
  const auto t = hopping_operators(spec);
  Operator h = t[0] + t[0].adjoint() + t[1] + t[1].adjoint();
  for (Index i = 0; i < spec.sites(); ++i) h(i, i) += onsite[std::size_t(i)];
  return LatticeOperatorSet{spec,
                            std::move(h),
                            position_operators(spec),
                            magnetic_translations(spec),
                            Displacement(spec),
                            std::vector<double>(onsite.begin(), onsite.end())};
}

Operator current_operator(const LatticeOperatorSet& set, int k) {
  return -set.displacement.derive(k, set.H);
}

std::vector<Operator> current_operators(const LatticeOperatorSet& set) {
  std::vector<Operator> out;
  for (int k = 0; k < kDirections; ++k) out.push_back(current_operator(set, k));
  return out;
}

FermiProjection fermi_projection(const ncalg::SpectralData& s, double fermi_energy) {
  FermiProjection out;
  out.gap_distance = ncalg::kInfinity;
  const Index n = s.dim();
  for (Index i = 0; i < n; ++i) {
    const double e = s.eigenvalues()(i);
    out.gap_distance = std::min(out.gap_distance, std::abs(e - fermi_energy));
    if (e <= fermi_energy) ++out.rank;
  }
  out.on_eigenvalue = out.gap_distance <= s.degeneracy_tol();
  const Operator v = s.eigenvectors().leftCols(out.rank);
  out.P = v * v.adjoint();
  return out;
}

double fermi_dirac(double beta, double energy, double fermi_energy) {
  const double x = beta * (energy - fermi_energy);
  if (x > 0) {
    const double e = std::exp(-x);
    return e / (1.0 + e);
  }
  return 1.0 / (1.0 + std::exp(x));
}

Operator fermi_dirac_state(const ncalg::SpectralData& s, double beta, double fermi_energy) {
  if (!(beta > 0.0)) throw Error(ErrorCode::NonPositiveBeta, "inverse temperature must be positive");
  return ncalg::apply_function(s, [&](double e) { return fermi_dirac(beta, e, fermi_energy); });
}

BlochFamily::BlochFamily(const ModelSpec& spec) : spec_(spec), q_(spec.flux_q), phi_(2.0 * spec.theta()) {}

Operator BlochFamily::at(double K1, double k2) const {
  const Index q = q_;
  Operator h = Operator::Zero(q, q);
  for (Index j = 0; j < q; ++j) h(j, j) = 2.0 * std::cos(k2 + phi_ * double(j));
  for (Index j = 0; j + 1 < q; ++j) {
    h(j, j + 1) += 1.0;
    h(j + 1, j) += 1.0;
  }
  h(q - 1, 0) += std::polar(1.0, K1);
  h(0, q - 1) += std::polar(1.0, -K1);
  return h;
}

std::vector<double> BlochFamily::torus_K1() const {
  const long m = spec_.L1 / q_;
  std::vector<double> out;
  for (long i = 0; i < m; ++i) out.push_back(kTwoPi * double(i) / double(m));
  return out;
}

std::vector<double> BlochFamily::torus_k2() const {
  std::vector<double> out;
  for (int i = 0; i < spec_.L2; ++i) out.push_back(kTwoPi * double(i) / double(spec_.L2));
  return out;
}

std::vector<double> BlochFamily::torus_spectrum() const {
  std::vector<double> out;
  for (double K1 : torus_K1())
    for (double k2 : torus_k2()) {
      Eigen::SelfAdjointEigenSolver<Operator> es(at(K1, k2), Eigen::EigenvaluesOnly);
      for (Index i = 0; i < q_; ++i) out.push_back(es.eigenvalues()(i));
    }
  std::sort(out.begin(), out.end());
  return out;
}

std::pair<double, double> BlochFamily::gap_edges(int below_band) const {
  if (below_band < 1 || below_band >= q_)
    throw Error(ErrorCode::InvalidArgument, "gap index must lie between 1 and q-1");
  double top = -ncalg::kInfinity, bottom = ncalg::kInfinity;
  for (double K1 : torus_K1())
    for (double k2 : torus_k2()) {
      Eigen::SelfAdjointEigenSolver<Operator> es(at(K1, k2), Eigen::EigenvaluesOnly);
      top = std::max(top, es.eigenvalues()(below_band - 1));
      bottom = std::min(bottom, es.eigenvalues()(below_band));
    }
  return {top, bottom};
}

BlochFamily bloch_reduce(const ModelSpec& spec) {
  if (!spec.clean()) throw Error(ErrorCode::RequiresCleanModel, "Bloch reduction needs a disorder-free model");
  validate(spec);
  return BlochFamily(spec);
}

namespace {

long chern_on_grid(const BlochFamily& family, int bands, int grid, double gap_tol) {
  const Index q = family.q();
  std::vector<Operator> frames(std::size_t(grid) * grid);
  for (int a = 0; a < grid; ++a)
    for (int b = 0; b < grid; ++b) {
      Eigen::SelfAdjointEigenSolver<Operator> es(family.at(kTwoPi * a / grid, kTwoPi * b / grid));
      if (bands < q && es.eigenvalues()(bands) - es.eigenvalues()(bands - 1) < gap_tol)
        throw Error(ErrorCode::GapClosure, "bands touch on the momentum grid");
      frames[std::size_t(a) * grid + b] = es.eigenvectors().leftCols(bands);
    }
  auto frame = [&](int a, int b) -> const Operator& {
    return frames[std::size_t((a + grid) % grid) * grid + std::size_t((b + grid) % grid)];
  };
  auto link = [&](const Operator& u, const Operator& v) {
    const cplx d = (u.adjoint() * v).determinant();
    return d / std::abs(d);
  };
  double total = 0.0;
  for (int a = 0; a < grid; ++a)
    for (int b = 0; b < grid; ++b) {
      const cplx loop = link(frame(a, b), frame(a + 1, b)) * link(frame(a + 1, b), frame(a + 1, b + 1)) *
                        link(frame(a + 1, b + 1), frame(a, b + 1)) * link(frame(a, b + 1), frame(a, b));
      total += std::arg(loop);
    }
  return std::lround(total / kTwoPi);
}

}  // namespace

long chern_number(const BlochFamily& family, int band_count, const ChernOptions& options) {
  if (band_count < 1 || band_count > family.q())
    throw Error(ErrorCode::InvalidArgument, "band count must lie between 1 and q");
  if (options.grid < 2 || options.refinements < 0) throw Error(ErrorCode::InvalidArgument, "bad Chern grid");
  long value = chern_on_grid(family, band_count, options.grid, options.gap_tol);
  int grid = options.grid;
  for (int r = 0; r < options.refinements; ++r) {
    grid *= 2;
    const long refined = chern_on_grid(family, band_count, grid, options.gap_tol);
    if (refined != value) throw Error(ErrorCode::GapClosure, "Chern number not stable under grid refinement");
  }
  return value;
}

double band_gap_center(const ModelSpec& spec, int below_band) {
  ModelSpec clean = spec;
  clean.disorder_W = 0.0;
  const auto [top, bottom] = bloch_reduce(clean).gap_edges(below_band);
  if (!(bottom > top)) throw Error(ErrorCode::GapClosure, "requested gap is closed on this torus");
  return 0.5 * (top + bottom);
}

Operator covariant_from_kernel(const ModelSpec& spec, std::span<const KernelEntry> kernel) {
  validate(spec);
  const Torus t = torus(spec);
  const Index n = spec.sites();
  const double th = spec.theta();
  for (const auto& e : kernel)
    if (2 * std::abs(e.a1) >= spec.L1 || 2 * std::abs(e.a2) >= spec.L2)
      throw Error(ErrorCode::RangeExceedsHalfTorus, "kernel offset reaches half the torus");
  Operator a = Operator::Zero(n, n);
  for (Index i = 0; i < n; ++i) {
    const int n1 = t.n1(i), n2 = t.n2(i);
    for (const auto& e : kernel)
      a(i, t.index(n1 - e.a1, n2 - e.a2)) += e.value * std::polar(1.0, th * (double(e.a1) * n2 - double(e.a2) * n1));
  }
  return a;
}

}  // namespace lrt::lattice
