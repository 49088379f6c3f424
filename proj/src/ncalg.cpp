#include "lrt/ncalg.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include "lrt/error.hpp"
#include "lrt/random.hpp"

namespace lrt {

std::string_view error_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::NotHermitian: return "NotHermitian";
    case ErrorCode::DimMismatch: return "DimMismatch";
    case ErrorCode::InvalidP: return "InvalidP";
    case ErrorCode::NonPositiveEpsilon: return "NonPositiveEpsilon";
    case ErrorCode::FluxIncommensurate: return "FluxIncommensurate";
    case ErrorCode::RequiresCleanModel: return "RequiresCleanModel";
    case ErrorCode::GapClosure: return "GapClosure";
    case ErrorCode::RangeExceedsHalfTorus: return "RangeExceedsHalfTorus";
    case ErrorCode::NonPositiveBeta: return "NonPositiveBeta";
    case ErrorCode::FermiOnEigenvalue: return "FermiOnEigenvalue";
    case ErrorCode::NonPositiveStep: return "NonPositiveStep";
    case ErrorCode::NotEquilibrium: return "NotEquilibrium";
    case ErrorCode::StepTooLarge: return "StepTooLarge";
    case ErrorCode::UnsupportedModulation: return "UnsupportedModulation";
    case ErrorCode::DiagonalObstruction: return "DiagonalObstruction";
    case ErrorCode::NotSpectralProjection: return "NotSpectralProjection";
    case ErrorCode::BoxExceedsTorus: return "BoxExceedsTorus";
    case ErrorCode::NonPositiveN: return "NonPositiveN";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

namespace random {

Operator ginibre(Index n, Engine& rng) {
  std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(2.0));
  Operator a(n, n);
  for (Index j = 0; j < n; ++j)
    for (Index i = 0; i < n; ++i) a(i, j) = cplx(normal(rng), normal(rng));
  return a;
}

Operator hermitian(Index n, Engine& rng) {
  const Operator g = ginibre(n, rng);
  return (g + g.adjoint()) / 2.0;
}

Operator unitary(Index n, Engine& rng) {
  const Operator g = ginibre(n, rng);
  Eigen::HouseholderQR<Operator> qr(g);
  Operator q = qr.householderQ();
  const Operator r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (Index j = 0; j < n; ++j) {
    const cplx d = r(j, j);
    const double ad = std::abs(d);
    if (ad > 0) q.col(j) *= d / ad;
  }
  return q;
}

Operator projection(Index n, Index rank, Engine& rng) {
  const Operator u = unitary(n, rng);
  const Operator v = u.leftCols(rank);
  return v * v.adjoint();
}

double uniform(Engine& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

}  // namespace random

namespace ncalg {

bool is_hermitian(const Operator& a, double tol) {
  if (a.rows() != a.cols()) return false;
  const double scale = std::max(1.0, a.cwiseAbs().maxCoeff());
  return (a - a.adjoint()).cwiseAbs().maxCoeff() <= tol * scale;
}

bool is_unitary(const Operator& a, double tol) {
  if (a.rows() != a.cols()) return false;
  const Operator id = Operator::Identity(a.rows(), a.cols());
  return (a.adjoint() * a - id).cwiseAbs().maxCoeff() <= tol;
}

bool is_projection(const Operator& a, double tol) {
  if (!is_hermitian(a, tol)) return false;
  return (a * a - a).cwiseAbs().maxCoeff() <= tol;
}

double operator_norm(const Operator& a) {
  if (a.size() == 0) return 0.0;
  Eigen::BDCSVD<Operator> svd(a);
  return svd.singularValues()(0);
}

void require_hermitian(const Operator& a, const char* what) {
  if (a.rows() != a.cols())
    throw Error(ErrorCode::DimMismatch, std::string(what) + " is not square");
  if (!is_hermitian(a)) throw Error(ErrorCode::NotHermitian, what);
}

void require_same_dim(const Operator& a, const Operator& b, const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw Error(ErrorCode::DimMismatch, what);
}

SpectralData::SpectralData(Operator source, RealVector eigenvalues, Operator eigenvectors)
    : source_(std::move(source)), eigenvalues_(std::move(eigenvalues)), eigenvectors_(std::move(eigenvectors)) {}

Operator SpectralData::to_eigenbasis(const Operator& a) const {
  return eigenvectors_.adjoint() * a * eigenvectors_;
}

Operator SpectralData::from_eigenbasis(const Operator& a) const {
  return eigenvectors_ * a * eigenvectors_.adjoint();
}

Operator SpectralData::reconstruct() const {
  return eigenvectors_ * eigenvalues_.cast<cplx>().asDiagonal() * eigenvectors_.adjoint();
}

RealMatrix SpectralData::bohr_frequencies() const {
  const Index n = dim();
  RealMatrix w(n, n);
  for (Index j = 0; j < n; ++j)
    for (Index i = 0; i < n; ++i) w(i, j) = eigenvalues_(i) - eigenvalues_(j);
  return w;
}

double SpectralData::degeneracy_tol() const {
  const double radius = dim() ? eigenvalues_.cwiseAbs().maxCoeff() : 0.0;
  return 1e-9 * std::max(1.0, radius);
}

SpectralData spectral_decompose(const Operator& h) {
  require_hermitian(h, "spectral_decompose: operator");
  // Symmetrize to wipe rounding-level anti-Hermitian parts before the solver.
  const Operator hs = (h + h.adjoint()) / 2.0;
  Eigen::SelfAdjointEigenSolver<Operator> solver(hs);
  return SpectralData(h, solver.eigenvalues(), solver.eigenvectors());
}

namespace {

// [begin, end) ranges of eigenvalue clusters of an ascending spectrum.
std::vector<std::pair<Index, Index>> clusters(const RealVector& e, double tol) {
  std::vector<std::pair<Index, Index>> out;
  Index start = 0;
  for (Index i = 1; i <= e.size(); ++i) {
    if (i == e.size() || e(i) - e(i - 1) > tol) {
      out.emplace_back(start, i);
      start = i;
    }
  }
  return out;
}

}  // namespace

SpectralData rerandomize_clusters(const SpectralData& s, std::uint64_t seed, double tol) {
  if (tol < 0) tol = s.degeneracy_tol();
  random::Engine rng(seed);
  Operator v = s.eigenvectors();
  for (const auto& [b, e] : clusters(s.eigenvalues(), tol)) {
    const Index m = e - b;
    if (m < 2) continue;
    const Operator block = v.middleCols(b, m) * random::unitary(m, rng);
    v.middleCols(b, m) = block;
  }
  return SpectralData(s.source(), s.eigenvalues(), std::move(v));
}

Operator apply_function(const SpectralData& s, const std::function<double(double)>& f) {
  ComplexVector fe(s.dim());
  for (Index i = 0; i < s.dim(); ++i) fe(i) = f(s.eigenvalues()(i));
  return s.eigenvectors() * fe.asDiagonal() * s.eigenvectors().adjoint();
}

TracialAlgebra TracialAlgebra::normalized(Index dim) {
  if (dim <= 0) throw Error(ErrorCode::DimMismatch, "trace on an empty space");
  return TracialAlgebra(TraceMode::normalized, RealVector::Constant(dim, 1.0 / double(dim)));
}

TracialAlgebra TracialAlgebra::site(Index dim, const std::vector<Index>& cell) {
  if (dim <= 0 || cell.empty()) throw Error(ErrorCode::DimMismatch, "site trace needs a non-empty cell");
  RealVector w = RealVector::Zero(dim);
  for (Index i : cell) {
    if (i < 0 || i >= dim) throw Error(ErrorCode::DimMismatch, "site trace cell index out of range");
    w(i) += 1.0 / double(cell.size());
  }
  return TracialAlgebra(TraceMode::site, std::move(w));
}

cplx trace(const TracialAlgebra& alg, const Operator& a) {
  if (a.rows() != alg.dim() || a.cols() != alg.dim())
    throw Error(ErrorCode::DimMismatch, "trace: operator dimension differs from the algebra");
  return (alg.weights().cast<cplx>().array() * a.diagonal().array()).sum();
}

cplx trace_product(const TracialAlgebra& alg, const Operator& a, const Operator& b) {
  require_same_dim(a, b, "trace_product");
  if (a.rows() != alg.dim()) throw Error(ErrorCode::DimMismatch, "trace_product: dimension differs from the algebra");
  // (AB)_ii = sum_k A_ik B_ki
  const ComplexVector diag = (a.array() * b.transpose().array()).rowwise().sum();
  return (alg.weights().cast<cplx>().array() * diag.array()).sum();
}

double schatten_norm(const TracialAlgebra& alg, const Operator& a, double p) {
  if (!(p >= 1.0)) throw Error(ErrorCode::InvalidP, "Schatten exponent must satisfy p >= 1");
  if (a.rows() != alg.dim() || a.cols() != alg.dim())
    throw Error(ErrorCode::DimMismatch, "schatten_norm: operator dimension differs from the algebra");
  if (std::isinf(p)) return operator_norm(a);
  if (alg.mode() == TraceMode::normalized) {
    Eigen::BDCSVD<Operator> svd(a);
    const RealVector& sv = svd.singularValues();
    double acc = 0.0;
    for (Index i = 0; i < sv.size(); ++i) acc += std::pow(sv(i), p);
    return std::pow(acc / double(alg.dim()), 1.0 / p);
  }
  // |A|^p = V diag(s^p) V* from the SVD A = U diag(s) V*
  Eigen::BDCSVD<Operator> svd(a, Eigen::ComputeThinV);
  const RealVector& sv = svd.singularValues();
  const Operator& v = svd.matrixV();
  double acc = 0.0;
  for (Index i = 0; i < alg.dim(); ++i) {
    const double w = alg.weights()(i);
    if (w == 0.0) continue;
    double diag = 0.0;
    for (Index k = 0; k < sv.size(); ++k) diag += std::pow(sv(k), p) * std::norm(v(i, k));
    acc += w * diag;
  }
  return std::pow(acc, 1.0 / p);
}

Operator commutator(const Operator& a, const Operator& b) {
  require_same_dim(a, b, "commutator");
  return a * b - b * a;
}

Operator anticommutator(const Operator& a, const Operator& b) {
  require_same_dim(a, b, "anticommutator");
  return a * b + b * a;
}

Operator derivation(const Operator& x, const Operator& a) {
  require_hermitian(x, "derivation generator");
  return I * commutator(x, a);
}

namespace {

void require_match(const SpectralData& s, const Operator& a, const char* what) {
  if (a.rows() != s.dim() || a.cols() != s.dim()) throw Error(ErrorCode::DimMismatch, what);
}

}  // namespace

Operator liouvillian_apply(const SpectralData& s, const Operator& a) {
  require_match(s, a, "liouvillian_apply");
  const Operator at = s.to_eigenbasis(a);
  const RealMatrix w = s.bohr_frequencies();
  return s.from_eigenbasis((-I * w.cast<cplx>().array() * at.array()).matrix());
}

Operator liouvillian_resolvent(const SpectralData& s, double eps, double kappa, const Operator& a) {
  if (!(eps > 0.0)) throw Error(ErrorCode::NonPositiveEpsilon, "resolvent needs eps > 0");
  require_match(s, a, "liouvillian_resolvent");
  Operator at = s.to_eigenbasis(a);
  const auto& e = s.eigenvalues();
  for (Index n = 0; n < s.dim(); ++n)
    for (Index m = 0; m < s.dim(); ++m) at(m, n) /= cplx(eps, kappa + e(m) - e(n));
  return s.from_eigenbasis(at);
}

Operator heisenberg_evolve(const SpectralData& s, double t, const Operator& a) {
  require_match(s, a, "heisenberg_evolve");
  ComplexVector ph(s.dim());
  for (Index i = 0; i < s.dim(); ++i) ph(i) = std::exp(-I * (t * s.eigenvalues()(i)));
  const Operator at = s.to_eigenbasis(a);
  return s.from_eigenbasis(ph.asDiagonal() * at * ph.conjugate().asDiagonal());
}

Pinching pinching_projector(const SpectralData& s, const Operator& a, double tol) {
  require_match(s, a, "pinching_projector");
  if (tol < 0) tol = s.degeneracy_tol();
  const Operator at = s.to_eigenbasis(a);
  Operator kernel = Operator::Zero(s.dim(), s.dim());
  for (const auto& [b, e] : clusters(s.eigenvalues(), tol))
    kernel.block(b, b, e - b, e - b) = at.block(b, b, e - b, e - b);
  Pinching out;
  out.kernel_part = s.from_eigenbasis(kernel);
  out.complement_part = a - out.kernel_part;
  return out;
}

}  // namespace ncalg
}  // namespace lrt
