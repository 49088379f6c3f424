#include <chrono>
#include <cmath>
#include <map>
#include <numbers>
#include <tuple>

#include "lrt/cli.hpp"
#include "lrt/ensemble.hpp"
#include "lrt/error.hpp"
#include "lrt/response.hpp"

namespace lrt::cli {

namespace {

using Clock = std::chrono::steady_clock;

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr int kDirs = lattice::kDirections;

struct Point {
  Route route;
  double eps;
  double phi;
  double beta;
  std::uint64_t seed;
};

void push_matrix(std::vector<Row>& rows, const Point& pt, const RealMatrix& sigma, const RealMatrix* error,
                 double wall_ms) {
  for (int k = 0; k < kDirs; ++k)
    for (int j = 0; j < kDirs; ++j) {
      Row r;
      r.route = route_name(pt.route);
      r.eps = pt.eps;
      r.phi_k = pt.phi;
      r.beta = pt.beta;
      r.seed = pt.seed;
      r.k = k + 1;
      r.j = j + 1;
      r.sigma = sigma(k, j);
      r.sigma_rescaled_2pi = 2.0 * std::numbers::pi * r.sigma;
      r.est_error = error ? (*error)(k, j) : 0.0;
      r.wall_ms = wall_ms;
      rows.push_back(std::move(r));
    }
}

void push_error(std::vector<Row>& rows, const Point& pt, const std::string& code, double wall_ms) {
  const RealMatrix nan = RealMatrix::Constant(kDirs, kDirs, kNaN);
  const auto first = rows.size();
  push_matrix(rows, pt, nan, &nan, wall_ms);
  for (auto i = first; i < rows.size(); ++i) rows[i].error = code;
}

template <class F>
void guarded(std::vector<Row>& rows, const Point& pt, F&& compute) {
  const auto start = Clock::now();
  auto elapsed = [&] { return std::chrono::duration<double, std::milli>(Clock::now() - start).count(); };
  try {
    compute(elapsed);
  } catch (const Error& e) {
    push_error(rows, pt, std::string(error_name(e.code())), elapsed());
  } catch (const std::exception&) {
    push_error(rows, pt, "InternalError", elapsed());
  }
}

dynamics::PerturbationProfile profile(const ExperimentConfig& c, double eps) {
  dynamics::PerturbationProfile p;
  p.eps = eps;
  p.field.assign(kDirs, 0.0);
  p.modulation.assign(kDirs, c.modulation);
  return p;
}

double fermi_energy(const ExperimentConfig& c) {
  if (c.state.fermi_energy) return *c.state.fermi_energy;
  lattice::ModelSpec clean = c.model;
  clean.disorder_W = 0.0;
  try {
    return lattice::band_gap_center(clean, *c.state.fermi_gap);
  } catch (const Error& e) {
    throw Error(ErrorCode::ConfigError, std::string("state.fermi_gap: ") + e.what());
  }
}

// All rows of one (realization, beta) sample.
std::vector<Row> run_sample(const ExperimentConfig& c, double ef, std::uint64_t realization, double beta) {
  lattice::ModelSpec spec = c.model;
  spec.realization = realization;
  const std::uint64_t seed = spec.clean() ? spec.seed : lattice::realization_seed(spec.seed, realization);
  std::vector<Row> rows;

  const auto sys = response::System::build(lattice::build_model(spec));
  const auto currents = lattice::current_operators(sys.ops);
  const bool projection = std::isinf(beta);
  Operator rho;
  std::string state_error;
  if (projection) {
    const auto fp = lattice::fermi_projection(sys.spectrum, ef);
    if (fp.on_eigenvalue) state_error = std::string(error_name(ErrorCode::FermiOnEigenvalue));
    rho = fp.P;
  } else {
    rho = lattice::fermi_dirac_state(sys.spectrum, beta, ef);
  }

  for (Route route : c.run.routes) {
    const bool eps_free = route == Route::adiabatic || route == Route::streda;
    const std::vector<double> eps_values = eps_free ? std::vector<double>{0.0} : c.run.eps_grid;
    const std::vector<double> phi_values = route == Route::fd ? c.run.phi_grid : std::vector<double>{0.0};
    for (double eps : eps_values)
      for (double phi : phi_values) {
        const Point pt{route, eps, phi, beta, seed};
        if (!state_error.empty()) {
          push_error(rows, pt, state_error, 0.0);
          continue;
        }
        guarded(rows, pt, [&](auto elapsed) {
          switch (route) {
            case Route::fd: {
              response::FdOptions o{phi, c.run.dt, c.run.tolerances.tail, c.run.tolerances.fd};
              const auto s = response::conductivity_fd(sys, profile(c, eps), currents, rho, c.run.time, o);
              push_matrix(rows, pt, s.sigma, &s.error, elapsed());
              break;
            }
            case Route::kubo: {
              response::KuboOptions o{c.run.tolerances.tail, c.run.tolerances.quadrature, 1.0};
              const auto s = response::conductivity_kubo(sys, profile(c, eps), currents, rho, c.run.time, o);
              push_matrix(rows, pt, s.sigma, &s.error, elapsed());
              break;
            }
            case Route::resolvent: {
              const auto s = response::conductivity_resolvent(sys, profile(c, eps), currents, rho, c.run.time);
              push_matrix(rows, pt, s, nullptr, elapsed());
              break;
            }
            case Route::adiabatic: {
              const auto a = response::adiabatic_conductivity(sys, currents, rho);
              const double ms = elapsed();
              const auto first = rows.size();
              push_matrix(rows, pt, a.sigma, nullptr, ms);
              for (auto i = first; i < rows.size(); ++i)
                if (a.obstructed(rows[i].k - 1, rows[i].j - 1))
                  rows[i].error = std::string(error_name(ErrorCode::DiagonalObstruction));
              break;
            }
            case Route::streda: {
              RealMatrix s = RealMatrix::Zero(kDirs, kDirs);
              for (int k = 0; k < kDirs; ++k)
                for (int j = 0; j < kDirs; ++j)
                  s(k, j) = response::kubo_streda(sys.trace, sys.spectrum, sys.displacement(), rho, k, j).value;
              push_matrix(rows, pt, s, nullptr, elapsed());
              break;
            }
          }
        });
      }
  }
  return rows;
}

using MatchKey = std::tuple<double, double, std::uint64_t, int, int>;  // eps, beta, seed, k, j

std::multimap<MatchKey, const Row*> index_route(const std::vector<Row>& rows, const std::string& route) {
  std::multimap<MatchKey, const Row*> out;
  for (const auto& r : rows)
    if (r.route == route && r.error.empty() && std::isfinite(r.sigma))
      out.emplace(MatchKey{r.eps, r.beta, r.seed, r.k, r.j}, &r);
  return out;
}

RouteAgreement compare(const std::vector<Row>& rows, const char* first, const char* second, const char* rule,
                       double tolerance, bool relative) {
  RouteAgreement a{first, second, rule, tolerance, 0.0, 0, true};
  const auto lhs = index_route(rows, first);
  const auto rhs = index_route(rows, second);
  for (const auto& [key, l] : lhs) {
    const auto [lo, hi] = rhs.equal_range(key);
    for (auto it = lo; it != hi; ++it) {
      const double ref = it->second->sigma;
      double dev = std::abs(l->sigma - ref);
      if (relative) dev /= std::max(1.0, std::abs(ref));
      a.max_deviation = std::max(a.max_deviation, dev);
      ++a.compared;
    }
  }
  a.passed = a.max_deviation <= tolerance;
  return a;
}

nlohmann::json json_number(double v) {
  if (std::isfinite(v)) return v;
  return format_double(v);
}

nlohmann::json ensemble_summary(const std::vector<Row>& rows) {
  // route, eps, phi, beta, k, j -> samples in row order
  using Key = std::tuple<std::string, double, double, double, int, int>;
  std::map<Key, std::vector<double>> groups;
  std::vector<Key> order;
  for (const auto& r : rows) {
    if (!r.error.empty() || !std::isfinite(r.sigma)) continue;
    const Key key{r.route, r.eps, r.phi_k, r.beta, r.k, r.j};
    auto [it, inserted] = groups.try_emplace(key);
    if (inserted) order.push_back(key);
    it->second.push_back(r.sigma);
  }
  nlohmann::json out = nlohmann::json::array();
  for (const auto& key : order) {
    const auto& v = groups[key];
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= double(v.size());
    double var = 0.0;
    for (double x : v) var += (x - mean) * (x - mean);
    const double se = v.size() > 1 ? std::sqrt(var / double(v.size() - 1) / double(v.size())) : 0.0;
    out.push_back({{"route", std::get<0>(key)},
                   {"eps", std::get<1>(key)},
                   {"phi_k", std::get<2>(key)},
                   {"beta", json_number(std::get<3>(key))},
                   {"k", std::get<4>(key)},
                   {"j", std::get<5>(key)},
                   {"n", v.size()},
                   {"mean", mean},
                   {"mean_rescaled_2pi", 2.0 * std::numbers::pi * mean},
                   {"standard_error", se}});
  }
  return out;
}

nlohmann::json chern_reference(const ExperimentConfig& c, double ef) {
  if (!c.model.clean()) return {{"available", false}, {"reason", "disordered model"}};
  try {
    const auto sys = response::System::build(lattice::build_model(c.model));
    const auto fp = lattice::fermi_projection(sys.spectrum, ef);
    const Index per_band = c.model.sites() / Index(c.model.flux_q);
    if (fp.on_eigenvalue || fp.rank % per_band != 0)
      return {{"available", false}, {"reason", "Fermi energy is not in a spectral gap"}};
    const int bands = int(fp.rank / per_band);
    long chern = 0;
    if (bands > 0 && bands < c.model.flux_q) chern = lattice::chern_number(lattice::bloch_reduce(c.model), bands);
    return {{"available", true}, {"bands_below", bands}, {"chern", chern}};
  } catch (const Error& e) {
    return {{"available", false}, {"reason", std::string(error_name(e.code()))}};
  }
}

}  // namespace

Report run_experiment(const ExperimentConfig& config) {
  const auto betas = config.betas();
  const double ef = fermi_energy(config);
  const long realizations = config.model.clean() ? 1 : config.run.ensemble_n;
  const long tasks = realizations * long(betas.size());
  std::vector<std::vector<Row>> slots(static_cast<std::size_t>(tasks));
  ensemble::parallel_for(tasks, config.run.workers, [&](long i) {
    const auto r = std::uint64_t(i / long(betas.size()));
    const double beta = betas[std::size_t(i % long(betas.size()))];
    slots[std::size_t(i)] = run_sample(config, ef, r, beta);
  });

  Report report;
  for (auto& s : slots)
    for (auto& r : s) report.rows.push_back(std::move(r));

  nlohmann::json agreement = nlohmann::json::array();
  const std::vector<RouteAgreement> pairs{
      compare(report.rows, "fd", "kubo", "|fd - kubo| / max(1, |kubo|)", response::kFdKuboTolerance, true),
      compare(report.rows, "kubo", "resolvent", "|kubo - resolvent|", response::kKuboResolventTolerance, false),
      compare(report.rows, "adiabatic", "streda", "|adiabatic - streda|", response::kAdiabaticStredaTolerance, false)};
  for (const auto& a : pairs)
    agreement.push_back({{"routes", {a.first, a.second}},
                         {"rule", a.rule},
                         {"tolerance", a.tolerance},
                         {"compared", a.compared},
                         {"max_deviation", a.max_deviation},
                         {"passed", a.passed}});

  long errors = 0;
  for (const auto& r : report.rows) errors += !r.error.empty();
  report.summary = {{"schema_version", kSchemaVersion},
                    {"config", config_to_json(config)},
                    {"fermi_energy", ef},
                    {"kubo_prefactor", response::kKuboPrefactor},
                    {"rows", report.rows.size()},
                    {"error_rows", errors},
                    {"route_agreement", agreement},
                    {"ensemble", ensemble_summary(report.rows)},
                    {"chern_reference", chern_reference(config, ef)}};
  return report;
}

void write_outputs(const ExperimentConfig& config, const Report& report) {
  std::error_code ec;
  std::filesystem::create_directories(config.output.directory, ec);
  if (ec) throw Error(ErrorCode::IoError, "cannot create " + config.output.directory.string());
  if (config.output.csv) write_csv(config.output.directory / "results.csv", report.rows);
  if (config.output.json) write_json(config.output.directory / "summary.json", report.summary);
}

}  // namespace lrt::cli
