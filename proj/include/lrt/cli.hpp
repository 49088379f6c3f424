#pragma once

// Configuration-driven experiment runner: YAML experiment files, conductivity
// sweeps written as CSV rows plus a JSON summary, spectrum and butterfly
// datasets, and the self-test suite.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lrt/dynamics.hpp"
#include "lrt/lattice.hpp"
#include "lrt/ncalg.hpp"

namespace lrt::cli {

inline constexpr int kSchemaVersion = 1;

enum class Route { fd, kubo, resolvent, adiabatic, streda };

const char* route_name(Route r);
Route parse_route(const std::string& name);  // throws ConfigError

struct StateConfig {
  enum class Kind { fermi_projection, fermi_dirac } kind = Kind::fermi_projection;
  std::optional<double> fermi_energy;
  std::optional<int> fermi_gap;  // mid-gap above this many bands of the clean model
  double beta = 1.0;
};

struct Tolerances {
  double tail = 1e-8;        // time-axis truncation
  double quadrature = 1e-11; // Kubo integral, absolute
  double fd = 1e-4;          // Richardson consistency of the finite differences
};

struct RunConfig {
  std::vector<Route> routes{Route::streda};
  std::vector<double> eps_grid;   // defaults to perturbation.eps
  std::vector<double> phi_grid{1e-2};  // finite-difference steps of the fd route
  std::vector<double> beta_grid;  // +inf means the Fermi projection
  double time = 0.0;
  long ensemble_n = 1;
  double dt = 2e-3;
  int workers = 1;
  Tolerances tolerances;
};

struct OutputConfig {
  std::filesystem::path directory = "out";
  bool csv = true;
  bool json = true;
};

struct ExperimentConfig {
  lattice::ModelSpec model;
  double eps = 0.5;
  dynamics::Modulation modulation = dynamics::Constant{};
  StateConfig state;
  RunConfig run;
  OutputConfig output;
  int spectrum_bins = 100;
  int butterfly_q_max = 12;
  int butterfly_k_points = 4;

  // Betas actually swept (beta_grid, or the state's default).
  std::vector<double> betas() const;
};

// Throws Error(ConfigError) naming the offending key.
ExperimentConfig parse_config(const std::string& yaml_text);
ExperimentConfig load_config(const std::filesystem::path& path);
nlohmann::json config_to_json(const ExperimentConfig& c);

struct Row {
  std::string route;
  double eps = 0.0;    // 0 for the eps -> 0 routes (adiabatic, streda)
  double phi_k = 0.0;  // finite-difference step; 0 for the linear routes
  double beta = 0.0;   // +inf for the Fermi projection
  std::uint64_t seed = 0;
  int k = 1;  // field direction, 1-based
  int j = 1;  // current direction, 1-based
  double sigma = 0.0;
  double sigma_rescaled_2pi = 0.0;
  double est_error = 0.0;
  double wall_ms = 0.0;
  std::string error;  // empty, or the error code name
};

struct RouteAgreement {
  std::string first;
  std::string second;
  std::string rule;  // how the tolerance scales
  double tolerance = 0.0;
  double max_deviation = 0.0;  // in units of the rule
  long compared = 0;
  bool passed = true;
};

struct Report {
  std::vector<Row> rows;
  nlohmann::json summary;
};

Report run_experiment(const ExperimentConfig& config);

// Output files are results.csv and summary.json under config.output.directory.
void write_outputs(const ExperimentConfig& config, const Report& report);

inline constexpr const char* kCsvHeader =
    "route,eps,phi_k,beta,seed,k,j,sigma,sigma_rescaled_2pi,est_error,wall_ms,error";

// Shortest round-trip text, '.' decimal, "inf"/"-inf"/"nan".
std::string format_double(double v);
void write_csv(std::ostream& out, const std::vector<Row>& rows);
void write_csv(const std::filesystem::path& path, const std::vector<Row>& rows);
void write_json(const std::filesystem::path& path, const nlohmann::json& j);
nlohmann::json read_json(const std::filesystem::path& path);

// eigenvalues.csv (index, energy) and dos.csv (lower, upper, center, density).
void write_spectrum(const ExperimentConfig& config, const std::filesystem::path& directory);
// butterfly.csv (p, q, flux, plaquette_flux, energy) from the Bloch spectra.
void write_butterfly(const ExperimentConfig& config, const std::filesystem::path& directory);

/// Self-test: every check carries the name of the property it verifies.
enum class Level { quick, full };

using ResolventFn = std::function<Operator(const ncalg::SpectralData&, double, double, const Operator&)>;

struct SelftestOptions {
  Level level = Level::quick;
  // Resolvent under test; replaced by a tampered version in the mutation test.
  ResolventFn resolvent;
  std::uint64_t seed = 20240601;
};

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
  double seconds = 0.0;
};

std::vector<CheckResult> selftest(const SelftestOptions& options, std::ostream* log = nullptr);

// Names of the checks at each level, in execution order.
std::vector<std::string> selftest_names(Level level);

}  // namespace lrt::cli
