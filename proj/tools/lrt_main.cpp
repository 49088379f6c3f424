// Command-line front end: run / selftest / spectrum / butterfly.

#include <iostream>

#include <CLI11.hpp>

#include "lrt/cli.hpp"
#include "lrt/error.hpp"

namespace {

int run(const std::string& path) {
  const auto config = lrt::cli::load_config(path);
  const auto report = lrt::cli::run_experiment(config);
  lrt::cli::write_outputs(config, report);
  const long errors = report.summary.at("error_rows").get<long>();
  std::cout << report.rows.size() << " rows (" << errors << " with errors) written to "
            << config.output.directory.string() << "\n";
  for (const auto& a : report.summary.at("route_agreement"))
    if (a.at("compared").get<long>() > 0)
      std::cout << "  " << a.at("routes")[0].get<std::string>() << " vs " << a.at("routes")[1].get<std::string>()
                << ": max deviation " << a.at("max_deviation").get<double>() << " (tolerance "
                << a.at("tolerance").get<double>() << ") " << (a.at("passed").get<bool>() ? "ok" : "EXCEEDED") << "\n";
  return 0;
}

int selftest(bool full, bool tamper) {
  lrt::cli::SelftestOptions opts;
  opts.level = full ? lrt::cli::Level::full : lrt::cli::Level::quick;
  if (tamper) {
    // Liouvillian with the wrong sign: the resolvent identity check must catch it.
    opts.resolvent = [](const lrt::ncalg::SpectralData& s, double eps, double kappa, const lrt::Operator& a) {
      lrt::Operator at = s.to_eigenbasis(a);
      const auto& e = s.eigenvalues();
      for (lrt::Index n = 0; n < s.dim(); ++n)
        for (lrt::Index m = 0; m < s.dim(); ++m) at(m, n) /= lrt::cplx(eps, kappa - (e(m) - e(n)));
      return s.from_eigenbasis(at);
    };
  }
  const auto results = lrt::cli::selftest(opts, &std::cout);
  long failed = 0;
  for (const auto& r : results) failed += !r.passed;
  std::cout << results.size() - failed << "/" << results.size() << " checks passed\n";
  return failed == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Linear response of magnetic lattice models"};
  app.require_subcommand(1);

  std::string config_path;
  auto* run_cmd = app.add_subcommand("run", "Run a conductivity sweep described by a YAML config");
  run_cmd->add_option("config", config_path, "experiment file")->required();

  bool full = false, tamper = false;
  auto* self_cmd = app.add_subcommand("selftest", "Check the invariant suite");
  self_cmd->add_flag("--full", full, "run every check, including the slow route-equivalence ones");
  self_cmd->add_flag("--tamper-liouvillian-sign", tamper, "flip the Liouvillian sign (mutation canary)");

  std::string spectrum_path, spectrum_out = ".";
  auto* spec_cmd = app.add_subcommand("spectrum", "Eigenvalues and density of states of the configured model");
  spec_cmd->add_option("config", spectrum_path, "experiment file")->required();
  spec_cmd->add_option("-o,--out", spectrum_out, "output directory");

  std::string butterfly_path, butterfly_out = ".";
  auto* fly_cmd = app.add_subcommand("butterfly", "Bloch spectra over rational fluxes p/q, q <= q_max");
  fly_cmd->add_option("config", butterfly_path, "experiment file")->required();
  fly_cmd->add_option("-o,--out", butterfly_out, "output directory");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*run_cmd) return run(config_path);
    if (*self_cmd) return selftest(full, tamper);
    if (*spec_cmd) {
      lrt::cli::write_spectrum(lrt::cli::load_config(spectrum_path), spectrum_out);
      return 0;
    }
    if (*fly_cmd) {
      lrt::cli::write_butterfly(lrt::cli::load_config(butterfly_path), butterfly_out);
      return 0;
    }
  } catch (const lrt::Error& e) {
    std::cerr << e.what() << "\n";
    return 2;
  }
  return 0;
}
