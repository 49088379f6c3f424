#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <ostream>

#include "lrt/cli.hpp"
#include "lrt/error.hpp"

namespace lrt::cli {

namespace {

std::ofstream open_for_writing(const std::filesystem::path& path) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  return out;
}

void finish(std::ofstream& out, const std::filesystem::path& path) {
  out.flush();
  if (!out) throw Error(ErrorCode::IoError, "write failed for " + path.string());
}

}  // namespace

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

void write_csv(std::ostream& out, const std::vector<Row>& rows) {
  out << kCsvHeader << '\n';
  for (const auto& r : rows) {
    out << r.route << ',' << format_double(r.eps) << ',' << format_double(r.phi_k) << ',' << format_double(r.beta)
        << ',' << r.seed << ',' << r.k << ',' << r.j << ',' << format_double(r.sigma) << ','
        << format_double(r.sigma_rescaled_2pi) << ',' << format_double(r.est_error) << ','
        << format_double(r.wall_ms) << ',' << r.error << '\n';
  }
}

void write_csv(const std::filesystem::path& path, const std::vector<Row>& rows) {
  auto out = open_for_writing(path);
  write_csv(out, rows);
  finish(out, path);
}

void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
  auto out = open_for_writing(path);
  out << j.dump(2) << '\n';
  finish(out, path);
}

nlohmann::json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::IoError, path.string() + ": " + e.what());
  }
}

void write_spectrum(const ExperimentConfig& config, const std::filesystem::path& directory) {
  const auto ops = lattice::build_model(config.model);
  const auto s = ncalg::spectral_decompose(ops.H);
  const auto& e = s.eigenvalues();

  auto ev = open_for_writing(directory / "eigenvalues.csv");
  ev << "index,energy\n";
  for (Index i = 0; i < e.size(); ++i) ev << i << ',' << format_double(e(i)) << '\n';
  finish(ev, directory / "eigenvalues.csv");

  // Histogram normalized to unit integral.
  const int bins = config.spectrum_bins;
  double lo = e.minCoeff(), hi = e.maxCoeff();
  if (hi - lo < 1e-12) {
    lo -= 0.5;
    hi += 0.5;
  }
  const double width = (hi - lo) / bins;
  std::vector<long> counts(std::size_t(bins), 0);
  for (Index i = 0; i < e.size(); ++i)
    ++counts[std::size_t(std::clamp(int((e(i) - lo) / width), 0, bins - 1))];
  auto dos = open_for_writing(directory / "dos.csv");
  dos << "lower,upper,center,density\n";
  for (int b = 0; b < bins; ++b) {
    const double a = lo + b * width;
    dos << format_double(a) << ',' << format_double(a + width) << ',' << format_double(a + 0.5 * width) << ','
        << format_double(double(counts[std::size_t(b)]) / (double(e.size()) * width)) << '\n';
  }
  finish(dos, directory / "dos.csv");
}

void write_butterfly(const ExperimentConfig& config, const std::filesystem::path& directory) {
  auto out = open_for_writing(directory / "butterfly.csv");
  // flux is p/q (hopping phase 2 pi p/q); plaquette_flux is in units of 2 pi.
  out << "p,q,flux,plaquette_flux,energy\n";
  const int kp = config.butterfly_k_points;
  for (long q = 1; q <= config.butterfly_q_max; ++q)
    for (long p = 0; p < q; ++p) {
      if (std::gcd(p, q) != 1) continue;
      lattice::ModelSpec spec;
      spec.L1 = int(q) * kp;
      spec.L2 = int(q) * kp;
      spec.flux_p = p;
      spec.flux_q = q;
      const auto family = lattice::bloch_reduce(spec);
      auto energies = family.torus_spectrum();
      std::sort(energies.begin(), energies.end());
      const double flux = double(p) / double(q);
      const double plaquette = std::fmod(2.0 * flux, 1.0);
      for (double en : energies)
        out << p << ',' << q << ',' << format_double(flux) << ',' << format_double(plaquette) << ','
            << format_double(en) << '\n';
    }
  finish(out, directory / "butterfly.csv");
}

}  // namespace lrt::cli
