#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <yaml-cpp/yaml.h>

#include "lrt/cli.hpp"
#include "lrt/error.hpp"

namespace lrt::cli {

namespace {

[[noreturn]] void fail(const std::string& key, const std::string& why) {
  throw Error(ErrorCode::ConfigError, key + ": " + why);
}

void require_known_keys(const YAML::Node& node, const std::string& section, const std::set<std::string>& allowed) {
  if (!node.IsMap()) fail(section, "expected a table");
  for (const auto& kv : node) {
    const auto key = kv.first.as<std::string>();
    if (!allowed.contains(key)) fail(section.empty() ? key : section + "." + key, "unknown key");
  }
}

template <class T>
T scalar(const YAML::Node& node, const std::string& key) {
  try {
    return node.as<T>();
  } catch (const YAML::Exception&) {
    fail(key, "has the wrong type");
  }
}

template <class T>
void read(const YAML::Node& parent, const std::string& section, const char* name, T& out) {
  if (const auto n = parent[name]) out = scalar<T>(n, section + "." + name);
}

std::vector<double> read_grid(const YAML::Node& parent, const std::string& section, const char* name,
                              std::vector<double> fallback) {
  const auto n = parent[name];
  if (!n) return fallback;
  const std::string key = section + "." + name;
  std::vector<double> out;
  if (n.IsScalar()) {
    out.push_back(scalar<double>(n, key));
  } else if (n.IsSequence()) {
    for (const auto& v : n) out.push_back(scalar<double>(v, key));
  } else {
    fail(key, "expected a number or a list of numbers");
  }
  if (out.empty()) fail(key, "grid must not be empty");
  return out;
}

void parse_model(const YAML::Node& node, lattice::ModelSpec& m) {
  require_known_keys(node, "model", {"L", "L1", "L2", "flux_p", "flux_q", "disorder_W", "seed", "displacement"});
  if (const auto l = node["L"]) m.L1 = m.L2 = scalar<int>(l, "model.L");
  read(node, "model", "L1", m.L1);
  read(node, "model", "L2", m.L2);
  read(node, "model", "flux_p", m.flux_p);
  read(node, "model", "flux_q", m.flux_q);
  read(node, "model", "disorder_W", m.disorder_W);
  read(node, "model", "seed", m.seed);
  if (const auto d = node["displacement"]) {
    const auto mode = scalar<std::string>(d, "model.displacement");
    if (mode == "minimal_image") m.displacement = lattice::DisplacementMode::minimal_image;
    else if (mode == "open_positions") m.displacement = lattice::DisplacementMode::open_positions;
    else fail("model.displacement", "must be minimal_image or open_positions");
  }
  if (m.L1 < 1 || m.L2 < 1) fail("model.L", "torus sides must be positive");
  if (m.disorder_W < 0) fail("model.disorder_W", "must be non-negative");
  try {
    lattice::validate(m);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::FluxIncommensurate)
      fail("model.flux_q", "flux commensurability violated (flux_q must divide L1 and L2)");
    fail("model.flux_p", e.what());
  }
}

dynamics::Modulation parse_modulation(const YAML::Node& node) {
  if (node.IsScalar()) {
    const auto kind = scalar<std::string>(node, "perturbation.modulation");
    if (kind == "constant") return dynamics::Constant{};
    fail("perturbation.modulation", "a bare name is only allowed for constant");
  }
  require_known_keys(node, "perturbation.modulation", {"kind", "t0", "t1", "omega", "phase"});
  if (!node["kind"]) fail("perturbation.modulation.kind", "missing");
  const auto kind = scalar<std::string>(node["kind"], "perturbation.modulation.kind");
  const std::string s = "perturbation.modulation";
  if (kind == "constant") return dynamics::Constant{};
  if (kind == "bump") {
    dynamics::CompactBump b{0.0, 1.0};
    read(node, s, "t0", b.t0);
    read(node, s, "t1", b.t1);
    if (!(b.t0 < b.t1)) fail(s + ".t1", "bump needs t0 < t1");
    return b;
  }
  if (kind == "cosine") {
    dynamics::FourierCosine c{1.0, 0.0};
    read(node, s, "omega", c.omega);
    read(node, s, "phase", c.phase);
    return c;
  }
  fail(s + ".kind", "must be constant, bump or cosine");
}

void parse_state(const YAML::Node& node, StateConfig& st) {
  require_known_keys(node, "state", {"kind", "fermi_energy", "fermi_gap", "beta"});
  if (const auto k = node["kind"]) {
    const auto kind = scalar<std::string>(k, "state.kind");
    if (kind == "fermi_projection") st.kind = StateConfig::Kind::fermi_projection;
    else if (kind == "fermi_dirac") st.kind = StateConfig::Kind::fermi_dirac;
    else fail("state.kind", "must be fermi_projection or fermi_dirac");
  }
  if (const auto e = node["fermi_energy"]) st.fermi_energy = scalar<double>(e, "state.fermi_energy");
  if (const auto g = node["fermi_gap"]) st.fermi_gap = scalar<int>(g, "state.fermi_gap");
  read(node, "state", "beta", st.beta);
  if (st.fermi_energy && st.fermi_gap) fail("state.fermi_gap", "give either fermi_energy or fermi_gap");
  if (!st.fermi_energy && !st.fermi_gap) fail("state.fermi_energy", "missing");
  if (!(st.beta > 0)) fail("state.beta", "must be positive");
}

void parse_run(const YAML::Node& node, RunConfig& r, double eps) {
  require_known_keys(node, "run", {"routes", "eps_grid", "phi_grid", "beta_grid", "time", "ensemble_n", "dt",
                                   "workers", "tolerances"});
  if (const auto routes = node["routes"]) {
    r.routes.clear();
    if (!routes.IsSequence()) fail("run.routes", "expected a list");
    for (const auto& v : routes) {
      const auto route = parse_route(scalar<std::string>(v, "run.routes"));
      if (std::find(r.routes.begin(), r.routes.end(), route) == r.routes.end()) r.routes.push_back(route);
    }
    if (r.routes.empty()) fail("run.routes", "must name at least one route");
  }
  r.eps_grid = read_grid(node, "run", "eps_grid", {eps});
  r.phi_grid = read_grid(node, "run", "phi_grid", r.phi_grid);
  r.beta_grid = read_grid(node, "run", "beta_grid", {});
  read(node, "run", "time", r.time);
  read(node, "run", "ensemble_n", r.ensemble_n);
  read(node, "run", "dt", r.dt);
  read(node, "run", "workers", r.workers);
  if (const auto t = node["tolerances"]) {
    require_known_keys(t, "run.tolerances", {"tail", "quadrature", "fd"});
    read(t, "run.tolerances", "tail", r.tolerances.tail);
    read(t, "run.tolerances", "quadrature", r.tolerances.quadrature);
    read(t, "run.tolerances", "fd", r.tolerances.fd);
  }
  for (double e : r.eps_grid)
    if (!(e > 0)) fail("run.eps_grid", "entries must be positive");
  for (double p : r.phi_grid)
    if (!(p > 0)) fail("run.phi_grid", "entries must be positive");
  for (double b : r.beta_grid)
    if (!(b > 0)) fail("run.beta_grid", "entries must be positive (.inf selects the Fermi projection)");
  if (!(r.dt > 0)) fail("run.dt", "must be positive");
  if (r.ensemble_n < 1) fail("run.ensemble_n", "must be at least 1");
  if (r.workers < 1) fail("run.workers", "must be at least 1");
  if (!(r.tolerances.tail > 0)) fail("run.tolerances.tail", "must be positive");
  if (!(r.tolerances.quadrature > 0)) fail("run.tolerances.quadrature", "must be positive");
  if (!(r.tolerances.fd > 0)) fail("run.tolerances.fd", "must be positive");
}

void parse_output(const YAML::Node& node, OutputConfig& o) {
  require_known_keys(node, "output", {"directory", "formats"});
  if (const auto d = node["directory"]) o.directory = scalar<std::string>(d, "output.directory");
  if (const auto f = node["formats"]) {
    if (!f.IsSequence()) fail("output.formats", "expected a list");
    o.csv = o.json = false;
    for (const auto& v : f) {
      const auto name = scalar<std::string>(v, "output.formats");
      if (name == "csv") o.csv = true;
      else if (name == "json") o.json = true;
      else fail("output.formats", "unknown format '" + name + "'");
    }
  }
}

}  // namespace

const char* route_name(Route r) {
  switch (r) {
    case Route::fd: return "fd";
    case Route::kubo: return "kubo";
    case Route::resolvent: return "resolvent";
    case Route::adiabatic: return "adiabatic";
    case Route::streda: return "streda";
  }
  return "?";
}

Route parse_route(const std::string& name) {
  for (Route r : {Route::fd, Route::kubo, Route::resolvent, Route::adiabatic, Route::streda})
    if (name == route_name(r)) return r;
  fail("run.routes", "unknown route '" + name + "'");
}

std::vector<double> ExperimentConfig::betas() const {
  if (!run.beta_grid.empty()) return run.beta_grid;
  if (state.kind == StateConfig::Kind::fermi_projection) return {ncalg::kInfinity};
  return {state.beta};
}

ExperimentConfig parse_config(const std::string& yaml_text) {
  YAML::Node root;
  try {
    root = YAML::Load(yaml_text);
  } catch (const YAML::Exception& e) {
    throw Error(ErrorCode::ConfigError, std::string("unreadable configuration: ") + e.what());
  }
  ExperimentConfig c;
  if (!root || root.IsNull()) fail("model", "configuration is empty");
  require_known_keys(root, "", {"model", "perturbation", "state", "run", "output", "spectrum", "butterfly"});
  if (!root["model"]) fail("model", "missing");
  parse_model(root["model"], c.model);
  if (const auto p = root["perturbation"]) {
    require_known_keys(p, "perturbation", {"eps", "modulation"});
    read(p, "perturbation", "eps", c.eps);
    if (!(c.eps > 0)) fail("perturbation.eps", "must be positive");
    if (const auto m = p["modulation"]) c.modulation = parse_modulation(m);
  }
  if (!root["state"]) fail("state", "missing");
  parse_state(root["state"], c.state);
  parse_run(root["run"] ? root["run"] : YAML::Node(YAML::NodeType::Map), c.run, c.eps);
  if (const auto o = root["output"]) parse_output(o, c.output);
  if (const auto s = root["spectrum"]) {
    require_known_keys(s, "spectrum", {"bins"});
    read(s, "spectrum", "bins", c.spectrum_bins);
    if (c.spectrum_bins < 1) fail("spectrum.bins", "must be at least 1");
  }
  if (const auto b = root["butterfly"]) {
    require_known_keys(b, "butterfly", {"q_max", "k_points"});
    read(b, "butterfly", "q_max", c.butterfly_q_max);
    read(b, "butterfly", "k_points", c.butterfly_k_points);
    if (c.butterfly_q_max < 1) fail("butterfly.q_max", "must be at least 1");
    if (c.butterfly_k_points < 1) fail("butterfly.k_points", "must be at least 1");
  }
  if (c.state.fermi_gap && (*c.state.fermi_gap < 1 || *c.state.fermi_gap >= c.model.flux_q))
    fail("state.fermi_gap", "must lie between 1 and flux_q - 1");
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

nlohmann::json config_to_json(const ExperimentConfig& c) {
  using nlohmann::json;
  auto finite_or_string = [](double v) -> json {
    if (std::isfinite(v)) return v;
    return format_double(v);
  };
  json model = {{"L1", c.model.L1},
                {"L2", c.model.L2},
                {"flux_p", c.model.flux_p},
                {"flux_q", c.model.flux_q},
                {"disorder_W", c.model.disorder_W},
                {"seed", c.model.seed},
                {"displacement", c.model.displacement == lattice::DisplacementMode::minimal_image
                                     ? "minimal_image"
                                     : "open_positions"}};
  json modulation = std::visit(
      [](const auto& m) -> json {
        using M = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<M, dynamics::Constant>) return {{"kind", "constant"}};
        else if constexpr (std::is_same_v<M, dynamics::CompactBump>) return {{"kind", "bump"}, {"t0", m.t0}, {"t1", m.t1}};
        else return {{"kind", "cosine"}, {"omega", m.omega}, {"phase", m.phase}};
      },
      c.modulation);
  json state = {{"kind", c.state.kind == StateConfig::Kind::fermi_projection ? "fermi_projection" : "fermi_dirac"},
                {"beta", c.state.beta}};
  if (c.state.fermi_energy) state["fermi_energy"] = *c.state.fermi_energy;
  if (c.state.fermi_gap) state["fermi_gap"] = *c.state.fermi_gap;
  json routes = json::array();
  for (Route r : c.run.routes) routes.push_back(route_name(r));
  json betas = json::array();
  for (double b : c.betas()) betas.push_back(finite_or_string(b));
  json formats = json::array();
  if (c.output.csv) formats.push_back("csv");
  if (c.output.json) formats.push_back("json");
  return {{"model", model},
          {"perturbation", {{"eps", c.eps}, {"modulation", modulation}}},
          {"state", state},
          {"run",
           {{"routes", routes},
            {"eps_grid", c.run.eps_grid},
            {"phi_grid", c.run.phi_grid},
            {"beta_grid", betas},
            {"time", c.run.time},
            {"ensemble_n", c.run.ensemble_n},
            {"dt", c.run.dt},
            {"workers", c.run.workers},
            {"tolerances",
             {{"tail", c.run.tolerances.tail},
              {"quadrature", c.run.tolerances.quadrature},
              {"fd", c.run.tolerances.fd}}}}},
          {"output", {{"directory", c.output.directory.string()}, {"formats", formats}}},
          {"spectrum", {{"bins", c.spectrum_bins}}},
          {"butterfly", {{"q_max", c.butterfly_q_max}, {"k_points", c.butterfly_k_points}}}};
}

}  // namespace lrt::cli
