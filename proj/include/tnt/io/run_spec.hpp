#pragma once

// Command-line vocabulary shared by the ground-state and evolution drivers.

#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "tnt/error.hpp"

namespace tnt::io {

enum class App { ground_state, evolve };

inline const char* app_name(App a) { return a == App::ground_state ? "tntGS_cl" : "tntEvolve_cl"; }

struct RunSpec {
  std::string system = "boson";
  std::size_t length = 0;
  std::size_t n_max = 1;
  double spin = 0.5;
  // H = Jb sum (b+_j b_j+1 + h.c.) + Ub/2 sum n(n-1) + E-harm sum (j - jc)^2 n
  double jb = 0.0, ub = 0.0, e_harm = 0.0;
  // H = Jxy/2 sum (S+S- + S-S+) + Jz sum Sz Sz
  double jxy = 0.0, jz = 0.0;
  std::size_t chi = 100;
  double precision = 1e-4;
  std::size_t max_sweeps = 50;
  double expansion = 1e-3;
  std::size_t steps = 0;
  double dt = 0.01;
  std::size_t save_every = 1;
  // Exactly one initial state source.
  std::optional<int> qnum_rand_state;
  std::optional<std::string> qnum_config_state;
  bool rand_state = false;
  std::optional<std::string> config_state;
  std::optional<std::string> load;
  std::vector<std::string> observables;
  std::string directory = ".";
  std::uint64_t seed = 1;
  bool csv = false;
};

inline nlohmann::json to_json(const RunSpec& s) {
  nlohmann::json j;
  j["system"] = s.system;
  j["length"] = s.length;
  j["n_max"] = s.n_max;
  j["spin"] = s.spin;
  j["Jb"] = s.jb;
  j["Ub"] = s.ub;
  j["E_harm"] = s.e_harm;
  j["Jxy"] = s.jxy;
  j["Jz"] = s.jz;
  j["chi"] = s.chi;
  j["precision"] = s.precision;
  j["max_sweeps"] = s.max_sweeps;
  j["expansion"] = s.expansion;
  j["steps"] = s.steps;
  j["dt"] = s.dt;
  j["save_every"] = s.save_every;
  j["qnum_rand_state"] = s.qnum_rand_state ? nlohmann::json(*s.qnum_rand_state) : nlohmann::json();
  j["qnum_config_state"] = s.qnum_config_state ? nlohmann::json(*s.qnum_config_state) : nlohmann::json();
  j["rand_state"] = s.rand_state;
  j["config_state"] = s.config_state ? nlohmann::json(*s.config_state) : nlohmann::json();
  j["load"] = s.load ? nlohmann::json(*s.load) : nlohmann::json();
  j["observables"] = s.observables;
  j["directory"] = s.directory;
  j["seed"] = s.seed;
  j["csv"] = s.csv;
  return j;
}

inline RunSpec run_spec_from_json(const nlohmann::json& j) {
  RunSpec s;
  try {
    s.system = j.at("system");
    s.length = j.at("length");
    s.n_max = j.at("n_max");
    s.spin = j.at("spin");
    s.jb = j.at("Jb");
    s.ub = j.at("Ub");
    s.e_harm = j.at("E_harm");
    s.jxy = j.at("Jxy");
    s.jz = j.at("Jz");
    s.chi = j.at("chi");
    s.precision = j.at("precision");
    s.max_sweeps = j.at("max_sweeps");
    s.expansion = j.at("expansion");
    s.steps = j.at("steps");
    s.dt = j.at("dt");
    s.save_every = j.at("save_every");
    if (!j.at("qnum_rand_state").is_null()) s.qnum_rand_state = j.at("qnum_rand_state").get<int>();
    if (!j.at("qnum_config_state").is_null()) s.qnum_config_state = j.at("qnum_config_state").get<std::string>();
    s.rand_state = j.at("rand_state");
    if (!j.at("config_state").is_null()) s.config_state = j.at("config_state").get<std::string>();
    if (!j.at("load").is_null()) s.load = j.at("load").get<std::string>();
    s.observables = j.at("observables").get<std::vector<std::string>>();
    s.directory = j.at("directory");
    s.seed = j.at("seed");
    s.csv = j.at("csv");
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::parse_error, std::string("/parameters: ") + e.what());
  }
  return s;
}

struct ParseResult {
  std::optional<RunSpec> spec;  // empty when the process should exit
  int exit_code = 0;
  std::string output;  // help or usage text
};

/// Parses a command line. Usage errors give exit code 2 and the usage text.
inline ParseResult parse_args(App which, int argc, const char* const* argv) {
  RunSpec s;
  CLI::App app{which == App::ground_state ? "Ground state of a 1D chain by DMRG"
                                          : "Real-time evolution of a 1D chain by TEBD",
               app_name(which)};
  app.option_defaults()->always_capture_default();
  app.add_option("-d,--directory", s.directory, "Output directory");
  app.add_option("--system", s.system, "Site type")->check(CLI::IsMember({"boson", "spin"}));
  app.add_option("--length", s.length, "Number of sites");
  app.add_option("--n-max", s.n_max, "Maximum bosons per site");
  app.add_option("--spin", s.spin, "Spin magnitude");
  app.add_option("--Jb", s.jb, "Hopping coefficient: Jb sum (b+_j b_j+1 + h.c.)");
  app.add_option("--Ub", s.ub, "On-site interaction: Ub/2 sum n(n-1)");
  app.add_option("--E-harm", s.e_harm, "Harmonic trap: E-harm sum (j - jc)^2 n");
  app.add_option("--Jxy", s.jxy, "Spin exchange: Jxy/2 sum (S+S- + S-S+)");
  app.add_option("--Jz", s.jz, "Spin coupling: Jz sum Sz Sz");
  app.add_option("-c,--chi", s.chi, "Maximum internal dimension");
  auto* qrand = app.add_option("--qnum-rand-state", s.qnum_rand_state, "Random U(1) state with this total charge");
  auto* qcfg = app.add_option("--qnum-config-state", s.qnum_config_state, "U(1) product state, one digit per site");
  auto* rand = app.add_flag("--rand-state", s.rand_state, "Random state without symmetry");
  auto* cfg = app.add_option("--config-state", s.config_state, "Product state without symmetry");
  auto* load = app.add_option("--load", s.load, "Start from the state saved in a result file");
  app.add_option("--seed", s.seed, "Random seed");
  app.add_flag("--csv", s.csv, "Also write observables as CSV");

  bool ex1n = false, ex1sz = false;
  std::optional<std::string> ex2b, ex2s;
  app.add_flag("--Ex1N", ex1n, "Density on every site");
  app.add_flag("--Ex1Sz", ex1sz, "Sz on every site");
  app.add_option("--Ex2bdagb", ex2b, "Single-particle density matrix (value: ap = all pairs)")
      ->check(CLI::IsMember({"ap"}));
  app.add_option("--Ex2SpSm", ex2s, "S+S- correlations (value: ap = all pairs)")->check(CLI::IsMember({"ap"}));

  if (which == App::ground_state) {
    app.add_option("--precision", s.precision, "Stop once the energy change of a sweep is below this");
    app.add_option("--max-sweeps", s.max_sweeps, "Sweep cap");
    app.add_option("--expansion", s.expansion, "Subspace expansion weight, 0 to disable");
  } else {
    app.add_option("-t,--steps", s.steps, "Number of time steps");
    app.add_option("--dt", s.dt, "Time step in units of hbar/J");
    app.add_option("-b,--save-every", s.save_every, "Steps between observable snapshots");
  }

  auto usage_error = [&](const std::string& msg) {
    return ParseResult{std::nullopt, 2, std::string(app_name(which)) + ": " + msg + "\n\n" + app.help()};
  };
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    return {std::nullopt, 0, app.help()};
  } catch (const CLI::ParseError& e) {
    return usage_error(e.what());
  }

  std::vector<std::string> missing;
  if (app.count("--system") == 0) missing.push_back("--system");
  if (app.count("--length") == 0) missing.push_back("--length");
  if (which == App::evolve && app.count("--steps") == 0) missing.push_back("-t/--steps");
  const int sources = int(qrand->count() > 0) + int(qcfg->count() > 0) + int(rand->count() > 0) +
                      int(cfg->count() > 0) + int(load->count() > 0);
  if (sources == 0) missing.push_back("an initial state (--qnum-rand-state, --qnum-config-state, --rand-state, --config-state or --load)");
  if (!missing.empty()) {
    std::string m = "missing required options:";
    for (const auto& x : missing) m += "\n  " + x;
    return usage_error(m);
  }
  if (sources > 1) return usage_error("give exactly one initial state option");
  if (s.length == 0) return usage_error("--length must be positive");
  if (s.chi == 0) return usage_error("--chi must be positive");
  if (s.system == "boson" && s.n_max == 0) return usage_error("--n-max must be positive");
  if (which == App::evolve && !(s.dt > 0)) return usage_error("--dt must be positive");
  if (which == App::evolve && s.save_every == 0) return usage_error("--save-every must be positive");
  if (which == App::ground_state && s.max_sweeps == 0) return usage_error("--max-sweeps must be positive");
  if (s.system == "boson" && (ex1sz || ex2s)) return usage_error("spin observables need --system=spin");
  if (s.system == "spin" && (ex1n || ex2b)) return usage_error("boson observables need --system=boson");

  if (ex1n) s.observables.push_back("Ex1N");
  if (ex1sz) s.observables.push_back("Ex1Sz");
  if (ex2b) s.observables.push_back("Ex2bdagb");
  if (ex2s) s.observables.push_back("Ex2SpSm");
  return {s, 0, {}};
}

inline ParseResult parse_args(App which, const std::vector<std::string>& args) {
  std::vector<const char*> argv{app_name(which)};
  for (const auto& a : args) argv.push_back(a.c_str());
  return parse_args(which, int(argv.size()), argv.data());
}

}  // namespace tnt::io
