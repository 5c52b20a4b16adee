#pragma once

// Ground-state and evolution drivers behind tntGS_cl and tntEvolve_cl.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "tnt/algorithms/dmrg.hpp"
#include "tnt/algorithms/tebd.hpp"
#include "tnt/io/result_file.hpp"
#include "tnt/io/run_spec.hpp"

namespace tnt::io {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitNumeric = 3;

/// Errors caused by the inputs rather than by the numerics.
inline bool is_input_error(ErrorKind k) {
  switch (k) {
    case ErrorKind::usage:
    case ErrorKind::parse_error:
    case ErrorKind::invalid_configuration:
    case ErrorKind::infeasible_sector:
    case ErrorKind::unsupported_observable:
    case ErrorKind::unsupported_term:
    case ErrorKind::unsupported_symmetry: return true;
    default: return false;
  }
}

inline BasisSpec basis_of(const RunSpec& s) {
  return s.system == "spin" ? spin_basis(s.spin) : boson_basis(s.n_max);
}

inline HamiltonianSpec hamiltonian_of(const RunSpec& s) {
  if (s.system == "spin") return xxz_chain(s.length, s.spin, s.jxy, s.jz);
  return bose_hubbard(s.length, s.n_max, s.jb, s.ub, s.e_harm);
}

/// TNT_BACKEND=dense turns off U(1) blocking even for the qnum state options.
inline bool dense_backend_forced() {
  const char* v = std::getenv("TNT_BACKEND");
  if (!v || std::string(v).empty() || std::string(v) == "blocked") return false;
  if (std::string(v) == "dense") return true;
  fail(ErrorKind::usage, "TNT_BACKEND must be 'dense' or 'blocked', got '" + std::string(v) + "'");
}

struct Prepared {
  SystemConfig cfg;
  MpsState psi;
  std::optional<ResultFile> loaded;
};

inline Prepared prepare(const RunSpec& s) {
  Prepared p;
  const auto basis = basis_of(s);
  if (s.load) {
    p.loaded = load_result(*s.load);
    require(p.loaded->state.has_value(), ErrorKind::parse_error, *s.load + " holds no state");
    p.cfg = p.loaded->config;
    p.psi = std::move(*p.loaded->state);
    const auto& b = p.psi.basis;
    require(b.kind == basis.kind && b.d == basis.d && p.psi.length() == s.length, ErrorKind::usage,
            "the saved state does not match --system, --length and the site dimension");
    // The file's config is authoritative, except that the state decides blocking.
    if (p.psi.symmetric() != p.cfg.symmetric())
      fail(ErrorKind::parse_error, *s.load + ": state storage disagrees with /system@symmetry");
    return p;
  }
  const bool qnum = s.qnum_rand_state || s.qnum_config_state;
  if (qnum && !dense_backend_forced()) symm_type_set(p.cfg, "U(1)", 1);
  configure_basis(p.cfg, basis);
  std::mt19937_64 rng(s.seed);
  if (s.qnum_rand_state)
    p.psi = mps_random(basis, s.length, s.chi, *s.qnum_rand_state, rng, p.cfg);
  else if (s.rand_state)
    p.psi = mps_random(basis, s.length, s.chi, std::nullopt, rng, p.cfg);
  else {
    const auto levels = parse_configuration(s.qnum_config_state ? *s.qnum_config_state : *s.config_state);
    require(levels.size() == s.length, ErrorKind::invalid_configuration,
            "configuration has " + std::to_string(levels.size()) + " sites, --length is " + std::to_string(s.length));
    p.psi = mps_product_state(basis, levels, p.cfg);
  }
  return p;
}

inline nlohmann::json manifest(const ResultFile& r, const std::string& file) {
  const auto& c = r.config;
  nlohmann::json j;
  j["format"] = "tnt-result";
  j["format_version"] = kFormatVersion;
  j["library_version"] = kLibraryVersion;
  j["kind"] = r.kind;
  j["result_file"] = file;
  j["status"] = r.failure ? "failed" : "ok";
  if (r.failure) j["error"] = {{"kind", r.failure->first}, {"message", r.failure->second}};
  j["system"] = {{"symmetry", c.symmetric() ? "U(1)" : "none"},
                 {"charges_per_label", c.charges_per_label},
                 {"rel_trunc_tol", c.rel_trunc_tol},
                 {"abs_trunc_tol", c.abs_trunc_tol},
                 {"trunc_err_tol", c.trunc_err_tol},
                 {"auto_block_tol", c.auto_block_tol},
                 {"trunc_type", to_string(c.trunc_type)},
                 {"svd_variant", c.svd_variant == SvdVariant::divide_conquer ? "divide-conquer" : "standard"},
                 {"reshape_reuse", c.reshape_reuse},
                 {"max_eig_iter", c.max_eig_iter},
                 {"summary", sys_info_print(c)}};
  j["parameters"] = r.parameters;
  return j;
}

inline void write_csv(const std::filesystem::path& dir, const ResultFile& r) {
  for (const auto& [key, mats] : r.observables) {
    std::ofstream out(dir / (key + ".csv"));
    out.precision(17);
    const bool timed = !r.times.empty();
    const bool pairs = mats.front().rows() > 1;
    out << (timed ? "time," : "") << (pairs ? "i,j,re,im" : "site,re,im") << "\n";
    for (std::size_t t = 0; t < mats.size(); ++t)
      for (Eigen::Index i = 0; i < mats[t].rows(); ++i)
        for (Eigen::Index k = 0; k < mats[t].cols(); ++k) {
          if (timed) out << r.times[t] << ",";
          if (pairs) out << i + 1 << ",";
          out << k + 1 << "," << mats[t](i, k).real() << "," << mats[t](i, k).imag() << "\n";
        }
  }
}

/// Writes result.h5, manifest.json and optional CSV files; returns the
/// result file path.
inline std::string save_outputs(const RunSpec& s, const ResultFile& r) {
  const std::filesystem::path dir(s.directory);
  std::filesystem::create_directories(dir);
  const auto file = (dir / "result.h5").string();
  write_result(file, r);
  std::ofstream(dir / "manifest.json") << manifest(r, "result.h5").dump(2) << "\n";
  if (s.csv && !r.failure) write_csv(dir, r);
  return file;
}

inline std::string run_ground_state(const RunSpec& s) {
  auto p = prepare(s);
  const auto h = hamiltonian_of(s);
  validate_observables(s.observables, h.basis);
  const auto mpo = mpo_build(h, p.cfg);
  DmrgOptions opt;
  opt.chi = s.chi;
  opt.precision = s.precision;
  opt.max_sweeps = s.max_sweeps;
  opt.expansion = s.expansion;
  auto rep = dmrg_ground_state(mpo, std::move(p.psi), opt, p.cfg);

  ResultFile r;
  r.kind = "ground-state";
  r.config = p.cfg;
  r.parameters = to_json(s);
  for (auto& [k, m] : evaluate_observables(rep.final_state, s.observables, p.cfg)) r.observables[k] = {m};
  r.series["energy_per_sweep"] = {"sweep", rep.energy_per_sweep};
  r.series["delta_energy"] = {"sweep", rep.delta_energy};
  r.series["truncation_error"] = {"sweep", rep.truncation_error};
  diag(std::string("dmrg: ") + (rep.converged ? "converged" : "stopped at the sweep cap") + " after " +
       std::to_string(rep.sweeps_run) + " sweeps, energy " + format_g(rep.energy_per_sweep.back()));
  r.state = std::move(rep.final_state);
  return save_outputs(s, r);
}

inline std::string run_evolve(const RunSpec& s) {
  auto p = prepare(s);
  const auto h = hamiltonian_of(s);
  TebdOptions opt;
  opt.dt = s.dt;
  opt.steps = s.steps;
  opt.chi = s.chi;
  opt.save_every = s.save_every;
  opt.observables = s.observables;
  std::size_t step0 = 0;
  if (p.loaded && !p.loaded->times.empty()) {
    opt.t0 = p.loaded->times.back();
    step0 = p.loaded->steps.back();
    if (auto it = p.loaded->series.find("accum_trunc_err"); it != p.loaded->series.end() && !it->second.values.empty())
      opt.trunc_err0 = it->second.values.back();
  }
  auto rep = tebd_evolve(std::move(p.psi), trotter_gates(h), opt, p.cfg);

  ResultFile r;
  r.kind = "evolution";
  r.config = p.cfg;
  r.parameters = to_json(s);
  r.times = rep.times;
  for (auto k : rep.steps) r.steps.push_back(step0 + k);
  for (const auto& snap : rep.snapshots)
    for (const auto& [k, m] : snap) r.observables[k].push_back(m);
  r.series["accum_trunc_err"] = {"time", rep.accum_trunc_err};
  r.series["norm_deviation"] = {"time", rep.norm_deviation};
  r.state = std::move(rep.final_state);
  return save_outputs(s, r);
}

/// Whole program: parse, run, map failures to exit codes.
inline int app_main(App which, int argc, const char* const* argv) {
  auto parsed = parse_args(which, argc, argv);
  if (!parsed.spec) {
    (parsed.exit_code == 0 ? std::cout : std::cerr) << parsed.output;
    return parsed.exit_code;
  }
  const auto& s = *parsed.spec;
  try {
    const auto file = which == App::ground_state ? run_ground_state(s) : run_evolve(s);
    std::cout << file << "\n";
    return kExitOk;
  } catch (const Error& e) {
    std::cerr << app_name(which) << ": " << e.what() << "\n";
    if (is_input_error(e.kind())) return kExitUsage;
    try {
      ResultFile r;
      r.kind = which == App::ground_state ? "ground-state" : "evolution";
      r.parameters = to_json(s);
      r.failure = {std::string(to_string(e.kind())), e.what()};
      save_outputs(s, r);
    } catch (const std::exception& w) {
      std::cerr << app_name(which) << ": could not record the failure: " << w.what() << "\n";
    }
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << app_name(which) << ": " << e.what() << "\n";
    return kExitNumeric;
  }
}

}  // namespace tnt::io
