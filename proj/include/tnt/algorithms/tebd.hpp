#pragma once

// Real-time evolution with second-order Trotter sweeps of two-site gates.

#include <complex>

#include "tnt/algorithms/dmrg.hpp"
#include "tnt/algorithms/observables.hpp"

namespace tnt {

/// One exp-form functional node per bond, legs D E (out) U V (in), with the
/// bond Hamiltonian as its single operator. Parameter 0 is -i tau.
inline std::vector<Node> trotter_gates(const HamiltonianSpec& h) {
  const auto d = h.basis.d;
  std::vector<Node> gates;
  for (auto& hb : bond_hamiltonians(h)) gates.push_back(node_func_create({hb}, "exp", "DEUV", {d, d, d, d}));
  return gates;
}

struct TebdOptions {
  double dt = 0.01;
  std::size_t steps = 0;
  std::size_t chi = 100;
  std::size_t save_every = 1;
  std::vector<std::string> observables;
  double t0 = 0.0;          // time of the initial state
  double trunc_err0 = 0.0;  // truncation error already accumulated
};

struct EvolveReport {
  std::vector<std::size_t> steps;
  std::vector<double> times;
  std::vector<ObservableValues> snapshots;
  std::vector<double> accum_trunc_err;  // sum of per-SVD truncation errors so far
  std::vector<double> norm_deviation;   // 1 - <psi|psi>
  MpsState final_state;
};

namespace detail {

inline Node realize_gate(const Node& functional, cplx param, const MpsState& psi, const SystemConfig& cfg) {
  auto g = node_copy(functional);
  node_set_param(g, param, 0);
  auto t = node_dense(g);
  if (!psi.symmetric()) return node_create(t, "DEUV");
  auto q = *leg_charges(psi.sites.front(), 'D');
  std::vector<ChargedIndex> ix{q, q, q.flipped(), q.flipped()};
  return payload_node(t, "DEUV", &ix, cfg, "gate");
}

/// Applies a gate to sites j, j+1 (centre on the side the sweep comes from)
/// and leaves the centre on the side it goes to.
inline double apply_gate(MpsState& psi, std::size_t j, const Node& gate, Sweep dir, const TruncationPolicy& policy,
                         const SystemConfig& cfg) {
  auto a = node_copy(psi.sites[j]);
  auto b = node_copy(psi.sites[j + 1], false, "D=E");
  node_join(a, 'R', b, 'L');
  auto theta = contract_pair(a, b, {}, {}, cfg);
  auto g = node_copy(gate);
  node_join(g, 'U', theta, 'D');
  node_join(g, 'V', theta, 'E');
  auto res = contract_pair(theta, g, {}, {}, cfg);
  auto svd = node_svd(res, "LD", {}, policy, cfg, "E=D");
  auto k = svd.spectrum.kept();
  psi.schmidt[j].assign(k.begin(), k.end());
  if (dir == Sweep::left_to_right) {
    psi.sites[j] = detached(svd.u, "LRD", cfg);
    psi.sites[j + 1] = detached(contract_pair(svd.s, svd.vdag, {}, {}, cfg), "LRD", cfg);
  } else {
    psi.sites[j + 1] = detached(svd.vdag, "LRD", cfg);
    psi.sites[j] = detached(contract_pair(svd.u, svd.s, {}, {}, cfg), "LRD", cfg);
  }
  return svd.spectrum.truncation_error;
}

}  // namespace detail

/// Each step applies the gates of bonds 0, 2, 4, ... for dt/2, bonds 1, 3,
/// ... for dt, then the first set again for dt/2. Each layer is one sweep
/// that carries the orthogonality centre across the chain. The state is not
/// renormalized, so the norm records the weight lost to truncation;
/// observables are divided by it.
inline EvolveReport tebd_evolve(MpsState psi, const std::vector<Node>& gates, const TebdOptions& opt,
                                const SystemConfig& cfg = *default_config()) {
  const auto L = psi.length();
  require(opt.dt > 0, ErrorKind::invalid_argument, "time step must be positive");
  require(L >= 2 && gates.size() == L - 1, ErrorKind::invalid_argument,
          "need one gate per bond: " + std::to_string(gates.size()) + " gates for " + std::to_string(L) + " sites");
  require(opt.chi >= 1, ErrorKind::invalid_argument, "chi must be positive");
  validate_observables(opt.observables, psi.basis);
  const auto policy = cfg.truncation(opt.chi);

  std::vector<Node> half, full;
  for (const auto& g : gates) {
    half.push_back(detail::realize_gate(g, cplx(0, -0.5 * opt.dt), psi, cfg));
    full.push_back(detail::realize_gate(g, cplx(0, -opt.dt), psi, cfg));
  }

  mps_canonicalize(psi, Sweep::right_to_left, cfg);
  std::size_t centre = 0;
  double eps = opt.trunc_err0;
  const auto exact = TruncationPolicy::exact();

  auto layer = [&](std::size_t parity, const std::vector<Node>& g) {
    if (centre == 0) {
      for (std::size_t b = 0; b + 1 < L; ++b) {
        if (b % 2 == parity)
          eps += detail::apply_gate(psi, b, g[b], Sweep::left_to_right, policy, cfg);
        else
          detail::shift_centre(psi, b, Sweep::left_to_right, exact, cfg);
      }
      centre = L - 1;
    } else {
      for (std::size_t b = L - 1; b-- > 0;) {
        if (b % 2 == parity)
          eps += detail::apply_gate(psi, b, g[b], Sweep::right_to_left, policy, cfg);
        else
          detail::shift_centre(psi, b + 1, Sweep::right_to_left, exact, cfg);
      }
      centre = 0;
    }
  };

  EvolveReport rep;
  const auto schedule = observable_schedule(opt.steps, opt.save_every);
  std::size_t next = 0;
  auto record = [&](std::size_t step) {
    const double n = detail::payload_norm(psi.sites[centre]);
    rep.steps.push_back(step);
    rep.times.push_back(opt.t0 + static_cast<double>(step) * opt.dt);
    rep.accum_trunc_err.push_back(eps);
    rep.norm_deviation.push_back(1.0 - n * n);
    rep.snapshots.push_back(evaluate_observables(psi, opt.observables, cfg));
    diag("tebd: step " + std::to_string(step) + " t " + format_g(rep.times.back()) + " eps " + format_g(eps) +
         " norm deviation " + format_g(rep.norm_deviation.back()));
  };

  record(0);
  ++next;
  for (std::size_t step = 1; step <= opt.steps; ++step) {
    layer(0, half);
    layer(1, full);
    layer(0, half);
    if (next < schedule.size() && schedule[next] == step) {
      record(step);
      ++next;
    }
  }
  rep.final_state = std::move(psi);
  return rep;
}

}  // namespace tnt
