// Ground state of an open spin-1/2 Heisenberg chain with U(1) blocking.
//
//   sample_heisenberg_ground_state [length] [chi]

#include <cstdio>
#include <cstdlib>

#include "tnt/tnt.hpp"

int main(int argc, char** argv) {
  const std::size_t L = argc > 1 ? std::strtoul(argv[1], nullptr, 10) : 16;
  const std::size_t chi = argc > 2 ? std::strtoul(argv[2], nullptr, 10) : 64;

  tnt::SystemConfig cfg;
  tnt::symm_type_set(cfg, "U(1)", 1);  // prints the system summary

  auto h = tnt::xxz_chain(L, 0.5, 1.0, 1.0);
  std::mt19937_64 rng(7);
  auto psi = tnt::mps_random(h.basis, L, chi, int(L / 2), rng, cfg);  // total Sz = 0

  tnt::DmrgOptions opt;
  opt.chi = chi;
  opt.precision = 1e-10;
  auto rep = tnt::dmrg_ground_state(tnt::mpo_build(h, cfg), std::move(psi), opt, cfg);

  std::printf("sweep  energy              delta\n");
  for (std::size_t s = 0; s < rep.delta_energy.size(); ++s)
    std::printf("%5zu  %.12f  %.3e\n", s + 1, rep.energy_per_sweep[s + 1], rep.delta_energy[s]);

  auto sz = tnt::evaluate_observables(rep.final_state, {"Ex1Sz", "Ex2SpSm"}, cfg);
  std::printf("\n<Sz_j>:");
  for (Eigen::Index j = 0; j < sz.at("Ex1Sz").cols(); ++j) std::printf(" %+.4f", sz.at("Ex1Sz")(0, j).real());
  std::printf("\n<S+_1 S-_j>:");
  for (Eigen::Index j = 0; j < sz.at("Ex2SpSm").cols(); ++j) std::printf(" %+.4f", sz.at("Ex2SpSm")(0, j).real());
  std::printf("\n");
}
