// Hard-core bosons released from a density wave |1010...>. Prints the site
// densities every 0.5 time units together with the accumulated truncation
// error and the norm deviation.
//
//   sample_cdw_quench [length] [chi] [t_max]

#include <cstdio>
#include <cstdlib>
#include <string>

#include "tnt/tnt.hpp"

int main(int argc, char** argv) {
  const std::size_t L = argc > 1 ? std::strtoul(argv[1], nullptr, 10) : 21;
  const std::size_t chi = argc > 2 ? std::strtoul(argv[2], nullptr, 10) : 40;
  const double t_max = argc > 3 ? std::atof(argv[3]) : 4.0;

  tnt::set_diagnostic_stream(nullptr);
  tnt::SystemConfig cfg;
  tnt::symm_type_set(cfg, "U(1)", 1);

  std::string start;
  for (std::size_t j = 0; j < L; ++j) start += j % 2 == 0 ? '1' : '0';
  auto h = tnt::bose_hubbard(L, 1, -1.0, 0.0, 0.0);
  auto psi = tnt::mps_product_state(h.basis, tnt::parse_configuration(start), cfg);

  tnt::TebdOptions opt;
  opt.dt = 0.01;
  opt.steps = std::size_t(t_max / opt.dt + 0.5);
  opt.chi = chi;
  opt.save_every = 50;
  opt.observables = {"Ex1N"};
  auto rep = tnt::tebd_evolve(std::move(psi), tnt::trotter_gates(h), opt, cfg);

  for (std::size_t k = 0; k < rep.times.size(); ++k) {
    const auto& n = rep.snapshots[k].at("Ex1N");
    std::printf("t=%4.1f  eps=%.2e  N=%+.1e  n:", rep.times[k], rep.accum_trunc_err[k], rep.norm_deviation[k]);
    for (Eigen::Index j = 0; j < n.cols(); ++j) std::printf(" %.3f", n(0, j).real());
    std::printf("\n");
  }
}
