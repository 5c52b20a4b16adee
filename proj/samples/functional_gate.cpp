// A two-site XYZ propagator as a functional node: the operators are fixed,
// the couplings are parameters that can be changed at any time.

#include <cstdio>

#include "tnt/tnt.hpp"

using tnt::cplx;
using tnt::Matrix;

int main() {
  Matrix sx(2, 2), sy(2, 2), sz(2, 2);
  sx << 0, 1, 1, 0;
  sy << 0, cplx(0, -1), cplx(0, 1), 0;
  sz << 1, 0, 0, -1;
  const cplx dt(0, 0.01);

  std::vector<Matrix> ops;
  for (const Matrix* m : {&sx, &sy, &sz}) {
    auto s = tnt::node_create(std::vector<cplx>(m->data(), m->data() + 4), "DU", {2, 2});
    auto o = tnt::contract_pair(s, s, {}, "DU=EV");  // s on two sites
    tnt::node_scale(o, dt);
    ops.push_back(tnt::node_matrix(o, "DE", "UV"));
  }
  auto g = tnt::node_func_create(ops, "exp", "DEUV", {2, 2, 2, 2});
  std::printf("all parameters zero:\n%s\n", tnt::node_print_matrix(g, "DE", "UV").c_str());

  tnt::node_set_param(g, 1.1, 0);
  tnt::node_set_param(g, 1.2, 1);
  tnt::node_set_param(g, 2.3, 2);
  std::printf("Jx=1.1 Jy=1.2 Jz=2.3:\n%s\n", tnt::node_print_matrix(g, "DE", "UV").c_str());
}
