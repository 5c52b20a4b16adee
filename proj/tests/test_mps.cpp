#include <gtest/gtest.h>

#include <sstream>

#include "support/ed.hpp"
#include "tnt/mps.hpp"

using namespace tnt;

namespace {

SystemConfig make_config(bool symmetric) {
  std::ostringstream sink;
  DiagnosticCapture cap(&sink);
  SystemConfig c;
  if (symmetric) symm_type_set(c, "U(1)", 1);
  return c;
}

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorKind::usage;
}

double max_diff(const Matrix& a, const Matrix& b) { return (a - b).cwiseAbs().maxCoeff(); }

}  // namespace

class MpsModes : public ::testing::TestWithParam<bool> {
 protected:
  SystemConfig cfg = make_config(GetParam());
};

TEST_P(MpsModes, ProductStateAmplitudes) {
  auto psi = mps_product_state(boson_basis(1), {0, 1}, cfg);
  auto amp = mps_amplitudes(psi);
  ASSERT_EQ(amp.size(), 4);
  EXPECT_EQ(amp(1), cplx(1.0));
  EXPECT_NEAR(amp.norm(), 1.0, 0.0);
  EXPECT_EQ(psi.bond_dims(), (std::vector<std::size_t>{1, 1, 1}));

  auto five = mps_product_state(boson_basis(2), {2, 0, 1, 1, 0}, cfg);
  auto a5 = mps_amplitudes(five);
  const std::size_t hit = (((2 * 3 + 0) * 3 + 1) * 3 + 1) * 3 + 0;
  for (Eigen::Index i = 0; i < a5.size(); ++i) EXPECT_EQ(a5(i), cplx(std::size_t(i) == hit ? 1.0 : 0.0));
}

TEST_P(MpsModes, CdwParticleNumber) {
  std::string cfg51;
  for (int j = 0; j < 51; ++j) cfg51 += j % 2 ? '1' : '0';
  auto psi = mps_product_state(boson_basis(1), parse_configuration(cfg51), cfg);
  auto n = expectation_single(psi, site_operator(psi.basis, "n"), cfg);
  double total = 0;
  for (auto x : n) total += x.real();
  EXPECT_EQ(total, 25.0);
}

TEST_P(MpsModes, ProductStateRejectsLevelsOutsideBasis) {
  EXPECT_EQ(kind_of([&] { mps_product_state(boson_basis(1), {0, 2}, cfg); }), ErrorKind::invalid_configuration);
  EXPECT_EQ(kind_of([&] { parse_configuration("01x"); }), ErrorKind::invalid_configuration);
}

TEST_P(MpsModes, RandomStateRespectsSector) {
  std::mt19937_64 rng(11);
  auto psi = mps_random(boson_basis(1), 4, 4, 2, rng, cfg);
  auto amp = mps_amplitudes(psi);
  EXPECT_NEAR(amp.norm(), 1.0, 1e-12);
  for (Eigen::Index i = 0; i < 16; ++i) {
    const int ones = __builtin_popcount(static_cast<unsigned>(i));
    if (ones != 2) EXPECT_EQ(amp(i), cplx(0.0)) << i;
  }
  std::mt19937_64 again(11);
  auto twin = mps_random(boson_basis(1), 4, 4, 2, again, cfg);
  EXPECT_EQ(mps_amplitudes(twin), amp);
  std::mt19937_64 r3(1);
  EXPECT_EQ(kind_of([&] { mps_random(boson_basis(1), 4, 4, 5, r3, cfg); }), ErrorKind::infeasible_sector);
}

TEST(Mps, RandomProductStateIsNormalized) {
  std::mt19937_64 rng(3);
  auto cfg = make_config(false);
  auto psi = mps_random(boson_basis(2), 6, 1, std::nullopt, rng, cfg);
  EXPECT_NEAR(mps_amplitudes(psi).norm(), 1.0, 1e-12);
  EXPECT_EQ(psi.bond_dims(), (std::vector<std::size_t>(7, 1)));
}

TEST_P(MpsModes, SectorSumEqualsCharge) {
  std::mt19937_64 rng(5);
  auto psi = mps_random(boson_basis(2), 6, 8, 5, rng, cfg);
  auto n = expectation_single(psi, site_operator(psi.basis, "n"), cfg);
  double total = 0;
  for (auto x : n) total += x.real();
  EXPECT_NEAR(total, 5.0, 1e-12);
}

TEST_P(MpsModes, HoppingMpoTwoSites) {
  auto h = mpo_build(bose_hubbard(2, 1, -1.0, 0.0, 0.0), cfg);
  EXPECT_EQ(h.bond_dim, 4u);
  Matrix expected = Matrix::Zero(4, 4);
  expected(1, 2) = expected(2, 1) = -1.0;  // |01> <-> |10>
  EXPECT_EQ(max_diff(mpo_dense(h), expected), 0.0);
}

TEST_P(MpsModes, BoseHubbardMpoMatchesDenseAssembly) {
  const std::size_t L = 4, nmax = 2;
  auto h = mpo_build(bose_hubbard(L, nmax, -1.0, 5.0, 0.01), cfg);
  auto basis = ed::make_basis(L, nmax + 1);
  Matrix oracle = ed::bose_hubbard(basis, -1.0, 5.0, 0.01, double((L + 1) / 2)).cast<cplx>();
  EXPECT_LT(max_diff(mpo_dense(h), oracle), 1e-13);
  const Matrix m = mpo_dense(h);
  EXPECT_LT(max_diff(m, m.adjoint()), 1e-15);
}

TEST_P(MpsModes, SpinOneHeisenbergMpo) {
  auto h = mpo_build(xxz_chain(3, 1.0, 1.0, 1.0), cfg);
  EXPECT_EQ(h.bond_dim, 5u);
  auto basis = ed::make_basis(3, 3);
  Matrix oracle = ed::xxz(basis, 1.0, 1.0, 1.0).cast<cplx>();
  EXPECT_LT(max_diff(mpo_dense(h), oracle), 1e-13);
}

TEST(Mpo, RejectsTermsBeyondNearestNeighbours) {
  HamiltonianSpec h{boson_basis(1), 3, {{{"n", "n", "n"}, {1.0}}}};
  EXPECT_EQ(kind_of([&] { mpo_build(h); }), ErrorKind::unsupported_term);
}

TEST_P(MpsModes, SandwichValues) {
  std::mt19937_64 rng(7);
  auto psi = mps_random(boson_basis(2), 4, 9, 3, rng, cfg);
  node_scale(psi.sites[0], 1.7, cfg);  // unnormalized on purpose
  auto amp = mps_amplitudes(psi);
  auto id = mpo_identity(psi.basis, 4, cfg);
  EXPECT_NEAR(std::abs(sandwich_value(mps_mpo_mps_connect(psi, id), cfg) - amp.squaredNorm()), 0.0, 1e-12);

  auto h = mpo_build(bose_hubbard(4, 2, -1.0, 5.0, 0.01), cfg);
  auto basis = ed::make_basis(4, 3);
  Matrix dense = ed::bose_hubbard(basis, -1.0, 5.0, 0.01, 2.0).cast<cplx>();
  const cplx oracle = amp.dot(dense * amp);
  EXPECT_NEAR(std::abs(sandwich_value(mps_mpo_mps_connect(psi, h), cfg) - oracle), 0.0, 1e-10);

  auto p01 = mps_product_state(boson_basis(1), {0, 1}, cfg);
  auto hop = mpo_build(bose_hubbard(2, 1, -1.0, 0.0, 0.0), cfg);
  EXPECT_EQ(sandwich_value(mps_mpo_mps_connect(p01, hop), cfg), cplx(0.0));
  EXPECT_EQ(kind_of([&] { mps_mpo_mps_connect(p01, h); }), ErrorKind::invalid_argument);
}

TEST_P(MpsModes, HeffMatchesAssembledMatrix) {
  std::mt19937_64 rng(9);
  const std::size_t L = 3;
  auto psi = mps_random(boson_basis(1), L, 2, 1, rng, cfg);
  auto h = mpo_build(bose_hubbard(L, 1, -1.0, 0.0, 0.3), cfg);
  auto basis = ed::make_basis(L, 2);
  Matrix dense = ed::bose_hubbard(basis, -1.0, 0.0, 0.3, 2.0).cast<cplx>();
  auto s = mps_mpo_mps_connect(psi, h);
  for (std::size_t site = 0; site < L; ++site) {
    auto heff = heff_prepare(s, site, cfg);
    // Assemble Heff from the dense Hamiltonian: column k is <psi(e_j)|H|psi(e_k)>.
    const auto& p = psi.sites[site]->payload();
    const std::size_t n = std::holds_alternative<BlockTensor>(p) ? std::get<BlockTensor>(p).data().size()
                                                                  : std::get<DenseTensor>(p).size();
    auto with_data = [&](const Vector& v) {
      MpsState t = psi.copy();
      std::vector<cplx> data(v.data(), v.data() + v.size());
      if (std::holds_alternative<BlockTensor>(p))
        t.sites[site]->set_payload(Payload(BlockTensor(std::get<BlockTensor>(p).structure(), data, cfg.blocks())));
      else
        t.sites[site]->set_payload(Payload(DenseTensor(std::get<DenseTensor>(p).dims(), data)));
      return t;
    };
    Matrix amps(Eigen::Index(1) << L, Eigen::Index(n));
    for (std::size_t k = 0; k < n; ++k) amps.col(Eigen::Index(k)) = mps_amplitudes(with_data(Vector::Unit(Eigen::Index(n), Eigen::Index(k))));
    Matrix heff_dense = amps.adjoint() * dense * amps;
    for (int trial = 0; trial < 10; ++trial) {
      Vector v = Vector::Random(Eigen::Index(n));
      auto out = heff_contract(with_data(v).sites[site], heff, cfg);
      const auto& q = out->payload();
      Vector got = std::holds_alternative<BlockTensor>(q)
                       ? Eigen::Map<const Vector>(std::get<BlockTensor>(q).data().data(), Eigen::Index(n))
                       : Eigen::Map<const Vector>(std::get<DenseTensor>(q).data(), Eigen::Index(n));
      EXPECT_LT((got - heff_dense * v).cwiseAbs().maxCoeff(), 1e-12);
    }
  }
  EXPECT_EQ(kind_of([&] { heff_prepare(s, L, cfg); }), ErrorKind::invalid_argument);
}

TEST(Heff, SingleSiteChainIsOperatorApplication) {
  auto cfg = make_config(false);
  auto h = mpo_build(bose_hubbard(1, 2, -1.0, 5.0, 0.0), cfg);
  auto psi = mps_product_state(boson_basis(2), {2}, cfg);
  auto heff = heff_prepare(mps_mpo_mps_connect(psi, h), 0, cfg);
  auto out = node_dense(heff_contract(psi.sites[0], heff, cfg));
  EXPECT_EQ(out.dims(), (Dims{1, 1, 3}));
  EXPECT_NEAR(out.values()[2].real(), 5.0, 1e-14);  // U/2 n(n-1) at n = 2
}

TEST_P(MpsModes, ExpectationValues) {
  auto p01 = mps_product_state(boson_basis(1), {0, 1}, cfg);
  auto n = expectation_single(p01, site_operator(p01.basis, "n"), cfg);
  EXPECT_EQ(n[0], cplx(0.0));
  EXPECT_EQ(n[1], cplx(1.0));

  std::mt19937_64 rng(13);
  const std::size_t L = 5;
  auto psi = mps_random(boson_basis(2), L, 6, 4, rng, cfg);
  auto rho = expectation_all_pairs(psi, site_operator(psi.basis, "bdag"), site_operator(psi.basis, "b"), cfg);
  auto amp = mps_amplitudes(psi);
  const ed::CMat b = ed::annihilator(3);
  for (std::size_t i = 0; i < L; ++i)
    for (std::size_t j = 0; j < L; ++j) {
      const cplx oracle = amp.dot(ed::site_op(L, i, b.adjoint()) * (ed::site_op(L, j, b) * amp));
      EXPECT_LT(std::abs(rho(Eigen::Index(i), Eigen::Index(j)) - oracle), 1e-10);
    }
  EXPECT_LT(max_diff(rho, rho.adjoint()), 1e-12);
}

TEST_P(MpsModes, CanonicalSpectra) {
  auto p = mps_product_state(boson_basis(1), {1, 0, 1}, cfg);
  mps_canonicalize(p, Sweep::left_to_right, cfg);
  mps_canonicalize(p, Sweep::right_to_left, cfg);
  for (const auto& s : p.schmidt) {
    ASSERT_EQ(s.size(), 1u);
    EXPECT_NEAR(s[0], 1.0, 1e-15);
  }

  std::mt19937_64 rng(17);
  auto psi = mps_random(boson_basis(2), 4, 9, 4, rng, cfg);
  auto amp = mps_amplitudes(psi);
  auto before = expectation_single(psi, site_operator(psi.basis, "n"), cfg);
  mps_canonicalize(psi, Sweep::left_to_right, cfg);
  mps_canonicalize(psi, Sweep::right_to_left, cfg);
  EXPECT_NEAR(mps_amplitudes(psi).norm(), amp.norm(), 1e-12);
  auto after = expectation_single(psi, site_operator(psi.basis, "n"), cfg);
  for (std::size_t j = 0; j < 4; ++j) EXPECT_NEAR(std::abs(after[j] - before[j]), 0.0, 1e-10);
  for (std::size_t bond = 0; bond < 3; ++bond) {
    const auto rows = Eigen::Index(std::pow(3, bond + 1));
    Matrix m = Eigen::Map<const Matrix>(amp.data(), rows, amp.size() / rows);
    Eigen::JacobiSVD<Matrix> svd(m);
    const auto& s = psi.schmidt[bond];
    for (std::size_t k = 0; k < s.size(); ++k) EXPECT_NEAR(s[k], svd.singularValues()(Eigen::Index(k)), 1e-12);
    for (auto k = Eigen::Index(s.size()); k < svd.singularValues().size(); ++k)
      EXPECT_LT(svd.singularValues()(k), 1e-12);
  }
}

TEST(Canonical, BellPairSpectrum) {
  auto cfg = make_config(false);
  MpsState psi;
  psi.basis = boson_basis(1);
  std::vector<cplx> a0(4), a1(4);
  a0[0 * 2 + 0] = 1.0;  // (r=0, k=0)
  a0[1 * 2 + 1] = 1.0;  // (r=1, k=1)
  a1[0 * 2 + 1] = 1 / std::sqrt(2.0);  // (l=0, k=1)
  a1[1 * 2 + 0] = 1 / std::sqrt(2.0);  // (l=1, k=0)
  psi.sites.push_back(node_create(DenseTensor({1, 2, 2}, a0), "LRD"));
  psi.sites.push_back(node_create(DenseTensor({2, 1, 2}, a1), "LRD"));
  mps_canonicalize(psi, Sweep::left_to_right, cfg);
  mps_canonicalize(psi, Sweep::right_to_left, cfg);
  ASSERT_EQ(psi.schmidt[0].size(), 2u);
  EXPECT_NEAR(psi.schmidt[0][0], 1 / std::sqrt(2.0), 1e-15);
  EXPECT_NEAR(psi.schmidt[0][1], 1 / std::sqrt(2.0), 1e-15);
}

INSTANTIATE_TEST_SUITE_P(DenseAndU1, MpsModes, ::testing::Values(false, true),
                         [](const auto& info) { return info.param ? "U1" : "Dense"; });
