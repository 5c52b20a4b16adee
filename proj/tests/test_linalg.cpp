#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "support/oracles.hpp"
#include "tnt/config.hpp"

using namespace tnt;

namespace {

oracle::CMat to_cmat(const Matrix& m) { return oracle::CMat(m); }

Matrix random_matrix(std::mt19937_64& rng, Eigen::Index r, Eigen::Index c) {
  std::normal_distribution<double> g;
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < c; ++j) m(i, j) = cplx(g(rng), g(rng));
  return m;
}

const TruncationType kTypes[] = {TruncationType::two_norm, TruncationType::sum_squares, TruncationType::one_norm};

}  // namespace

TEST(Truncation, ErrorOfDiscardedValues) {
  const std::vector<double> s{3.0, 2.0, 1.0};
  EXPECT_DOUBLE_EQ(truncation_error(s, 1, TruncationType::two_norm), std::sqrt(5.0));
  EXPECT_DOUBLE_EQ(truncation_error(s, 1, TruncationType::sum_squares), 5.0);
  EXPECT_DOUBLE_EQ(truncation_error(s, 1, TruncationType::one_norm), 3.0);
  EXPECT_EQ(truncation_error(s, 3, TruncationType::two_norm), 0.0);
}

TEST(Truncation, ExactPolicyKeepsEverything) {
  const std::vector<double> s{1.0, 1e-3, 0.0};
  EXPECT_EQ(select_kept_dim(s, TruncationPolicy::exact()), 3u);
}

TEST(Truncation, NeverBelowOne) {
  const std::vector<double> s{1e-5, 1e-6};
  TruncationPolicy p;
  p.abs_tol = 1.0;
  EXPECT_EQ(select_kept_dim(s, p), 1u);
}

TEST(Truncation, ErrorToleranceOnSmallDiagonal) {
  std::ostringstream sink;
  DiagnosticCapture cap(&sink);
  SystemConfig c;
  trunc_err_tol_set(c, 0.2);
  Matrix m = Matrix::Zero(3, 3);
  m(0, 0) = 1.0;
  m(1, 1) = 0.5;
  m(2, 2) = 0.1;
  auto r = truncated_svd(m, c.truncation());
  EXPECT_EQ(r.spectrum.kept_dim, 2u);
  EXPECT_NEAR(r.spectrum.truncation_error, 0.1, 1e-15);
}

TEST(Truncation, ResidualMatchesReportedErrorForAllPolicySubsets) {
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<int> size(1, 9);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int trial = 0; trial < 300; ++trial) {
    const auto m = random_matrix(rng, size(rng), size(rng));
    const auto type = kTypes[trial % 3];
    const auto full = truncated_svd(m, TruncationPolicy::exact()).spectrum.values;
    for (int mask = 0; mask < 16; ++mask) {
      TruncationPolicy p;
      p.type = type;
      std::size_t want = full.size();
      if (mask & 1) {
        p.max_dim = 1 + std::size_t(unit(rng) * full.size());
        want = std::min(want, *p.max_dim);
      }
      if (mask & 2) {
        p.abs_tol = full[0] * unit(rng);
        want = std::min(want, oracle::chi_abs(full, p.abs_tol));
      }
      if (mask & 4) {
        p.rel_tol = unit(rng);
        want = std::min(want, oracle::chi_rel(full, p.rel_tol));
      }
      if (mask & 8) {
        p.err_tol = oracle::discarded(full, 0, type) * unit(rng);
        want = std::min(want, oracle::chi_err(full, p.err_tol, type));
      }
      want = std::max<std::size_t>(want, 1);
      auto r = truncated_svd(m, p);
      ASSERT_EQ(r.spectrum.kept_dim, want) << "trial " << trial << " mask " << mask;
      std::vector<double> kept(full.begin(), full.begin() + std::ptrdiff_t(want));
      const oracle::CMat s = Eigen::Map<const Eigen::VectorXd>(kept.data(), Eigen::Index(want)).cast<cplx>().asDiagonal();
      const oracle::CMat residual = to_cmat(m) - to_cmat(r.u) * s * to_cmat(r.vdag);
      EXPECT_NEAR(oracle::residual_error(residual, type), r.spectrum.truncation_error, 1e-10);
    }
  }
}

TEST(Truncation, SectorSvdKeepsGlobalTopValues) {
  Matrix a = Matrix::Zero(2, 2), b = Matrix::Zero(1, 1);
  a(0, 0) = 3.0;
  a(1, 1) = 1.0;
  b(0, 0) = 2.0;
  TruncationPolicy p;
  p.max_dim = 2;
  auto r = truncated_sector_svd({a, b}, p);
  EXPECT_EQ(r.kept_values[0], std::vector<double>{3.0});
  EXPECT_EQ(r.kept_values[1], std::vector<double>{2.0});
  EXPECT_NEAR(r.spectrum.truncation_error, 1.0, 1e-15);
}

TEST(Truncation, AutoBlockingMatchesPlainSvd) {
  std::mt19937_64 rng(5);
  Matrix m = Matrix::Zero(5, 4);
  m.block(0, 0, 2, 3) = random_matrix(rng, 2, 3);
  m.block(2, 3, 3, 1) = random_matrix(rng, 3, 1);
  auto plain = truncated_svd(m, TruncationPolicy::exact());
  auto blocked = truncated_svd(m, TruncationPolicy::exact(), SvdVariant::divide_conquer, 0.0);
  const auto k = std::min(plain.spectrum.values.size(), blocked.spectrum.values.size());
  for (std::size_t i = 0; i < k; ++i) EXPECT_NEAR(plain.spectrum.values[i], blocked.spectrum.values[i], 1e-12);
  std::vector<double> sv(blocked.spectrum.kept().begin(), blocked.spectrum.kept().end());
  const oracle::CMat s = Eigen::Map<Eigen::VectorXd>(sv.data(), Eigen::Index(sv.size())).cast<cplx>().asDiagonal();
  EXPECT_LT((to_cmat(m) - to_cmat(blocked.u) * s * to_cmat(blocked.vdag)).norm(), 1e-12);
}

TEST(Truncation, RankDeficientFactorsStayOrthonormal) {
  std::mt19937_64 rng(12);
  for (Eigen::Index rank : {1, 8, 32}) {
    Matrix m = random_matrix(rng, 64, rank) * random_matrix(rng, rank, 64);
    auto r = truncated_svd(m, TruncationPolicy::exact());
    const auto k = r.u.cols();
    EXPECT_LT((to_cmat(r.u).adjoint() * to_cmat(r.u) - oracle::CMat::Identity(k, k)).cwiseAbs().maxCoeff(), 1e-10);
    EXPECT_LT((to_cmat(r.vdag) * to_cmat(r.vdag).adjoint() - oracle::CMat::Identity(k, k)).cwiseAbs().maxCoeff(), 1e-10);
  }
}

TEST(Truncation, BothSvdVariantsAgree) {
  std::mt19937_64 rng(9);
  auto m = random_matrix(rng, 7, 5);
  auto a = truncated_svd(m, TruncationPolicy::exact(), SvdVariant::divide_conquer);
  auto b = truncated_svd(m, TruncationPolicy::exact(), SvdVariant::standard);
  for (std::size_t i = 0; i < a.spectrum.values.size(); ++i)
    EXPECT_NEAR(a.spectrum.values[i], b.spectrum.values[i], 1e-12);
}

TEST(Lanczos, LowestEigenpairOfRandomHermitian) {
  std::mt19937_64 rng(2);
  auto a = random_matrix(rng, 60, 60);
  const oracle::CMat h = (to_cmat(a) + to_cmat(a).adjoint()) / 2.0;
  Eigen::SelfAdjointEigenSolver<oracle::CMat> es(h);
  Vector start = Vector::Ones(60);
  auto r = min_site_eigen(start, [&](const Vector& v) -> Vector { return h * v; });
  EXPECT_NEAR(r.eigenvalue, es.eigenvalues()(0), 1e-9);
  EXPECT_LE(r.residual, 1e-10);
  EXPECT_NEAR(std::abs(r.eigenvector.dot(es.eigenvectors().col(0))), 1.0, 1e-8);
}

TEST(Lanczos, CycleCapThrowsConvergenceError) {
  std::mt19937_64 rng(4);
  auto a = random_matrix(rng, 200, 200);
  const oracle::CMat h = (to_cmat(a) + to_cmat(a).adjoint()) / 2.0;
  LanczosOptions o;
  o.max_iter = 1;
  o.krylov_dim = 3;
  try {
    min_site_eigen(Vector::Ones(200), [&](const Vector& v) -> Vector { return h * v; }, o);
    FAIL() << "expected a convergence error";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::convergence_failure);
  }
}

TEST(Expm, AntiHermitianMatchesSpectralOracle) {
  std::mt19937_64 rng(8);
  auto a = random_matrix(rng, 6, 6);
  const oracle::CMat h = (to_cmat(a) + to_cmat(a).adjoint()) / 2.0;
  const double c = 1.7;
  Matrix m = cplx(0.0, c) * h;
  EXPECT_LT((to_cmat(matrix_exponential(m)) - oracle::exp_i_hermitian(h, c)).norm(), 1e-12);
}

TEST(Expm, GeneralMatrixMatchesTaylorOracle) {
  std::mt19937_64 rng(6);
  for (double scale : {0.01, 1.0, 8.0}) {
    Matrix m = random_matrix(rng, 5, 5) * scale;
    const auto want = oracle::exp_taylor(to_cmat(m));
    EXPECT_LT((to_cmat(matrix_exponential(m)) - want).norm() / want.norm(), 1e-11) << "scale " << scale;
  }
}

TEST(Expm, ZeroGivesIdentity) {
  Matrix z = Matrix::Zero(4, 4);
  EXPECT_EQ(matrix_exponential(z), Matrix::Identity(4, 4));
}

TEST(Backend, NaiveProductMatchesEigen) {
  std::mt19937_64 rng(1);
  auto a = random_matrix(rng, 4, 7), b = random_matrix(rng, 7, 3);
  EXPECT_LT((contract_matrices(a, b, LinalgBackend::naive) - contract_matrices(a, b, LinalgBackend::eigen)).norm(),
            1e-13);
}
