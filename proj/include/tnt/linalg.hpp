#pragma once

// Dense kernels: matrix product, truncated SVD, Lanczos ground state, Pade
// matrix exponential.

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SVD>

#include "tnt/error.hpp"
#include "tnt/symmetric_tensor.hpp"
#include "tnt/types.hpp"

namespace tnt {

using ColMatrix = Eigen::Matrix<cplx, Eigen::Dynamic, Eigen::Dynamic>;

enum class LinalgBackend { eigen, naive };

/// TNT_LINALG_BACKEND=naive switches to the reference triple loop.
inline LinalgBackend backend_from_env() {
  const char* v = std::getenv("TNT_LINALG_BACKEND");
  if (v && std::string(v) == "naive") return LinalgBackend::naive;
  return LinalgBackend::eigen;
}

inline Matrix contract_matrices(const Matrix& a, const Matrix& b, LinalgBackend backend = backend_from_env()) {
  require(a.cols() == b.rows(), ErrorKind::invalid_argument,
          "inner dimensions differ: " + std::to_string(a.cols()) + " vs " + std::to_string(b.rows()));
  if (backend == LinalgBackend::eigen) return a * b;
  Matrix c = Matrix::Zero(a.rows(), b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index k = 0; k < a.cols(); ++k) {
      const cplx x = a(i, k);
      for (Eigen::Index j = 0; j < b.cols(); ++j) c(i, j) += x * b(k, j);
    }
  return c;
}

// ---------------------------------------------------------------- truncation

enum class TruncationType { two_norm, sum_squares, one_norm };
enum class SvdVariant { divide_conquer, standard };

inline std::string to_string(TruncationType t) {
  switch (t) {
    case TruncationType::two_norm: return "2norm";
    case TruncationType::sum_squares: return "sumsquares";
    case TruncationType::one_norm: return "1norm";
  }
  return "?";
}

inline std::optional<TruncationType> truncation_type_from(std::string_view s) {
  if (s == "2norm") return TruncationType::two_norm;
  if (s == "sumsquares" || s == "sumSquares") return TruncationType::sum_squares;
  if (s == "1norm") return TruncationType::one_norm;
  return std::nullopt;
}

/// Tolerances use -1 (any negative value) for "disabled".
struct TruncationPolicy {
  std::optional<std::size_t> max_dim;
  double abs_tol = -1.0;
  double rel_tol = -1.0;
  double err_tol = -1.0;
  TruncationType type = TruncationType::two_norm;

  static TruncationPolicy exact() { return {}; }
};

/// Error of discarding values[chi:], per type.
inline double truncation_error(std::span<const double> values, std::size_t chi, TruncationType type) {
  double acc = 0.0;
  for (std::size_t i = chi; i < values.size(); ++i) {
    if (type == TruncationType::one_norm)
      acc += values[i];
    else
      acc += values[i] * values[i];
  }
  return type == TruncationType::two_norm ? std::sqrt(acc) : acc;
}

/// Kept dimension for a nonincreasing spectrum: the smallest chi implied by
/// any enabled bound, never below 1.
inline std::size_t select_kept_dim(std::span<const double> values, const TruncationPolicy& p) {
  const std::size_t n = values.size();
  if (n == 0) return 0;
  std::size_t chi = n;
  if (p.max_dim) chi = std::min(chi, *p.max_dim);
  if (p.abs_tol >= 0.0) {
    std::size_t k = 0;
    while (k < n && !(values[k] < p.abs_tol)) ++k;
    chi = std::min(chi, k);
  }
  if (p.rel_tol >= 0.0) {
    std::size_t k = 1;
    if (values[0] > 0.0)
      while (k < n && !(values[k] / values[0] < p.rel_tol)) ++k;
    chi = std::min(chi, k);
  }
  if (p.err_tol >= 0.0) {
    // Discard as many trailing values as possible while the error stays below tol.
    std::size_t k = n;
    while (k > 0 && truncation_error(values, k - 1, p.type) < p.err_tol) --k;
    chi = std::min(chi, k);
  }
  return std::max<std::size_t>(chi, 1);
}

struct SingularSpectrum {
  std::vector<double> values;  // full spectrum, nonincreasing
  double truncation_error = 0.0;
  std::size_t kept_dim = 0;

  std::span<const double> kept() const { return std::span<const double>(values).first(kept_dim); }
};

struct SvdResult {
  Matrix u;     // rows x chi
  Matrix vdag;  // chi x cols
  SingularSpectrum spectrum;
};

namespace detail {

struct RawSvd {
  ColMatrix u, v;
  Eigen::VectorXd s;
};

inline bool svd_factors_ok(const ColMatrix& m, const RawSvd& r) {
  constexpr double tol = 1e-10;
  const auto k = r.s.size();
  if ((r.u.adjoint() * r.u - ColMatrix::Identity(k, k)).cwiseAbs().maxCoeff() > tol) return false;
  if ((r.v.adjoint() * r.v - ColMatrix::Identity(k, k)).cwiseAbs().maxCoeff() > tol) return false;
  const double scale = std::max(1.0, k > 0 ? r.s(0) : 0.0);
  return (m - r.u * r.s.cast<cplx>().asDiagonal() * r.v.adjoint()).cwiseAbs().maxCoeff() <= tol * scale;
}

inline RawSvd raw_svd(const ColMatrix& m, SvdVariant variant) {
  const auto shape = std::to_string(m.rows()) + "x" + std::to_string(m.cols());
  require(m.allFinite(), ErrorKind::decomposition_failed, "SVD of a " + shape + " matrix with non-finite entries");
  RawSvd r;
  if (variant == SvdVariant::divide_conquer) {
    Eigen::BDCSVD<ColMatrix> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
    require(svd.info() == Eigen::Success, ErrorKind::decomposition_failed, "SVD failed on a " + shape + " matrix");
    r.u = svd.matrixU();
    r.v = svd.matrixV();
    r.s = svd.singularValues();
    // Eigen 3.4's divide and conquer can return non-orthonormal factors for
    // rank-deficient input; those are redone with the one-sided Jacobi method.
    if (!svd_factors_ok(m, r)) return raw_svd(m, SvdVariant::standard);
  } else {
    Eigen::JacobiSVD<ColMatrix> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
    require(svd.info() == Eigen::Success, ErrorKind::decomposition_failed, "SVD failed on a " + shape + " matrix");
    r.u = svd.matrixU();
    r.v = svd.matrixV();
    r.s = svd.singularValues();
  }
  return r;
}

}  // namespace detail

/// Independent matrices decomposed together: the spectrum is merged across
/// all of them, the policy applied to the merged spectrum, and each piece keeps
/// its share of the global top values.
struct SectorSvd {
  std::vector<Matrix> u;     // rows_s x kept_s
  std::vector<Matrix> vdag;  // kept_s x cols_s
  std::vector<std::vector<double>> kept_values;
  SingularSpectrum spectrum;
};

inline SectorSvd truncated_sector_svd(const std::vector<Matrix>& sectors, const TruncationPolicy& policy,
                                      SvdVariant variant = SvdVariant::divide_conquer) {
  struct Entry {
    double value;
    std::size_t piece, index;
  };
  std::vector<detail::RawSvd> raw;
  std::vector<Entry> entries;
  for (std::size_t p = 0; p < sectors.size(); ++p) {
    raw.push_back(detail::raw_svd(ColMatrix(sectors[p]), variant));
    for (Eigen::Index i = 0; i < raw.back().s.size(); ++i)
      entries.push_back({raw.back().s(i), p, static_cast<std::size_t>(i)});
  }
  // Stable: among equal values the earlier sector and lower index win.
  std::stable_sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) { return a.value > b.value; });
  SectorSvd r;
  for (const auto& e : entries) r.spectrum.values.push_back(e.value);
  const auto chi = select_kept_dim(r.spectrum.values, policy);
  r.spectrum.kept_dim = chi;
  r.spectrum.truncation_error = truncation_error(r.spectrum.values, chi, policy.type);
  std::vector<std::size_t> kept(sectors.size(), 0);
  for (std::size_t k = 0; k < chi; ++k) ++kept[entries[k].piece];
  r.kept_values.resize(sectors.size());
  for (std::size_t p = 0; p < sectors.size(); ++p) {
    const auto k = static_cast<Eigen::Index>(kept[p]);
    // Singular values within one piece come out sorted, so the kept ones are a prefix.
    r.u.push_back(raw[p].u.leftCols(k));
    r.vdag.push_back(raw[p].v.leftCols(k).adjoint());
    for (Eigen::Index i = 0; i < k; ++i) r.kept_values[p].push_back(raw[p].s(i));
  }
  return r;
}

/// Truncated SVD. With auto_block_tol >= 0 the matrix is first thresholded and
/// split into independent blocks, each decomposed separately.
inline SvdResult truncated_svd(const Matrix& m, const TruncationPolicy& policy,
                               SvdVariant variant = SvdVariant::divide_conquer, double auto_block_tol = -1.0) {
  require(m.rows() > 0 && m.cols() > 0, ErrorKind::invalid_argument, "SVD of an empty matrix");
  SvdResult r;
  if (auto_block_tol < 0.0) {
    auto s = truncated_sector_svd({m}, policy, variant);
    r.u = std::move(s.u[0]);
    r.vdag = std::move(s.vdag[0]);
    r.spectrum = std::move(s.spectrum);
    return r;
  }
  auto blocking = auto_block(m, auto_block_tol);
  if (blocking.blocks.empty()) {
    // Everything was thresholded away: a single zero singular value.
    r.spectrum.values = {0.0};
    r.spectrum.kept_dim = 1;
    r.u = Matrix::Zero(m.rows(), 1);
    r.u(0, 0) = 1.0;
    r.vdag = Matrix::Zero(1, m.cols());
    r.vdag(0, 0) = 1.0;
    return r;
  }
  std::vector<Matrix> pieces;
  for (const auto& b : blocking.blocks) pieces.push_back(b.block);
  auto s = truncated_sector_svd(pieces, policy, variant);
  // Reassemble in global descending order.
  struct Col {
    double value;
    std::size_t piece, index;
  };
  std::vector<Col> cols;
  for (std::size_t p = 0; p < pieces.size(); ++p)
    for (std::size_t i = 0; i < s.kept_values[p].size(); ++i) cols.push_back({s.kept_values[p][i], p, i});
  std::stable_sort(cols.begin(), cols.end(), [](const Col& a, const Col& b) { return a.value > b.value; });
  const auto chi = static_cast<Eigen::Index>(cols.size());
  r.u = Matrix::Zero(m.rows(), chi);
  r.vdag = Matrix::Zero(chi, m.cols());
  for (Eigen::Index k = 0; k < chi; ++k) {
    const auto& c = cols[static_cast<std::size_t>(k)];
    const auto& b = blocking.blocks[c.piece];
    const auto i = static_cast<Eigen::Index>(c.index);
    for (std::size_t x = 0; x < b.rows.size(); ++x)
      r.u(static_cast<Eigen::Index>(b.rows[x]), k) = s.u[c.piece](static_cast<Eigen::Index>(x), i);
    for (std::size_t y = 0; y < b.cols.size(); ++y)
      r.vdag(k, static_cast<Eigen::Index>(b.cols[y])) = s.vdag[c.piece](i, static_cast<Eigen::Index>(y));
  }
  r.spectrum = std::move(s.spectrum);
  return r;
}

// ---------------------------------------------------------------- eigensolver

struct EigenResult {
  double eigenvalue = 0.0;
  Vector eigenvector;
  double residual = 0.0;
  std::size_t restarts = 0;
  std::size_t matvecs = 0;
  std::vector<double> eigenvalue_history;  // Ritz value at the end of each cycle
};

struct LanczosOptions {
  std::size_t max_iter = 300;  // restart cycles
  double tol = 1e-10;          // on ||A v - lambda v||
  std::size_t krylov_dim = 20;
};

/// Lowest eigenpair of a Hermitian operator given only through its action.
/// Each cycle builds a fully reorthogonalized Krylov basis of dimension
/// min(krylov_dim, n) from the current Ritz vector and restarts from the new one.
inline EigenResult min_site_eigen(const Vector& initial, const std::function<Vector(const Vector&)>& apply,
                                  const LanczosOptions& opt = {}) {
  const auto n = initial.size();
  require(n > 0, ErrorKind::invalid_argument, "eigensolver needs a nonempty start vector");
  require(opt.max_iter > 0, ErrorKind::invalid_argument, "eigensolver needs at least one iteration");
  EigenResult res;
  Vector v = initial;
  double nv = v.norm();
  if (!(nv > 0.0) || !std::isfinite(nv)) {
    v = Vector::Ones(n);
    nv = v.norm();
  }
  v /= nv;
  const auto kmax = static_cast<Eigen::Index>(std::min<std::size_t>(opt.krylov_dim, static_cast<std::size_t>(n)));
  double best_residual = std::numeric_limits<double>::infinity();

  for (std::size_t cycle = 0; cycle < opt.max_iter; ++cycle) {
    ColMatrix Q(n, kmax);
    std::vector<double> alpha, beta;
    Q.col(0) = v;
    Vector w;
    Eigen::Index k = 0;
    for (; k < kmax; ++k) {
      w = apply(Q.col(k));
      ++res.matvecs;
      const double a = std::real(Q.col(k).dot(w));
      alpha.push_back(a);
      // Two passes of classical Gram-Schmidt against the whole basis.
      for (int pass = 0; pass < 2; ++pass) w -= Q.leftCols(k + 1) * (Q.leftCols(k + 1).adjoint() * w);
      const double b = w.norm();
      if (k + 1 == kmax) {
        beta.push_back(b);
        ++k;
        break;
      }
      if (b < 1e-14 * std::max(1.0, std::abs(a))) {
        beta.push_back(0.0);
        ++k;
        break;
      }
      beta.push_back(b);
      Q.col(k + 1) = w / b;
    }
    Eigen::MatrixXd T = Eigen::MatrixXd::Zero(k, k);
    for (Eigen::Index i = 0; i < k; ++i) {
      T(i, i) = alpha[static_cast<std::size_t>(i)];
      if (i + 1 < k) T(i, i + 1) = T(i + 1, i) = beta[static_cast<std::size_t>(i)];
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(T);
    const double theta = es.eigenvalues()(0);
    Eigen::VectorXd y = es.eigenvectors().col(0);
    v = Q.leftCols(k) * y.cast<cplx>();
    v /= v.norm();
    res.eigenvalue_history.push_back(theta);
    res.restarts = cycle + 1;
    const double estimate = std::abs(beta.back() * y(k - 1));
    if (estimate <= opt.tol || k == n) {
      Vector r = apply(v);
      ++res.matvecs;
      const double lambda = std::real(v.dot(r));
      r -= lambda * v;
      const double resid = r.norm();
      best_residual = std::min(best_residual, resid);
      if (resid <= opt.tol) {
        res.eigenvalue = lambda;
        res.eigenvector = v;
        res.residual = resid;
        return res;
      }
    } else {
      best_residual = std::min(best_residual, estimate);
    }
  }
  throw ConvergenceError("eigensolver did not converge in " + std::to_string(opt.max_iter) + " cycles", best_residual);
}

// ---------------------------------------------------------------- expm

/// exp(m) by scaling and squaring with a degree-13 Pade approximant.
inline Matrix matrix_exponential(const Matrix& m) {
  require(m.rows() == m.cols(), ErrorKind::invalid_argument,
          "matrix exponential of a " + std::to_string(m.rows()) + "x" + std::to_string(m.cols()) + " matrix");
  const auto n = m.rows();
  if (n == 0) return m;
  // The Pade quotient of two equal diagonals can round below one.
  if (m.isZero(0.0)) return Matrix::Identity(n, n);
  static constexpr double b[] = {64764752532480000.0,
                                 32382376266240000.0,
                                 7771770303897600.0,
                                 1187353796428800.0,
                                 129060195264000.0,
                                 10559470521600.0,
                                 670442572800.0,
                                 33522128640.0,
                                 1323241920.0,
                                 40840800.0,
                                 960960.0,
                                 16380.0,
                                 182.0,
                                 1.0};
  constexpr double theta13 = 5.371920351148152;
  ColMatrix A = m;
  const double norm1 = A.cwiseAbs().colwise().sum().maxCoeff();
  int s = 0;
  if (norm1 > theta13) s = std::max(0, static_cast<int>(std::ceil(std::log2(norm1 / theta13))));
  if (s > 0) A /= std::ldexp(1.0, s);
  const ColMatrix I = ColMatrix::Identity(n, n);
  const ColMatrix A2 = A * A;
  const ColMatrix A4 = A2 * A2;
  const ColMatrix A6 = A4 * A2;
  const ColMatrix U =
      A * (A6 * (b[13] * A6 + b[11] * A4 + b[9] * A2) + b[7] * A6 + b[5] * A4 + b[3] * A2 + b[1] * I);
  const ColMatrix V = A6 * (b[12] * A6 + b[10] * A4 + b[8] * A2) + b[6] * A6 + b[4] * A4 + b[2] * A2 + b[0] * I;
  ColMatrix R = (V - U).partialPivLu().solve(V + U);
  for (int i = 0; i < s; ++i) R = R * R;
  return R;
}

}  // namespace tnt
