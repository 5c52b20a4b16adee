#pragma once

// Exact diagonalization on occupation-string bases. Written against plain
// Eigen so the library is checked by independent arithmetic.

#include <Eigen/Dense>
#include <cmath>
#include <complex>
#include <map>
#include <optional>
#include <vector>

namespace ed {

using RMat = Eigen::MatrixXd;
using CMat = Eigen::MatrixXcd;
using CVec = Eigen::VectorXcd;

/// Strings k_0 .. k_{L-1}, ordered with site 0 most significant.
struct Basis {
  std::size_t length = 0, d = 2;
  std::vector<std::vector<int>> states;
  std::map<std::vector<int>, std::size_t> index;

  std::size_t size() const { return states.size(); }
  // Position in the unrestricted d^L space.
  std::size_t full_index(std::size_t s) const {
    std::size_t x = 0;
    for (int k : states[s]) x = x * d + static_cast<std::size_t>(k);
    return x;
  }
};

inline Basis make_basis(std::size_t length, std::size_t d, std::optional<int> total = std::nullopt) {
  Basis b;
  b.length = length;
  b.d = d;
  std::size_t count = 1;
  for (std::size_t j = 0; j < length; ++j) count *= d;
  for (std::size_t x = 0; x < count; ++x) {
    std::vector<int> s(length);
    std::size_t y = x;
    int sum = 0;
    for (std::size_t j = length; j-- > 0;) {
      s[j] = static_cast<int>(y % d);
      y /= d;
      sum += s[j];
    }
    if (total && sum != *total) continue;
    b.index[s] = b.states.size();
    b.states.push_back(std::move(s));
  }
  return b;
}

/// H = J sum (b^dag_j b_j+1 + h.c.) + U/2 sum n(n-1) + V sum (j - jc)^2 n, 1-based j.
inline RMat bose_hubbard(const Basis& b, double j_hop, double u, double v, double jc) {
  const auto n = static_cast<Eigen::Index>(b.size());
  RMat h = RMat::Zero(n, n);
  const int nmax = static_cast<int>(b.d) - 1;
  for (std::size_t s = 0; s < b.size(); ++s) {
    const auto& st = b.states[s];
    double diag = 0;
    for (std::size_t j = 0; j < b.length; ++j) {
      diag += 0.5 * u * st[j] * (st[j] - 1);
      diag += v * std::pow(double(j + 1) - jc, 2) * st[j];
    }
    h(Eigen::Index(s), Eigen::Index(s)) += diag;
    for (std::size_t j = 0; j + 1 < b.length; ++j)
      for (int dir : {+1, -1}) {
        // dir = +1: particle moves from j+1 to j.
        auto t = st;
        const std::size_t to = dir > 0 ? j : j + 1, from = dir > 0 ? j + 1 : j;
        if (t[from] == 0 || t[to] == nmax) continue;
        const double amp = std::sqrt(double(t[from]) * double(t[to] + 1));
        --t[from];
        ++t[to];
        auto it = b.index.find(t);
        if (it != b.index.end()) h(Eigen::Index(it->second), Eigen::Index(s)) += j_hop * amp;
      }
  }
  return h;
}

/// Jxy/2 (S+S- + S-S+) + Jz SzSz with level k meaning m = -S + k.
inline RMat xxz(const Basis& b, double spin, double jxy, double jz) {
  const auto n = static_cast<Eigen::Index>(b.size());
  RMat h = RMat::Zero(n, n);
  auto m_of = [&](int k) { return -spin + k; };
  auto up = [&](int k) { double m = m_of(k); return std::sqrt(spin * (spin + 1) - m * (m + 1)); };
  auto down = [&](int k) { double m = m_of(k); return std::sqrt(spin * (spin + 1) - m * (m - 1)); };
  const int top = static_cast<int>(b.d) - 1;
  for (std::size_t s = 0; s < b.size(); ++s) {
    const auto& st = b.states[s];
    for (std::size_t j = 0; j + 1 < b.length; ++j) {
      h(Eigen::Index(s), Eigen::Index(s)) += jz * m_of(st[j]) * m_of(st[j + 1]);
      for (int dir : {+1, -1}) {
        auto t = st;
        const std::size_t raise = dir > 0 ? j : j + 1, lower = dir > 0 ? j + 1 : j;
        if (t[raise] == top || t[lower] == 0) continue;
        const double amp = up(t[raise]) * down(t[lower]);
        ++t[raise];
        --t[lower];
        auto it = b.index.find(t);
        if (it != b.index.end()) h(Eigen::Index(it->second), Eigen::Index(s)) += 0.5 * jxy * amp;
      }
    }
  }
  return h;
}

inline double ground_energy(const RMat& h) {
  Eigen::SelfAdjointEigenSolver<RMat> es(h, Eigen::EigenvaluesOnly);
  return es.eigenvalues()(0);
}

/// Occupation of every site in state psi (sector basis).
inline std::vector<double> densities(const Basis& b, const CVec& psi) {
  std::vector<double> n(b.length, 0.0);
  for (std::size_t s = 0; s < b.size(); ++s)
    for (std::size_t j = 0; j < b.length; ++j) n[j] += std::norm(psi(Eigen::Index(s))) * b.states[s][j];
  return n;
}

/// exp(-i H t) psi through the eigendecomposition of a real symmetric H.
struct Propagator {
  Eigen::SelfAdjointEigenSolver<RMat> es;
  explicit Propagator(const RMat& h) : es(h) {}
  CVec evolve(const CVec& psi, double t) const {
    CVec c = es.eigenvectors().transpose().cast<std::complex<double>>() * psi;
    for (Eigen::Index k = 0; k < c.size(); ++k) c(k) *= std::exp(std::complex<double>(0, -es.eigenvalues()(k) * t));
    return es.eigenvectors().cast<std::complex<double>>() * c;
  }
};

inline CVec basis_state(const Basis& b, const std::vector<int>& s) {
  CVec v = CVec::Zero(Eigen::Index(b.size()));
  v(Eigen::Index(b.index.at(s))) = 1.0;
  return v;
}

/// Restriction of a full-space amplitude vector to the basis.
inline CVec restrict(const Basis& b, const CVec& full) {
  CVec v(Eigen::Index(b.size()));
  for (std::size_t s = 0; s < b.size(); ++s) v(Eigen::Index(s)) = full(Eigen::Index(b.full_index(s)));
  return v;
}

/// Single-site operator on the full d^L space (site 0 most significant).
inline CMat site_op(std::size_t length, std::size_t j, const CMat& op) {
  CMat m = CMat::Identity(1, 1);
  for (std::size_t k = 0; k < length; ++k) {
    const CMat f = k == j ? op : CMat::Identity(op.rows(), op.cols());
    CMat next(m.rows() * f.rows(), m.cols() * f.cols());
    for (Eigen::Index a = 0; a < m.rows(); ++a)
      for (Eigen::Index c = 0; c < m.cols(); ++c) next.block(a * f.rows(), c * f.cols(), f.rows(), f.cols()) = m(a, c) * f;
    m = next;
  }
  return m;
}

inline CMat annihilator(std::size_t d) {
  CMat b = CMat::Zero(Eigen::Index(d), Eigen::Index(d));
  for (std::size_t k = 1; k < d; ++k) b(Eigen::Index(k - 1), Eigen::Index(k)) = std::sqrt(double(k));
  return b;
}

}  // namespace ed
