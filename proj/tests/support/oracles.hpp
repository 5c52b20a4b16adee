#pragma once

// Test-side reference computations shared by the unit tests and the
// acceptance runner. Nothing here calls into the library's own truncation,
// contraction planning or exponential code.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "tnt/network.hpp"

namespace oracle {

using tnt::cplx;
using CMat = Eigen::MatrixXcd;

/// Kept dimension for one enabled bound, straight from its definition.
inline std::size_t chi_abs(const std::vector<double>& s, double tol) {
  std::size_t k = 0;
  for (double v : s)
    if (v >= tol) ++k;
  return k;
}

inline std::size_t chi_rel(const std::vector<double>& s, double tol) {
  if (s[0] <= 0.0) return 1;
  std::size_t k = 0;
  for (double v : s)
    if (v / s[0] >= tol) ++k;
  return std::max<std::size_t>(k, 1);
}

inline double discarded(const std::vector<double>& s, std::size_t chi, tnt::TruncationType t) {
  long double acc = 0.0L;
  for (std::size_t i = chi; i < s.size(); ++i) acc += t == tnt::TruncationType::one_norm ? s[i] : s[i] * s[i];
  return t == tnt::TruncationType::two_norm ? double(std::sqrt(acc)) : double(acc);
}

inline std::size_t chi_err(const std::vector<double>& s, double tol, tnt::TruncationType t) {
  for (std::size_t k = 0; k <= s.size(); ++k)
    if (discarded(s, k, t) < tol) return k;
  return s.size();
}

/// The error measure of a residual matrix that matches each truncation type.
inline double residual_error(const CMat& r, tnt::TruncationType t) {
  if (t == tnt::TruncationType::one_norm) {
    Eigen::JacobiSVD<CMat> svd(r);
    return svd.singularValues().sum();
  }
  const double f = r.norm();
  return t == tnt::TruncationType::two_norm ? f : f * f;
}

inline CMat kron(const CMat& a, const CMat& b) {
  CMat k(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j) k.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  return k;
}

/// exp(i c H) for Hermitian H through its eigendecomposition.
inline CMat exp_i_hermitian(const CMat& h, double c) {
  Eigen::SelfAdjointEigenSolver<CMat> es(h);
  Eigen::VectorXcd phase(es.eigenvalues().size());
  for (Eigen::Index k = 0; k < phase.size(); ++k) phase(k) = std::exp(cplx(0.0, c * es.eigenvalues()(k)));
  return es.eigenvectors() * phase.asDiagonal() * es.eigenvectors().adjoint();
}

/// exp(A) as a truncated Taylor series on A / 2^s, squared back up.
inline CMat exp_taylor(const CMat& a) {
  const double n = a.cwiseAbs().rowwise().sum().maxCoeff();
  int s = 0;
  while (std::ldexp(n, -s) > 0.25) ++s;
  const CMat b = a / std::ldexp(1.0, s);
  CMat term = CMat::Identity(a.rows(), a.cols()), sum = term;
  for (int k = 1; k < 30; ++k) {
    term = term * b / double(k);
    sum += term;
  }
  for (int i = 0; i < s; ++i) sum = sum * sum;
  return sum;
}

/// Recipe for a small random network: per-node leg dimensions and the pairs
/// of (node, leg) joined together. Legs not joined stay free.
struct NetworkRecipe {
  std::vector<tnt::Dims> dims;
  std::vector<std::string> labels;
  struct Bond {
    std::size_t a, la, b, lb;
  };
  std::vector<Bond> bonds;
  std::vector<std::vector<cplx>> values;
  std::size_t free_legs = 0;
};

inline NetworkRecipe random_network(std::mt19937_64& rng, std::size_t max_nodes) {
  std::uniform_int_distribution<std::size_t> count(2, max_nodes);
  std::uniform_int_distribution<std::size_t> dim(1, 3);
  std::bernoulli_distribution linked(0.45), free_leg(0.4);
  std::normal_distribution<double> gauss;
  NetworkRecipe r;
  const auto n = count(rng);
  r.dims.resize(n);
  r.labels.resize(n);
  auto add_leg = [&](std::size_t node, std::size_t d) {
    r.dims[node].push_back(d);
    r.labels[node] += char('a' + r.labels[node].size());
    return r.dims[node].size() - 1;
  };
  // A spanning chain keeps most networks connected; extra bonds add loops.
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if ((j == i + 1 && linked(rng)) || linked(rng)) {
        if (r.dims[i].size() >= 4 || r.dims[j].size() >= 4) continue;
        const auto d = dim(rng);
        const auto la = add_leg(i, d), lb = add_leg(j, d);
        r.bonds.push_back({i, la, j, lb});
      }
  for (std::size_t i = 0; i < n; ++i)
    if (r.dims[i].empty() || free_leg(rng)) {
      add_leg(i, dim(rng));
      ++r.free_legs;
    }
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<cplx> v(tnt::product(r.dims[i]));
    for (auto& x : v) x = cplx(gauss(rng), gauss(rng));
    r.values.push_back(std::move(v));
  }
  return r;
}

inline std::vector<tnt::Node> build(const NetworkRecipe& r) {
  std::vector<tnt::Node> nodes;
  for (std::size_t i = 0; i < r.dims.size(); ++i) nodes.push_back(tnt::node_create(r.values[i], r.labels[i], r.dims[i]));
  for (const auto& b : r.bonds) tnt::node_join(nodes[b.a], r.labels[b.a][b.la], nodes[b.b], r.labels[b.b][b.lb]);
  return nodes;
}

inline std::string output_labels(std::size_t n) {
  std::string s;
  for (std::size_t k = 0; k < n; ++k) s += char('A' + k);
  return s;
}

/// Contracts the recipe along every pairwise order and returns the worst
/// relative deviation from the first order's result.
inline double worst_order_deviation(const NetworkRecipe& r, std::size_t* orders_checked = nullptr) {
  const auto out = output_labels(r.free_legs);
  const auto orders = tnt::all_contraction_orders(r.dims.size());
  tnt::DenseTensor ref;
  double worst = 0.0;
  for (std::size_t k = 0; k < orders.size(); ++k) {
    auto t = tnt::node_dense(tnt::contract_list(out, build(r), *tnt::default_config(), &orders[k]));
    if (k == 0) {
      ref = t;
      continue;
    }
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < t.size(); ++i) {
      num += std::norm(t.values()[i] - ref.values()[i]);
      den += std::norm(ref.values()[i]);
    }
    worst = std::max(worst, std::sqrt(num / std::max(den, 1e-300)));
  }
  if (orders_checked) *orders_checked = orders.size();
  return worst;
}

}  // namespace oracle
