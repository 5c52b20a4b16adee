#pragma once

// Open-boundary MPS and MPO: bases, state construction, Hamiltonian MPOs,
// environments, expectation values and gauge sweeps.

#include <cmath>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <unsupported/Eigen/KroneckerProduct>

#include "tnt/network.hpp"

namespace tnt {

// ---------------------------------------------------------------- bases

enum class BasisKind { boson, spin };

/// Single-site basis. Level k carries charge k (particle number for bosons,
/// S + Sz for spins).
struct BasisSpec {
  BasisKind kind = BasisKind::boson;
  std::size_t d = 2;
  std::size_t n_max = 1;
  double spin = 0.5;

  std::vector<QN> charges() const {
    std::vector<QN> q;
    for (std::size_t k = 0; k < d; ++k) q.push_back(QN{static_cast<int>(k)});
    return q;
  }
};

inline BasisSpec boson_basis(std::size_t n_max) {
  require(n_max >= 1, ErrorKind::invalid_argument, "n_max must be at least 1");
  return BasisSpec{BasisKind::boson, n_max + 1, n_max, 0.0};
}

inline BasisSpec spin_basis(double s) {
  const double twice = 2.0 * s;
  require(s > 0 && std::abs(twice - std::round(twice)) < 1e-12, ErrorKind::invalid_argument,
          "spin must be a positive multiple of 1/2");
  return BasisSpec{BasisKind::spin, static_cast<std::size_t>(std::lround(twice)) + 1, 0, s};
}

/// Matrix of a named site operator; rows index the output level.
/// Bosons: I, n, b, bdag, nn1 (= n(n-1)). Spins: I, Sz, Sp, Sm, Sx.
inline Matrix site_operator(const BasisSpec& b, std::string_view name) {
  const auto d = static_cast<Eigen::Index>(b.d);
  Matrix m = Matrix::Zero(d, d);
  if (name == "I") return Matrix::Identity(d, d);
  if (b.kind == BasisKind::boson) {
    for (Eigen::Index k = 0; k < d; ++k) {
      const double n = static_cast<double>(k);
      if (name == "n") m(k, k) = n;
      if (name == "nn1") m(k, k) = n * (n - 1.0);
      if (k > 0) {
        if (name == "b") m(k - 1, k) = std::sqrt(n);
        if (name == "bdag") m(k, k - 1) = std::sqrt(n);
      }
    }
    if (name == "n" || name == "nn1" || name == "b" || name == "bdag") return m;
  } else {
    const double s = b.spin;
    for (Eigen::Index k = 0; k < d; ++k) {
      const double mz = -s + static_cast<double>(k);
      if (name == "Sz") m(k, k) = mz;
      if (k + 1 < d) {
        const double c = std::sqrt(s * (s + 1) - mz * (mz + 1));
        if (name == "Sp" || name == "Sx") m(k + 1, k) += name == "Sp" ? c : 0.5 * c;
        if (name == "Sm" || name == "Sx") m(k, k + 1) += name == "Sm" ? c : 0.5 * c;
      }
    }
    if (name == "Sz" || name == "Sp" || name == "Sm" || name == "Sx") return m;
  }
  fail(ErrorKind::invalid_argument, "no site operator '" + std::string(name) + "' for this basis");
}

/// Makes cfg's basis operator the diagonal charge operator of `b`; in
/// symmetric mode the physical legs get the basis charges.
inline void configure_basis(SystemConfig& cfg, const BasisSpec& b) {
  Matrix diag = Matrix::Zero(static_cast<Eigen::Index>(b.d), static_cast<Eigen::Index>(b.d));
  for (std::size_t k = 0; k < b.d; ++k) diag(Eigen::Index(k), Eigen::Index(k)) = static_cast<double>(k);
  DenseTensor op({b.d, b.d}, std::vector<cplx>(diag.data(), diag.data() + diag.size()), ElementKind::real);
  if (cfg.symmetric())
    basis_op_set(cfg, std::move(op), b.charges());
  else
    basis_op_set(cfg, std::move(op));
}

// ---------------------------------------------------------------- helpers

namespace detail {

inline Node payload_node(const DenseTensor& t, std::string_view labels, const std::vector<ChargedIndex>* charges,
                         const SystemConfig& cfg, const char* what) {
  if (!charges) return node_create(t, labels);
  auto r = impose_symmetry(t, *charges, QN::zero(charges->front().labels.empty() ? 1 : charges->front().labels[0].m),
                           cfg.blocks());
  require(r.discarded_weight <= 1e-12 * std::max(1.0, t.frobenius_norm()), ErrorKind::not_covariant,
          std::string(what) + " does not conserve the charge");
  return node_create(r.tensor, labels);
}

/// Unconnected copy with legs in the given order.
inline Node detached(const Node& n, std::string_view order, const SystemConfig& cfg) {
  auto c = node_copy(resolve(n));
  node_reorder(c, order, cfg);
  return c;
}

inline double payload_norm(const Node& n) {
  const auto& p = n->payload();
  if (std::holds_alternative<BlockTensor>(p)) return std::get<BlockTensor>(p).frobenius_norm();
  return std::get<DenseTensor>(p).frobenius_norm();
}

/// Saturating count of basis strings of each total charge.
inline std::vector<std::vector<double>> charge_counts(std::size_t length, std::size_t d) {
  std::vector<std::vector<double>> c(length + 1);
  c[0] = {1.0};
  for (std::size_t n = 1; n <= length; ++n) {
    c[n].assign(c[n - 1].size() + d - 1, 0.0);
    for (std::size_t q = 0; q < c[n - 1].size(); ++q)
      for (std::size_t k = 0; k < d; ++k) c[n][q + k] = std::min(1e15, c[n][q + k] + c[n - 1][q]);
  }
  return c;
}

inline std::size_t saturating_pow(std::size_t d, std::size_t n, std::size_t cap) {
  std::size_t r = 1;
  for (std::size_t i = 0; i < n && r < cap; ++i) r *= d;
  return std::min(r, cap);
}

}  // namespace detail

// ---------------------------------------------------------------- MPS

/// Site tensors have legs L, R, D (in that order) and are stored unconnected;
/// site j's R matches site j+1's L.
struct MpsState {
  std::vector<Node> sites;
  std::vector<std::vector<double>> schmidt;  // bond j sits between sites j and j+1
  BasisSpec basis;

  std::size_t length() const { return sites.size(); }
  bool symmetric() const { return !sites.empty() && sites.front()->is_block(); }

  /// L + 1 entries including the two dimension-1 boundaries.
  std::vector<std::size_t> bond_dims() const {
    std::vector<std::size_t> b;
    for (const auto& s : sites) b.push_back(s->leg_dim('L'));
    if (!sites.empty()) b.push_back(sites.back()->leg_dim('R'));
    return b;
  }

  MpsState copy() const {
    MpsState c = *this;
    for (auto& s : c.sites) s = node_copy(s);
    return c;
  }
};

/// Copies of the sites, joined in a chain inside a network.
inline Network mps_network(const MpsState& psi) {
  Network net;
  for (const auto& s : psi.sites) net.insert_at_end(node_copy(s), 'L', 'R');
  net.schmidt = psi.schmidt;
  return net;
}

inline std::vector<std::size_t> parse_configuration(std::string_view s) {
  std::vector<std::size_t> c;
  for (char ch : s) {
    require(ch >= '0' && ch <= '9', ErrorKind::invalid_configuration,
            "configuration '" + std::string(s) + "' must consist of digits");
    c.push_back(static_cast<std::size_t>(ch - '0'));
  }
  require(!c.empty(), ErrorKind::invalid_configuration, "empty configuration");
  return c;
}

inline MpsState mps_product_state(const BasisSpec& basis, const std::vector<std::size_t>& config,
                                  const SystemConfig& cfg = *default_config()) {
  require(!config.empty(), ErrorKind::invalid_configuration, "empty configuration");
  MpsState psi;
  psi.basis = basis;
  const auto q = basis.charges();
  int left = 0;
  for (std::size_t j = 0; j < config.size(); ++j) {
    require(config[j] < basis.d, ErrorKind::invalid_configuration,
            "site " + std::to_string(j) + " level " + std::to_string(config[j]) + " exceeds the basis dimension " +
                std::to_string(basis.d));
    std::vector<cplx> v(basis.d);
    v[config[j]] = 1.0;
    DenseTensor t({1, 1, basis.d}, std::move(v), ElementKind::real);
    const int right = left + q[config[j]][0];
    std::vector<ChargedIndex> ix{ChargedIndex::out({QN{left}}), ChargedIndex::in({QN{right}}), ChargedIndex::out(q)};
    psi.sites.push_back(detail::payload_node(t, "LRD", cfg.symmetric() ? &ix : nullptr, cfg, "product state"));
    left = right;
  }
  psi.schmidt.assign(config.size() - 1, {1.0});
  return psi;
}

enum class Sweep { left_to_right, right_to_left };

/// Gauge sweep by successive SVDs. Left-to-right leaves every site but the
/// last left-orthonormal; right-to-left the mirror image. Each bond's
/// spectrum goes to psi.schmidt.
inline void mps_canonicalize(MpsState& psi, Sweep dir, const SystemConfig& cfg = *default_config(),
                             const TruncationPolicy& policy = TruncationPolicy::exact()) {
  const auto L = psi.length();
  psi.schmidt.resize(L > 0 ? L - 1 : 0);
  if (dir == Sweep::left_to_right) {
    for (std::size_t j = 0; j + 1 < L; ++j) {
      auto svd = node_svd(node_copy(psi.sites[j]), "LD", {}, policy, cfg);
      { auto k = svd.spectrum.kept(); psi.schmidt[j].assign(k.begin(), k.end()); }
      psi.sites[j] = detail::detached(svd.u, "LRD", cfg);
      auto sv = contract_pair(svd.s, svd.vdag, {}, {}, cfg);
      auto next = node_copy(psi.sites[j + 1]);
      node_join(sv, 'R', next, 'L');
      psi.sites[j + 1] = detail::detached(contract_pair(sv, next, {}, {}, cfg), "LRD", cfg);
    }
  } else {
    for (std::size_t j = L; j-- > 1;) {
      auto svd = node_svd(node_copy(psi.sites[j]), "L", {}, policy, cfg);
      { auto k = svd.spectrum.kept(); psi.schmidt[j - 1].assign(k.begin(), k.end()); }
      psi.sites[j] = detail::detached(svd.vdag, "LRD", cfg);
      auto us = contract_pair(svd.u, svd.s, {}, {}, cfg);
      auto prev = node_copy(psi.sites[j - 1]);
      node_join(prev, 'R', us, 'L');
      psi.sites[j - 1] = detail::detached(contract_pair(prev, us, {}, {}, cfg), "LRD", cfg);
    }
  }
}

/// Scales the site with the orthogonality centre `centre` to unit norm.
inline void mps_normalize_centre(MpsState& psi, std::size_t centre, const SystemConfig& cfg = *default_config()) {
  const double n = detail::payload_norm(psi.sites[centre]);
  require(n > 0, ErrorKind::invalid_argument, "cannot normalize a zero state");
  node_scale(psi.sites[centre], 1.0 / n, cfg);
}

/// Random normalized state, right-canonical with the centre on site 0. With
/// a total charge every amplitude outside that sector is exactly zero, in
/// dense and symmetric mode alike.
inline MpsState mps_random(const BasisSpec& basis, std::size_t length, std::size_t chi, std::optional<int> total,
                           std::mt19937_64& rng, const SystemConfig& cfg = *default_config()) {
  require(length >= 1, ErrorKind::invalid_argument, "length must be positive");
  require(chi >= 1, ErrorKind::invalid_argument, "bond dimension must be positive");
  std::normal_distribution<double> normal;
  MpsState psi;
  psi.basis = basis;
  const auto d = basis.d;

  if (!total) {
    require(!cfg.symmetric(), ErrorKind::invalid_argument, "a symmetric random state needs a total charge");
    for (std::size_t j = 0; j < length; ++j) {
      const auto dl = std::min({chi, detail::saturating_pow(d, j, chi), detail::saturating_pow(d, length - j, chi)});
      const auto dr =
          std::min({chi, detail::saturating_pow(d, j + 1, chi), detail::saturating_pow(d, length - j - 1, chi)});
      std::vector<cplx> v(dl * dr * d);
      for (auto& x : v) x = normal(rng);
      psi.sites.push_back(node_create(DenseTensor({dl, dr, d}, std::move(v)), "LRD"));
    }
  } else {
    const int n = *total;
    require(n >= 0 && static_cast<std::size_t>(n) <= length * (d - 1), ErrorKind::infeasible_sector,
            "total charge " + std::to_string(n) + " is not reachable on " + std::to_string(length) +
                " sites of dimension " + std::to_string(d));
    const auto counts = detail::charge_counts(length, d);
    // Sector dimensions on each bond: as large as the Hilbert space allows,
    // then trimmed from the largest sector down to chi in total.
    std::vector<std::vector<QN>> bonds(length + 1);
    for (std::size_t b = 0; b <= length; ++b) {
      std::vector<std::pair<int, std::size_t>> dims;
      const auto& left = counts[b];
      const auto& right = counts[length - b];
      for (int q = 0; q < static_cast<int>(left.size()); ++q) {
        const int rest = n - q;
        if (rest < 0 || rest >= static_cast<int>(right.size()) || left[q] == 0 || right[rest] == 0) continue;
        const double m = std::min({left[q], right[rest], static_cast<double>(chi)});
        dims.emplace_back(q, static_cast<std::size_t>(m));
      }
      const double mean = static_cast<double>(n) * static_cast<double>(b) / static_cast<double>(length);
      std::size_t sum = 0;
      for (auto& [q, m] : dims) sum += m;
      while (sum > chi) {
        std::size_t pick = 0;
        for (std::size_t i = 1; i < dims.size(); ++i) {
          const bool larger = dims[i].second > dims[pick].second;
          const bool tie_farther = dims[i].second == dims[pick].second &&
                                   std::abs(dims[i].first - mean) > std::abs(dims[pick].first - mean);
          if (larger || tie_farther) pick = i;
        }
        --dims[pick].second;
        --sum;
      }
      for (auto& [q, m] : dims)
        for (std::size_t i = 0; i < m; ++i) bonds[b].push_back(QN{q});
      require(!bonds[b].empty(), ErrorKind::infeasible_sector, "no charge sector survives on bond " + std::to_string(b));
    }
    const auto phys = basis.charges();
    for (std::size_t j = 0; j < length; ++j) {
      BlockStructure s{{ChargedIndex::out(bonds[j]), ChargedIndex::in(bonds[j + 1]), ChargedIndex::out(phys)}, QN{0}};
      auto layout = cfg.blocks()->canonical(s);
      std::vector<cplx> v(layout->total);
      for (auto& x : v) x = normal(rng);
      BlockTensor t(std::move(s), std::move(v), cfg.blocks());
      if (cfg.symmetric())
        psi.sites.push_back(node_create(t, "LRD"));
      else
        psi.sites.push_back(node_create(densify(t), "LRD"));
    }
  }
  mps_canonicalize(psi, Sweep::left_to_right, cfg);
  mps_canonicalize(psi, Sweep::right_to_left, cfg);
  mps_normalize_centre(psi, 0, cfg);
  for (auto& s : psi.schmidt) {
    double nrm = 0;
    for (double x : s) nrm += x * x;
    nrm = std::sqrt(nrm);
    if (nrm > 0)
      for (double& x : s) x /= nrm;
  }
  return psi;
}

// ---------------------------------------------------------------- MPO

/// One- or two-site Hamiltonian term. `coef` has one entry per site for
/// one-site terms and one per bond for two-site terms.
struct HamiltonianTerm {
  std::vector<std::string> ops;
  std::vector<double> coef;
};

struct HamiltonianSpec {
  BasisSpec basis;
  std::size_t length = 0;
  std::vector<HamiltonianTerm> terms;
};

/// Jb sum (b^dag_j b_j+1 + h.c.) + Ub/2 sum n(n-1) + Eharm sum (j - jc)^2 n,
/// with 1-based j and jc defaulting to (L+1)/2 rounded down.
inline HamiltonianSpec bose_hubbard(std::size_t length, std::size_t n_max, double jb, double ub, double e_harm,
                                    std::optional<double> centre = std::nullopt) {
  require(length >= 1, ErrorKind::invalid_argument, "length must be positive");
  HamiltonianSpec h{boson_basis(n_max), length, {}};
  const std::size_t nb = length - 1;
  if (jb != 0.0 && nb > 0) {
    h.terms.push_back({{"bdag", "b"}, std::vector<double>(nb, jb)});
    h.terms.push_back({{"b", "bdag"}, std::vector<double>(nb, jb)});
  }
  if (ub != 0.0) h.terms.push_back({{"nn1"}, std::vector<double>(length, 0.5 * ub)});
  if (e_harm != 0.0) {
    const double jc = centre ? *centre : static_cast<double>((length + 1) / 2);
    std::vector<double> v(length);
    for (std::size_t j = 0; j < length; ++j) v[j] = e_harm * std::pow(static_cast<double>(j + 1) - jc, 2);
    h.terms.push_back({{"n"}, v});
  }
  return h;
}

/// Jxy/2 (S+S- + S-S+) + Jz SzSz on nearest neighbours; Jxy = Jz is Heisenberg.
inline HamiltonianSpec xxz_chain(std::size_t length, double spin, double jxy, double jz) {
  require(length >= 1, ErrorKind::invalid_argument, "length must be positive");
  HamiltonianSpec h{spin_basis(spin), length, {}};
  const std::size_t nb = length - 1;
  if (nb == 0) return h;
  if (jxy != 0.0) {
    h.terms.push_back({{"Sp", "Sm"}, std::vector<double>(nb, 0.5 * jxy)});
    h.terms.push_back({{"Sm", "Sp"}, std::vector<double>(nb, 0.5 * jxy)});
  }
  if (jz != 0.0) h.terms.push_back({{"Sz", "Sz"}, std::vector<double>(nb, jz)});
  return h;
}

namespace detail {

inline void check_terms(const HamiltonianSpec& h) {
  require(h.length >= 1, ErrorKind::invalid_argument, "Hamiltonian length must be positive");
  for (const auto& t : h.terms) {
    require(t.ops.size() == 1 || t.ops.size() == 2, ErrorKind::unsupported_term,
            "terms act on one or two neighbouring sites, got arity " + std::to_string(t.ops.size()));
    const auto need = t.ops.size() == 1 ? h.length : h.length - 1;
    require(t.coef.size() == need, ErrorKind::invalid_argument,
            "term needs " + std::to_string(need) + " coefficients, got " + std::to_string(t.coef.size()));
  }
}

inline DenseTensor operator_tensor(const Matrix& m) {
  return DenseTensor({static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())},
                     std::vector<cplx>(m.data(), m.data() + m.size()));
}

inline QN shift_of(const Matrix& m, const std::vector<QN>& q) {
  return operator_charge_shift(operator_tensor(m), {ChargedIndex::out(q), ChargedIndex::in(q)});
}

}  // namespace detail

/// Operator nodes have legs L, R, U, D; U joins a ket's D.
struct MpoOperator {
  std::vector<Node> sites;
  std::size_t bond_dim = 1;
  BasisSpec basis;
  std::size_t length() const { return sites.size(); }
};

/// Lower-triangular finite-state-machine MPO. Bond index 0 is "done", the
/// last is "not started", and each distinct left operator of a two-site
/// term opens one channel in between.
inline MpoOperator mpo_build(const HamiltonianSpec& h, const SystemConfig& cfg = *default_config()) {
  detail::check_terms(h);
  const auto L = h.length;
  const auto d = static_cast<Eigen::Index>(h.basis.d);
  std::vector<std::string> channels;
  for (const auto& t : h.terms)
    if (t.ops.size() == 2 && std::find(channels.begin(), channels.end(), t.ops[0]) == channels.end())
      channels.push_back(t.ops[0]);
  const std::size_t D = channels.size() + 2, start = D - 1;
  const auto q = h.basis.charges();
  std::vector<QN> bond_labels(D, QN{0});
  if (cfg.symmetric())
    for (std::size_t c = 0; c < channels.size(); ++c) bond_labels[c + 1] = detail::shift_of(site_operator(h.basis, channels[c]), q);

  MpoOperator mpo;
  mpo.bond_dim = D;
  mpo.basis = h.basis;
  for (std::size_t j = 0; j < L; ++j) {
    std::vector<std::vector<Matrix>> w(D, std::vector<Matrix>(D, Matrix::Zero(d, d)));
    w[0][0] = Matrix::Identity(d, d);
    w[start][start] = Matrix::Identity(d, d);
    for (const auto& t : h.terms) {
      if (t.ops.size() == 1) {
        w[start][0] += t.coef[j] * site_operator(h.basis, t.ops[0]);
        continue;
      }
      const auto c = 1 + static_cast<std::size_t>(std::find(channels.begin(), channels.end(), t.ops[0]) - channels.begin());
      if (j + 1 < L) w[start][c] = site_operator(h.basis, t.ops[0]);
      if (j > 0) w[c][0] += t.coef[j - 1] * site_operator(h.basis, t.ops[1]);
    }
    const std::size_t a0 = j == 0 ? start : 0, a1 = j == 0 ? start + 1 : D;
    const std::size_t b0 = 0, b1 = j + 1 == L ? 1 : D;
    const std::size_t dl = a1 - a0, dr = b1 - b0, dd = h.basis.d;
    std::vector<cplx> v(dl * dr * dd * dd);
    for (std::size_t a = a0; a < a1; ++a)
      for (std::size_t b = b0; b < b1; ++b)
        for (std::size_t u = 0; u < dd; ++u)
          for (std::size_t o = 0; o < dd; ++o)
            v[(((a - a0) * dr + (b - b0)) * dd + u) * dd + o] = w[a][b](Eigen::Index(o), Eigen::Index(u));
    std::vector<QN> left(bond_labels.begin() + a0, bond_labels.begin() + a1);
    std::vector<QN> right(bond_labels.begin() + b0, bond_labels.begin() + b1);
    std::vector<ChargedIndex> ix{ChargedIndex::out(left), ChargedIndex::in(right), ChargedIndex::in(q),
                                 ChargedIndex::out(q)};
    mpo.sites.push_back(
        detail::payload_node(DenseTensor({dl, dr, dd, dd}, std::move(v)), "LRUD", cfg.symmetric() ? &ix : nullptr, cfg, "Hamiltonian"));
  }
  return mpo;
}

inline MpoOperator mpo_identity(const BasisSpec& basis, std::size_t length, const SystemConfig& cfg = *default_config()) {
  MpoOperator mpo;
  mpo.basis = basis;
  const auto d = basis.d;
  const auto q = basis.charges();
  for (std::size_t j = 0; j < length; ++j) {
    std::vector<cplx> v(d * d);
    for (std::size_t k = 0; k < d; ++k) v[k * d + k] = 1.0;
    std::vector<ChargedIndex> ix{ChargedIndex::out({QN{0}}), ChargedIndex::in({QN{0}}), ChargedIndex::in(q),
                                 ChargedIndex::out(q)};
    mpo.sites.push_back(detail::payload_node(DenseTensor({1, 1, d, d}, std::move(v)), "LRUD",
                                             cfg.symmetric() ? &ix : nullptr, cfg, "identity"));
  }
  return mpo;
}

/// Full operator matrix, for small chains.
inline Matrix mpo_dense(const MpoOperator& mpo) {
  std::vector<Matrix> acc{Matrix::Identity(1, 1)};
  for (const auto& w : mpo.sites) {
    auto t = node_dense(detail::detached(w, "LRUD", *default_config()));
    const auto dl = t.dims()[0], dr = t.dims()[1], d = t.dims()[2];
    const auto n = acc.front().rows();
    std::vector<Matrix> next(dr, Matrix::Zero(n * Eigen::Index(d), n * Eigen::Index(d)));
    for (std::size_t a = 0; a < dl; ++a)
      for (std::size_t b = 0; b < dr; ++b) {
        Matrix op(d, d);
        for (std::size_t u = 0; u < d; ++u)
          for (std::size_t o = 0; o < d; ++o) op(Eigen::Index(o), Eigen::Index(u)) = t.at({a, b, u, o});
        if (op.isZero(0.0)) continue;
        next[b] += Eigen::kroneckerProduct(acc[a], op).eval();
      }
    acc = std::move(next);
  }
  return acc.front();
}

/// Two-site bond Hamiltonians for Trotter gates. One-site terms are shared
/// between the two bonds touching a site (all of it on the chain ends).
inline std::vector<Matrix> bond_hamiltonians(const HamiltonianSpec& h) {
  detail::check_terms(h);
  const auto L = h.length;
  require(L >= 2, ErrorKind::invalid_argument, "bond Hamiltonians need at least two sites");
  const auto d = static_cast<Eigen::Index>(h.basis.d);
  const Matrix id = Matrix::Identity(d, d);
  std::vector<Matrix> out(L - 1, Matrix::Zero(d * d, d * d));
  for (const auto& t : h.terms) {
    if (t.ops.size() == 2) {
      const Matrix a = site_operator(h.basis, t.ops[0]), b = site_operator(h.basis, t.ops[1]);
      for (std::size_t j = 0; j + 1 < L; ++j) out[j] += t.coef[j] * Eigen::kroneckerProduct(a, b).eval();
      continue;
    }
    const Matrix o = site_operator(h.basis, t.ops[0]);
    for (std::size_t j = 0; j < L; ++j) {
      const double left_share = j == 0 ? 0.0 : (j + 1 == L ? 1.0 : 0.5);
      if (j > 0) out[j - 1] += left_share * t.coef[j] * Eigen::kroneckerProduct(id, o).eval();
      if (j + 1 < L) out[j] += (1.0 - left_share) * t.coef[j] * Eigen::kroneckerProduct(o, id).eval();
    }
  }
  return out;
}

// ---------------------------------------------------------------- environments

namespace detail {

/// Boundary node of ones with the given legs. In symmetric mode each leg
/// gets the flipped index of the leg it will join.
inline Node boundary(std::string_view labels, const std::vector<std::optional<ChargedIndex>>& joins,
                     const SystemConfig& cfg) {
  DenseTensor t(Dims(labels.size(), 1), {cplx{1.0}});
  bool block = true;
  for (const auto& j : joins) block = block && j.has_value();
  if (!block) return node_create(t, labels);
  std::vector<ChargedIndex> ix;
  for (const auto& j : joins) ix.push_back(j->flipped());
  auto r = impose_symmetry(t, ix, QN::zero(ix.front().labels[0].m), cfg.blocks());
  require(r.discarded_weight == 0.0, ErrorKind::not_covariant, "boundary charges do not balance");
  return node_create(r.tensor, labels);
}

inline std::optional<ChargedIndex> conj_charges(const Node& n, char label) {
  auto ix = leg_charges(n, label);
  if (ix) return ix->flipped();
  return ix;
}

}  // namespace detail

/// Left environment with legs R (ket), S (operator), T (bra) for the empty
/// left part of a chain whose first sites are `a` and `o`.
inline Node left_mpo_boundary(const Node& a, const Node& o, const SystemConfig& cfg) {
  return detail::boundary("RST", {leg_charges(a, 'L'), leg_charges(o, 'L'), detail::conj_charges(a, 'L')}, cfg);
}

inline Node right_mpo_boundary(const Node& a, const Node& o, const SystemConfig& cfg) {
  return detail::boundary("LSN", {leg_charges(a, 'R'), leg_charges(o, 'R'), detail::conj_charges(a, 'R')}, cfg);
}

/// Extends a left environment (R, S, T) by one column ket-operator-bra.
inline Node left_mpo_step(const Node& env, const Node& site, const Node& op, const SystemConfig& cfg) {
  auto e = node_copy(env), a = node_copy(site), o = node_copy(op), b = node_copy(site, true);
  node_join(e, 'R', a, 'L');
  node_join(e, 'S', o, 'L');
  node_join(e, 'T', b, 'L');
  node_join(a, 'D', o, 'U');
  node_join(o, 'D', b, 'D');
  return contract_list("RST", {e, a, o, b}, cfg);
}

inline Node right_mpo_step(const Node& env, const Node& site, const Node& op, const SystemConfig& cfg) {
  auto e = node_copy(env), a = node_copy(site), o = node_copy(op), b = node_copy(site, true);
  node_join(e, 'L', a, 'R');
  node_join(e, 'S', o, 'R');
  node_join(e, 'N', b, 'R');
  node_join(a, 'D', o, 'U');
  node_join(o, 'D', b, 'D');
  return contract_list("LSN", {e, a, o, b}, cfg);
}

namespace detail {

/// Sum over all elements of the product of two equally shaped environments.
inline cplx close_envs(const Node& left, std::string_view left_order, const Node& right, std::string_view right_order,
                       const SystemConfig& cfg) {
  auto l = node_dense(detached(left, left_order, cfg));
  auto r = node_dense(detached(right, right_order, cfg));
  require(l.dims() == r.dims(), ErrorKind::incompatible_legs, "environments do not match");
  cplx s{};
  for (std::size_t i = 0; i < l.size(); ++i) s += l.values()[i] * r.values()[i];
  return s;
}

}  // namespace detail

// ---------------------------------------------------------------- sandwich and Heff

/// The three-layer network ket / operator / conjugate ket.
struct Sandwich {
  Network net;
  std::vector<Node> ket, mpo, bra;
};

inline Sandwich mps_mpo_mps_connect(const MpsState& psi, const MpoOperator& h) {
  require(psi.length() == h.length(), ErrorKind::invalid_argument,
          "state has " + std::to_string(psi.length()) + " sites, operator " + std::to_string(h.length()));
  Sandwich s;
  const auto L = psi.length();
  for (std::size_t j = 0; j < L; ++j) {
    require(psi.sites[j]->leg_dim('D') == h.sites[j]->leg_dim('U'), ErrorKind::invalid_argument,
            "physical dimensions differ on site " + std::to_string(j));
    s.ket.push_back(node_copy(psi.sites[j]));
    s.mpo.push_back(node_copy(h.sites[j]));
    s.bra.push_back(node_copy(psi.sites[j], true));
    node_join(s.ket[j], 'D', s.mpo[j], 'U');
    node_join(s.mpo[j], 'D', s.bra[j], 'D');
    if (j > 0) {
      node_join(s.ket[j - 1], 'R', s.ket[j], 'L');
      node_join(s.mpo[j - 1], 'R', s.mpo[j], 'L');
      node_join(s.bra[j - 1], 'R', s.bra[j], 'L');
    }
    s.net.adopt(s.ket[j]);
    s.net.adopt(s.mpo[j]);
    s.net.adopt(s.bra[j]);
  }
  s.net.set_first(s.ket.front());
  s.net.set_last(s.ket.back());
  return s;
}

/// <psi|H|psi> of a sandwich, contracted column by column on copies.
inline cplx sandwich_value(const Sandwich& s, const SystemConfig& cfg = *default_config()) {
  const auto L = s.ket.size();
  auto env = left_mpo_boundary(s.ket[0], s.mpo[0], cfg);
  for (std::size_t j = 0; j < L; ++j) env = left_mpo_step(env, s.ket[j], s.mpo[j], cfg);
  auto right = right_mpo_boundary(s.ket[L - 1], s.mpo[L - 1], cfg);
  return detail::close_envs(env, "RST", right, "LSN", cfg);
}

/// Everything but the site tensor: left block (R, S, T), the site's
/// operator (L, R, U, D) and right block (L, S, N).
struct EffectiveHamiltonian {
  Node beta, op, gamma;
};

inline EffectiveHamiltonian heff_prepare(const Sandwich& s, std::size_t site, const SystemConfig& cfg = *default_config()) {
  const auto L = s.ket.size();
  require(site < L, ErrorKind::invalid_argument, "site " + std::to_string(site) + " out of range");
  auto beta = left_mpo_boundary(s.ket[0], s.mpo[0], cfg);
  for (std::size_t j = 0; j < site; ++j) beta = left_mpo_step(beta, s.ket[j], s.mpo[j], cfg);
  auto gamma = right_mpo_boundary(s.ket[L - 1], s.mpo[L - 1], cfg);
  for (std::size_t j = L - 1; j > site; --j) gamma = right_mpo_step(gamma, s.ket[j], s.mpo[j], cfg);
  return {beta, node_copy(s.mpo[site]), gamma};
}

/// Heff applied to a site tensor; the result has A's legs L, R, D.
inline Node heff_contract(const Node& a_in, const EffectiveHamiltonian& h, const SystemConfig& cfg = *default_config()) {
  auto a = node_copy(resolve(a_in)), beta = node_copy(h.beta), o = node_copy(h.op), gamma = node_copy(h.gamma);
  node_join(a, 'L', beta, 'R');
  node_join(a, 'R', gamma, 'L');
  node_join(a, 'D', o, 'U');
  node_join(beta, 'S', o, 'L');
  node_join(o, 'R', gamma, 'S');
  auto r = contract_list("LDR", {beta, a, o, gamma}, cfg);
  node_reorder(r, "LRD", cfg);
  return r;
}

// ---------------------------------------------------------------- overlaps and observables

namespace detail {

/// Overlap-type environment step. `env` has legs R (ket), T (bra) and maybe
/// X; `op` (legs D, U and maybe X) sits between ket and bra. An X on both
/// sides is contracted.
inline Node overlap_left(const Node& env, const Node& site, const Node* op, const SystemConfig& cfg) {
  auto e = node_copy(env), a = node_copy(site), b = node_copy(site, true);
  node_join(e, 'R', a, 'L');
  node_join(e, 'T', b, 'L');
  std::vector<Node> nodes{e, a};
  const bool ex = e->find_leg('X').has_value();
  bool ox = false;
  if (op) {
    auto o = node_copy(*op);
    ox = o->find_leg('X').has_value();
    node_join(a, 'D', o, 'U');
    node_join(o, 'D', b, 'D');
    if (ex && ox) node_join(e, 'X', o, 'X');
    nodes.push_back(o);
  } else {
    node_join(a, 'D', b, 'D');
  }
  nodes.push_back(b);
  std::string out;
  if (ex && !ox) out += 'X';
  out += 'R';
  if (ox && !ex) out += 'X';
  out += 'T';
  auto r = contract_list(out, nodes, cfg);
  if (r->legs.size() == 3) node_reorder(r, "RTX", cfg);
  return r;
}

inline Node overlap_right(const Node& env, const Node& site, const SystemConfig& cfg) {
  auto e = node_copy(env), a = node_copy(site), b = node_copy(site, true);
  node_join(e, 'L', a, 'R');
  node_join(e, 'N', b, 'R');
  node_join(a, 'D', b, 'D');
  return contract_list("LN", {e, a, b}, cfg);
}

inline Node overlap_left_boundary(const Node& a, const SystemConfig& cfg) {
  return boundary("RT", {leg_charges(a, 'L'), conj_charges(a, 'L')}, cfg);
}

inline Node overlap_right_boundary(const Node& a, const SystemConfig& cfg) {
  return boundary("LN", {leg_charges(a, 'R'), conj_charges(a, 'R')}, cfg);
}

/// Right overlap environments: result[j] covers sites j..L-1 (result[L] is the boundary).
inline std::vector<Node> right_overlaps(const MpsState& psi, const SystemConfig& cfg) {
  const auto L = psi.length();
  std::vector<Node> r(L + 1);
  r[L] = overlap_right_boundary(psi.sites[L - 1], cfg);
  for (std::size_t j = L; j-- > 0;) r[j] = overlap_right(r[j + 1], psi.sites[j], cfg);
  return r;
}

/// Operator node between ket and bra. `singleton` adds a leg X carrying the
/// operator's charge shift: incoming for an operator that opens a string,
/// outgoing for one that closes it.
inline Node operator_node(const Matrix& m, const MpsState& psi, std::optional<Direction> singleton,
                          const SystemConfig& cfg) {
  const auto d = static_cast<std::size_t>(m.rows());
  require(m.rows() == m.cols() && psi.sites.front()->leg_dim('D') == d, ErrorKind::invalid_argument,
          "operator dimension does not match the physical dimension");
  std::vector<cplx> v(m.data(), m.data() + m.size());
  const auto q = leg_charges(psi.sites.front(), 'D');
  if (!singleton) {
    DenseTensor t({d, d}, std::move(v));
    if (!q) return node_create(t, "DU");
    std::vector<ChargedIndex> ix{*q, q->flipped()};
    return payload_node(t, "DU", &ix, cfg, "operator");
  }
  DenseTensor t({d, d, 1}, std::move(v));
  if (!q) return node_create(t, "DUX");
  const auto delta = operator_charge_shift(operator_tensor(m), {*q, q->flipped()});
  const ChargedIndex x = *singleton == Direction::incoming ? ChargedIndex::in({delta}) : ChargedIndex::out({-delta});
  std::vector<ChargedIndex> ix{*q, q->flipped(), x};
  return payload_node(t, "DUX", &ix, cfg, "operator");
}

inline cplx close_overlap(const Node& left, const Node& right, const SystemConfig& cfg) {
  return close_envs(left, "RT", right, "LN", cfg);
}

}  // namespace detail

inline double mps_norm_squared(const MpsState& psi, const SystemConfig& cfg = *default_config()) {
  auto e = detail::overlap_left_boundary(psi.sites.front(), cfg);
  for (const auto& s : psi.sites) e = detail::overlap_left(e, s, nullptr, cfg);
  return detail::close_overlap(e, detail::overlap_right_boundary(psi.sites.back(), cfg), cfg).real();
}

/// <psi|H|psi> / <psi|psi>.
inline double mps_energy(const MpsState& psi, const MpoOperator& h, const SystemConfig& cfg = *default_config()) {
  return sandwich_value(mps_mpo_mps_connect(psi, h), cfg).real() / mps_norm_squared(psi, cfg);
}

/// <o_j> / <psi|psi> for every site.
inline std::vector<cplx> expectation_single(const MpsState& psi, const Matrix& op,
                                            const SystemConfig& cfg = *default_config()) {
  const auto L = psi.length();
  const auto right = detail::right_overlaps(psi, cfg);
  const auto o = detail::operator_node(op, psi, std::nullopt, cfg);
  auto e = detail::overlap_left_boundary(psi.sites.front(), cfg);
  std::vector<cplx> out(L);
  const double norm = detail::close_overlap(e, right[0], cfg).real();
  for (std::size_t j = 0; j < L; ++j) {
    out[j] = detail::close_overlap(detail::overlap_left(e, psi.sites[j], &o, cfg), right[j + 1], cfg) / norm;
    e = detail::overlap_left(e, psi.sites[j], nullptr, cfg);
  }
  return out;
}

/// rho_ij = <a_i b_j> / <psi|psi> for all pairs; the diagonal is <(a b)_i>.
/// Each row reuses the partial contraction left of its first operator.
inline Matrix expectation_all_pairs(const MpsState& psi, const Matrix& a, const Matrix& b,
                                    const SystemConfig& cfg = *default_config()) {
  const auto L = psi.length();
  const auto right = detail::right_overlaps(psi, cfg);
  Matrix rho = Matrix::Zero(Eigen::Index(L), Eigen::Index(L));
  const Matrix ab = a * b;
  const auto diag = detail::operator_node(ab, psi, std::nullopt, cfg);
  const auto a_open = detail::operator_node(a, psi, Direction::incoming, cfg);
  const auto b_open = detail::operator_node(b, psi, Direction::incoming, cfg);
  const auto a_close = detail::operator_node(a, psi, Direction::outgoing, cfg);
  const auto b_close = detail::operator_node(b, psi, Direction::outgoing, cfg);
  auto e = detail::overlap_left_boundary(psi.sites.front(), cfg);
  const double norm = detail::close_overlap(e, right[0], cfg).real();
  for (std::size_t i = 0; i < L; ++i) {
    const auto I = Eigen::Index(i);
    rho(I, I) = detail::close_overlap(detail::overlap_left(e, psi.sites[i], &diag, cfg), right[i + 1], cfg) / norm;
    // a on i then b on j > i, and b on i then a on j > i.
    auto ea = detail::overlap_left(e, psi.sites[i], &a_open, cfg);
    auto eb = detail::overlap_left(e, psi.sites[i], &b_open, cfg);
    for (std::size_t j = i + 1; j < L; ++j) {
      const auto J = Eigen::Index(j);
      rho(I, J) = detail::close_overlap(detail::overlap_left(ea, psi.sites[j], &b_close, cfg), right[j + 1], cfg) / norm;
      rho(J, I) = detail::close_overlap(detail::overlap_left(eb, psi.sites[j], &a_close, cfg), right[j + 1], cfg) / norm;
      if (j + 1 < L) {
        ea = detail::overlap_left(ea, psi.sites[j], nullptr, cfg);
        eb = detail::overlap_left(eb, psi.sites[j], nullptr, cfg);
      }
    }
    e = detail::overlap_left(e, psi.sites[i], nullptr, cfg);
  }
  return rho;
}

/// Full amplitude vector (first site most significant), for small chains.
inline Vector mps_amplitudes(const MpsState& psi) {
  Matrix acc = Matrix::Ones(1, 1);  // rows: basis strings so far, cols: right bond
  for (const auto& s : psi.sites) {
    auto t = node_dense(detail::detached(s, "LRD", *default_config()));
    const auto dl = t.dims()[0], dr = t.dims()[1], d = t.dims()[2];
    Matrix next = Matrix::Zero(acc.rows() * Eigen::Index(d), Eigen::Index(dr));
    for (Eigen::Index r = 0; r < acc.rows(); ++r)
      for (std::size_t k = 0; k < d; ++k)
        for (std::size_t y = 0; y < dr; ++y) {
          cplx v{};
          for (std::size_t x = 0; x < dl; ++x) v += acc(r, Eigen::Index(x)) * t.at({x, y, k});
          next(r * Eigen::Index(d) + Eigen::Index(k), Eigen::Index(y)) = v;
        }
    acc = std::move(next);
  }
  return acc.col(0);
}

}  // namespace tnt
