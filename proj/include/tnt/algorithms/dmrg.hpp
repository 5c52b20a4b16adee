#pragma once

// Single-site DMRG with cached environments and bidirectional sweeps.

#include <chrono>
#include <cmath>
#include <sstream>

#include "tnt/mps.hpp"

namespace tnt {

namespace detail {

/// Flat payload of a node whose legs are in storage order.
inline Vector node_vector(const Node& n) {
  const auto& p = n->payload();
  if (std::holds_alternative<BlockTensor>(p)) {
    const auto& d = std::get<BlockTensor>(p).data();
    return Eigen::Map<const Vector>(d.data(), Eigen::Index(d.size()));
  }
  const auto& t = std::get<DenseTensor>(p);
  return Eigen::Map<const Vector>(t.data(), Eigen::Index(t.size()));
}

/// Node like `like` (same legs and structure) holding v.
inline Node node_with_vector(const Node& like, const Vector& v, const SystemConfig& cfg) {
  auto n = node_copy(like);
  std::vector<cplx> data(v.data(), v.data() + v.size());
  const auto& p = like->payload();
  if (std::holds_alternative<BlockTensor>(p))
    n->set_payload(Payload(BlockTensor(std::get<BlockTensor>(p).structure(), std::move(data), cfg.blocks())));
  else
    n->set_payload(Payload(DenseTensor(std::get<DenseTensor>(p).dims(), std::move(data))));
  return n;
}

inline Vector heff_apply(const EffectiveHamiltonian& h, const Node& like, const Vector& v, const SystemConfig& cfg) {
  auto out = heff_contract(node_with_vector(like, v, cfg), h, cfg);
  if (out->is_block() && like->is_block())
    require(std::get<BlockTensor>(out->payload()).structure() == std::get<BlockTensor>(like->payload()).structure(),
            ErrorKind::incompatible_blocks, "effective Hamiltonian changed the site tensor's charge structure");
  return node_vector(out);
}


/// Concatenation of a and b along `axis`; all other dims must agree.
inline DenseTensor concat_axis(const DenseTensor& a, const DenseTensor& b, std::size_t axis) {
  auto da = a.dims(), db = b.dims();
  require(da.size() == db.size() && axis < da.size(), ErrorKind::invalid_argument, "rank mismatch in concatenation");
  for (std::size_t k = 0; k < da.size(); ++k)
    require(k == axis || da[k] == db[k], ErrorKind::incompatible_legs, "dims differ off the concatenation axis");
  std::size_t outer = 1, inner = 1;
  for (std::size_t k = 0; k < axis; ++k) outer *= da[k];
  for (std::size_t k = axis + 1; k < da.size(); ++k) inner *= da[k];
  const auto na = da[axis] * inner, nb = db[axis] * inner;
  std::vector<cplx> v;
  v.reserve(a.size() + b.size());
  for (std::size_t o = 0; o < outer; ++o) {
    v.insert(v.end(), a.values().begin() + std::ptrdiff_t(o * na), a.values().begin() + std::ptrdiff_t((o + 1) * na));
    v.insert(v.end(), b.values().begin() + std::ptrdiff_t(o * nb), b.values().begin() + std::ptrdiff_t((o + 1) * nb));
  }
  auto dims = da;
  dims[axis] += db[axis];
  return DenseTensor(dims, std::move(v));
}

/// Labels, in direction `dir`, of the row-major pairs of x and y whose net
/// charge is `sign` times theirs.
inline std::vector<QN> fused_labels(const ChargedIndex& x, const ChargedIndex& y, Direction dir, int sign_) {
  std::vector<QN> out;
  for (const auto& a : x.labels)
    for (const auto& b : y.labels) {
      auto net = a.scaled(sign(x.direction)) + b.scaled(sign(y.direction));
      out.push_back(net.scaled(sign_ * sign(dir)));
    }
  return out;
}

inline Node rebuilt(const DenseTensor& t, const Node& like, std::optional<std::pair<std::size_t, std::vector<QN>>> extra,
                    const SystemConfig& cfg) {
  if (!like->is_block()) return node_create(t, "LRD");
  const auto& b = std::get<BlockTensor>(like->payload());
  auto ix = b.structure().indices;
  auto& grown = ix[extra->first];
  grown.labels.insert(grown.labels.end(), extra->second.begin(), extra->second.end());
  auto r = impose_symmetry(t, ix, b.flux(), cfg.blocks());
  require(r.discarded_weight <= 1e-10 * std::max(1.0, t.frobenius_norm()), ErrorKind::not_covariant,
          "subspace expansion broke the charge structure");
  return node_create(r.tensor, "LRD");
}

/// Enlarges the bond between site j and its neighbour in `dir` by
/// alpha * (environment . A_j . W_j) on A_j and zeros on the neighbour. The
/// state is unchanged; the following truncated SVD picks the new basis.
inline void expand_bond(MpsState& psi, std::size_t j, Sweep dir, const EffectiveHamiltonian& h, double alpha,
                        const SystemConfig& cfg) {
  const bool lr = dir == Sweep::left_to_right;
  const std::size_t nb = lr ? j + 1 : j - 1;
  auto a = node_copy(psi.sites[j]), o = node_copy(h.op);
  Node p;
  if (lr) {
    auto e = node_copy(h.beta);
    node_join(e, 'R', a, 'L');
    node_join(e, 'S', o, 'L');
    node_join(a, 'D', o, 'U');
    p = contract_list("LRSD", {e, a, o}, cfg);
  } else {
    auto e = node_copy(h.gamma);
    node_join(a, 'R', e, 'L');
    node_join(o, 'R', e, 'S');
    node_join(a, 'D', o, 'U');
    p = contract_list("LSDR", {a, o, e}, cfg);
    node_reorder(p, "LSRD", cfg);
  }
  const char grow = lr ? 'R' : 'L';
  const auto pd = node_dense(p);
  const auto dims = pd.dims();
  std::vector<cplx> pv(pd.values().begin(), pd.values().end());
  for (auto& x : pv) x *= alpha;
  // Merge the two adjacent bond axes of P into one.
  const std::size_t axis = lr ? 1 : 0;
  Dims merged = lr ? Dims{dims[0], dims[1] * dims[2], dims[3]} : Dims{dims[0] * dims[1], dims[2], dims[3]};
  DenseTensor pm(merged, std::move(pv));

  const auto ad = node_dense(psi.sites[j]);
  const auto bd = node_dense(psi.sites[nb]);
  const std::size_t extra = merged[axis];
  Dims zd = bd.dims();
  const std::size_t baxis = lr ? 0 : 1;
  zd[baxis] = extra;
  const auto na = concat_axis(ad, pm, axis);
  const auto nbt = concat_axis(bd, DenseTensor::zeros(zd), baxis);

  std::optional<std::pair<std::size_t, std::vector<QN>>> ea, eb;
  if (psi.symmetric()) {
    const auto px = *leg_charges(p, grow), ps = *leg_charges(p, 'S');
    const auto ia = *leg_charges(psi.sites[j], grow);
    const auto ib = *leg_charges(psi.sites[nb], lr ? 'L' : 'R');
    ea.emplace(axis, fused_labels(px, ps, ia.direction, 1));
    eb.emplace(baxis, fused_labels(px, ps, ib.direction, -1));
  }
  psi.sites[j] = rebuilt(na, psi.sites[j], ea, cfg);
  psi.sites[nb] = rebuilt(nbt, psi.sites[nb], eb, cfg);
}

}  // namespace detail

struct DmrgOptions {
  std::size_t chi = 100;
  double precision = 1e-4;
  std::size_t max_sweeps = 50;
  // Subspace expansion weight for the first sweep, scaled by expansion_decay
  // each sweep; 0 gives plain single-site updates.
  double expansion = 1e-3;
  double expansion_decay = 0.5;
};

struct DmrgReport {
  std::vector<double> energy_per_sweep;  // entry 0 is the starting energy
  std::vector<double> delta_energy;      // |E_{s-1} - E_s| for s >= 1
  std::vector<double> truncation_error;  // largest SVD truncation error in each sweep
  std::size_t sweeps_run = 0;
  bool converged = false;
  MpsState final_state;
};

/// Cached left (R, S, T) and right (L, S, N) blocks for every site.
class DmrgEnvironments {
 public:
  DmrgEnvironments(const MpsState& psi, const MpoOperator& h, const SystemConfig& cfg)
      : h_(h), cfg_(cfg), left_(psi.length()), right_(psi.length()) {
    const auto L = psi.length();
    left_[0] = left_mpo_boundary(psi.sites[0], h.sites[0], cfg);
    right_[L - 1] = right_mpo_boundary(psi.sites[L - 1], h.sites[L - 1], cfg);
    for (std::size_t j = L - 1; j > 0; --j) update_right(psi, j);
  }

  /// Left block of site j+1 from that of j and the new site j tensor.
  void update_left(const MpsState& psi, std::size_t j) {
    left_[j + 1] = left_mpo_step(left_[j], psi.sites[j], h_.sites[j], cfg_);
  }
  void update_right(const MpsState& psi, std::size_t j) {
    right_[j - 1] = right_mpo_step(right_[j], psi.sites[j], h_.sites[j], cfg_);
  }

  EffectiveHamiltonian heff(std::size_t j) const { return {left_[j], h_.sites[j], right_[j]}; }

  double energy(const MpsState& psi, std::size_t j) const {
    auto e = left_mpo_step(left_[j], psi.sites[j], h_.sites[j], cfg_);
    return detail::close_envs(e, "RST", right_[j], "LSN", cfg_).real();
  }

 private:
  const MpoOperator& h_;
  const SystemConfig& cfg_;
  std::vector<Node> left_, right_;
};

namespace detail {

/// Splits site j and moves the orthogonality centre one site in `dir`.
inline double shift_centre(MpsState& psi, std::size_t j, Sweep dir, const TruncationPolicy& policy,
                           const SystemConfig& cfg) {
  if (dir == Sweep::left_to_right) {
    auto svd = node_svd(node_copy(psi.sites[j]), "LD", {}, policy, cfg);
    auto k = svd.spectrum.kept();
    psi.schmidt[j].assign(k.begin(), k.end());
    psi.sites[j] = detached(svd.u, "LRD", cfg);
    auto sv = contract_pair(svd.s, svd.vdag, {}, {}, cfg);
    auto next = node_copy(psi.sites[j + 1]);
    node_join(sv, 'R', next, 'L');
    psi.sites[j + 1] = detached(contract_pair(sv, next, {}, {}, cfg), "LRD", cfg);
    return svd.spectrum.truncation_error;
  }
  auto svd = node_svd(node_copy(psi.sites[j]), "L", {}, policy, cfg);
  auto k = svd.spectrum.kept();
  psi.schmidt[j - 1].assign(k.begin(), k.end());
  psi.sites[j] = detached(svd.vdag, "LRD", cfg);
  auto us = contract_pair(svd.u, svd.s, {}, {}, cfg);
  auto prev = node_copy(psi.sites[j - 1]);
  node_join(prev, 'R', us, 'L');
  psi.sites[j - 1] = detached(contract_pair(prev, us, {}, {}, cfg), "LRD", cfg);
  return svd.spectrum.truncation_error;
}

}  // namespace detail

/// Ground state by alternating single-site minimization. A sweep runs left
/// to right over sites 0..L-2 and back over L-1..1; it stops once the energy
/// change of a sweep drops below `precision` or after `max_sweeps` sweeps.
inline DmrgReport dmrg_ground_state(const MpoOperator& h, MpsState psi, const DmrgOptions& opt,
                                    const SystemConfig& cfg = *default_config()) {
  const auto L = psi.length();
  require(L >= 1 && L == h.length(), ErrorKind::invalid_argument,
          "state has " + std::to_string(L) + " sites, Hamiltonian " + std::to_string(h.length()));
  require(opt.chi >= 1 && opt.max_sweeps >= 1, ErrorKind::invalid_argument, "chi and max_sweeps must be positive");
  const auto policy = cfg.truncation(opt.chi);

  mps_canonicalize(psi, Sweep::right_to_left, cfg);
  mps_normalize_centre(psi, 0, cfg);
  DmrgEnvironments env(psi, h, cfg);

  DmrgReport rep;
  rep.energy_per_sweep.push_back(env.energy(psi, 0));
  diag("dmrg: initial energy " + format_g(rep.energy_per_sweep.back()));

  std::size_t sweep = 0;
  auto optimize = [&](std::size_t j) {
    const auto heff = env.heff(j);
    const auto like = psi.sites[j];
    try {
      auto r = min_site_eigen(
          detail::node_vector(like), [&](const Vector& v) { return detail::heff_apply(heff, like, v, cfg); },
          cfg.eigensolver());
      psi.sites[j] = detail::node_with_vector(like, r.eigenvector, cfg);
      return r.eigenvalue;
    } catch (const ConvergenceError& e) {
      throw ConvergenceError("sweep " + std::to_string(sweep + 1) + ", site " + std::to_string(j) + ": " + e.what(),
                             e.best_residual());
    }
  };

  double alpha = opt.expansion;
  for (sweep = 0; sweep < opt.max_sweeps; ++sweep, alpha *= opt.expansion_decay) {
    double energy = 0.0, trunc = 0.0;
    if (L == 1) {
      energy = optimize(0);
    } else {
      for (std::size_t j = 0; j + 1 < L; ++j) {
        energy = optimize(j);
        if (alpha > 0) detail::expand_bond(psi, j, Sweep::left_to_right, env.heff(j), alpha, cfg);
        trunc = std::max(trunc, detail::shift_centre(psi, j, Sweep::left_to_right, policy, cfg));
        env.update_left(psi, j);
      }
      for (std::size_t j = L - 1; j > 0; --j) {
        energy = optimize(j);
        if (alpha > 0) detail::expand_bond(psi, j, Sweep::right_to_left, env.heff(j), alpha, cfg);
        trunc = std::max(trunc, detail::shift_centre(psi, j, Sweep::right_to_left, policy, cfg));
        env.update_right(psi, j);
      }
    }
    const double delta = std::abs(rep.energy_per_sweep.back() - energy);
    rep.energy_per_sweep.push_back(energy);
    rep.delta_energy.push_back(delta);
    rep.truncation_error.push_back(trunc);
    rep.sweeps_run = sweep + 1;
    diag("dmrg: sweep " + std::to_string(sweep + 1) + " energy " + format_g(energy) + " delta " + format_g(delta));
    if (delta < opt.precision) {
      rep.converged = true;
      break;
    }
  }
  // Leave the state normalized with the centre on site 0.
  mps_normalize_centre(psi, 0, cfg);
  rep.final_state = std::move(psi);
  return rep;
}

}  // namespace tnt
