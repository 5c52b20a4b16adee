#pragma once

// Nodes: labeled legs over a shared, immutable payload.
//
// A node is a handle (shared_ptr). Legs refer to their peers weakly; whoever
// builds a group of nodes (a caller or a Network) keeps them alive. Each leg
// maps to one or more payload axes, so fusing legs is pure bookkeeping.

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <iomanip>
#include <memory>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "tnt/config.hpp"
#include "tnt/dense_tensor.hpp"
#include "tnt/error.hpp"
#include "tnt/linalg.hpp"
#include "tnt/symmetric_tensor.hpp"

namespace tnt {

using Payload = std::variant<DenseTensor, BlockTensor>;

class NodeData;
using Node = std::shared_ptr<NodeData>;

/// Strong ownership of the nodes that belong to a network.
struct Registry {
  std::vector<Node> nodes;
  void adopt(Node n);
};

struct Leg {
  char label = 0;
  std::vector<std::size_t> axes;  // payload axes, more than one when fused
  std::string axis_labels;        // child labels of a fused leg, one per axis
  std::weak_ptr<NodeData> peer;
  char peer_label = 0;

  bool fused() const { return !axis_labels.empty(); }
  bool connected() const { return !peer.expired(); }
};

enum class FunctionalForm { exponential, linear };

struct FunctionalDef {
  std::vector<Matrix> operators;
  std::vector<cplx> params;
  FunctionalForm form = FunctionalForm::exponential;
  Dims dims;  // realized tensor dims, in leg order
};

inline bool valid_label(char c) {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9');
}

class NodeData {
 public:
  std::vector<Leg> legs;
  bool conj = false;
  std::optional<FunctionalDef> functional;
  std::shared_ptr<NodeData> forward;  // set once the node has been consumed
  std::weak_ptr<Registry> owner;
  std::uint64_t id = next_id();

  NodeData() = default;
  NodeData(const NodeData&) = delete;
  NodeData& operator=(const NodeData&) = delete;

  const Payload& payload() const {
    if (!payload_) realize();
    require(payload_ != nullptr, ErrorKind::structural, describe() + " has no payload (already consumed?)");
    return *payload_;
  }
  std::shared_ptr<const Payload> payload_handle() const {
    payload();
    return payload_;
  }
  void set_payload(std::shared_ptr<const Payload> p) { payload_ = std::move(p); }
  void set_payload(Payload p) { payload_ = std::make_shared<const Payload>(std::move(p)); }
  void invalidate() { payload_.reset(); }
  bool has_payload() const { return payload_ != nullptr || functional.has_value(); }

  bool is_block() const { return std::holds_alternative<BlockTensor>(payload()); }

  Dims payload_dims() const {
    return std::visit([](const auto& t) { return Dims(t.dims()); }, payload());
  }

  std::optional<std::size_t> find_leg(char label) const {
    for (std::size_t k = 0; k < legs.size(); ++k)
      if (legs[k].label == label) return k;
    return std::nullopt;
  }
  Leg& leg(char label) {
    auto k = find_leg(label);
    require(k.has_value(), ErrorKind::invalid_argument, describe() + " has no leg '" + std::string(1, label) + "'");
    return legs[*k];
  }
  const Leg& leg(char label) const { return const_cast<NodeData*>(this)->leg(label); }

  std::size_t leg_dim(char label) const {
    auto dims = payload_dims();
    std::size_t d = 1;
    for (auto a : leg(label).axes) d *= dims[a];
    return d;
  }

  std::string labels() const {
    std::string s;
    for (const auto& l : legs) s += l.label;
    return s;
  }

  std::string describe() const { return "node #" + std::to_string(id) + " [" + labels() + "]"; }

 private:
  static std::uint64_t next_id() {
    static std::atomic<std::uint64_t> counter{1};
    return counter++;
  }
  void realize() const;

  mutable std::shared_ptr<const Payload> payload_;
};

inline void NodeData::realize() const {
  if (!functional) return;
  const auto& f = *functional;
  const auto n = f.operators.front().rows();
  Matrix sum = Matrix::Zero(n, n);
  for (std::size_t i = 0; i < f.operators.size(); ++i)
    if (f.params[i] != cplx{}) sum += f.params[i] * f.operators[i];
  Matrix m = f.form == FunctionalForm::exponential ? matrix_exponential(sum) : sum;
  std::vector<cplx> v(m.data(), m.data() + m.size());
  payload_ = std::make_shared<const Payload>(DenseTensor(f.dims, std::move(v)));
}

inline void Registry::adopt(Node n) {
  if (nodes.size() > 64 && nodes.size() % 64 == 0)
    std::erase_if(nodes, [](const Node& x) { return x->forward != nullptr; });
  nodes.push_back(std::move(n));
}

inline void adopt_into(const std::weak_ptr<Registry>& owner, const Node& n) {
  n->owner = owner;
  if (auto r = owner.lock()) r->adopt(n);
}

/// Follows forward pointers left behind by contractions and factorizations.
inline Node resolve(Node n) {
  while (n && n->forward) n = n->forward;
  return n;
}

// ---------------------------------------------------------------- creation

namespace detail {

inline void check_labels(std::string_view labels) {
  for (std::size_t i = 0; i < labels.size(); ++i) {
    require(valid_label(labels[i]), ErrorKind::invalid_argument,
            "leg label '" + std::string(1, labels[i]) + "' is not alphanumeric");
    for (std::size_t j = 0; j < i; ++j)
      require(labels[i] != labels[j], ErrorKind::invalid_argument,
              "duplicate leg label '" + std::string(1, labels[i]) + "'");
  }
}

inline Node make_node(std::string_view labels, Payload payload) {
  check_labels(labels);
  auto n = std::make_shared<NodeData>();
  const auto rank = std::visit([](const auto& t) { return t.rank(); }, payload);
  require(labels.size() == rank, ErrorKind::invalid_argument,
          "got " + std::to_string(labels.size()) + " labels for a rank-" + std::to_string(rank) + " tensor");
  for (std::size_t k = 0; k < labels.size(); ++k) n->legs.push_back(Leg{labels[k], {k}, {}, {}, 0});
  n->set_payload(std::move(payload));
  return n;
}

}  // namespace detail

inline Node node_create(const DenseTensor& values, std::string_view labels) {
  return detail::make_node(labels, values);
}

/// Values laid out row-major over the given dims.
inline Node node_create(std::vector<cplx> values, std::string_view labels, Dims dims) {
  return detail::make_node(labels, DenseTensor(std::move(dims), std::move(values)));
}

inline Node node_create(const BlockTensor& values, std::string_view labels) { return detail::make_node(labels, values); }

/// Normally distributed real entries from a seeded generator.
inline Node node_create_random(std::string_view labels, Dims dims, std::mt19937_64& rng) {
  std::normal_distribution<double> dist;
  std::vector<cplx> v(product(dims));
  for (auto& x : v) x = dist(rng);
  return detail::make_node(labels, DenseTensor(std::move(dims), std::move(v), ElementKind::real));
}

inline Node node_create_identity(std::string_view labels, std::size_t d) {
  std::vector<cplx> v(d * d);
  for (std::size_t i = 0; i < d; ++i) v[i * d + i] = 1.0;
  return detail::make_node(labels, DenseTensor({d, d}, std::move(v), ElementKind::real));
}

// ---------------------------------------------------------------- leg maps

/// "DU=EV" renames D to E and U to V.
struct LegMap {
  std::string from, to;

  static LegMap parse(std::string_view spec) {
    LegMap m;
    if (spec.empty()) return m;
    auto eq = spec.find('=');
    require(eq != std::string_view::npos, ErrorKind::invalid_argument,
            "leg map '" + std::string(spec) + "' needs the form FROM=TO");
    m.from = std::string(spec.substr(0, eq));
    m.to = std::string(spec.substr(eq + 1));
    require(m.from.size() == m.to.size(), ErrorKind::invalid_argument,
            "leg map '" + std::string(spec) + "' has sides of different length");
    detail::check_labels(m.from);
    detail::check_labels(m.to);
    return m;
  }
  char apply(char c) const {
    auto p = from.find(c);
    return p == std::string::npos ? c : to[p];
  }
  bool empty() const { return from.empty(); }
};

/// Relabels legs in place; the map must not create duplicates.
inline void node_relabel(const Node& n, const LegMap& map) {
  if (map.empty()) return;
  for (char c : map.from)
    require(n->find_leg(c).has_value(), ErrorKind::invalid_argument,
            "leg map names '" + std::string(1, c) + "', which " + n->describe() + " does not have");
  std::string next;
  for (const auto& l : n->legs) next += map.apply(l.label);
  for (std::size_t i = 0; i < next.size(); ++i)
    for (std::size_t j = 0; j < i; ++j)
      require(next[i] != next[j], ErrorKind::label_collision,
              "relabeling " + n->describe() + " produces two legs '" + std::string(1, next[i]) + "'");
  for (std::size_t k = 0; k < n->legs.size(); ++k) {
    auto& l = n->legs[k];
    if (auto p = l.peer.lock()) {
      auto& back = p->legs[*p->find_leg(l.peer_label)];
      back.peer_label = next[k];
    }
    l.label = next[k];
  }
}

inline void node_relabel(const Node& n, std::string_view spec) { node_relabel(n, LegMap::parse(spec)); }

// ---------------------------------------------------------------- copies

namespace detail {
inline Node shallow_copy(const Node& src) {
  auto n = std::make_shared<NodeData>();
  for (const auto& l : src->legs) n->legs.push_back(Leg{l.label, l.axes, l.axis_labels, {}, 0});
  n->conj = src->conj;
  n->functional = src->functional;
  if (!src->functional) n->set_payload(src->payload_handle());
  return n;
}
}  // namespace detail

/// Shares the payload. A conjugate copy only flips the flag. Connections are
/// not copied.
inline Node node_copy(const Node& src, bool conjugate = false, std::string_view leg_map = {}) {
  auto n = detail::shallow_copy(src);
  if (conjugate) n->conj = !n->conj;
  node_relabel(n, leg_map);
  return n;
}

// ---------------------------------------------------------------- effective values

/// Payload with the conjugate flag applied, as a dense tensor.
inline DenseTensor node_dense(const Node& n) {
  DenseTensor t = std::visit(
      [](const auto& p) -> DenseTensor {
        if constexpr (std::is_same_v<std::decay_t<decltype(p)>, BlockTensor>)
          return densify(p);
        else
          return p;
      },
      n->payload());
  if (!n->conj) return t;
  std::vector<cplx> v(t.values().begin(), t.values().end());
  for (auto& x : v) x = std::conj(x);
  return DenseTensor(t.dims(), std::move(v), t.kind());
}

/// Payload with the conjugate flag applied, as a block tensor.
inline BlockTensor node_block(const Node& n, const SystemConfig& cfg) {
  require(n->is_block(), ErrorKind::invalid_argument, n->describe() + " holds a dense payload");
  const auto& b = std::get<BlockTensor>(n->payload());
  return n->conj ? conjugated(b, cfg.blocks()) : b;
}

/// Charge information of a single-axis leg, if the payload is blocked.
inline std::optional<ChargedIndex> leg_charges(const Node& n, char label) {
  if (!n->is_block()) return std::nullopt;
  const auto& l = n->leg(label);
  if (l.axes.size() != 1) return std::nullopt;
  auto ix = std::get<BlockTensor>(n->payload()).structure().indices[l.axes[0]];
  return n->conj ? ix.flipped() : ix;
}

/// Leg dims in leg order.
inline Dims node_leg_dims(const Node& n) {
  Dims d;
  for (const auto& l : n->legs) d.push_back(n->leg_dim(l.label));
  return d;
}

/// Payload axes of the given legs, concatenated.
inline std::vector<std::size_t> axes_of(const Node& n, std::string_view labels) {
  std::vector<std::size_t> axes;
  for (char c : labels) {
    const auto& l = n->leg(c);
    axes.insert(axes.end(), l.axes.begin(), l.axes.end());
  }
  return axes;
}

/// Dense matrix of t with the given row and column axes (row-major over each group).
inline Matrix dense_matrix(const DenseTensor& t, std::span<const std::size_t> rows, std::span<const std::size_t> cols,
                           bool conjugate, PlanCache* cache) {
  std::vector<std::size_t> order(rows.begin(), rows.end());
  order.insert(order.end(), cols.begin(), cols.end());
  require(is_permutation_of_rank(order, t.rank()), ErrorKind::invalid_permutation,
          "row and column axes must cover every axis exactly once");
  std::size_t r = 1, c = 1;
  for (auto a : rows) r *= t.dims()[a];
  for (auto a : cols) c *= t.dims()[a];
  Matrix m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
  if (is_identity_order(order)) {
    auto v = t.values();
    if (conjugate)
      for (std::size_t i = 0; i < v.size(); ++i) m.data()[i] = std::conj(v[i]);
    else
      std::copy(v.begin(), v.end(), m.data());
    return m;
  }
  auto plan = cache ? cache->get(t.dims(), order)
                    : std::make_shared<const PermutationPlan>(make_permutation_plan(t.dims(), order));
  auto v = t.values();
  const auto& g = plan->gather;
  if (conjugate)
    for (std::size_t i = 0; i < g.size(); ++i) m.data()[i] = std::conj(v[g[i]]);
  else
    for (std::size_t i = 0; i < g.size(); ++i) m.data()[i] = v[g[i]];
  return m;
}

/// Rewrites the payload so that legs own consecutive axes in leg order.
inline void node_canonicalize_axes(const Node& n, const SystemConfig& cfg = *default_config()) {
  std::vector<std::size_t> order;
  bool identity = true;
  for (const auto& l : n->legs)
    for (auto a : l.axes) {
      if (a != order.size()) identity = false;
      order.push_back(a);
    }
  if (identity) return;
  std::visit(
      [&](const auto& p) {
        if constexpr (std::is_same_v<std::decay_t<decltype(p)>, BlockTensor>)
          n->set_payload(Payload(permute(p, order, cfg.blocks())));
        else
          n->set_payload(Payload(permute(p, order, cfg.reshape_cache())));
      },
      n->payload());
  std::size_t next = 0;
  for (auto& l : n->legs)
    for (auto& a : l.axes) a = next++;
  n->functional.reset();
}

/// Reorders legs (and payload axes) to the given label order.
inline void node_reorder(const Node& n, std::string_view labels, const SystemConfig& cfg = *default_config()) {
  require(labels.size() == n->legs.size(), ErrorKind::invalid_argument,
          "reorder of " + n->describe() + " needs all " + std::to_string(n->legs.size()) + " labels");
  std::vector<Leg> next;
  for (char c : labels) next.push_back(n->leg(c));
  n->legs = std::move(next);
  node_canonicalize_axes(n, cfg);
}

// ---------------------------------------------------------------- joins

inline void node_join(const Node& a, char la, const Node& b, char lb) {
  auto& x = a->leg(la);
  auto& y = b->leg(lb);
  require(!(a == b && la == lb), ErrorKind::invalid_argument, "cannot join a leg to itself");
  const auto da = a->leg_dim(la), db = b->leg_dim(lb);
  require(da == db, ErrorKind::incompatible_legs,
          "cannot join " + a->describe() + " leg " + la + " (dim " + std::to_string(da) + ") to " + b->describe() +
              " leg " + lb + " (dim " + std::to_string(db) + ")");
  require(!x.connected(), ErrorKind::leg_occupied, a->describe() + " leg " + la + " is already connected");
  require(!y.connected(), ErrorKind::leg_occupied, b->describe() + " leg " + lb + " is already connected");
  x.peer = b;
  x.peer_label = lb;
  y.peer = a;
  y.peer_label = la;
}

inline void disconnect_leg(const Node& n, char label) {
  auto& l = n->leg(label);
  if (auto p = l.peer.lock()) {
    if (auto k = p->find_leg(l.peer_label)) {
      p->legs[*k].peer.reset();
      p->legs[*k].peer_label = 0;
    }
  }
  l.peer.reset();
  l.peer_label = 0;
}

/// Removes every connection between a and b.
inline void node_split(const Node& a, const Node& b) {
  for (auto& l : a->legs)
    if (l.peer.lock() == b) disconnect_leg(a, l.label);
}

inline Node find_conn(const Node& n, char label) {
  const auto& l = n->leg(label);
  auto p = l.peer.lock();
  require(p != nullptr, ErrorKind::not_connected, n->describe() + " leg " + label + " is not connected");
  return p;
}

// ---------------------------------------------------------------- contraction

namespace detail {

inline bool has_self_connections(const Node& n) {
  for (const auto& l : n->legs)
    if (l.peer.lock() == n) return true;
  return false;
}

/// Moves every external connection of `from` (leg label l) to `to` (label map(l)).
inline void transfer_connection(const Node& from, const Leg& leg, const Node& to, char new_label) {
  auto p = leg.peer.lock();
  if (!p || p == from) return;
  auto& dst = to->leg(new_label);
  dst.peer = p;
  dst.peer_label = leg.peer_label;
  auto& back = p->legs[*p->find_leg(leg.peer_label)];
  back.peer = to;
  back.peer_label = new_label;
}

inline void retire(const Node& n, const Node& successor) {
  n->forward = successor;
  n->legs.clear();
  n->set_payload(std::shared_ptr<const Payload>{});
  n->functional.reset();
}

inline Payload dense_or_block(DenseTensor t, const std::vector<ChargedIndex>* charges, const QN& flux,
                              const SystemConfig& cfg) {
  if (!charges) return t;
  auto r = impose_symmetry(t, *charges, flux, cfg.blocks());
  require(!(cfg.strict_symmetry && r.discarded_weight > 0.0), ErrorKind::incompatible_blocks,
          "symmetric operation discarded weight " + std::to_string(r.discarded_weight));
  return std::move(r.tensor);
}

}  // namespace detail

/// Contracts every leg of n that is joined to another leg of n.
inline void node_trace_self(const Node& n, const SystemConfig& cfg = *default_config()) {
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  std::vector<bool> traced(n->legs.size(), false);
  for (std::size_t k = 0; k < n->legs.size(); ++k) {
    const auto& l = n->legs[k];
    if (traced[k] || l.peer.lock() != n) continue;
    auto j = *n->find_leg(l.peer_label);
    traced[k] = traced[j] = true;
    pairs.emplace_back(k, j);
  }
  if (pairs.empty()) return;
  const bool block = n->is_block();
  std::optional<std::vector<ChargedIndex>> charges;
  QN flux;
  if (block) {
    auto b = node_block(n, cfg);
    flux = b.flux();
    charges.emplace();
    for (std::size_t k = 0; k < n->legs.size(); ++k)
      if (!traced[k])
        for (auto a : n->legs[k].axes) charges->push_back(b.structure().indices[a]);
  }
  auto t = node_dense(n);
  std::vector<std::size_t> free_axes, ta, tb;
  for (std::size_t k = 0; k < n->legs.size(); ++k)
    if (!traced[k]) free_axes.insert(free_axes.end(), n->legs[k].axes.begin(), n->legs[k].axes.end());
  for (auto [x, y] : pairs) {
    ta.insert(ta.end(), n->legs[x].axes.begin(), n->legs[x].axes.end());
    tb.insert(tb.end(), n->legs[y].axes.begin(), n->legs[y].axes.end());
  }
  std::vector<std::size_t> traced_axes = ta;
  traced_axes.insert(traced_axes.end(), tb.begin(), tb.end());
  Matrix m = dense_matrix(t, free_axes, traced_axes, false, cfg.reshape_cache());
  std::size_t D = 1;
  for (auto a : ta) D *= t.dims()[a];
  Vector out = Vector::Zero(m.rows());
  for (std::size_t i = 0; i < D; ++i) out += m.col(static_cast<Eigen::Index>(i * D + i));
  Dims dims;
  for (auto a : free_axes) dims.push_back(t.dims()[a]);
  DenseTensor result = dims.empty() ? DenseTensor::scalar(out(0))
                                    : DenseTensor(dims, std::vector<cplx>(out.data(), out.data() + out.size()));
  std::vector<Leg> legs;
  std::size_t next = 0;
  for (std::size_t k = 0; k < n->legs.size(); ++k) {
    if (traced[k]) continue;
    Leg l = n->legs[k];
    for (auto& a : l.axes) a = next++;
    legs.push_back(l);
  }
  n->legs = std::move(legs);
  n->conj = false;
  n->functional.reset();
  n->set_payload(detail::dense_or_block(std::move(result), charges ? &*charges : nullptr, flux, cfg));
}

/// Contracts a with b over all their shared connections. The result has the
/// free legs of a, then those of b; external connections move to it. Passing
/// the same node twice forms the outer product with an unconnected copy.
inline Node contract_pair(Node a, Node b, std::string_view map_a = {}, std::string_view map_b = {},
                          const SystemConfig& cfg = *default_config()) {
  a = resolve(a);
  b = resolve(b);
  if (a == b) b = node_copy(a);
  node_trace_self(a, cfg);
  node_trace_self(b, cfg);
  const auto ma = LegMap::parse(map_a), mb = LegMap::parse(map_b);

  std::vector<std::size_t> con_a, con_b, free_a, free_b;
  std::vector<const Leg*> free_legs_a, free_legs_b;
  for (const auto& l : a->legs) {
    if (l.peer.lock() == b) {
      const auto& o = b->leg(l.peer_label);
      require(a->leg_dim(l.label) == b->leg_dim(o.label), ErrorKind::incompatible_legs,
              "joined legs " + std::string(1, l.label) + "/" + o.label + " differ in dimension");
      con_a.insert(con_a.end(), l.axes.begin(), l.axes.end());
      con_b.insert(con_b.end(), o.axes.begin(), o.axes.end());
    } else {
      free_a.insert(free_a.end(), l.axes.begin(), l.axes.end());
      free_legs_a.push_back(&l);
    }
  }
  for (const auto& l : b->legs)
    if (l.peer.lock() != a) {
      free_b.insert(free_b.end(), l.axes.begin(), l.axes.end());
      free_legs_b.push_back(&l);
    }

  // New labels, checked before any work.
  std::string labels;
  for (auto* l : free_legs_a) labels += ma.apply(l->label);
  for (auto* l : free_legs_b) labels += mb.apply(l->label);
  for (std::size_t i = 0; i < labels.size(); ++i)
    for (std::size_t j = 0; j < i; ++j)
      require(labels[i] != labels[j], ErrorKind::label_collision,
              "contracting " + a->describe() + " with " + b->describe() + " gives two legs '" +
                  std::string(1, labels[i]) + "'; supply a leg map");

  Payload result;
  if (a->is_block() && b->is_block()) {
    auto x = node_block(a, cfg), y = node_block(b, cfg);
    result = contract(x, free_a, con_a, y, con_b, free_b, cfg.blocks());
  } else {
    const auto& pa = a->payload();
    const auto& pb = b->payload();
    auto dense_of = [](const Payload& p) -> DenseTensor {
      if (std::holds_alternative<BlockTensor>(p)) return densify(std::get<BlockTensor>(p));
      return std::get<DenseTensor>(p);
    };
    auto ta = dense_of(pa), tb = dense_of(pb);
    Matrix A = dense_matrix(ta, free_a, con_a, a->conj, cfg.reshape_cache());
    Matrix B = dense_matrix(tb, con_b, free_b, b->conj, cfg.reshape_cache());
    require(A.cols() == B.rows(), ErrorKind::incompatible_legs, "contracted dimensions differ");
    Matrix C = contract_matrices(A, B);
    Dims dims;
    for (auto x : free_a) dims.push_back(ta.dims()[x]);
    for (auto x : free_b) dims.push_back(tb.dims()[x]);
    std::vector<cplx> v(C.data(), C.data() + C.size());
    result = dims.empty() ? DenseTensor::scalar(v[0]) : DenseTensor(dims, std::move(v));
  }

  auto out = std::make_shared<NodeData>();
  std::size_t next = 0;
  auto add_legs = [&](const std::vector<const Leg*>& src, const LegMap& m) {
    for (auto* l : src) {
      Leg nl{m.apply(l->label), {}, l->axis_labels, {}, 0};
      for (std::size_t i = 0; i < l->axes.size(); ++i) nl.axes.push_back(next++);
      out->legs.push_back(std::move(nl));
    }
  };
  add_legs(free_legs_a, ma);
  add_legs(free_legs_b, mb);
  out->set_payload(std::move(result));
  for (std::size_t k = 0; k < free_legs_a.size(); ++k) detail::transfer_connection(a, *free_legs_a[k], out, labels[k]);
  for (std::size_t k = 0; k < free_legs_b.size(); ++k)
    detail::transfer_connection(b, *free_legs_b[k], out, labels[free_legs_a.size() + k]);
  adopt_into(a->owner.expired() ? b->owner : a->owner, out);
  detail::retire(a, out);
  detail::retire(b, out);
  return out;
}

// ---------------------------------------------------------------- values

inline void node_scale(const Node& n, cplx factor, const SystemConfig& cfg = *default_config()) {
  if (n->is_block()) {
    n->set_payload(Payload(scale(std::get<BlockTensor>(n->payload()), n->conj ? std::conj(factor) : factor, cfg.blocks())));
  } else {
    const auto& t = std::get<DenseTensor>(n->payload());
    std::vector<cplx> v(t.values().begin(), t.values().end());
    const cplx f = n->conj ? std::conj(factor) : factor;
    for (auto& x : v) x *= f;
    n->set_payload(Payload(DenseTensor(t.dims(), std::move(v))));
  }
  n->functional.reset();
}

/// Elementwise sum. Both nodes need the same legs and dims; blocked nodes with
/// the same charges are added block by block.
inline Node node_add(const Node& a, const Node& b, const SystemConfig& cfg = *default_config()) {
  require(a->legs.size() == b->legs.size(), ErrorKind::incompatible_nodes,
          a->describe() + " and " + b->describe() + " have different legs");
  for (const auto& l : a->legs) {
    require(b->find_leg(l.label).has_value(), ErrorKind::incompatible_nodes,
            b->describe() + " lacks leg '" + std::string(1, l.label) + "'");
    require(a->leg_dim(l.label) == b->leg_dim(l.label), ErrorKind::incompatible_nodes,
            "leg '" + std::string(1, l.label) + "' differs in dimension");
  }
  auto x = node_copy(a);
  auto y = node_copy(b);
  node_canonicalize_axes(x, cfg);
  node_reorder(y, x->labels(), cfg);
  Payload sum;
  if (x->is_block() && y->is_block()) {
    auto bx = node_block(x, cfg), by = node_block(y, cfg);
    require(bx.structure() == by.structure(), ErrorKind::incompatible_nodes,
            "nodes carry different quantum-number structures");
    sum = add(bx, by, cfg.blocks());
  } else {
    auto tx = node_dense(x), ty = node_dense(y);
    require(tx.dims() == ty.dims(), ErrorKind::incompatible_nodes, "nodes have different payload shapes");
    std::vector<cplx> v(tx.values().begin(), tx.values().end());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] += ty.values()[i];
    sum = DenseTensor(tx.dims(), std::move(v));
  }
  auto out = std::make_shared<NodeData>();
  for (const auto& l : x->legs) out->legs.push_back(Leg{l.label, l.axes, l.axis_labels, {}, 0});
  out->set_payload(std::move(sum));
  return out;
}

/// Direct sum: legs in `expand` get dim(a) + dim(b), the others must agree.
/// Elements mixing a's range on one expanded leg with b's on another are zero.
/// A null operand stands for the zero-dimensional node and yields a copy.
inline Node node_direct_sum(const Node& a, const Node& b, std::string_view expand,
                            const SystemConfig& cfg = *default_config()) {
  if (!a && !b) fail(ErrorKind::invalid_argument, "direct sum of two empty operands");
  if (!a || !b) {
    auto c = node_copy(a ? a : b);
    return c;
  }
  auto x = node_copy(a);
  auto y = node_copy(b);
  node_canonicalize_axes(x, cfg);
  node_reorder(y, x->labels(), cfg);
  for (const auto& l : x->legs) {
    require(l.axes.size() == 1, ErrorKind::invalid_argument, "direct sum over fused legs is not supported");
    const bool ex = expand.find(l.label) != std::string_view::npos;
    if (!ex)
      require(x->leg_dim(l.label) == y->leg_dim(l.label), ErrorKind::incompatible_nodes,
              "leg '" + std::string(1, l.label) + "' is not expanded but differs in dimension");
  }
  for (char c : expand) x->leg(c);
  const bool block = x->is_block() && y->is_block();
  auto tx = node_dense(x), ty = node_dense(y);
  const auto rank = tx.rank();
  std::vector<bool> ex(rank);
  Dims dims(rank);
  for (std::size_t k = 0; k < rank; ++k) {
    ex[k] = expand.find(x->legs[k].label) != std::string_view::npos;
    dims[k] = ex[k] ? tx.dims()[k] + ty.dims()[k] : tx.dims()[k];
  }
  std::vector<cplx> v(product(dims));
  auto strides = row_major_strides(dims);
  auto place = [&](const DenseTensor& t, bool second) {
    std::vector<std::size_t> idx(rank, 0);
    for (std::size_t i = 0; i < t.size(); ++i) {
      std::size_t off = 0;
      for (std::size_t k = 0; k < rank; ++k) off += (idx[k] + (second && ex[k] ? tx.dims()[k] : 0)) * strides[k];
      v[off] = t.values()[i];
      for (std::size_t k = rank; k-- > 0;) {
        if (++idx[k] < t.dims()[k]) break;
        idx[k] = 0;
      }
    }
  };
  place(tx, false);
  place(ty, true);
  DenseTensor sum(dims, std::move(v));
  std::optional<std::vector<ChargedIndex>> charges;
  QN flux;
  if (block) {
    auto bx = node_block(x, cfg), by = node_block(y, cfg);
    require(bx.flux() == by.flux(), ErrorKind::incompatible_nodes, "direct sum of nodes with different flux");
    flux = bx.flux();
    charges.emplace();
    for (std::size_t k = 0; k < rank; ++k) {
      auto ix = bx.structure().indices[k];
      const auto& iy = by.structure().indices[k];
      require(ix.direction == iy.direction, ErrorKind::incompatible_nodes, "direct sum of opposite leg directions");
      if (ex[k])
        ix.labels.insert(ix.labels.end(), iy.labels.begin(), iy.labels.end());
      else
        require(ix == iy, ErrorKind::incompatible_nodes, "non-expanded legs carry different quantum numbers");
      charges->push_back(std::move(ix));
    }
  }
  auto out = std::make_shared<NodeData>();
  for (std::size_t k = 0; k < rank; ++k) out->legs.push_back(Leg{x->legs[k].label, {k}, {}, {}, 0});
  out->set_payload(detail::dense_or_block(std::move(sum), charges ? &*charges : nullptr, flux, cfg));
  return out;
}

// ---------------------------------------------------------------- leg operations

/// Places `ins` between a and the node joined to a's leg la. ins's leg ia
/// joins a, leg ib joins the former peer.
inline void node_insert(const Node& ins, char ia, char ib, const Node& a, char la) {
  auto b = find_conn(a, la);
  const char lb = a->leg(la).peer_label;
  disconnect_leg(a, la);
  node_join(a, la, ins, ia);
  node_join(ins, ib, b, lb);
}

inline void node_squeeze(const Node& n, std::string_view labels, const SystemConfig& cfg = *default_config()) {
  for (char c : labels)
    require(n->leg_dim(c) == 1, ErrorKind::structural,
            n->describe() + " leg '" + std::string(1, c) + "' has dimension " + std::to_string(n->leg_dim(c)) +
                " and cannot be squeezed");
  for (char c : labels) disconnect_leg(n, c);
  node_canonicalize_axes(n, cfg);
  std::vector<Leg> keep;
  std::vector<bool> drop_axis;
  for (const auto& l : n->legs) {
    const bool drop = labels.find(l.label) != std::string_view::npos;
    for (std::size_t i = 0; i < l.axes.size(); ++i) drop_axis.push_back(drop);
    if (!drop) keep.push_back(l);
  }
  std::size_t next = 0;
  for (auto& l : keep)
    for (auto& a : l.axes) a = next++;
  const auto& p = n->payload();
  if (std::holds_alternative<BlockTensor>(p)) {
    const auto& b = std::get<BlockTensor>(p);
    BlockStructure s;
    s.flux = b.flux();
    QN dropped = QN::zero(b.flux().m);
    for (std::size_t k = 0; k < b.rank(); ++k) {
      const auto& ix = b.structure().indices[k];
      if (!drop_axis[k])
        s.indices.push_back(ix);
      else
        dropped += ix.labels[0].scaled(sign(ix.direction));
    }
    // A charged singleton folds into the flux.
    s.flux += dropped;
    auto dense = densify(b);
    Dims dims;
    for (auto d : s.dims()) dims.push_back(d);
    auto t = dims.empty() ? DenseTensor::scalar(dense.values()[0]) : dense.reshaped(dims);
    auto r = impose_symmetry(t, s.indices, s.flux, cfg.blocks());
    n->set_payload(Payload(std::move(r.tensor)));
  } else {
    const auto& t = std::get<DenseTensor>(p);
    Dims dims;
    for (std::size_t k = 0; k < t.rank(); ++k)
      if (!drop_axis[k]) dims.push_back(t.dims()[k]);
    n->set_payload(Payload(dims.empty() ? DenseTensor::scalar(t.values()[0]) : t.reshaped(dims)));
  }
  n->legs = std::move(keep);
  n->functional.reset();
}

/// Appends unconnected singleton legs (uncharged, incoming when blocked).
inline void node_add_leg(const Node& n, std::string_view labels, const SystemConfig& cfg = *default_config()) {
  std::string all = n->labels() + std::string(labels);
  detail::check_labels(all);
  node_canonicalize_axes(n, cfg);
  const auto& p = n->payload();
  const auto rank = n->payload_dims().size();
  if (std::holds_alternative<BlockTensor>(p)) {
    const auto& b = std::get<BlockTensor>(p);
    auto s = b.structure();
    for (std::size_t i = 0; i < labels.size(); ++i) s.indices.push_back(ChargedIndex::in({QN::zero(b.flux().m)}));
    auto data = std::vector<cplx>(b.data().begin(), b.data().end());
    // Uncharged incoming singletons leave the canonical block layout unchanged.
    n->set_payload(Payload(BlockTensor(std::move(s), std::move(data), cfg.blocks())));
  } else {
    const auto& t = std::get<DenseTensor>(p);
    Dims dims = t.dims();
    for (std::size_t i = 0; i < labels.size(); ++i) dims.push_back(1);
    std::vector<cplx> v(t.values().begin(), t.values().end());
    n->set_payload(Payload(DenseTensor(dims, std::move(v))));
  }
  for (std::size_t i = 0; i < labels.size(); ++i) n->legs.push_back(Leg{labels[i], {rank + i}, {}, {}, 0});
  n->functional.reset();
}

/// Fuses unconnected legs into one. Only the leg bookkeeping changes.
inline void node_fuse(const Node& n, std::string_view labels, char fused_label) {
  require(labels.size() >= 2, ErrorKind::invalid_argument, "at least two legs are needed for a fuse");
  Leg f{fused_label, {}, {}, {}, 0};
  for (char c : labels) {
    const auto& l = n->leg(c);
    require(!l.connected(), ErrorKind::structural,
            n->describe() + " leg '" + std::string(1, c) + "' is connected; fuse unconnected legs");
    f.axes.insert(f.axes.end(), l.axes.begin(), l.axes.end());
    f.axis_labels += l.fused() ? l.axis_labels : std::string(1, c);
  }
  std::vector<Leg> legs;
  bool placed = false;
  for (const auto& l : n->legs) {
    if (labels.find(l.label) == std::string_view::npos) {
      legs.push_back(l);
    } else if (!placed) {
      legs.push_back(f);
      placed = true;
    }
  }
  std::string all;
  for (const auto& l : legs) all += l.label;
  detail::check_labels(all);
  n->legs = std::move(legs);
}

/// Undoes node_fuse: the fused leg becomes its children again.
inline void node_unfuse(const Node& n, char label) {
  const auto& l = n->leg(label);
  require(l.fused(), ErrorKind::invalid_argument, n->describe() + " leg '" + std::string(1, label) + "' is not fused");
  require(!l.connected(), ErrorKind::structural, "disconnect a fused leg before splitting it");
  std::vector<Leg> legs;
  for (const auto& x : n->legs) {
    if (x.label != label) {
      legs.push_back(x);
      continue;
    }
    for (std::size_t i = 0; i < x.axes.size(); ++i) legs.push_back(Leg{x.axis_labels[i], {x.axes[i]}, {}, {}, 0});
  }
  std::string all;
  for (const auto& x : legs) all += x.label;
  detail::check_labels(all);
  n->legs = std::move(legs);
}

// ---------------------------------------------------------------- getters

inline Matrix node_matrix(const Node& n, std::string_view rows, std::string_view cols,
                          const SystemConfig& cfg = *default_config()) {
  auto t = node_dense(n);
  require(rows.size() + cols.size() == n->legs.size(), ErrorKind::invalid_argument,
          "row and column legs must list every leg of " + n->describe());
  return dense_matrix(t, axes_of(n, rows), axes_of(n, cols), false, cfg.reshape_cache());
}

inline cplx node_first_value(const Node& n) {
  return node_dense(n).values()[0];  // index (0,...,0) is offset 0 under any axis order
}

namespace detail {
inline std::pair<std::string, std::string> default_split(const Node& n) {
  require(n->legs.size() % 2 == 0, ErrorKind::invalid_argument,
          n->describe() + " has an odd number of legs; name the row legs");
  const auto h = n->legs.size() / 2;
  auto labels = n->labels();
  return {labels.substr(0, h), labels.substr(h)};
}
}  // namespace detail

inline std::vector<cplx> node_diagonal(const Node& n, std::string_view rows = {}, std::string_view cols = {},
                                       const SystemConfig& cfg = *default_config()) {
  std::string r(rows), c(cols);
  if (r.empty()) std::tie(r, c) = detail::default_split(n);
  auto m = node_matrix(n, r, c, cfg);
  std::vector<cplx> d;
  for (Eigen::Index i = 0; i < std::min(m.rows(), m.cols()); ++i) d.push_back(m(i, i));
  return d;
}

inline cplx node_trace(const Node& n, std::string_view rows = {}, std::string_view cols = {},
                       const SystemConfig& cfg = *default_config()) {
  std::string r(rows), c(cols);
  if (r.empty()) std::tie(r, c) = detail::default_split(n);
  auto m = node_matrix(n, r, c, cfg);
  require(m.rows() == m.cols(), ErrorKind::invalid_argument,
          "trace of a " + std::to_string(m.rows()) + "x" + std::to_string(m.cols()) + " matricization");
  return m.trace();
}

inline std::string node_print_matrix(const Node& n, std::string_view rows, std::string_view cols,
                                     const SystemConfig& cfg = *default_config()) {
  auto m = node_matrix(n, rows, cols, cfg);
  std::ostringstream os;
  os << std::setprecision(6);
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      if (j) os << ' ';
      const auto v = m(i, j);
      os << v.real();
      if (v.imag() != 0.0) os << (v.imag() < 0 ? "-" : "+") << std::abs(v.imag()) << 'i';
    }
    os << '\n';
  }
  return os.str();
}

inline std::string node_print_info(const Node& n) {
  std::ostringstream os;
  os << n->describe() << (n->conj ? " (conjugate)" : "") << (n->functional ? " functional" : "")
     << (n->is_block() ? " blocked" : " dense") << '\n';
  for (const auto& l : n->legs) {
    os << "  leg " << l.label << " dim " << n->leg_dim(l.label);
    if (l.fused()) os << " fused from " << l.axis_labels;
    if (auto p = l.peer.lock()) os << " -> node #" << p->id << " leg " << l.peer_label;
    os << '\n';
  }
  return os.str();
}

// ---------------------------------------------------------------- functional nodes

/// exp(sum p_i o_i) or sum p_i o_i. All parameters start at zero. The row
/// legs are the leading legs whose dims multiply to the operator size.
inline Node node_func_create(std::vector<Matrix> operators, FunctionalForm form, std::string_view labels, Dims dims) {
  require(!operators.empty(), ErrorKind::invalid_argument, "a functional node needs at least one operator");
  detail::check_labels(labels);
  require(labels.size() == dims.size(), ErrorKind::invalid_argument, "label count does not match dimension count");
  const auto n = operators.front().rows();
  for (const auto& o : operators)
    require(o.rows() == n && o.cols() == n, ErrorKind::invalid_argument, "functional operators must be square and alike");
  require(static_cast<std::size_t>(n * n) == product(dims), ErrorKind::invalid_argument,
          "operator size does not match the leg dimensions");
  auto node = std::make_shared<NodeData>();
  for (std::size_t k = 0; k < labels.size(); ++k) node->legs.push_back(Leg{labels[k], {k}, {}, {}, 0});
  FunctionalDef f;
  f.params.assign(operators.size(), cplx{});
  f.operators = std::move(operators);
  f.form = form;
  f.dims = std::move(dims);
  node->functional = std::move(f);
  return node;
}

inline Node node_func_create(std::vector<Matrix> operators, std::string_view form, std::string_view labels, Dims dims) {
  FunctionalForm f;
  if (form == "exp")
    f = FunctionalForm::exponential;
  else if (form == "linear" || form == "sum")
    f = FunctionalForm::linear;
  else
    fail(ErrorKind::invalid_argument, "unknown functional form '" + std::string(form) + "'");
  return node_func_create(std::move(operators), f, labels, std::move(dims));
}

inline void node_set_param(const Node& n, cplx value, std::size_t index) {
  require(n->functional.has_value(), ErrorKind::invalid_argument, n->describe() + " is not a functional node");
  require(index < n->functional->params.size(), ErrorKind::invalid_argument,
          "parameter index " + std::to_string(index) + " out of range");
  n->functional->params[index] = value;
  n->invalidate();
}

// ---------------------------------------------------------------- SVD

struct NodeSvd {
  Node u, s, vdag;
  SingularSpectrum spectrum;
};

/// Internal labels: U's new leg, S's two legs, V^dag's new leg.
struct SvdLabels {
  char u = 'R', s_left = 'L', s_right = 'R', v = 'L';
};

/// Splits n into U S V^dag with `rows` on U. U's new leg joins S's left leg,
/// S's right leg joins V^dag's new leg, and n's external connections move to
/// U and V^dag. Blocked nodes are decomposed per charge sector, keeping the
/// global top values.
inline NodeSvd node_svd(Node n, std::string_view rows, SvdLabels labels, const TruncationPolicy& policy,
                        const SystemConfig& cfg = *default_config(), std::string_view leg_map = {}) {
  n = resolve(n);
  require(!rows.empty() && rows.size() < n->legs.size(), ErrorKind::invalid_argument,
          "SVD row legs must be a nonempty proper subset of " + n->describe());
  for (char c : rows) n->leg(c);
  std::string cols;
  for (const auto& l : n->legs)
    if (rows.find(l.label) == std::string_view::npos) cols += l.label;
  node_trace_self(n, cfg);
  auto row_axes = axes_of(n, rows), col_axes = axes_of(n, cols);

  auto U = std::make_shared<NodeData>(), S = std::make_shared<NodeData>(), V = std::make_shared<NodeData>();
  NodeSvd out;
  if (n->is_block()) {
    auto b = node_block(n, cfg);
    auto bm = block_matrix(b, row_axes, col_axes, cfg.blocks());
    std::vector<Matrix> sectors;
    for (std::size_t s = 0; s < bm.layout->keys.size(); ++s) sectors.push_back(bm.sector(s));
    auto svd = truncated_sector_svd(sectors, policy, cfg.svd_variant);
    out.spectrum = svd.spectrum;
    std::vector<QN> bond;
    std::vector<double> svals;
    for (std::size_t s = 0; s < sectors.size(); ++s)
      for (std::size_t i = 0; i < svd.kept_values[s].size(); ++i) {
        bond.push_back(bm.layout->keys[s]);
        svals.push_back(svd.kept_values[s][i]);
      }
    const auto chi = bond.size();
    BlockStructure us, ss, vs;
    for (auto a : row_axes) us.indices.push_back(b.structure().indices[a]);
    us.indices.push_back(ChargedIndex::out(bond));
    us.flux = QN::zero(b.flux().m);
    ss.indices = {ChargedIndex::in(bond), ChargedIndex::out(bond)};
    ss.flux = QN::zero(b.flux().m);
    vs.indices.push_back(ChargedIndex::in(bond));
    for (auto a : col_axes) vs.indices.push_back(b.structure().indices[a]);
    vs.flux = b.flux();
    std::vector<cplx> ud, vd;
    for (std::size_t s = 0; s < sectors.size(); ++s) {
      const auto& u = svd.u[s];
      const auto& v = svd.vdag[s];
      if (u.cols() == 0) continue;
      ud.insert(ud.end(), u.data(), u.data() + u.size());
      vd.insert(vd.end(), v.data(), v.data() + v.size());
    }
    const auto nr = row_axes.size(), nc = col_axes.size();
    auto ur = iota_axes(nr);
    std::vector<std::size_t> uc{nr};
    U->set_payload(Payload(from_block_matrix(us, ur, uc, ud, cfg.blocks())));
    std::vector<std::size_t> vr{0};
    std::vector<std::size_t> vc(nc);
    std::iota(vc.begin(), vc.end(), std::size_t{1});
    V->set_payload(Payload(from_block_matrix(vs, vr, vc, vd, cfg.blocks())));
    // S is diagonal in the bond index; its canonical layout is bond-in | bond-out.
    DenseTensor sd = DenseTensor::zeros({chi, chi});
    std::vector<cplx> sv(chi * chi);
    for (std::size_t i = 0; i < chi; ++i) sv[i * chi + i] = svals[i];
    auto simp = impose_symmetry(DenseTensor({chi, chi}, std::move(sv)), ss.indices, ss.flux, cfg.blocks());
    S->set_payload(Payload(std::move(simp.tensor)));
  } else {
    auto t = node_dense(n);
    Matrix m = dense_matrix(t, row_axes, col_axes, false, cfg.reshape_cache());
    auto svd = truncated_svd(m, policy, cfg.svd_variant, cfg.auto_block_tol);
    out.spectrum = svd.spectrum;
    const auto chi = static_cast<std::size_t>(svd.u.cols());
    Dims ud, vd;
    for (auto a : row_axes) ud.push_back(t.dims()[a]);
    ud.push_back(chi);
    vd.push_back(chi);
    for (auto a : col_axes) vd.push_back(t.dims()[a]);
    U->set_payload(Payload(DenseTensor(ud, std::vector<cplx>(svd.u.data(), svd.u.data() + svd.u.size()))));
    V->set_payload(Payload(DenseTensor(vd, std::vector<cplx>(svd.vdag.data(), svd.vdag.data() + svd.vdag.size()))));
    std::vector<cplx> sv(chi * chi);
    for (std::size_t i = 0; i < chi; ++i) sv[i * chi + i] = out.spectrum.values[i];
    S->set_payload(Payload(DenseTensor({chi, chi}, std::move(sv), ElementKind::real)));
  }

  std::size_t next = 0;
  for (char c : rows) {
    const auto& l = n->leg(c);
    Leg nl{c, {}, l.axis_labels, {}, 0};
    for (std::size_t i = 0; i < l.axes.size(); ++i) nl.axes.push_back(next++);
    U->legs.push_back(nl);
  }
  U->legs.push_back(Leg{labels.u, {next}, {}, {}, 0});
  S->legs = {Leg{labels.s_left, {0}, {}, {}, 0}, Leg{labels.s_right, {1}, {}, {}, 0}};
  V->legs.push_back(Leg{labels.v, {0}, {}, {}, 0});
  next = 1;
  for (char c : cols) {
    const auto& l = n->leg(c);
    Leg nl{c, {}, l.axis_labels, {}, 0};
    for (std::size_t i = 0; i < l.axes.size(); ++i) nl.axes.push_back(next++);
    V->legs.push_back(nl);
  }
  detail::check_labels(U->labels());
  detail::check_labels(V->labels());
  if (labels.s_left == labels.s_right)
    fail(ErrorKind::invalid_argument, "the two legs of S need different labels");
  for (char c : rows) detail::transfer_connection(n, n->leg(c), U, c);
  for (char c : cols) detail::transfer_connection(n, n->leg(c), V, c);
  node_join(U, labels.u, S, labels.s_left);
  node_join(S, labels.s_right, V, labels.v);
  for (const auto& x : {U, S, V}) adopt_into(n->owner, x);
  detail::retire(n, U);
  if (!leg_map.empty()) {
    auto m = LegMap::parse(leg_map);
    LegMap mu, mv;
    for (std::size_t i = 0; i < m.from.size(); ++i) {
      if (U->find_leg(m.from[i])) {
        mu.from += m.from[i];
        mu.to += m.to[i];
      }
      if (V->find_leg(m.from[i])) {
        mv.from += m.from[i];
        mv.to += m.to[i];
      }
    }
    node_relabel(U, mu);
    node_relabel(V, mv);
  }
  out.u = U;
  out.s = S;
  out.vdag = V;
  return out;
}

}  // namespace tnt
