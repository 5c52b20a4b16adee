#pragma once

// List contraction with order search, and the linked-list Network.

#include <algorithm>
#include <deque>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include "tnt/node.hpp"

namespace tnt {

// ---------------------------------------------------------------- order search

/// Abstract description of a group of tensors for order planning: each tensor
/// is a list of edge ids, each edge has a dimension. Shared ids are contracted.
struct ContractionGraph {
  std::vector<std::vector<int>> tensors;
  std::map<int, double> edge_dim;
};

struct ContractionStep {
  std::size_t i, j;  // positions in the current list; the result replaces i, j is removed
};

struct ContractionPlan {
  std::vector<ContractionStep> steps;
  double cost = 0.0;
};

namespace detail {

inline std::vector<int> merge_edges(const std::vector<int>& a, const std::vector<int>& b) {
  std::vector<int> out;
  for (int e : a)
    if (std::find(b.begin(), b.end(), e) == b.end()) out.push_back(e);
  for (int e : b)
    if (std::find(a.begin(), a.end(), e) == a.end()) out.push_back(e);
  return out;
}

inline double step_cost(const ContractionGraph& g, const std::vector<int>& a, const std::vector<int>& b) {
  std::set<int> all(a.begin(), a.end());
  all.insert(b.begin(), b.end());
  double c = 1.0;
  for (int e : all) c *= g.edge_dim.at(e);
  return c;
}

inline void search_orders(const ContractionGraph& g, std::vector<std::vector<int>> current,
                          std::vector<ContractionStep>& path, double cost, ContractionPlan& best, bool& found) {
  if (current.size() == 1) {
    // Strictly smaller wins, so the lexicographically first order keeps ties.
    if (!found || cost < best.cost) {
      best.steps = path;
      best.cost = cost;
      found = true;
    }
    return;
  }
  for (std::size_t i = 0; i < current.size(); ++i)
    for (std::size_t j = i + 1; j < current.size(); ++j) {
      auto next = current;
      const double c = step_cost(g, current[i], current[j]);
      next[i] = merge_edges(current[i], current[j]);
      next.erase(next.begin() + static_cast<std::ptrdiff_t>(j));
      path.push_back({i, j});
      search_orders(g, std::move(next), path, cost + c, best, found);
      path.pop_back();
    }
}

}  // namespace detail

/// Exhaustive search over pairwise orders; cost of a step is the product of
/// the dims of every edge touching either operand.
inline ContractionPlan best_contraction_order(const ContractionGraph& g) {
  ContractionPlan best;
  bool found = false;
  std::vector<ContractionStep> path;
  detail::search_orders(g, g.tensors, path, 0.0, best, found);
  return best;
}

/// Every complete pairwise order, in lexicographic order of steps.
inline std::vector<std::vector<ContractionStep>> all_contraction_orders(std::size_t n) {
  std::vector<std::vector<ContractionStep>> out;
  std::vector<ContractionStep> path;
  std::function<void(std::size_t)> rec = [&](std::size_t m) {
    if (m == 1) {
      out.push_back(path);
      return;
    }
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = i + 1; j < m; ++j) {
        path.push_back({i, j});
        rec(m - 1);
        path.pop_back();
      }
  };
  rec(n);
  return out;
}

inline double plan_cost(const ContractionGraph& g, const std::vector<ContractionStep>& steps) {
  auto cur = g.tensors;
  double cost = 0.0;
  for (const auto& s : steps) {
    cost += detail::step_cost(g, cur[s.i], cur[s.j]);
    cur[s.i] = detail::merge_edges(cur[s.i], cur[s.j]);
    cur.erase(cur.begin() + static_cast<std::ptrdiff_t>(s.j));
  }
  return cost;
}

namespace detail {

inline constexpr std::string_view kLabelPool = "0123456789abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ";

inline ContractionGraph graph_of(const std::vector<Node>& nodes) {
  ContractionGraph g;
  std::map<std::pair<const NodeData*, char>, int> ids;
  int next = 0;
  for (const auto& n : nodes) {
    std::vector<int> edges;
    for (const auto& l : n->legs) {
      auto p = l.peer.lock();
      int id;
      auto key = std::make_pair(n.get(), l.label);
      if (auto it = ids.find(key); it != ids.end()) {
        id = it->second;
      } else {
        id = next++;
        bool in_group = p && std::find(nodes.begin(), nodes.end(), p) != nodes.end();
        if (in_group) ids[{p.get(), l.peer_label}] = id;
      }
      g.edge_dim[id] = static_cast<double>(n->leg_dim(l.label));
      edges.push_back(id);
    }
    g.tensors.push_back(std::move(edges));
  }
  return g;
}

}  // namespace detail

/// Contracts a group of nodes into one whose legs are relabeled to
/// `output_legs`, taken in node-list order. Three or four nodes use the
/// cheapest pairwise order; longer lists go in the given order, with nodes
/// joined to the rest only through dimension-1 legs moved to the end.
/// `steps`, when given, overrides the order (used by the property tests).
inline Node contract_list(std::string_view output_legs, std::vector<Node> nodes,
                          const SystemConfig& cfg = *default_config(),
                          const std::vector<ContractionStep>* steps = nullptr) {
  require(!nodes.empty(), ErrorKind::invalid_argument, "nothing to contract");
  for (auto& n : nodes) n = resolve(n);
  for (std::size_t i = 0; i < nodes.size(); ++i)
    for (std::size_t j = 0; j < i; ++j)
      require(nodes[i] != nodes[j], ErrorKind::invalid_argument, "a node appears twice in the contraction list");
  for (auto& n : nodes) node_trace_self(n, cfg);

  // Unique labels for every leg so that intermediates never collide.
  std::size_t total = 0;
  for (const auto& n : nodes) total += n->legs.size();
  require(total <= detail::kLabelPool.size(), ErrorKind::invalid_argument,
          "contraction list has more legs than available labels");
  std::size_t next = 0;
  for (const auto& n : nodes) {
    LegMap m;
    for (const auto& l : n->legs) {
      m.from += l.label;
      m.to += detail::kLabelPool[next++];
    }
    node_relabel(n, m);
  }
  std::string survivors;
  for (const auto& n : nodes)
    for (const auto& l : n->legs) {
      auto p = l.peer.lock();
      if (!(p && std::find(nodes.begin(), nodes.end(), p) != nodes.end())) survivors += l.label;
    }
  require(output_legs.size() == survivors.size(), ErrorKind::invalid_argument,
          "output legs '" + std::string(output_legs) + "' name " + std::to_string(output_legs.size()) +
              " legs but the contraction leaves " + std::to_string(survivors.size()));

  std::vector<ContractionStep> order;
  if (steps) {
    order = *steps;
  } else if (nodes.size() == 3 || nodes.size() == 4) {
    order = best_contraction_order(detail::graph_of(nodes)).steps;
  } else if (nodes.size() > 4) {
    std::vector<Node> front, back;
    for (const auto& n : nodes) {
      bool wide = false, linked = false;
      for (const auto& l : n->legs) {
        auto p = l.peer.lock();
        if (p && std::find(nodes.begin(), nodes.end(), p) != nodes.end()) {
          linked = true;
          if (n->leg_dim(l.label) > 1) wide = true;
        }
      }
      (linked && !wide ? back : front).push_back(n);
    }
    nodes = front;
    nodes.insert(nodes.end(), back.begin(), back.end());
    for (std::size_t k = 1; k < nodes.size(); ++k) order.push_back({0, 1});
  } else if (nodes.size() == 2) {
    order.push_back({0, 1});
  }

  for (const auto& s : order) {
    require(s.i < s.j && s.j < nodes.size(), ErrorKind::invalid_argument, "invalid contraction step");
    nodes[s.i] = contract_pair(nodes[s.i], nodes[s.j], {}, {}, cfg);
    nodes.erase(nodes.begin() + static_cast<std::ptrdiff_t>(s.j));
  }
  require(nodes.size() == 1, ErrorKind::invalid_argument, "contraction order left more than one node");
  auto result = nodes.front();
  if (!survivors.empty()) {
    node_reorder(result, survivors, cfg);
    node_relabel(result, LegMap{survivors, std::string(output_legs)});
  } else {
    node_canonicalize_axes(result, cfg);
  }
  return result;
}

inline Node contract_list(std::string_view output_legs, std::initializer_list<Node> nodes,
                          const SystemConfig& cfg = *default_config()) {
  return contract_list(output_legs, std::vector<Node>(nodes), cfg);
}

// ---------------------------------------------------------------- network

/// Linked list of nodes with start and end terminators. The terminators are
/// singleton nodes whose single leg points at the first and last node.
class Network {
 public:
  Network() : registry_(std::make_shared<Registry>()) {
    start_ = make_sentinel();
    end_ = make_sentinel();
  }

  static Network create() { return Network(); }

  bool empty() const { return first() == nullptr; }

  Node first() const {
    first_ = resolve(first_);
    return first_;
  }
  Node last() const {
    last_ = resolve(last_);
    return last_;
  }
  const Node& start_sentinel() const {
    point(start_, first());
    return start_;
  }
  const Node& end_sentinel() const {
    point(end_, last());
    return end_;
  }

  std::shared_ptr<Registry> registry() const { return registry_; }

  /// n's leg `toward_rest` joins the current first node's leg `rest_leg`.
  void insert_at_start(const Node& n, char toward_rest, char rest_leg) {
    if (auto f = first()) node_join(n, toward_rest, f, rest_leg);
    if (!last()) last_ = n;
    first_ = n;
    adopt(n);
  }

  /// The current last node's leg `rest_leg` joins n's leg `toward_rest`.
  void insert_at_end(const Node& n, char toward_rest, char rest_leg) {
    if (auto l = last()) node_join(l, rest_leg, n, toward_rest);
    if (!first()) first_ = n;
    last_ = n;
    adopt(n);
  }

  /// Adds a node that is joined to the network by the caller (e.g. MPO or bra rows).
  void adopt(const Node& n) { adopt_into(registry_, n); }

  void set_first(const Node& n) {
    first_ = n;
    adopt(n);
  }
  void set_last(const Node& n) {
    last_ = n;
    adopt(n);
  }

  /// Live nodes, in order of adoption.
  std::vector<Node> nodes() const {
    std::vector<Node> out;
    for (const auto& n : registry_->nodes)
      if (!n->forward && std::find(out.begin(), out.end(), n) == out.end()) out.push_back(n);
    return out;
  }

  std::vector<std::vector<double>> schmidt;  // per-bond spectra, when known

 private:
  static Node make_sentinel() {
    auto n = std::make_shared<NodeData>();
    n->legs.push_back(Leg{'T', {0}, {}, {}, 0});
    n->set_payload(Payload(DenseTensor({1}, {cplx{1.0}})));
    return n;
  }
  static void point(const Node& sentinel, const Node& target) {
    sentinel->legs[0].peer = target;
    sentinel->legs[0].peer_label = 0;
  }

  std::shared_ptr<Registry> registry_;
  Node start_, end_;
  mutable Node first_, last_;
};

inline Node find_first(const Network& n) { return n.first(); }
inline Node find_last(const Network& n) { return n.last(); }

/// Copies every node (sharing payloads) and the connections among them.
inline Network network_copy(const Network& src, bool conjugate = false) {
  Network out;
  auto nodes = src.nodes();
  std::map<const NodeData*, Node> copy;
  for (const auto& n : nodes) {
    auto c = node_copy(n, conjugate);
    copy[n.get()] = c;
    out.adopt(c);
  }
  for (const auto& n : nodes)
    for (const auto& l : n->legs) {
      auto p = l.peer.lock();
      if (!p) continue;
      auto it = copy.find(p.get());
      if (it == copy.end()) continue;
      auto& cl = copy[n.get()]->leg(l.label);
      if (cl.connected()) continue;
      node_join(copy[n.get()], l.label, it->second, l.peer_label);
    }
  if (auto f = src.first()) out.set_first(copy.at(f.get()));
  if (auto l = src.last()) out.set_last(copy.at(l.get()));
  out.schmidt = src.schmidt;
  return out;
}

/// Strips the network structure. The returned group holds the nodes alive;
/// connections are untouched.
inline std::vector<Node> network_to_node_group(Network& net) {
  auto nodes = net.nodes();
  for (const auto& n : nodes) n->owner.reset();
  net = Network();
  return nodes;
}

/// Cuts the network between `last_of_first` and `first_of_second`, which must
/// be connected. The second part is returned as a new network.
inline Network network_split(Network& net, const Node& last_of_first, const Node& first_of_second) {
  bool linked = false;
  for (const auto& l : last_of_first->legs)
    if (l.peer.lock() == first_of_second) linked = true;
  require(linked, ErrorKind::structural,
          last_of_first->describe() + " and " + first_of_second->describe() + " are not connected");
  node_split(last_of_first, first_of_second);
  Network second;
  // Everything reachable from first_of_second moves to the new network.
  std::vector<Node> stack{first_of_second};
  std::set<const NodeData*> seen{first_of_second.get()};
  auto all = net.nodes();
  while (!stack.empty()) {
    auto n = stack.back();
    stack.pop_back();
    second.adopt(n);
    for (const auto& l : n->legs)
      if (auto p = l.peer.lock(); p && !seen.count(p.get()) &&
                                  std::find(all.begin(), all.end(), p) != all.end()) {
        seen.insert(p.get());
        stack.push_back(p);
      }
  }
  std::erase_if(net.registry()->nodes, [&](const Node& n) { return seen.count(n.get()) > 0; });
  second.set_first(first_of_second);
  second.set_last(net.last());
  net.set_last(last_of_first);
  return second;
}

/// Contracts every node of the network into one.
inline Node network_contract_all(Network& net, std::string_view output_legs,
                                 const SystemConfig& cfg = *default_config()) {
  auto nodes = net.nodes();
  return contract_list(output_legs, nodes, cfg);
}

}  // namespace tnt
