#pragma once

// Named observables evaluated on MPS snapshots.

#include <map>
#include <string>
#include <vector>

#include "tnt/mps.hpp"

namespace tnt {

/// Single-site values are stored as 1 x L, all-pairs values as L x L.
using ObservableValues = std::map<std::string, Matrix>;

struct ObservableInfo {
  const char* key;
  BasisKind basis;
  bool all_pairs;
  const char* left;
  const char* right;  // unused for single-site observables
};

inline const std::vector<ObservableInfo>& observable_table() {
  static const std::vector<ObservableInfo> t{
      {"Ex1N", BasisKind::boson, false, "n", ""},
      {"Ex1Sz", BasisKind::spin, false, "Sz", ""},
      {"Ex2bdagb", BasisKind::boson, true, "bdag", "b"},
      {"Ex2SpSm", BasisKind::spin, true, "Sp", "Sm"},
  };
  return t;
}

inline const ObservableInfo& observable_info(std::string_view key, const BasisSpec& basis) {
  for (const auto& o : observable_table())
    if (key == o.key) {
      require(o.basis == basis.kind, ErrorKind::unsupported_observable,
              "observable '" + std::string(key) + "' does not apply to this system");
      return o;
    }
  fail(ErrorKind::unsupported_observable, "unknown observable '" + std::string(key) + "'");
}

inline void validate_observables(const std::vector<std::string>& keys, const BasisSpec& basis) {
  for (const auto& k : keys) observable_info(k, basis);
}

inline ObservableValues evaluate_observables(const MpsState& psi, const std::vector<std::string>& keys,
                                             const SystemConfig& cfg = *default_config()) {
  ObservableValues out;
  const auto L = Eigen::Index(psi.length());
  for (const auto& k : keys) {
    const auto& o = observable_info(k, psi.basis);
    if (o.all_pairs) {
      out[k] = expectation_all_pairs(psi, site_operator(psi.basis, o.left), site_operator(psi.basis, o.right), cfg);
    } else {
      auto v = expectation_single(psi, site_operator(psi.basis, o.left), cfg);
      Matrix row(1, L);
      for (Eigen::Index j = 0; j < L; ++j) row(0, j) = v[std::size_t(j)];
      out[k] = row;
    }
  }
  return out;
}

/// Steps at which snapshots are taken: 0, every `save_every` steps, and the last.
inline std::vector<std::size_t> observable_schedule(std::size_t steps, std::size_t save_every) {
  require(save_every >= 1, ErrorKind::invalid_argument, "save interval must be positive");
  std::vector<std::size_t> s;
  for (std::size_t k = 0; k <= steps; k += save_every) s.push_back(k);
  if (s.back() != steps) s.push_back(steps);
  return s;
}

}  // namespace tnt
