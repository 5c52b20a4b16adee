#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace tnt {

enum class ErrorKind {
  invalid_argument,
  invalid_permutation,
  incompatible_legs,
  leg_occupied,
  label_collision,
  incompatible_nodes,
  incompatible_blocks,
  not_connected,
  structural,
  not_covariant,
  decomposition_failed,
  convergence_failure,
  invalid_configuration,
  infeasible_sector,
  unsupported_term,
  unsupported_observable,
  unsupported_symmetry,
  parse_error,
  usage,
};

inline std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::invalid_argument: return "invalid-argument";
    case ErrorKind::invalid_permutation: return "invalid-permutation";
    case ErrorKind::incompatible_legs: return "incompatible-legs";
    case ErrorKind::leg_occupied: return "leg-occupied";
    case ErrorKind::label_collision: return "label-collision";
    case ErrorKind::incompatible_nodes: return "incompatible-nodes";
    case ErrorKind::incompatible_blocks: return "incompatible-blocks";
    case ErrorKind::not_connected: return "not-connected";
    case ErrorKind::structural: return "structural";
    case ErrorKind::not_covariant: return "not-covariant";
    case ErrorKind::decomposition_failed: return "decomposition-failed";
    case ErrorKind::convergence_failure: return "convergence-failure";
    case ErrorKind::invalid_configuration: return "invalid-configuration";
    case ErrorKind::infeasible_sector: return "infeasible-sector";
    case ErrorKind::unsupported_term: return "unsupported-term";
    case ErrorKind::unsupported_observable: return "unsupported-observable";
    case ErrorKind::unsupported_symmetry: return "unsupported-symmetry";
    case ErrorKind::parse_error: return "parse-error";
    case ErrorKind::usage: return "usage";
  }
  return "unknown";
}

/// Every failure raised by the library carries a machine-checkable kind.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

/// Raised by the iterative eigensolver; keeps the best residual reached.
class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, double best_residual)
      : Error(ErrorKind::convergence_failure, what), best_residual_(best_residual) {}

  double best_residual() const noexcept { return best_residual_; }

 private:
  double best_residual_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

inline void require(bool condition, ErrorKind kind, const std::string& what) {
  if (!condition) fail(kind, what);
}

}  // namespace tnt
