#pragma once

// System-wide settings. A SystemConfig is a plain value passed to the
// operations that need it; default_config() is the ambient fallback.

#include <cstdio>
#include <memory>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>

#include "tnt/dense_tensor.hpp"
#include "tnt/diagnostics.hpp"
#include "tnt/error.hpp"
#include "tnt/linalg.hpp"
#include "tnt/symmetric_tensor.hpp"

namespace tnt {

enum class SymmetryMode { none, u1 };

inline constexpr const char* kLibraryVersion = "0.3.0";

/// Shortest "%g"-style rendering, so 1e-08 prints the way C printf does.
inline std::string format_g(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

struct SystemConfig {
  SymmetryMode symmetry = SymmetryMode::none;
  std::size_t charges_per_label = 1;
  std::optional<DenseTensor> basis_op;
  std::optional<ChargedIndex> physical_charges;  // for the incoming physical leg
  double rel_trunc_tol = 1e-16;
  double abs_trunc_tol = -1.0;
  double trunc_err_tol = 1e-8;
  double auto_block_tol = -1.0;
  TruncationType trunc_type = TruncationType::two_norm;
  SvdVariant svd_variant = SvdVariant::divide_conquer;
  bool reshape_reuse = true;
  std::size_t max_eig_iter = 300;
  double eig_tol = 1e-10;
  bool strict_symmetry = false;  // discarded weight > 0 throws instead of warning

  std::shared_ptr<PlanCache> plan_cache = std::make_shared<PlanCache>();
  std::shared_ptr<BlockPlanCache> block_cache = std::make_shared<BlockPlanCache>();

  bool symmetric() const { return symmetry == SymmetryMode::u1; }

  PlanCache* reshape_cache() const { return reshape_reuse ? plan_cache.get() : nullptr; }
  BlockPlanCache* blocks() const { return block_cache.get(); }

  TruncationPolicy truncation(std::optional<std::size_t> max_dim = std::nullopt) const {
    TruncationPolicy p;
    p.max_dim = max_dim;
    p.abs_tol = abs_trunc_tol;
    p.rel_tol = rel_trunc_tol;
    p.err_tol = trunc_err_tol;
    p.type = trunc_type;
    return p;
  }

  LanczosOptions eigensolver() const {
    LanczosOptions o;
    o.max_iter = max_eig_iter;
    o.tol = eig_tol;
    return o;
  }
};

inline std::string sys_info_print(const SystemConfig& c) {
  std::ostringstream os;
  os << "------------- System Information -------------\n";
  if (c.symmetry == SymmetryMode::none)
    os << "No symmetry type set.\n";
  else
    os << "Symmetry type is U(1) with " << c.charges_per_label << " quantum number"
       << (c.charges_per_label == 1 ? "" : "s") << " per label.\n";
  if (!c.basis_op)
    os << "No basis operator set.\n";
  else
    os << "Basis operator set with physical dimension " << c.basis_op->dims().front()
       << (c.physical_charges ? " and quantum numbers" : "") << ".\n";
  os << "Relative truncation tolerance is " << format_g(c.rel_trunc_tol) << ".\n";
  os << "Absolute truncation tolerance is " << format_g(c.abs_trunc_tol) << ".\n";
  os << "Truncation error tolerance is " << format_g(c.trunc_err_tol) << ".\n";
  os << "Tolerance for automatic blocking is " << format_g(c.auto_block_tol) << ".\n";
  os << "Current truncation type is " << to_string(c.trunc_type) << ".\n";
  os << "SVD type is "
     << (c.svd_variant == SvdVariant::divide_conquer ? "LAPACK divide and conquer" : "LAPACK standard") << ".\n";
  os << "Reshape re-use is turned " << (c.reshape_reuse ? "on" : "off") << ".\n";
  os << "Maximum number of iterations for eigenvalue solver is " << c.max_eig_iter << ".\n";
  return os.str();
}

namespace detail {
inline void announce(const SystemConfig& c) { diag(sys_info_print(c)); }
inline void check_tol(double v, const char* what) {
  require(v >= 0.0 || v == -1.0, ErrorKind::invalid_argument, std::string(what) + " must be >= 0 or -1");
}
}  // namespace detail

inline void symm_type_set(SystemConfig& c, std::string_view kind, std::size_t m) {
  if (kind != "U(1)" && kind != "U1" && kind != "u1")
    fail(ErrorKind::unsupported_symmetry, "unsupported symmetry type '" + std::string(kind) + "'");
  require(m >= 1 && m <= kMaxChargesPerLabel, ErrorKind::invalid_argument, "labels carry between 1 and 4 charges");
  c.symmetry = SymmetryMode::u1;
  c.charges_per_label = m;
  detail::announce(c);
}

/// Basis operator (legs "DU") with optional quantum numbers for the physical index.
inline void basis_op_set(SystemConfig& c, DenseTensor op, std::optional<std::vector<QN>> labels = std::nullopt) {
  require(op.rank() == 2 && op.dims()[0] == op.dims()[1], ErrorKind::invalid_argument,
          "the basis operator must be a square two-leg tensor");
  if (labels) {
    require(labels->size() == op.dims()[0], ErrorKind::invalid_argument, "one quantum number per basis state");
    for (const auto& q : *labels)
      require(q.m == c.charges_per_label, ErrorKind::invalid_argument,
              "quantum number " + q.to_string() + " does not carry " + std::to_string(c.charges_per_label) +
                  " charges");
    c.physical_charges = ChargedIndex::in(std::move(*labels));
  } else {
    c.physical_charges.reset();
  }
  c.basis_op = std::move(op);
  detail::announce(c);
}

inline void rel_trunc_tol_set(SystemConfig& c, double v) {
  detail::check_tol(v, "relative truncation tolerance");
  c.rel_trunc_tol = v;
  detail::announce(c);
}
inline void trunc_tol_set(SystemConfig& c, double v) {
  detail::check_tol(v, "absolute truncation tolerance");
  c.abs_trunc_tol = v;
  detail::announce(c);
}
inline void trunc_err_tol_set(SystemConfig& c, double v) {
  detail::check_tol(v, "truncation error tolerance");
  c.trunc_err_tol = v;
  detail::announce(c);
}
inline void trunc_type_set(SystemConfig& c, TruncationType t) {
  c.trunc_type = t;
  detail::announce(c);
}
inline void svd_tol_set(SystemConfig& c, double v) {
  detail::check_tol(v, "automatic blocking tolerance");
  c.auto_block_tol = v;
  detail::announce(c);
}
inline void svd_variant_set(SystemConfig& c, SvdVariant v) {
  c.svd_variant = v;
  detail::announce(c);
}
inline void reshape_reuse_set(SystemConfig& c, bool on) {
  c.reshape_reuse = on;
  detail::announce(c);
}
inline void max_eig_iter_set(SystemConfig& c, std::size_t n) {
  require(n > 0, ErrorKind::invalid_argument, "maximum eigensolver iterations must be positive");
  c.max_eig_iter = n;
  detail::announce(c);
}

namespace detail {
struct AmbientConfig {
  std::mutex mutex;
  std::shared_ptr<const SystemConfig> config = std::make_shared<const SystemConfig>();
};
inline AmbientConfig& ambient() {
  static AmbientConfig a;
  return a;
}
}  // namespace detail

inline std::shared_ptr<const SystemConfig> default_config() {
  auto& a = detail::ambient();
  std::lock_guard lock(a.mutex);
  return a.config;
}

inline void set_default_config(SystemConfig c) {
  auto p = std::make_shared<const SystemConfig>(std::move(c));
  auto& a = detail::ambient();
  std::lock_guard lock(a.mutex);
  a.config = std::move(p);
}

}  // namespace tnt
