#pragma once

// Tier-0 dense storage: flattened row-major complex arrays, index permutation
// with a reusable plan cache, matricization and fused-leg bookkeeping.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <map>
#include <memory>
#include <mutex>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "tnt/error.hpp"
#include "tnt/types.hpp"

namespace tnt {

enum class ElementKind { real, complex };

class DenseTensor {
 public:
  DenseTensor() : dims_{1}, values_(1, cplx{0.0, 0.0}) {}

  DenseTensor(Dims dims, std::vector<cplx> values, ElementKind kind = ElementKind::complex)
      : dims_(std::move(dims)), values_(std::move(values)), kind_(kind) {
    for (auto d : dims_) require(d >= 1, ErrorKind::invalid_argument, "tensor dimensions must be >= 1");
    require(values_.size() == product(dims_), ErrorKind::invalid_argument,
            "value count " + std::to_string(values_.size()) + " does not match dimensions");
    if (kind_ == ElementKind::real) {
      for (auto& v : values_) v = cplx{v.real(), 0.0};
    }
  }

  static DenseTensor zeros(Dims dims) {
    auto n = product(dims);
    return DenseTensor(std::move(dims), std::vector<cplx>(n), ElementKind::real);
  }

  static DenseTensor from_real(Dims dims, const std::vector<double>& values) {
    std::vector<cplx> v(values.begin(), values.end());
    return DenseTensor(std::move(dims), std::move(v), ElementKind::real);
  }

  /// A rank-0 tensor holding a single scalar.
  static DenseTensor scalar(cplx value) {
    DenseTensor t;
    t.dims_.clear();
    t.values_ = {value};
    t.kind_ = value.imag() == 0.0 ? ElementKind::real : ElementKind::complex;
    return t;
  }

  const Dims& dims() const noexcept { return dims_; }
  std::size_t rank() const noexcept { return dims_.size(); }
  std::size_t size() const noexcept { return values_.size(); }
  ElementKind kind() const noexcept { return kind_; }
  std::span<const cplx> values() const noexcept { return values_; }
  const cplx* data() const noexcept { return values_.data(); }
  std::vector<cplx> take_values() && { return std::move(values_); }

  cplx at(std::span<const std::size_t> index) const {
    require(index.size() == dims_.size(), ErrorKind::invalid_argument, "index rank mismatch");
    std::size_t offset = 0;
    for (std::size_t k = 0; k < index.size(); ++k) {
      require(index[k] < dims_[k], ErrorKind::invalid_argument, "index out of range");
      offset = offset * dims_[k] + index[k];
    }
    return values_[offset];
  }
  cplx at(std::initializer_list<std::size_t> index) const {
    return at(std::span<const std::size_t>(index.begin(), index.size()));
  }

  double frobenius_norm() const {
    double s = 0.0;
    for (auto v : values_) s += std::norm(v);
    return std::sqrt(s);
  }

  /// Same values reinterpreted under new dimensions with the same element count.
  DenseTensor reshaped(Dims dims) const& {
    DenseTensor t = *this;
    return std::move(t).reshaped(std::move(dims));
  }
  DenseTensor reshaped(Dims dims) && {
    require(product(dims) == values_.size(), ErrorKind::invalid_argument, "reshape changes element count");
    dims_ = std::move(dims);
    return std::move(*this);
  }

  friend bool operator==(const DenseTensor& a, const DenseTensor& b) {
    return a.dims_ == b.dims_ && a.values_ == b.values_;
  }

 private:
  Dims dims_;
  std::vector<cplx> values_;
  ElementKind kind_ = ElementKind::complex;
};

inline bool is_permutation_of_rank(std::span<const std::size_t> order, std::size_t rank) {
  if (order.size() != rank) return false;
  std::vector<bool> seen(rank, false);
  for (auto p : order) {
    if (p >= rank || seen[p]) return false;
    seen[p] = true;
  }
  return true;
}

/// Precomputed source offsets for one (dims, order) pair.
struct PermutationPlan {
  Dims source_dims;
  std::vector<std::size_t> order;
  std::vector<std::size_t> gather;  // gather[target offset] = source offset

  Dims target_dims() const {
    Dims out(order.size());
    for (std::size_t k = 0; k < order.size(); ++k) out[k] = source_dims[order[k]];
    return out;
  }
};

inline PermutationPlan make_permutation_plan(const Dims& dims, std::span<const std::size_t> order) {
  require(is_permutation_of_rank(order, dims.size()), ErrorKind::invalid_permutation,
          "order is not a permutation of the tensor's index positions");
  PermutationPlan plan;
  plan.source_dims = dims;
  plan.order.assign(order.begin(), order.end());
  const auto n = product(dims);
  plan.gather.resize(n);
  const auto rank = dims.size();
  if (rank == 0) {
    plan.gather[0] = 0;
    return plan;
  }
  auto src_strides = row_major_strides(dims);
  Dims tdims = plan.target_dims();
  std::vector<std::size_t> step(rank);
  for (std::size_t k = 0; k < rank; ++k) step[k] = src_strides[order[k]];
  // Odometer over target multi-indices, tracking the source offset incrementally.
  std::vector<std::size_t> idx(rank, 0);
  std::size_t src = 0;
  for (std::size_t t = 0; t < n; ++t) {
    plan.gather[t] = src;
    for (std::size_t k = rank; k-- > 0;) {
      if (++idx[k] < tdims[k]) {
        src += step[k];
        break;
      }
      src -= step[k] * (tdims[k] - 1);
      idx[k] = 0;
    }
  }
  return plan;
}

/// Thread-safe store of permutation plans keyed by (dims, order). Evicts the
/// oldest entry once the cap is reached.
class PlanCache {
 public:
  explicit PlanCache(std::size_t max_entries = 256) : max_entries_(max_entries) {}

  std::shared_ptr<const PermutationPlan> get(const Dims& dims, std::span<const std::size_t> order) {
    Key key{dims, std::vector<std::size_t>(order.begin(), order.end())};
    {
      std::lock_guard lock(mutex_);
      if (auto it = plans_.find(key); it != plans_.end()) {
        ++hits_;
        return it->second;
      }
    }
    auto plan = std::make_shared<const PermutationPlan>(make_permutation_plan(dims, order));
    std::lock_guard lock(mutex_);
    ++misses_;
    auto [it, inserted] = plans_.emplace(key, plan);
    if (inserted) {
      insertion_order_.push_back(key);
      while (max_entries_ > 0 && plans_.size() > max_entries_) {
        plans_.erase(insertion_order_.front());
        insertion_order_.pop_front();
      }
    }
    return it->second;
  }

  std::size_t size() const {
    std::lock_guard lock(mutex_);
    return plans_.size();
  }
  std::size_t hits() const {
    std::lock_guard lock(mutex_);
    return hits_;
  }
  std::size_t misses() const {
    std::lock_guard lock(mutex_);
    return misses_;
  }
  std::size_t max_entries() const noexcept { return max_entries_; }
  void clear() {
    std::lock_guard lock(mutex_);
    plans_.clear();
    insertion_order_.clear();
  }

 private:
  using Key = std::pair<Dims, std::vector<std::size_t>>;
  mutable std::mutex mutex_;
  std::size_t max_entries_;
  std::map<Key, std::shared_ptr<const PermutationPlan>> plans_;
  std::deque<Key> insertion_order_;
  std::size_t hits_ = 0;
  std::size_t misses_ = 0;
};

inline bool is_identity_order(std::span<const std::size_t> order) {
  for (std::size_t k = 0; k < order.size(); ++k)
    if (order[k] != k) return false;
  return true;
}

inline std::vector<cplx> apply_gather(const PermutationPlan& plan, std::span<const cplx> source, bool conjugate = false) {
  std::vector<cplx> out(plan.gather.size());
  if (conjugate) {
    for (std::size_t t = 0; t < out.size(); ++t) out[t] = std::conj(source[plan.gather[t]]);
  } else {
    for (std::size_t t = 0; t < out.size(); ++t) out[t] = source[plan.gather[t]];
  }
  return out;
}

/// result(i_{order[0]}, ..., i_{order[r-1]}) = t(i_0, ..., i_{r-1}).
inline DenseTensor permute(const DenseTensor& t, std::span<const std::size_t> order, PlanCache* cache = nullptr) {
  require(order.size() == t.rank(), ErrorKind::invalid_permutation,
          "permutation length " + std::to_string(order.size()) + " does not match rank " + std::to_string(t.rank()));
  if (is_identity_order(order)) return t;
  std::shared_ptr<const PermutationPlan> plan =
      cache ? cache->get(t.dims(), order) : std::make_shared<const PermutationPlan>(make_permutation_plan(t.dims(), order));
  return DenseTensor(plan->target_dims(), apply_gather(*plan, t.values()), t.kind());
}

inline DenseTensor permute(const DenseTensor& t, std::initializer_list<std::size_t> order, PlanCache* cache = nullptr) {
  return permute(t, std::span<const std::size_t>(order.begin(), order.size()), cache);
}

inline std::vector<std::size_t> inverse_permutation(std::span<const std::size_t> order) {
  std::vector<std::size_t> inv(order.size());
  for (std::size_t k = 0; k < order.size(); ++k) inv[order[k]] = k;
  return inv;
}

/// A tensor flattened to rows x cols together with the permutation that produced it.
struct Matricized {
  Matrix matrix;
  std::vector<std::size_t> permutation;
  Dims row_dims;
  Dims col_dims;
};

/// Row indices first (in the given order), remaining indices as columns in
/// their original relative order.
inline std::vector<std::size_t> matricize_order(std::size_t rank, std::span<const std::size_t> row_positions) {
  std::vector<bool> is_row(rank, false);
  for (auto p : row_positions) {
    require(p < rank, ErrorKind::invalid_argument, "row position " + std::to_string(p) + " out of range");
    require(!is_row[p], ErrorKind::invalid_argument, "duplicate row position " + std::to_string(p));
    is_row[p] = true;
  }
  std::vector<std::size_t> order(row_positions.begin(), row_positions.end());
  for (std::size_t k = 0; k < rank; ++k)
    if (!is_row[k]) order.push_back(k);
  return order;
}

inline Matricized matricize(const DenseTensor& t, std::span<const std::size_t> row_positions, PlanCache* cache = nullptr) {
  auto order = matricize_order(t.rank(), row_positions);
  Matricized m;
  m.permutation = order;
  for (std::size_t k = 0; k < order.size(); ++k)
    (k < row_positions.size() ? m.row_dims : m.col_dims).push_back(t.dims()[order[k]]);
  auto permuted = permute(t, order, cache);
  m.matrix = ConstMatrixMap(permuted.data(), static_cast<Eigen::Index>(product(m.row_dims)),
                            static_cast<Eigen::Index>(product(m.col_dims)));
  return m;
}

inline Matricized matricize(const DenseTensor& t, std::initializer_list<std::size_t> rows, PlanCache* cache = nullptr) {
  return matricize(t, std::span<const std::size_t>(rows.begin(), rows.size()), cache);
}

/// Inverse of matricize: reshapes the matrix back and undoes the permutation.
inline DenseTensor dematricize(const Matrix& matrix, const std::vector<std::size_t>& permutation, const Dims& row_dims,
                               const Dims& col_dims, PlanCache* cache = nullptr) {
  Dims permuted_dims = row_dims;
  permuted_dims.insert(permuted_dims.end(), col_dims.begin(), col_dims.end());
  require(static_cast<std::size_t>(matrix.rows()) == product(row_dims) &&
              static_cast<std::size_t>(matrix.cols()) == product(col_dims),
          ErrorKind::invalid_argument, "matrix shape does not match the matricization plan");
  std::vector<cplx> values(matrix.data(), matrix.data() + matrix.size());
  DenseTensor permuted(permuted_dims, std::move(values));
  auto inv = inverse_permutation(permutation);
  return permute(permuted, inv, cache);
}

inline DenseTensor dematricize(const Matricized& m, PlanCache* cache = nullptr) {
  return dematricize(m.matrix, m.permutation, m.row_dims, m.col_dims, cache);
}

/// Record of legs fused into one: no values move, only the child labels and
/// dimensions are kept so that the fuse can be undone.
struct FusedLeg {
  std::string child_labels;
  Dims child_dims;

  std::size_t dim() const { return product(child_dims); }
};

inline FusedLeg fuse_record(std::string_view labels, const Dims& dims) {
  require(labels.size() >= 2, ErrorKind::invalid_argument, "at least two legs are needed for a fuse");
  require(labels.size() == dims.size(), ErrorKind::invalid_argument, "label count does not match dimension count");
  return FusedLeg{std::string(labels), dims};
}

}  // namespace tnt
