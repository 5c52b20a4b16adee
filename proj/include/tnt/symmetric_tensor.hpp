#pragma once

// U(1) block-sparse tensors.
//
// Every index carries a direction and one quantum-number label per index
// value. Only elements with  sum(incoming) - sum(outgoing) + flux == 0  are
// stored. The stored set does not depend on how the indices are split into
// rows and columns, so a BlockTensor keeps one flat array laid out in its
// canonical partition (incoming indices as rows, outgoing as columns; blocks
// keyed by total incoming charge, ascending) and any other partition is a
// gather of that array. Gathers are cached per structure in BlockPlanCache.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "tnt/dense_tensor.hpp"
#include "tnt/diagnostics.hpp"
#include "tnt/error.hpp"
#include "tnt/qn.hpp"
#include "tnt/types.hpp"

namespace tnt {

enum class Direction : std::int8_t { none = 0, incoming = 1, outgoing = -1 };

inline int sign(Direction d) { return static_cast<int>(d); }

inline Direction flipped(Direction d) {
  switch (d) {
    case Direction::incoming: return Direction::outgoing;
    case Direction::outgoing: return Direction::incoming;
    default: return Direction::none;
  }
}

struct ChargedIndex {
  Direction direction = Direction::incoming;
  std::vector<QN> labels;

  std::size_t dim() const { return labels.size(); }
  ChargedIndex flipped() const { return {tnt::flipped(direction), labels}; }

  static ChargedIndex in(std::vector<QN> labels) { return {Direction::incoming, std::move(labels)}; }
  static ChargedIndex out(std::vector<QN> labels) { return {Direction::outgoing, std::move(labels)}; }

  friend bool operator==(const ChargedIndex&, const ChargedIndex&) = default;
};

/// Labels for an index built from an m x dim table given row by row, e.g.
/// {{0,0,0,1,1,1},{0,1,2,0,1,2}} for two species.
inline std::vector<QN> labels_from_rows(const std::vector<std::vector<int>>& rows) {
  require(!rows.empty(), ErrorKind::invalid_argument, "empty label table");
  const auto dim = rows.front().size();
  std::vector<QN> out(dim);
  for (std::size_t j = 0; j < dim; ++j) {
    std::vector<int> v;
    for (const auto& r : rows) {
      require(r.size() == dim, ErrorKind::invalid_argument, "ragged label table");
      v.push_back(r[j]);
    }
    out[j] = QN::from(v);
  }
  return out;
}

struct BlockStructure {
  std::vector<ChargedIndex> indices;
  QN flux;

  std::size_t rank() const { return indices.size(); }
  Dims dims() const {
    Dims d;
    for (const auto& ix : indices) d.push_back(ix.dim());
    return d;
  }
  BlockStructure conjugated() const {
    BlockStructure s;
    for (const auto& ix : indices) s.indices.push_back(ix.flipped());
    s.flux = -flux;
    return s;
  }
  std::vector<std::int64_t> signature() const {
    std::vector<std::int64_t> sig;
    sig.push_back(static_cast<std::int64_t>(indices.size()));
    for (auto c : flux.charges) sig.push_back(c);
    for (const auto& ix : indices) {
      sig.push_back(static_cast<std::int64_t>(ix.direction));
      sig.push_back(static_cast<std::int64_t>(ix.dim()));
      for (const auto& q : ix.labels)
        for (auto c : q.charges) sig.push_back(c);
    }
    return sig;
  }
  friend bool operator==(const BlockStructure& a, const BlockStructure& b) {
    return a.flux == b.flux && a.indices == b.indices;
  }
};

/// One row/column split of a structure into charge sectors.
struct SectorLayout {
  std::vector<std::size_t> row_axes, col_axes;
  Dims row_dims, col_dims;
  std::vector<QN> keys;  // row charge of each sector, ascending
  std::vector<std::size_t> rows, cols, offset;
  std::vector<std::vector<std::size_t>> sector_rows, sector_cols;  // flat multi-indices
  std::vector<std::int32_t> row_sector, col_sector;                 // -1 when unused
  std::vector<std::uint32_t> row_pos, col_pos;
  std::size_t total = 0;

  std::optional<std::size_t> find(const QN& key) const {
    auto it = std::lower_bound(keys.begin(), keys.end(), key);
    if (it == keys.end() || !(*it == key)) return std::nullopt;
    return static_cast<std::size_t>(it - keys.begin());
  }
};

namespace detail {

inline std::vector<QN> group_charges(const BlockStructure& s, std::span<const std::size_t> axes, Dims& dims_out) {
  dims_out.clear();
  for (auto a : axes) dims_out.push_back(s.indices[a].dim());
  const auto n = product(dims_out);
  std::vector<QN> charges(n, QN::zero(s.flux.m));
  if (axes.empty()) return charges;
  std::vector<std::size_t> idx(axes.size(), 0);
  for (std::size_t x = 0; x < n; ++x) {
    QN q = QN::zero(s.flux.m);
    for (std::size_t k = 0; k < axes.size(); ++k) {
      const auto& ix = s.indices[axes[k]];
      q += ix.labels[idx[k]].scaled(sign(ix.direction));
    }
    charges[x] = q;
    for (std::size_t k = axes.size(); k-- > 0;) {
      if (++idx[k] < dims_out[k]) break;
      idx[k] = 0;
    }
  }
  return charges;
}

}  // namespace detail

inline SectorLayout make_layout(const BlockStructure& s, std::span<const std::size_t> row_axes,
                                std::span<const std::size_t> col_axes) {
  for (const auto& ix : s.indices)
    require(ix.direction != Direction::none, ErrorKind::invalid_argument, "charged index without a direction");
  SectorLayout L;
  L.row_axes.assign(row_axes.begin(), row_axes.end());
  L.col_axes.assign(col_axes.begin(), col_axes.end());
  auto rq = detail::group_charges(s, row_axes, L.row_dims);
  auto cq = detail::group_charges(s, col_axes, L.col_dims);
  std::map<QN, std::vector<std::size_t>> row_groups, col_groups;
  for (std::size_t x = 0; x < rq.size(); ++x) row_groups[rq[x]].push_back(x);
  for (std::size_t x = 0; x < cq.size(); ++x) col_groups[cq[x]].push_back(x);
  L.row_sector.assign(rq.size(), -1);
  L.col_sector.assign(cq.size(), -1);
  L.row_pos.assign(rq.size(), 0);
  L.col_pos.assign(cq.size(), 0);
  for (auto& [r, rows] : row_groups) {
    auto it = col_groups.find(-r - s.flux);
    if (it == col_groups.end()) continue;
    const auto id = static_cast<std::int32_t>(L.keys.size());
    L.keys.push_back(r);
    L.rows.push_back(rows.size());
    L.cols.push_back(it->second.size());
    L.offset.push_back(L.total);
    L.total += rows.size() * it->second.size();
    for (std::size_t p = 0; p < rows.size(); ++p) {
      L.row_sector[rows[p]] = id;
      L.row_pos[rows[p]] = static_cast<std::uint32_t>(p);
    }
    for (std::size_t p = 0; p < it->second.size(); ++p) {
      L.col_sector[it->second[p]] = id;
      L.col_pos[it->second[p]] = static_cast<std::uint32_t>(p);
    }
    L.sector_rows.push_back(rows);
    L.sector_cols.push_back(it->second);
  }
  return L;
}

inline std::vector<std::size_t> axes_with_direction(const BlockStructure& s, Direction d) {
  std::vector<std::size_t> axes;
  for (std::size_t a = 0; a < s.rank(); ++a)
    if (s.indices[a].direction == d) axes.push_back(a);
  return axes;
}

inline SectorLayout make_canonical_layout(const BlockStructure& s) {
  auto in = axes_with_direction(s, Direction::incoming);
  auto out = axes_with_direction(s, Direction::outgoing);
  return make_layout(s, in, out);
}

/// gather[p] = offset, in the canonical layout of the source, of element p of
/// the target partition layout.
struct Relayout {
  std::shared_ptr<const SectorLayout> layout;
  std::vector<std::size_t> gather;
};

namespace detail {

// For each flat multi-index over `axes` (dst axes), the contribution to the
// source's canonical incoming-row and outgoing-column flat indices.
inline void split_contributions(const BlockStructure& src, std::span<const std::size_t> axes,
                                std::span<const std::size_t> axis_map, const std::vector<std::size_t>& in_stride,
                                const std::vector<std::size_t>& out_stride, std::vector<std::size_t>& to_in,
                                std::vector<std::size_t>& to_out) {
  Dims dims;
  for (auto a : axes) dims.push_back(src.indices[axis_map[a]].dim());
  const auto n = product(dims);
  to_in.assign(n, 0);
  to_out.assign(n, 0);
  if (axes.empty()) return;
  std::vector<std::size_t> idx(axes.size(), 0);
  for (std::size_t x = 0; x < n; ++x) {
    std::size_t vin = 0, vout = 0;
    for (std::size_t k = 0; k < axes.size(); ++k) {
      auto sa = axis_map[axes[k]];
      if (src.indices[sa].direction == Direction::incoming)
        vin += idx[k] * in_stride[sa];
      else
        vout += idx[k] * out_stride[sa];
    }
    to_in[x] = vin;
    to_out[x] = vout;
    for (std::size_t k = axes.size(); k-- > 0;) {
      if (++idx[k] < dims[k]) break;
      idx[k] = 0;
    }
  }
}

}  // namespace detail

inline std::vector<std::size_t> build_relayout_gather(const BlockStructure& src, const SectorLayout& src_canon,
                                                      const SectorLayout& dst_layout,
                                                      std::span<const std::size_t> axis_map) {
  // Strides of each source axis within its canonical row (incoming) or column (outgoing) group.
  std::vector<std::size_t> in_stride(src.rank(), 0), out_stride(src.rank(), 0);
  {
    std::size_t s = 1;
    for (auto k = src_canon.row_axes.size(); k-- > 0;) {
      in_stride[src_canon.row_axes[k]] = s;
      s *= src.indices[src_canon.row_axes[k]].dim();
    }
    s = 1;
    for (auto k = src_canon.col_axes.size(); k-- > 0;) {
      out_stride[src_canon.col_axes[k]] = s;
      s *= src.indices[src_canon.col_axes[k]].dim();
    }
  }
  std::vector<std::size_t> r_in, r_out, c_in, c_out;
  detail::split_contributions(src, dst_layout.row_axes, axis_map, in_stride, out_stride, r_in, r_out);
  detail::split_contributions(src, dst_layout.col_axes, axis_map, in_stride, out_stride, c_in, c_out);
  std::vector<std::size_t> gather(dst_layout.total);
  std::size_t p = 0;
  for (std::size_t s = 0; s < dst_layout.keys.size(); ++s) {
    for (auto xr : dst_layout.sector_rows[s]) {
      for (auto xc : dst_layout.sector_cols[s]) {
        const auto vin = r_in[xr] + c_in[xc];
        const auto vout = r_out[xr] + c_out[xc];
        const auto ss = src_canon.row_sector[vin];
        require(ss >= 0 && src_canon.col_sector[vout] == ss, ErrorKind::incompatible_blocks,
                "relayout target contains an element the source does not store");
        gather[p++] = src_canon.offset[ss] + src_canon.row_pos[vin] * src_canon.cols[ss] + src_canon.col_pos[vout];
      }
    }
  }
  return gather;
}

/// Thread-safe cache of sector layouts and relayout gathers.
class BlockPlanCache {
 public:
  explicit BlockPlanCache(std::size_t max_entries = 256) : max_entries_(max_entries) {}

  std::shared_ptr<const SectorLayout> layout(const BlockStructure& s, std::span<const std::size_t> rows,
                                             std::span<const std::size_t> cols) {
    Key key = s.signature();
    append(key, rows);
    append(key, cols);
    {
      std::lock_guard lock(mutex_);
      if (auto it = layouts_.find(key); it != layouts_.end()) {
        ++hits_;
        return it->second;
      }
    }
    auto L = std::make_shared<const SectorLayout>(make_layout(s, rows, cols));
    std::lock_guard lock(mutex_);
    ++misses_;
    trim(layouts_);
    return layouts_.emplace(std::move(key), L).first->second;
  }

  std::shared_ptr<const SectorLayout> canonical(const BlockStructure& s) {
    auto in = axes_with_direction(s, Direction::incoming);
    auto out = axes_with_direction(s, Direction::outgoing);
    return layout(s, in, out);
  }

  std::shared_ptr<const Relayout> relayout(const BlockStructure& src, const BlockStructure& dst,
                                           std::span<const std::size_t> rows, std::span<const std::size_t> cols,
                                           std::span<const std::size_t> axis_map) {
    Key key = src.signature();
    key.push_back(-7);
    auto dsig = dst.signature();
    key.insert(key.end(), dsig.begin(), dsig.end());
    append(key, rows);
    append(key, cols);
    append(key, axis_map);
    {
      std::lock_guard lock(mutex_);
      if (auto it = relayouts_.find(key); it != relayouts_.end()) {
        ++hits_;
        return it->second;
      }
    }
    auto rl = std::make_shared<Relayout>();
    rl->layout = layout(dst, rows, cols);
    rl->gather = build_relayout_gather(src, *canonical(src), *rl->layout, axis_map);
    std::lock_guard lock(mutex_);
    ++misses_;
    trim(relayouts_);
    return relayouts_.emplace(std::move(key), std::move(rl)).first->second;
  }

  std::size_t hits() const {
    std::lock_guard lock(mutex_);
    return hits_;
  }
  std::size_t misses() const {
    std::lock_guard lock(mutex_);
    return misses_;
  }
  void clear() {
    std::lock_guard lock(mutex_);
    layouts_.clear();
    relayouts_.clear();
  }

 private:
  using Key = std::vector<std::int64_t>;
  struct KeyHash {
    std::size_t operator()(const Key& k) const noexcept {
      std::uint64_t h = 1469598103934665603ull;
      for (auto v : k) {
        h ^= static_cast<std::uint64_t>(v);
        h *= 1099511628211ull;
      }
      return static_cast<std::size_t>(h);
    }
  };
  static void append(Key& key, std::span<const std::size_t> v) {
    key.push_back(-1);
    for (auto x : v) key.push_back(static_cast<std::int64_t>(x));
  }
  template <class Map>
  void trim(Map& m) {
    // Plans are cheap to rebuild; drop everything once the cap is hit.
    if (max_entries_ > 0 && m.size() >= 4 * max_entries_) m.clear();
  }

  mutable std::mutex mutex_;
  std::size_t max_entries_;
  std::unordered_map<Key, std::shared_ptr<const SectorLayout>, KeyHash> layouts_;
  std::unordered_map<Key, std::shared_ptr<const Relayout>, KeyHash> relayouts_;
  std::size_t hits_ = 0;
  std::size_t misses_ = 0;
};

namespace detail {
inline BlockPlanCache& fallback_block_cache() {
  static BlockPlanCache cache;
  return cache;
}
inline BlockPlanCache& cache_or_fallback(BlockPlanCache* c) { return c ? *c : fallback_block_cache(); }
}  // namespace detail

class BlockTensor {
 public:
  BlockTensor() = default;

  BlockTensor(BlockStructure structure, std::vector<cplx> data, BlockPlanCache* cache = nullptr)
      : structure_(std::make_shared<const BlockStructure>(std::move(structure))) {
    layout_ = detail::cache_or_fallback(cache).canonical(*structure_);
    require(data.size() == layout_->total, ErrorKind::invalid_argument,
            "block data size " + std::to_string(data.size()) + " does not match the structure (" +
                std::to_string(layout_->total) + ")");
    data_ = std::move(data);
  }

  static BlockTensor zeros(BlockStructure structure, BlockPlanCache* cache = nullptr) {
    auto layout = detail::cache_or_fallback(cache).canonical(structure);
    return BlockTensor(std::move(structure), std::vector<cplx>(layout->total), cache);
  }

  const BlockStructure& structure() const { return *structure_; }
  const SectorLayout& layout() const { return *layout_; }
  std::shared_ptr<const SectorLayout> layout_ptr() const { return layout_; }
  std::span<const cplx> data() const { return data_; }
  std::vector<cplx> take_data() && { return std::move(data_); }
  Dims dims() const { return structure_->dims(); }
  std::size_t rank() const { return structure_->rank(); }
  const QN& flux() const { return structure_->flux; }
  std::size_t stored_size() const { return data_.size(); }

  double frobenius_norm() const {
    double s = 0.0;
    for (auto v : data_) s += std::norm(v);
    return std::sqrt(s);
  }

  /// Blocks keyed by total incoming charge, each as a rows x cols tensor.
  std::map<QN, DenseTensor> blocks() const {
    std::map<QN, DenseTensor> out;
    for (std::size_t s = 0; s < layout_->keys.size(); ++s) {
      const auto r = layout_->rows[s], c = layout_->cols[s];
      std::vector<cplx> v(data_.begin() + static_cast<std::ptrdiff_t>(layout_->offset[s]),
                          data_.begin() + static_cast<std::ptrdiff_t>(layout_->offset[s] + r * c));
      out.emplace(layout_->keys[s], DenseTensor({r, c}, std::move(v)));
    }
    return out;
  }

  /// Blocks that hold at least one nonzero value.
  std::size_t nonzero_block_count() const {
    std::size_t n = 0;
    for (std::size_t s = 0; s < layout_->keys.size(); ++s) {
      const auto begin = data_.begin() + static_cast<std::ptrdiff_t>(layout_->offset[s]);
      const auto end = begin + static_cast<std::ptrdiff_t>(layout_->rows[s] * layout_->cols[s]);
      if (std::any_of(begin, end, [](cplx v) { return v != cplx{}; })) ++n;
    }
    return n;
  }

  /// True when every stored element satisfies the charge balance (it always
  /// should; used as a post-condition check in tests).
  bool charges_balanced() const {
    Dims scratch;
    auto rq = detail::group_charges(*structure_, layout_->row_axes, scratch);
    auto cq = detail::group_charges(*structure_, layout_->col_axes, scratch);
    for (std::size_t s = 0; s < layout_->keys.size(); ++s)
      for (auto xr : layout_->sector_rows[s])
        for (auto xc : layout_->sector_cols[s])
          if (!(rq[xr] + cq[xc] + structure_->flux).is_zero()) return false;
    return true;
  }

 private:
  std::shared_ptr<const BlockStructure> structure_ = std::make_shared<const BlockStructure>();
  std::shared_ptr<const SectorLayout> layout_ = std::make_shared<const SectorLayout>();
  std::vector<cplx> data_;
};

/// Data of `t` gathered into the (rows | cols) partition of `dst`, whose axis k
/// is axis axis_map[k] of t.
inline std::vector<cplx> gather_relayout(const BlockTensor& t, const Relayout& rl, bool conjugate) {
  std::vector<cplx> out(rl.gather.size());
  auto src = t.data();
  if (conjugate) {
    for (std::size_t p = 0; p < out.size(); ++p) out[p] = std::conj(src[rl.gather[p]]);
  } else {
    for (std::size_t p = 0; p < out.size(); ++p) out[p] = src[rl.gather[p]];
  }
  return out;
}

inline std::vector<std::size_t> iota_axes(std::size_t n) {
  std::vector<std::size_t> v(n);
  std::iota(v.begin(), v.end(), std::size_t{0});
  return v;
}

/// Same values, every direction flipped, flux negated and values conjugated.
inline BlockTensor conjugated(const BlockTensor& t, BlockPlanCache* cache = nullptr) {
  auto& c = detail::cache_or_fallback(cache);
  auto dst = t.structure().conjugated();
  auto in = axes_with_direction(dst, Direction::incoming);
  auto out = axes_with_direction(dst, Direction::outgoing);
  auto map = iota_axes(t.rank());
  auto rl = c.relayout(t.structure(), dst, in, out, map);
  return BlockTensor(std::move(dst), gather_relayout(t, *rl, true), cache);
}

/// Axis k of the result is axis order[k] of t.
inline BlockTensor permute(const BlockTensor& t, std::span<const std::size_t> order, BlockPlanCache* cache = nullptr) {
  require(is_permutation_of_rank(order, t.rank()), ErrorKind::invalid_permutation,
          "order is not a permutation of the tensor's index positions");
  if (is_identity_order(order)) return t;
  auto& c = detail::cache_or_fallback(cache);
  BlockStructure dst;
  dst.flux = t.flux();
  for (auto a : order) dst.indices.push_back(t.structure().indices[a]);
  auto in = axes_with_direction(dst, Direction::incoming);
  auto out = axes_with_direction(dst, Direction::outgoing);
  auto rl = c.relayout(t.structure(), dst, in, out, order);
  return BlockTensor(std::move(dst), gather_relayout(t, *rl, false), cache);
}

/// Sector matrices of t for an arbitrary (rows | cols) split of its axes.
struct BlockMatrix {
  std::shared_ptr<const SectorLayout> layout;
  std::vector<cplx> data;

  ConstMatrixMap sector(std::size_t s) const {
    return ConstMatrixMap(data.data() + layout->offset[s], static_cast<Eigen::Index>(layout->rows[s]),
                          static_cast<Eigen::Index>(layout->cols[s]));
  }
};

inline BlockMatrix block_matrix(const BlockTensor& t, std::span<const std::size_t> rows, std::span<const std::size_t> cols,
                                BlockPlanCache* cache = nullptr) {
  auto& c = detail::cache_or_fallback(cache);
  auto map = iota_axes(t.rank());
  BlockMatrix bm;
  if (std::equal(rows.begin(), rows.end(), t.layout().row_axes.begin(), t.layout().row_axes.end()) &&
      std::equal(cols.begin(), cols.end(), t.layout().col_axes.begin(), t.layout().col_axes.end())) {
    bm.layout = t.layout_ptr();
    bm.data.assign(t.data().begin(), t.data().end());
    return bm;
  }
  auto rl = c.relayout(t.structure(), t.structure(), rows, cols, map);
  bm.layout = rl->layout;
  bm.data = gather_relayout(t, *rl, false);
  return bm;
}

/// Inverse of block_matrix: data laid out in the (rows | cols) partition of
/// `structure` becomes a canonical BlockTensor.
inline BlockTensor from_block_matrix(BlockStructure structure, std::span<const std::size_t> rows,
                                     std::span<const std::size_t> cols, std::span<const cplx> partition_data,
                                     BlockPlanCache* cache = nullptr) {
  auto& c = detail::cache_or_fallback(cache);
  auto canon = c.canonical(structure);
  if (std::equal(rows.begin(), rows.end(), canon->row_axes.begin(), canon->row_axes.end()) &&
      std::equal(cols.begin(), cols.end(), canon->col_axes.begin(), canon->col_axes.end())) {
    return BlockTensor(std::move(structure), std::vector<cplx>(partition_data.begin(), partition_data.end()), cache);
  }
  auto map = iota_axes(structure.rank());
  auto rl = c.relayout(structure, structure, rows, cols, map);
  require(rl->gather.size() == partition_data.size(), ErrorKind::invalid_argument, "partition data size mismatch");
  std::vector<cplx> data(canon->total);
  for (std::size_t p = 0; p < partition_data.size(); ++p) data[rl->gather[p]] = partition_data[p];
  return BlockTensor(std::move(structure), std::move(data), cache);
}

namespace detail {

// Dense offset contribution of each flat multi-index over the given axes.
inline std::vector<std::size_t> dense_contributions(const Dims& dims, std::span<const std::size_t> axes) {
  auto strides = row_major_strides(dims);
  Dims sub;
  for (auto a : axes) sub.push_back(dims[a]);
  const auto n = product(sub);
  std::vector<std::size_t> out(n, 0);
  if (axes.empty()) return out;
  std::vector<std::size_t> idx(axes.size(), 0);
  for (std::size_t x = 0; x < n; ++x) {
    std::size_t v = 0;
    for (std::size_t k = 0; k < axes.size(); ++k) v += idx[k] * strides[axes[k]];
    out[x] = v;
    for (std::size_t k = axes.size(); k-- > 0;) {
      if (++idx[k] < sub[k]) break;
      idx[k] = 0;
    }
  }
  return out;
}

inline std::vector<std::size_t> dense_offsets(const BlockStructure& s, const SectorLayout& L) {
  auto dims = s.dims();
  auto rin = dense_contributions(dims, L.row_axes);
  auto cout = dense_contributions(dims, L.col_axes);
  std::vector<std::size_t> offs(L.total);
  std::size_t p = 0;
  for (std::size_t k = 0; k < L.keys.size(); ++k)
    for (auto xr : L.sector_rows[k])
      for (auto xc : L.sector_cols[k]) offs[p++] = rin[xr] + cout[xc];
  return offs;
}

}  // namespace detail

struct ImposeResult {
  BlockTensor tensor;
  double discarded_weight = 0.0;
};

/// Keeps only the charge-conserving elements of a dense tensor. Anything else
/// is dropped; its Frobenius norm is returned and reported as a warning.
inline ImposeResult impose_symmetry(const DenseTensor& t, std::vector<ChargedIndex> charges, QN flux = QN::zero(),
                                    BlockPlanCache* cache = nullptr) {
  require(charges.size() == t.rank(), ErrorKind::invalid_argument,
          "got " + std::to_string(charges.size()) + " charged indices for a rank-" + std::to_string(t.rank()) +
              " tensor");
  for (std::size_t k = 0; k < charges.size(); ++k)
    require(charges[k].dim() == t.dims()[k], ErrorKind::invalid_argument,
            "charged index " + std::to_string(k) + " has " + std::to_string(charges[k].dim()) +
                " labels for dimension " + std::to_string(t.dims()[k]));
  if (!charges.empty() && !charges.front().labels.empty()) flux.m = charges.front().labels.front().m;
  BlockStructure s{std::move(charges), flux};
  auto& c = detail::cache_or_fallback(cache);
  auto layout = c.canonical(s);
  auto offs = detail::dense_offsets(s, *layout);
  std::vector<cplx> data(offs.size());
  std::vector<bool> kept(t.size(), false);
  auto values = t.values();
  for (std::size_t p = 0; p < offs.size(); ++p) {
    data[p] = values[offs[p]];
    kept[offs[p]] = true;
  }
  double discarded = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i)
    if (!kept[i]) discarded += std::norm(values[i]);
  ImposeResult r{BlockTensor(std::move(s), std::move(data), cache), std::sqrt(discarded)};
  if (r.discarded_weight > 0.0)
    warn("imposing symmetry discarded elements with total weight " + std::to_string(r.discarded_weight));
  return r;
}

inline DenseTensor densify(const BlockTensor& b) {
  auto dims = b.dims();
  std::vector<cplx> values(product(dims));
  auto offs = detail::dense_offsets(b.structure(), b.layout());
  auto data = b.data();
  for (std::size_t p = 0; p < offs.size(); ++p) values[offs[p]] = data[p];
  if (dims.empty()) return DenseTensor::scalar(values[0]);
  return DenseTensor(std::move(dims), std::move(values));
}

/// Constant charge change (out - in) of a dense operator across its nonzero
/// elements. Zero operators report a zero shift.
inline QN operator_charge_shift(const DenseTensor& t, const std::vector<ChargedIndex>& charges) {
  require(charges.size() == t.rank(), ErrorKind::invalid_argument, "charged index count does not match tensor rank");
  std::optional<QN> delta;
  const auto dims = t.dims();
  std::vector<std::size_t> idx(dims.size(), 0);
  auto values = t.values();
  const std::size_t m = charges.empty() || charges[0].labels.empty() ? 1 : charges[0].labels[0].m;
  for (std::size_t x = 0; x < values.size(); ++x) {
    if (values[x] != cplx{}) {
      QN in = QN::zero(m), out = QN::zero(m);
      for (std::size_t k = 0; k < dims.size(); ++k) {
        const auto& q = charges[k].labels[idx[k]];
        if (charges[k].direction == Direction::incoming)
          in += q;
        else
          out += q;
      }
      QN d = out - in;
      if (!delta)
        delta = d;
      else
        require(*delta == d, ErrorKind::not_covariant,
                "operator changes charge by both " + delta->to_string() + " and " + d.to_string());
    }
    for (std::size_t k = dims.size(); k-- > 0;) {
      if (++idx[k] < dims[k]) break;
      idx[k] = 0;
    }
  }
  return delta.value_or(QN::zero(m));
}

struct PromotedOperator {
  BlockTensor tensor;
  QN singleton_charge;  // label on the added incoming singleton index
};

/// Makes a covariant operator invariant by appending an incoming singleton
/// index that carries the operator's charge change.
inline PromotedOperator promote_covariant(const DenseTensor& t, std::vector<ChargedIndex> charges,
                                          BlockPlanCache* cache = nullptr) {
  auto delta = operator_charge_shift(t, charges);
  charges.push_back(ChargedIndex::in({delta}));
  auto dims = t.dims();
  dims.push_back(1);
  auto extended = t.reshaped(dims);
  auto r = impose_symmetry(extended, std::move(charges), QN::zero(delta.m), cache);
  return {std::move(r.tensor), delta};
}

/// Applies f to every sector matrix of the canonical layout. f must return a
/// matrix of the same shape.
inline BlockTensor blockwise_apply(const BlockTensor& b, const std::function<Matrix(const QN&, ConstMatrixMap)>& f,
                                   BlockPlanCache* cache = nullptr) {
  const auto& L = b.layout();
  std::vector<cplx> out(b.stored_size());
  for (std::size_t s = 0; s < L.keys.size(); ++s) {
    ConstMatrixMap in(b.data().data() + L.offset[s], static_cast<Eigen::Index>(L.rows[s]),
                      static_cast<Eigen::Index>(L.cols[s]));
    Matrix r = f(L.keys[s], in);
    require(r.rows() == in.rows() && r.cols() == in.cols(), ErrorKind::incompatible_blocks,
            "blockwise operation changed a block shape");
    std::copy(r.data(), r.data() + r.size(), out.begin() + static_cast<std::ptrdiff_t>(L.offset[s]));
  }
  return BlockTensor(b.structure(), std::move(out), cache);
}

/// Binary per-sector operation on two tensors of identical structure.
inline BlockTensor blockwise_apply(const BlockTensor& a, const BlockTensor& b,
                                   const std::function<Matrix(const QN&, ConstMatrixMap, ConstMatrixMap)>& f,
                                   BlockPlanCache* cache = nullptr) {
  require(a.structure() == b.structure(), ErrorKind::incompatible_blocks,
          "operands have different charge structures");
  const auto& L = a.layout();
  std::vector<cplx> out(a.stored_size());
  for (std::size_t s = 0; s < L.keys.size(); ++s) {
    const auto r = static_cast<Eigen::Index>(L.rows[s]), c = static_cast<Eigen::Index>(L.cols[s]);
    ConstMatrixMap x(a.data().data() + L.offset[s], r, c);
    ConstMatrixMap y(b.data().data() + L.offset[s], r, c);
    Matrix z = f(L.keys[s], x, y);
    require(z.rows() == r && z.cols() == c, ErrorKind::incompatible_blocks, "blockwise operation changed a block shape");
    std::copy(z.data(), z.data() + z.size(), out.begin() + static_cast<std::ptrdiff_t>(L.offset[s]));
  }
  return BlockTensor(a.structure(), std::move(out), cache);
}

inline BlockTensor scale(const BlockTensor& b, cplx factor, BlockPlanCache* cache = nullptr) {
  std::vector<cplx> out(b.data().begin(), b.data().end());
  for (auto& v : out) v *= factor;
  return BlockTensor(b.structure(), std::move(out), cache);
}

inline BlockTensor add(const BlockTensor& a, const BlockTensor& b, BlockPlanCache* cache = nullptr) {
  require(a.structure() == b.structure(), ErrorKind::incompatible_blocks,
          "operands have different charge structures");
  std::vector<cplx> out(a.data().begin(), a.data().end());
  auto y = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += y[i];
  return BlockTensor(a.structure(), std::move(out), cache);
}

/// Checks that joining index ia of a to index ib of b is charge-consistent.
inline void check_contractible(const ChargedIndex& ia, const ChargedIndex& ib) {
  require(ia.dim() == ib.dim(), ErrorKind::incompatible_legs, "contracted indices have different dimensions");
  for (std::size_t x = 0; x < ia.dim(); ++x) {
    auto sum = ia.labels[x].scaled(sign(ia.direction)) + ib.labels[x].scaled(sign(ib.direction));
    require(sum.is_zero(), ErrorKind::incompatible_legs,
            "contracted indices do not carry opposite charges (value " + std::to_string(x) + ")");
  }
}

/// Sector-by-sector contraction. The result carries a's free axes followed by
/// b's free axes and flux(a) + flux(b).
inline BlockTensor contract(const BlockTensor& a, std::span<const std::size_t> free_a,
                            std::span<const std::size_t> con_a, const BlockTensor& b,
                            std::span<const std::size_t> con_b, std::span<const std::size_t> free_b,
                            BlockPlanCache* cache = nullptr) {
  require(con_a.size() == con_b.size(), ErrorKind::invalid_argument, "contracted axis lists differ in length");
  for (std::size_t k = 0; k < con_a.size(); ++k)
    check_contractible(a.structure().indices[con_a[k]], b.structure().indices[con_b[k]]);
  auto& c = detail::cache_or_fallback(cache);
  auto am = block_matrix(a, free_a, con_a, &c);
  auto bm = block_matrix(b, con_b, free_b, &c);

  BlockStructure rs;
  rs.flux = a.flux() + b.flux();
  for (auto x : free_a) rs.indices.push_back(a.structure().indices[x]);
  for (auto x : free_b) rs.indices.push_back(b.structure().indices[x]);
  auto rrows = iota_axes(free_a.size());
  std::vector<std::size_t> rcols(free_b.size());
  std::iota(rcols.begin(), rcols.end(), free_a.size());
  auto rl = c.layout(rs, rrows, rcols);
  std::vector<cplx> out(rl->total);
  for (std::size_t s = 0; s < rl->keys.size(); ++s) {
    const auto& r = rl->keys[s];
    auto sa = am.layout->find(r);
    auto sb = bm.layout->find(r + a.flux());
    if (!sa || !sb) continue;
    require(am.layout->rows[*sa] == rl->rows[s] && bm.layout->cols[*sb] == rl->cols[s] &&
                am.layout->cols[*sa] == bm.layout->rows[*sb],
            ErrorKind::incompatible_blocks, "sector shapes disagree during contraction");
    MatrixMap dst(out.data() + rl->offset[s], static_cast<Eigen::Index>(rl->rows[s]),
                  static_cast<Eigen::Index>(rl->cols[s]));
    dst.noalias() = am.sector(*sa) * bm.sector(*sb);
  }
  return from_block_matrix(std::move(rs), rrows, rcols, out, &c);
}

/// Union-find over the bipartite row/column pattern of a thresholded matrix.
struct AutoBlock {
  std::vector<std::size_t> rows, cols;
  Matrix block;
};

struct AutoBlocking {
  std::vector<AutoBlock> blocks;
  std::vector<std::size_t> row_permutation, col_permutation;
};

inline AutoBlocking auto_block(const Matrix& m, double tol) {
  const auto R = static_cast<std::size_t>(m.rows()), C = static_cast<std::size_t>(m.cols());
  AutoBlocking out;
  if (tol < 0.0) {
    AutoBlock b;
    b.rows = iota_axes(R);
    b.cols = iota_axes(C);
    b.block = m;
    out.row_permutation = b.rows;
    out.col_permutation = b.cols;
    out.blocks.push_back(std::move(b));
    return out;
  }
  std::vector<std::size_t> parent(R + C);
  std::iota(parent.begin(), parent.end(), std::size_t{0});
  std::function<std::size_t(std::size_t)> find = [&](std::size_t x) {
    while (parent[x] != x) {
      parent[x] = parent[parent[x]];
      x = parent[x];
    }
    return x;
  };
  std::vector<bool> row_used(R, false), col_used(C, false);
  for (std::size_t i = 0; i < R; ++i)
    for (std::size_t j = 0; j < C; ++j)
      if (std::abs(m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j))) > tol) {
        row_used[i] = col_used[j] = true;
        auto a = find(i), b = find(R + j);
        if (a != b) parent[std::max(a, b)] = std::min(a, b);
      }
  std::map<std::size_t, std::size_t> component;  // root -> block index, ordered by first row
  for (std::size_t i = 0; i < R; ++i) {
    if (!row_used[i]) continue;
    auto root = find(i);
    auto [it, inserted] = component.emplace(root, out.blocks.size());
    if (inserted) out.blocks.emplace_back();
    out.blocks[it->second].rows.push_back(i);
  }
  for (std::size_t j = 0; j < C; ++j) {
    if (!col_used[j]) continue;
    out.blocks[component.at(find(R + j))].cols.push_back(j);
  }
  for (auto& b : out.blocks) {
    b.block.resize(static_cast<Eigen::Index>(b.rows.size()), static_cast<Eigen::Index>(b.cols.size()));
    for (std::size_t i = 0; i < b.rows.size(); ++i)
      for (std::size_t j = 0; j < b.cols.size(); ++j) {
        auto v = m(static_cast<Eigen::Index>(b.rows[i]), static_cast<Eigen::Index>(b.cols[j]));
        b.block(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = std::abs(v) > tol ? v : cplx{};
      }
    out.row_permutation.insert(out.row_permutation.end(), b.rows.begin(), b.rows.end());
    out.col_permutation.insert(out.col_permutation.end(), b.cols.begin(), b.cols.end());
  }
  for (std::size_t i = 0; i < R; ++i)
    if (!row_used[i]) out.row_permutation.push_back(i);
  for (std::size_t j = 0; j < C; ++j)
    if (!col_used[j]) out.col_permutation.push_back(j);
  return out;
}

}  // namespace tnt
