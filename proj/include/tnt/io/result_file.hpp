#pragma once

// Result files: an HDF5 container with the groups /system, /parameters,
// /state and /observables. Values are stored as native doubles (complex as a
// {r, i} compound), so a write followed by a read is bit-exact.

#include <hdf5.h>

#include <chrono>
#include <ctime>
#include <functional>
#include <iomanip>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "tnt/config.hpp"
#include "tnt/mps.hpp"

namespace tnt::io {

inline constexpr int kFormatVersion = 1;

struct Series {
  std::string axis;  // "time" or "sweep"
  std::vector<double> values;
};

struct ResultFile {
  std::string kind;  // "ground-state" or "evolution"
  SystemConfig config;
  nlohmann::json parameters = nlohmann::json::object();
  std::optional<MpsState> state;
  // Snapshot times in units of hbar/J; empty for a single final evaluation.
  std::vector<double> times;
  std::vector<std::size_t> steps;
  std::map<std::string, std::vector<Matrix>> observables;  // one matrix per snapshot
  std::map<std::string, Series> series;
  std::optional<std::pair<std::string, std::string>> failure;  // error kind, message

  // Filled in on load.
  std::string library_version;
  int format_version = kFormatVersion;
  std::string created;
};

namespace h5 {

/// Owns one HDF5 identifier.
class Handle {
 public:
  Handle() = default;
  Handle(hid_t id, herr_t (*close)(hid_t)) : id_(id), close_(close) {}
  Handle(Handle&& o) noexcept : id_(o.id_), close_(o.close_) { o.id_ = -1; }
  Handle& operator=(Handle&& o) noexcept {
    std::swap(id_, o.id_);
    std::swap(close_, o.close_);
    return *this;
  }
  Handle(const Handle&) = delete;
  Handle& operator=(const Handle&) = delete;
  ~Handle() {
    if (id_ >= 0 && close_) close_(id_);
  }
  hid_t get() const { return id_; }
  operator hid_t() const { return id_; }

 private:
  hid_t id_ = -1;
  herr_t (*close_)(hid_t) = nullptr;
};

inline hid_t check(hid_t id, const std::string& what) {
  if (id < 0) fail(ErrorKind::parse_error, what);
  return id;
}
inline void check_status(herr_t s, const std::string& what) {
  if (s < 0) fail(ErrorKind::parse_error, what);
}

/// HDF5 prints its own error stack by default; errors are reported through
/// exceptions instead.
inline void quiet() { H5Eset_auto2(H5E_DEFAULT, nullptr, nullptr); }

inline Handle complex_type() {
  Handle t(H5Tcreate(H5T_COMPOUND, sizeof(cplx)), H5Tclose);
  H5Tinsert(t, "r", 0, H5T_NATIVE_DOUBLE);
  H5Tinsert(t, "i", sizeof(double), H5T_NATIVE_DOUBLE);
  return t;
}

// Creation properties without object timestamps, so files are byte-stable.
inline Handle untimed(hid_t cls) {
  Handle p(H5Pcreate(cls), H5Pclose);
  H5Pset_obj_track_times(p, false);
  return p;
}

inline Handle create_group(hid_t loc, const std::string& name) {
  auto p = untimed(H5P_GROUP_CREATE);
  return Handle(check(H5Gcreate2(loc, name.c_str(), H5P_DEFAULT, p, H5P_DEFAULT), "cannot create group " + name),
                H5Gclose);
}

inline bool exists(hid_t loc, const std::string& name) { return H5Lexists(loc, name.c_str(), H5P_DEFAULT) > 0; }

inline Handle open_group(hid_t loc, const std::string& name, const std::string& path) {
  if (!exists(loc, name)) fail(ErrorKind::parse_error, "missing group " + path);
  return Handle(check(H5Gopen2(loc, name.c_str(), H5P_DEFAULT), "cannot open group " + path), H5Gclose);
}

inline std::vector<std::string> children(hid_t g) {
  H5G_info_t info;
  H5Gget_info(g, &info);
  std::vector<std::string> out;
  for (hsize_t k = 0; k < info.nlinks; ++k) {
    const auto n = H5Lget_name_by_idx(g, ".", H5_INDEX_NAME, H5_ITER_INC, k, nullptr, 0, H5P_DEFAULT);
    std::string s(static_cast<std::size_t>(n), '\0');
    H5Lget_name_by_idx(g, ".", H5_INDEX_NAME, H5_ITER_INC, k, s.data(), std::size_t(n) + 1, H5P_DEFAULT);
    out.push_back(s);
  }
  return out;
}

// Attributes.

inline void attr_raw(hid_t loc, const std::string& name, hid_t type, const void* v) {
  Handle space(H5Screate(H5S_SCALAR), H5Sclose);
  Handle a(H5Acreate2(loc, name.c_str(), type, space, H5P_DEFAULT, H5P_DEFAULT), H5Aclose);
  check(a, "cannot create attribute " + name);
  H5Awrite(a, type, v);
}

inline void attr(hid_t loc, const std::string& name, double v) { attr_raw(loc, name, H5T_NATIVE_DOUBLE, &v); }
inline void attr(hid_t loc, const std::string& name, std::int64_t v) { attr_raw(loc, name, H5T_NATIVE_INT64, &v); }
inline void attr(hid_t loc, const std::string& name, const std::string& v) {
  Handle t(H5Tcopy(H5T_C_S1), H5Tclose);
  H5Tset_size(t, std::max<std::size_t>(1, v.size()));
  H5Tset_strpad(t, H5T_STR_NULLPAD);
  std::string buf = v.empty() ? std::string(1, '\0') : v;
  attr_raw(loc, name, t, buf.data());
}
inline void attr(hid_t loc, const std::string& name, const char* v) { attr(loc, name, std::string(v)); }

inline Handle open_attr(hid_t loc, const std::string& name, const std::string& path) {
  if (H5Aexists(loc, name.c_str()) <= 0) fail(ErrorKind::parse_error, "missing attribute " + path + "@" + name);
  return Handle(check(H5Aopen(loc, name.c_str(), H5P_DEFAULT), "cannot open " + path + "@" + name), H5Aclose);
}

inline bool has_attr(hid_t loc, const std::string& name) { return H5Aexists(loc, name.c_str()) > 0; }

inline double attr_double(hid_t loc, const std::string& name, const std::string& path) {
  auto a = open_attr(loc, name, path);
  double v = 0;
  check_status(H5Aread(a, H5T_NATIVE_DOUBLE, &v), "cannot read " + path + "@" + name);
  return v;
}

inline std::int64_t attr_int(hid_t loc, const std::string& name, const std::string& path) {
  auto a = open_attr(loc, name, path);
  std::int64_t v = 0;
  check_status(H5Aread(a, H5T_NATIVE_INT64, &v), "cannot read " + path + "@" + name);
  return v;
}

inline std::string attr_string(hid_t loc, const std::string& name, const std::string& path) {
  auto a = open_attr(loc, name, path);
  Handle ft(H5Aget_type(a), H5Tclose);
  if (H5Tget_class(ft) != H5T_STRING) fail(ErrorKind::parse_error, path + "@" + name + " is not a string");
  const auto size = H5Tget_size(ft);
  Handle mt(H5Tcopy(H5T_C_S1), H5Tclose);
  H5Tset_size(mt, size);
  H5Tset_strpad(mt, H5T_STR_NULLPAD);
  std::string s(size, '\0');
  check_status(H5Aread(a, mt, s.data()), "cannot read " + path + "@" + name);
  s.resize(std::strlen(s.c_str()));
  return s;
}

// Datasets.

inline Handle write_raw(hid_t loc, const std::string& name, hid_t type, const std::vector<hsize_t>& dims,
                        const void* data) {
  Handle space(H5Screate_simple(int(dims.size()), dims.data(), nullptr), H5Sclose);
  auto p = untimed(H5P_DATASET_CREATE);
  Handle d(check(H5Dcreate2(loc, name.c_str(), type, space, H5P_DEFAULT, p, H5P_DEFAULT), "cannot create dataset " + name),
           H5Dclose);
  hsize_t n = 1;
  for (auto x : dims) n *= x;
  if (n > 0) H5Dwrite(d, type, H5S_ALL, H5S_ALL, H5P_DEFAULT, data);
  return d;
}

template <class T>
hid_t native();
template <>
inline hid_t native<double>() { return H5T_NATIVE_DOUBLE; }
template <>
inline hid_t native<std::int64_t>() { return H5T_NATIVE_INT64; }
template <>
inline hid_t native<std::uint64_t>() { return H5T_NATIVE_UINT64; }

template <class T>
Handle write(hid_t loc, const std::string& name, const std::vector<T>& v, std::vector<hsize_t> dims = {}) {
  if (dims.empty()) dims = {v.size()};
  if constexpr (std::is_same_v<T, cplx>)
    return write_raw(loc, name, complex_type(), dims, v.data());
  else
    return write_raw(loc, name, native<T>(), dims, v.data());
}

struct Raw {
  std::vector<hsize_t> dims;
  std::size_t size() const {
    std::size_t n = 1;
    for (auto d : dims) n *= d;
    return n;
  }
};

template <class T>
std::vector<T> read(hid_t loc, const std::string& name, const std::string& path, Raw* shape = nullptr) {
  if (!exists(loc, name)) fail(ErrorKind::parse_error, "missing dataset " + path + "/" + name);
  Handle d(check(H5Dopen2(loc, name.c_str(), H5P_DEFAULT), "cannot open " + path + "/" + name), H5Dclose);
  Handle space(H5Dget_space(d), H5Sclose);
  Raw r;
  r.dims.resize(std::size_t(H5Sget_simple_extent_ndims(space)));
  H5Sget_simple_extent_dims(space, r.dims.data(), nullptr);
  std::vector<T> out(r.size());
  herr_t s = 0;
  if (!out.empty()) {
    if constexpr (std::is_same_v<T, cplx>)
      s = H5Dread(d, complex_type(), H5S_ALL, H5S_ALL, H5P_DEFAULT, out.data());
    else
      s = H5Dread(d, native<T>(), H5S_ALL, H5S_ALL, H5P_DEFAULT, out.data());
  }
  check_status(s, "cannot read " + path + "/" + name);
  if (shape) *shape = r;
  return out;
}

}  // namespace h5

namespace detail {

inline std::string timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

inline void write_config(hid_t g, const SystemConfig& c) {
  using h5::attr;
  attr(g, "library_version", kLibraryVersion);
  attr(g, "summary", sys_info_print(c));
  attr(g, "symmetry", c.symmetric() ? "U(1)" : "none");
  attr(g, "charges_per_label", std::int64_t(c.charges_per_label));
  attr(g, "rel_trunc_tol", c.rel_trunc_tol);
  attr(g, "abs_trunc_tol", c.abs_trunc_tol);
  attr(g, "trunc_err_tol", c.trunc_err_tol);
  attr(g, "auto_block_tol", c.auto_block_tol);
  attr(g, "trunc_type", to_string(c.trunc_type));
  attr(g, "svd_variant", c.svd_variant == SvdVariant::divide_conquer ? "divide-conquer" : "standard");
  attr(g, "reshape_reuse", std::int64_t(c.reshape_reuse));
  attr(g, "max_eig_iter", std::int64_t(c.max_eig_iter));
  attr(g, "eig_tol", c.eig_tol);
  attr(g, "strict_symmetry", std::int64_t(c.strict_symmetry));
  if (c.basis_op) {
    const auto& op = *c.basis_op;
    std::vector<hsize_t> dims(op.dims().begin(), op.dims().end());
    h5::write(g, "basis_operator", std::vector<cplx>(op.values().begin(), op.values().end()), dims);
  }
  if (c.physical_charges) {
    const auto& ix = *c.physical_charges;
    std::vector<std::int64_t> q;
    for (const auto& l : ix.labels)
      for (std::size_t k = 0; k < l.size(); ++k) q.push_back(l[k]);
    auto d = h5::write(g, "physical_charges", q, {ix.dim(), c.charges_per_label});
    attr(d, "direction", std::int64_t(sign(ix.direction)));
  }
}

inline TruncationType parse_trunc_type(const std::string& s, const std::string& path) {
  for (auto t : {TruncationType::two_norm, TruncationType::sum_squares, TruncationType::one_norm})
    if (to_string(t) == s) return t;
  fail(ErrorKind::parse_error, "unknown truncation type '" + s + "' in " + path);
}

inline std::vector<QN> read_labels(const std::vector<std::int64_t>& q, std::size_t dim, std::size_t m) {
  std::vector<QN> out;
  for (std::size_t j = 0; j < dim; ++j) {
    std::vector<int> v;
    for (std::size_t k = 0; k < m; ++k) v.push_back(int(q[j * m + k]));
    out.push_back(QN::from(v));
  }
  return out;
}

inline SystemConfig read_config(hid_t g) {
  const std::string p = "/system";
  SystemConfig c;
  const auto sym = h5::attr_string(g, "symmetry", p);
  if (sym == "U(1)")
    c.symmetry = SymmetryMode::u1;
  else if (sym != "none")
    fail(ErrorKind::parse_error, "unknown symmetry '" + sym + "' in " + p);
  c.charges_per_label = std::size_t(h5::attr_int(g, "charges_per_label", p));
  c.rel_trunc_tol = h5::attr_double(g, "rel_trunc_tol", p);
  c.abs_trunc_tol = h5::attr_double(g, "abs_trunc_tol", p);
  c.trunc_err_tol = h5::attr_double(g, "trunc_err_tol", p);
  c.auto_block_tol = h5::attr_double(g, "auto_block_tol", p);
  c.trunc_type = parse_trunc_type(h5::attr_string(g, "trunc_type", p), p);
  c.svd_variant =
      h5::attr_string(g, "svd_variant", p) == "standard" ? SvdVariant::standard : SvdVariant::divide_conquer;
  c.reshape_reuse = h5::attr_int(g, "reshape_reuse", p) != 0;
  c.max_eig_iter = std::size_t(h5::attr_int(g, "max_eig_iter", p));
  c.eig_tol = h5::attr_double(g, "eig_tol", p);
  c.strict_symmetry = h5::attr_int(g, "strict_symmetry", p) != 0;
  if (h5::exists(g, "basis_operator")) {
    h5::Raw shape;
    auto v = h5::read<cplx>(g, "basis_operator", p, &shape);
    c.basis_op = DenseTensor(Dims(shape.dims.begin(), shape.dims.end()), std::move(v));
  }
  if (h5::exists(g, "physical_charges")) {
    h5::Raw shape;
    auto q = h5::read<std::int64_t>(g, "physical_charges", p, &shape);
    h5::Handle d(H5Dopen2(g, "physical_charges", H5P_DEFAULT), H5Dclose);
    const auto dir = h5::attr_int(d, "direction", p + "/physical_charges");
    c.physical_charges = ChargedIndex{dir > 0 ? Direction::incoming : Direction::outgoing,
                                      read_labels(q, std::size_t(shape.dims.at(0)), std::size_t(shape.dims.at(1)))};
  }
  return c;
}

inline std::string site_name(std::size_t j) {
  std::ostringstream os;
  os << "site_" << std::setw(4) << std::setfill('0') << j;
  return os.str();
}

inline std::string bond_name(std::size_t j) {
  std::ostringstream os;
  os << "schmidt_" << std::setw(4) << std::setfill('0') << j;
  return os.str();
}

inline void write_state(hid_t g, const MpsState& psi) {
  using h5::attr;
  attr(g, "length", std::int64_t(psi.length()));
  attr(g, "basis_kind", psi.basis.kind == BasisKind::boson ? "boson" : "spin");
  attr(g, "physical_dim", std::int64_t(psi.basis.d));
  attr(g, "n_max", std::int64_t(psi.basis.n_max));
  attr(g, "spin", psi.basis.spin);
  attr(g, "symmetric", std::int64_t(psi.symmetric()));
  attr(g, "connectivity", "chain: leg R of site j joins leg L of site j+1; legs L, R, D are left bond, right bond, physical");
  for (std::size_t j = 0; j < psi.length(); ++j) {
    auto s = h5::create_group(g, site_name(j));
    const auto& n = psi.sites[j];
    for (std::size_t a = 0; a < n->legs.size(); ++a)
      require(n->legs[a].axes == std::vector<std::size_t>{a} && !n->conj, ErrorKind::invalid_argument,
              "site " + std::to_string(j) + " is not in storage order");
    attr(s, "legs", n->labels());
    const auto& pl = n->payload();
    if (std::holds_alternative<BlockTensor>(pl)) {
      const auto& b = std::get<BlockTensor>(pl);
      attr(s, "storage", "block");
      const auto dims = b.dims();
      h5::write(s, "dims", std::vector<std::uint64_t>(dims.begin(), dims.end()));
      h5::write(s, "values", std::vector<cplx>(b.data().begin(), b.data().end()));
      const auto m = b.flux().size();
      std::vector<std::int64_t> dirs, flux;
      for (const auto& ix : b.structure().indices) dirs.push_back(sign(ix.direction));
      for (std::size_t k = 0; k < m; ++k) flux.push_back(b.flux()[k]);
      h5::write(s, "directions", dirs);
      h5::write(s, "flux", flux);
      for (std::size_t a = 0; a < b.rank(); ++a) {
        std::vector<std::int64_t> q;
        for (const auto& l : b.structure().indices[a].labels)
          for (std::size_t k = 0; k < m; ++k) q.push_back(l[k]);
        h5::write(s, "charges_" + std::string(1, n->labels()[a]), q, {b.structure().indices[a].dim(), m});
      }
    } else {
      const auto& t = std::get<DenseTensor>(pl);
      attr(s, "storage", "dense");
      h5::write(s, "dims", std::vector<std::uint64_t>(t.dims().begin(), t.dims().end()));
      h5::write(s, "values", std::vector<cplx>(t.values().begin(), t.values().end()));
    }
  }
  for (std::size_t j = 0; j < psi.schmidt.size(); ++j)
    if (!psi.schmidt[j].empty()) h5::write(g, bond_name(j), psi.schmidt[j]);
}

inline MpsState read_state(hid_t g, const SystemConfig& cfg) {
  const std::string p = "/state";
  MpsState psi;
  const auto L = std::size_t(h5::attr_int(g, "length", p));
  const auto kind = h5::attr_string(g, "basis_kind", p);
  if (kind == "boson")
    psi.basis = boson_basis(std::size_t(h5::attr_int(g, "n_max", p)));
  else if (kind == "spin")
    psi.basis = spin_basis(h5::attr_double(g, "spin", p));
  else
    fail(ErrorKind::parse_error, "unknown basis kind '" + kind + "' in " + p);
  psi.schmidt.resize(L ? L - 1 : 0);
  for (std::size_t j = 0; j < L; ++j) {
    const auto sp = p + "/" + site_name(j);
    auto s = h5::open_group(g, site_name(j), sp);
    const auto legs = h5::attr_string(s, "legs", sp);
    const auto storage = h5::attr_string(s, "storage", sp);
    const auto dims64 = h5::read<std::uint64_t>(s, "dims", sp);
    Dims dims(dims64.begin(), dims64.end());
    auto values = h5::read<cplx>(s, "values", sp);
    if (legs.size() != dims.size()) fail(ErrorKind::parse_error, "leg count differs from rank in " + sp);
    if (storage == "dense") {
      if (values.size() != product(dims)) fail(ErrorKind::parse_error, "value count differs from dims in " + sp);
      psi.sites.push_back(node_create(DenseTensor(dims, std::move(values)), legs));
    } else if (storage == "block") {
      const auto dirs = h5::read<std::int64_t>(s, "directions", sp);
      const auto flux = h5::read<std::int64_t>(s, "flux", sp);
      if (dirs.size() != dims.size()) fail(ErrorKind::parse_error, "direction count differs from rank in " + sp);
      BlockStructure st;
      st.flux = QN::from(std::vector<int>(flux.begin(), flux.end()));
      for (std::size_t a = 0; a < dims.size(); ++a) {
        const auto q = h5::read<std::int64_t>(s, "charges_" + std::string(1, legs[a]), sp);
        if (q.size() != dims[a] * flux.size()) fail(ErrorKind::parse_error, "charge table size mismatch in " + sp);
        st.indices.push_back({dirs[a] > 0 ? Direction::incoming : Direction::outgoing,
                              read_labels(q, dims[a], flux.size())});
      }
      try {
        psi.sites.push_back(node_create(BlockTensor(std::move(st), std::move(values), cfg.blocks()), legs));
      } catch (const Error& e) {
        fail(ErrorKind::parse_error, sp + ": " + e.what());
      }
    } else {
      fail(ErrorKind::parse_error, "unknown storage '" + storage + "' in " + sp);
    }
  }
  for (std::size_t j = 0; j + 1 < L; ++j)
    if (h5::exists(g, bond_name(j))) psi.schmidt[j] = h5::read<double>(g, bond_name(j), p);
  return psi;
}

inline void write_parameters(hid_t g, const nlohmann::json& j) {
  h5::attr(g, "json", j.dump());
  for (const auto& [k, v] : j.items()) {
    if (v.is_boolean())
      h5::attr(g, k, std::int64_t(v.get<bool>()));
    else if (v.is_number_integer())
      h5::attr(g, k, v.get<std::int64_t>());
    else if (v.is_number())
      h5::attr(g, k, v.get<double>());
    else if (v.is_string())
      h5::attr(g, k, v.get<std::string>());
    else if (!v.is_null())
      h5::attr(g, k, v.dump());
  }
}

inline void write_observables(hid_t g, const ResultFile& r) {
  using h5::attr;
  attr(g, "site_index_base", std::int64_t(1));
  attr(g, "time_units", "hbar/J");
  const bool timed = !r.times.empty();
  if (timed) {
    auto t = h5::write(g, "time", r.times);
    attr(t, "axes", "time");
    attr(t, "units", "hbar/J");
    auto s = h5::write(g, "step", std::vector<std::uint64_t>(r.steps.begin(), r.steps.end()));
    attr(s, "axes", "time");
  }
  for (const auto& [key, mats] : r.observables) {
    require(!mats.empty(), ErrorKind::invalid_argument, "observable " + key + " has no values");
    const auto rows = hsize_t(mats.front().rows()), cols = hsize_t(mats.front().cols());
    std::vector<cplx> v;
    for (const auto& m : mats) {
      require(hsize_t(m.rows()) == rows && hsize_t(m.cols()) == cols, ErrorKind::invalid_argument,
              "observable " + key + " changes shape");
      // Row-major site order.
      for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index k = 0; k < m.cols(); ++k) v.push_back(m(i, k));
    }
    const bool pairs = rows > 1;
    std::vector<hsize_t> dims;
    std::string axes;
    if (timed) {
      dims.push_back(mats.size());
      axes = "time,";
    } else {
      require(mats.size() == 1, ErrorKind::invalid_argument, "untimed observable " + key + " has several values");
    }
    if (pairs) {
      dims.insert(dims.end(), {rows, cols});
      axes += "site,site";
    } else {
      dims.push_back(cols);
      axes += "site";
    }
    auto d = h5::write(g, key, v, dims);
    attr(d, "axes", axes);
    attr(d, "units", "dimensionless");
  }
  for (const auto& [name, s] : r.series) {
    auto d = h5::write(g, name, s.values);
    attr(d, "axes", s.axis);
  }
}

inline void read_observables(hid_t g, ResultFile& r) {
  const std::string p = "/observables";
  const bool timed = h5::exists(g, "time");
  if (timed) {
    r.times = h5::read<double>(g, "time", p);
    auto st = h5::read<std::uint64_t>(g, "step", p);
    r.steps.assign(st.begin(), st.end());
  }
  for (const auto& name : h5::children(g)) {
    if (name == "time" || name == "step") continue;
    h5::Handle d(h5::check(H5Dopen2(g, name.c_str(), H5P_DEFAULT), "cannot open " + p + "/" + name), H5Dclose);
    const auto axes = h5::attr_string(d, "axes", p + "/" + name);
    if (axes == "time" || axes == "sweep") {
      r.series[name] = Series{axes, h5::read<double>(g, name, p)};
      continue;
    }
    h5::Raw shape;
    auto v = h5::read<cplx>(g, name, p, &shape);
    const std::size_t nt = timed ? std::size_t(shape.dims.at(0)) : 1;
    const std::size_t off = timed ? 1 : 0;
    const bool pairs = shape.dims.size() == off + 2;
    const auto rows = pairs ? Eigen::Index(shape.dims[off]) : 1;
    const auto cols = Eigen::Index(shape.dims[off + (pairs ? 1 : 0)]);
    std::vector<Matrix> mats;
    std::size_t at = 0;
    for (std::size_t t = 0; t < nt; ++t) {
      Matrix m(rows, cols);
      for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index k = 0; k < cols; ++k) m(i, k) = v[at++];
      mats.push_back(std::move(m));
    }
    r.observables[name] = std::move(mats);
  }
}

}  // namespace detail

inline void write_result(const std::string& path, const ResultFile& r) {
  h5::quiet();
  h5::Handle f(H5Fcreate(path.c_str(), H5F_ACC_TRUNC, H5P_DEFAULT, H5P_DEFAULT), H5Fclose);
  if (f.get() < 0) fail(ErrorKind::invalid_argument, "cannot create result file " + path);
  h5::attr(f, "format", "tnt-result");
  h5::attr(f, "format_version", std::int64_t(kFormatVersion));
  h5::attr(f, "library_version", kLibraryVersion);
  h5::attr(f, "kind", r.kind);
  h5::attr(f, "created", detail::timestamp());
  h5::attr(f, "status", r.failure ? "failed" : "ok");
  if (r.failure) {
    h5::attr(f, "error_kind", r.failure->first);
    h5::attr(f, "error_message", r.failure->second);
  }
  detail::write_config(h5::create_group(f, "system"), r.config);
  detail::write_parameters(h5::create_group(f, "parameters"), r.parameters);
  auto st = h5::create_group(f, "state");
  if (r.state) detail::write_state(st, *r.state);
  detail::write_observables(h5::create_group(f, "observables"), r);
  H5Fflush(f, H5F_SCOPE_GLOBAL);
}

/// Reads a result file. A different format or library version gives a
/// warning and a best-effort load.
inline ResultFile load_result(const std::string& path) {
  h5::quiet();
  if (H5Fis_hdf5(path.c_str()) <= 0) fail(ErrorKind::parse_error, path + " is not an HDF5 file");
  h5::Handle f(H5Fopen(path.c_str(), H5F_ACC_RDONLY, H5P_DEFAULT), H5Fclose);
  if (f.get() < 0) fail(ErrorKind::parse_error, "cannot open " + path);
  ResultFile r;
  if (h5::attr_string(f, "format", "/") != "tnt-result") fail(ErrorKind::parse_error, path + " is not a result file");
  r.format_version = int(h5::attr_int(f, "format_version", "/"));
  r.library_version = h5::attr_string(f, "library_version", "/");
  if (r.format_version != kFormatVersion)
    warn("result file format " + std::to_string(r.format_version) + " differs from " + std::to_string(kFormatVersion) +
         "; loading what can be read");
  if (r.library_version != kLibraryVersion)
    warn("result file written by library " + r.library_version + ", this is " + kLibraryVersion);
  r.kind = h5::attr_string(f, "kind", "/");
  r.created = h5::attr_string(f, "created", "/");
  if (h5::attr_string(f, "status", "/") == "failed")
    r.failure = {h5::attr_string(f, "error_kind", "/"), h5::attr_string(f, "error_message", "/")};
  r.config = detail::read_config(h5::open_group(f, "system", "/system"));
  {
    auto p = h5::open_group(f, "parameters", "/parameters");
    try {
      r.parameters = nlohmann::json::parse(h5::attr_string(p, "json", "/parameters"));
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorKind::parse_error, std::string("/parameters@json: ") + e.what());
    }
  }
  {
    auto s = h5::open_group(f, "state", "/state");
    if (h5::has_attr(s, "length")) r.state = detail::read_state(s, r.config);
  }
  detail::read_observables(h5::open_group(f, "observables", "/observables"), r);
  return r;
}

}  // namespace tnt::io
