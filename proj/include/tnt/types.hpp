#pragma once

#include <complex>
#include <cstddef>
#include <vector>

#include <Eigen/Dense>

namespace tnt {

using cplx = std::complex<double>;

/// Row-major so that a flattened tensor maps onto a matrix without copying.
using Matrix = Eigen::Matrix<cplx, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::Matrix<cplx, Eigen::Dynamic, 1>;
using MatrixMap = Eigen::Map<Matrix>;
using ConstMatrixMap = Eigen::Map<const Matrix>;

using Dims = std::vector<std::size_t>;

inline std::size_t product(const Dims& dims) {
  std::size_t p = 1;
  for (auto d : dims) p *= d;
  return p;
}

/// Row-major strides: last index fastest.
inline std::vector<std::size_t> row_major_strides(const Dims& dims) {
  std::vector<std::size_t> strides(dims.size(), 1);
  for (std::size_t k = dims.size(); k-- > 1;) strides[k - 1] = strides[k] * dims[k];
  return strides;
}

}  // namespace tnt
